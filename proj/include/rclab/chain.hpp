#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rclab/lattice.hpp"

namespace rclab {

// Explicit Markov chain with a dense row-major transition matrix and a
// positive (unnormalized) measure.
class FiniteChain {
 public:
  FiniteChain() = default;
  // Validates shape, nonnegativity and row sums (1 +- 1e-12).
  FiniteChain(std::vector<double> transition, std::vector<double> measure,
              std::vector<Point> labels = {});

  std::size_t size() const noexcept { return pi_.size(); }
  double p(std::size_t x, std::size_t y) const noexcept { return P_[x * size() + y]; }
  double pi(std::size_t x) const noexcept { return pi_[x]; }
  const std::vector<double>& transition() const noexcept { return P_; }
  const std::vector<double>& measure() const noexcept { return pi_; }
  double total_measure() const noexcept;
  // Lattice coordinates of each state, when the chain comes from a lattice.
  const std::vector<Point>& labels() const noexcept { return labels_; }

  // Undirected adjacency derived from P(x,y) > 0 or P(y,x) > 0, x != y.
  const std::vector<std::vector<int>>& neighbors() const noexcept { return adj_; }
  bool is_reversible(double tol = 1e-10) const;
  double min_holding() const;

  // Row vector e_x P^n.
  std::vector<double> power_row(std::size_t x, std::int64_t n) const;

 private:
  std::vector<double> P_;
  std::vector<double> pi_;
  std::vector<Point> labels_;
  std::vector<std::vector<int>> adj_;
};

// {"states": [...], "P": [row-major], "pi": [...]}. States are integer ids, or
// coordinate arrays for lattice chains.
nlohmann::ordered_json chain_to_json(const FiniteChain& chain);
FiniteChain chain_from_json(const nlohmann::json& j);

}  // namespace rclab
