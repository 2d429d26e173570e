#include "rclab/chain.hpp"

#include <cmath>
#include <numeric>

#include "rclab/error.hpp"

namespace rclab {

FiniteChain::FiniteChain(std::vector<double> transition, std::vector<double> measure, std::vector<Point> labels)
    : P_(std::move(transition)), pi_(std::move(measure)), labels_(std::move(labels)) {
  const std::size_t n = pi_.size();
  if (n == 0) throw UsageError("a chain needs at least one state");
  if (P_.size() != n * n) throw UsageError("transition matrix size does not match the measure");
  if (!labels_.empty() && labels_.size() != n) throw UsageError("label count does not match the state count");
  for (std::size_t x = 0; x < n; ++x) {
    if (!(pi_[x] > 0) || !std::isfinite(pi_[x])) throw UsageError("measure must be positive on every state");
    double row = 0;
    for (std::size_t y = 0; y < n; ++y) {
      const double v = p(x, y);
      if (!(v >= 0) || !std::isfinite(v)) throw UsageError("transition entries must be nonnegative");
      row += v;
    }
    if (std::abs(row - 1.0) > 1e-12) {
      throw UsageError("row " + std::to_string(x) + " sums to " + std::to_string(row) + ", not 1");
    }
  }
  adj_.assign(n, {});
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      if (x != y && (p(x, y) > 0 || p(y, x) > 0)) adj_[x].push_back(static_cast<int>(y));
}

double FiniteChain::total_measure() const noexcept { return std::accumulate(pi_.begin(), pi_.end(), 0.0); }

bool FiniteChain::is_reversible(double tol) const {
  for (std::size_t x = 0; x < size(); ++x)
    for (std::size_t y = x + 1; y < size(); ++y)
      if (std::abs(pi(x) * p(x, y) - pi(y) * p(y, x)) > tol) return false;
  return true;
}

double FiniteChain::min_holding() const {
  double m = 1.0;
  for (std::size_t x = 0; x < size(); ++x) m = std::min(m, p(x, x));
  return m;
}

std::vector<double> FiniteChain::power_row(std::size_t x, std::int64_t n) const {
  const std::size_t s = size();
  std::vector<double> cur(s, 0.0), next(s);
  cur[x] = 1.0;
  for (std::int64_t k = 0; k < n; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t a = 0; a < s; ++a) {
      const double m = cur[a];
      if (m == 0) continue;
      const double* row = &P_[a * s];
      for (std::size_t b = 0; b < s; ++b) next[b] += m * row[b];
    }
    cur.swap(next);
  }
  return cur;
}

nlohmann::ordered_json chain_to_json(const FiniteChain& chain) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json states = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (chain.labels().empty()) {
      states.push_back(i);
    } else {
      states.push_back(chain.labels()[i].to_vector());
    }
  }
  j["states"] = std::move(states);
  j["P"] = chain.transition();
  j["pi"] = chain.measure();
  return j;
}

FiniteChain chain_from_json(const nlohmann::json& j) {
  try {
    auto P = j.at("P").get<std::vector<double>>();
    auto pi = j.at("pi").get<std::vector<double>>();
    std::vector<Point> labels;
    if (j.contains("states")) {
      const auto& st = j.at("states");
      if (st.size() != pi.size()) throw UsageError("states list does not match pi");
      if (!st.empty() && st.front().is_array()) {
        for (const auto& s : st) labels.push_back(Point::from_vector(s.get<std::vector<int>>()));
      }
    }
    return FiniteChain(std::move(P), std::move(pi), std::move(labels));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed chain JSON: ") + e.what());
  }
}

}  // namespace rclab
