#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rclab::stats {

struct Interval {
  double low = 0;
  double high = 0;
};

// Wilson score interval for `successes` out of `trials` at two-sided level `level`.
Interval wilson(std::int64_t successes, std::int64_t trials, double level = 0.95);

// Standard normal quantile.
double normal_quantile(double p);

// Upper-tail p-value of a chi-square statistic.
double chi_square_sf(double statistic, double dof);

// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
// The sample is sorted in place.
double ks_distance(std::vector<double>& sample, const std::function<double(double)>& cdf);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double slope_se = 0;
  double residual_rms = 0;
};

LinearFit least_squares(std::span<const double> x, std::span<const double> y);

// One-sided p-value for H1: slope < 0, using the t distribution with n-2 dof.
double slope_negative_p_value(const LinearFit& fit, std::size_t n);

struct MeanCi {
  double mean = 0;
  double sd = 0;
  double ci_low = 0;
  double ci_high = 0;
};

// Mean with a normal-approximation 95% interval.
MeanCi mean_ci(std::span<const double> values);

}  // namespace rclab::stats
