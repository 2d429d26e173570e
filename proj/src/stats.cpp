#include "rclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "rclab/error.hpp"

namespace rclab::stats {

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Interval wilson(std::int64_t successes, std::int64_t trials, double level) {
  if (trials <= 0) throw UsageError("binomial interval needs at least one trial");
  const double z = normal_quantile(0.5 + level / 2);
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double denom = 1 + z * z / n;
  const double centre = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double chi_square_sf(double statistic, double dof) {
  if (statistic <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), statistic));
}

double ks_distance(std::vector<double>& sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw UsageError("KS distance of an empty sample");
  std::sort(sample.begin(), sample.end());
  const double m = static_cast<double>(sample.size());
  double d = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw UsageError("least squares needs at least two paired points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw UsageError("least squares needs at least two distinct abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
  fit.slope_se = n > 2 ? std::sqrt(ss / static_cast<double>(n - 2) / sxx) : 0.0;
  return fit;
}

double slope_negative_p_value(const LinearFit& fit, std::size_t n) {
  if (n <= 2) throw UsageError("trend test needs at least three points");
  if (fit.slope_se == 0) return fit.slope < 0 ? 0.0 : 1.0;
  const double t = fit.slope / fit.slope_se;
  return boost::math::cdf(boost::math::students_t_distribution<double>(static_cast<double>(n - 2)), t);
}

MeanCi mean_ci(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean of an empty sample");
  MeanCi r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.sd = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  const double half = 1.959963984540054 * r.sd / std::sqrt(n);
  r.ci_low = r.mean - half;
  r.ci_high = r.mean + half;
  return r;
}

}  // namespace rclab::stats
