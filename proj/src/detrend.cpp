#include "volharm/detrend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "volharm/error.hpp"

namespace volharm {

namespace {

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double AgeMedianCurve::operator()(double age) const {
  if (grid_ages.empty()) return 0.0;
  if (age <= grid_ages.front()) return grid_medians.front();
  if (age >= grid_ages.back()) return grid_medians.back();
  const auto it = std::upper_bound(grid_ages.begin(), grid_ages.end(), age);
  const std::size_t hi = static_cast<std::size_t>(it - grid_ages.begin());
  const std::size_t lo = hi - 1;
  const double t = (age - grid_ages[lo]) / (grid_ages[hi] - grid_ages[lo]);
  return (1.0 - t) * grid_medians[lo] + t * grid_medians[hi];
}

AgeMedianCurve fit_age_median(const std::vector<AgeSample>& samples, double window,
                              double grid_step) {
  if (samples.size() < 10) {
    throw Error(Errc::TooFewSamples, "need at least 10 samples, got " +
                                         std::to_string(samples.size()));
  }
  if (!(window > 0.0) || !(grid_step > 0.0)) {
    throw Error(Errc::InvalidSpec, "window and grid step must be positive");
  }

  double age_min = std::numeric_limits<double>::infinity();
  double age_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    age_min = std::min(age_min, s.age);
    age_max = std::max(age_max, s.age);
  }

  AgeMedianCurve curve;
  curve.window = window;
  for (double a = age_min; a <= age_max + 1e-9; a += grid_step) {
    curve.grid_ages.push_back(a);
  }

  std::vector<bool> populated(curve.grid_ages.size(), false);
  curve.grid_medians.assign(curve.grid_ages.size(), 0.0);
  std::vector<double> bucket;
  for (std::size_t g = 0; g < curve.grid_ages.size(); ++g) {
    bucket.clear();
    for (const auto& s : samples) {
      if (std::abs(s.age - curve.grid_ages[g]) <= window) bucket.push_back(s.value);
    }
    if (!bucket.empty()) {
      curve.grid_medians[g] = median_of(bucket);
      populated[g] = true;
    }
  }

  // Empty windows inherit the nearest populated grid value (ties go left).
  for (std::size_t g = 0; g < curve.grid_ages.size(); ++g) {
    if (populated[g]) continue;
    std::size_t best = curve.grid_ages.size();
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 0; k < curve.grid_ages.size(); ++k) {
      if (!populated[k]) continue;
      const std::size_t dist = k > g ? k - g : g - k;
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    curve.grid_medians[g] = curve.grid_medians[best];
  }
  return curve;
}

double detrend_volume(const AgeMedianCurve& curve, double age, double volume) {
  return volume - curve(age);
}

LinearAgeFit fit_feature_age(const std::vector<AgeSample>& samples) {
  if (samples.size() < 3) {
    throw Error(Errc::TooFewSamples, "need at least 3 samples, got " +
                                         std::to_string(samples.size()));
  }
  const double n = static_cast<double>(samples.size());
  double mean_age = 0.0, mean_val = 0.0;
  for (const auto& s : samples) {
    mean_age += s.age;
    mean_val += s.value;
  }
  mean_age /= n;
  mean_val /= n;

  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    sxx += (s.age - mean_age) * (s.age - mean_age);
    sxy += (s.age - mean_age) * (s.value - mean_val);
  }
  if (sxx == 0.0) throw Error(Errc::DegenerateAges, "all sample ages are equal");

  LinearAgeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = mean_val - fit.slope * mean_age;
  fit.reference_age = mean_age;
  return fit;
}

double detrend_feature(const LinearAgeFit& fit, std::optional<double> age,
                       double feature) {
  const double a = age.value_or(fit.reference_age);
  return feature - (fit.slope * a + fit.intercept);
}

}  // namespace volharm
