#pragma once

#include <optional>
#include <string>
#include <vector>

namespace volharm {

// Moving-median volume-vs-age curve on a regular age grid. Evaluation clamps
// outside the grid and interpolates linearly between grid points.
struct AgeMedianCurve {
  std::vector<double> grid_ages;     // strictly increasing
  std::vector<double> grid_medians;  // mL
  double window = 5.0;               // half-width, years

  double operator()(double age) const;
};

// Ordinary least-squares age fit for one descriptor.
struct LinearAgeFit {
  double slope = 0.0;      // feature units per year
  double intercept = 0.0;  // feature units
  double reference_age = 0.0;  // training-cohort mean age, fallback at test time
};

struct AgeSample {
  double age = 0.0;
  double value = 0.0;
};

// Fit the windowed-median curve on a grid from min to max sample age. Grid
// points whose window holds no samples inherit the nearest populated value.
AgeMedianCurve fit_age_median(const std::vector<AgeSample>& samples, double window,
                              double grid_step);

// Residual after removing the age-expected median (clamped extrapolation).
double detrend_volume(const AgeMedianCurve& curve, double age, double volume);

LinearAgeFit fit_feature_age(const std::vector<AgeSample>& samples);

// Residual against the age line; without an age the reference age is used.
double detrend_feature(const LinearAgeFit& fit, std::optional<double> age,
                       double feature);

// Age-dependency removal for the whole record: median curves for the three
// volume kinds plus linear fits for NMI and the six CNR descriptors.
struct DetrendModel {
  AgeMedianCurve gm_curve;
  AgeMedianCurve wm_curve;
  AgeMedianCurve wb_curve;
  std::vector<LinearAgeFit> feature_fits;  // nmi, cnr_1..cnr_6 in schema order
};

}  // namespace volharm
