#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "volharm/harmonize.hpp"

namespace volharm {

// One scanner's imprint: additive descriptor shifts plus the linear map from
// shifted descriptors to measured-volume bias.
struct SiteEffect {
  std::string scanner_id;
  Eigen::VectorXd feature_shift;  // 16 entries, additive on the baseline
  Eigen::VectorXd gm_bias_ml;     // mL per unit of (feature - baseline)
  Eigen::VectorXd wm_bias_ml;
  double intra_noise_sd = 0.0;    // mL, fresh per scan
};

struct CohortSpec {
  int n_subjects = 0;
  double age_min = 0.0;
  double age_max = 0.0;
  double gm_mean_ml = 0.0;
  double gm_sd_ml = 0.0;
  double wm_mean_ml = 0.0;
  double wm_sd_ml = 0.0;
  double gm_age_slope = 0.0;  // mL per year
  double wm_age_slope = 0.0;
  Eigen::VectorXd feature_baseline;   // 16; see default_feature_baseline()
  Eigen::VectorXd feature_jitter_sd;  // 16; empty -> 10% of |baseline|
  std::vector<SiteEffect> sites;
  int scans_per_subject = 1;
  std::uint64_t seed = 0;
};

struct GroundTruth {
  std::string scan_id;
  double true_gm_ml = 0.0;
  double true_wm_ml = 0.0;
};

struct GeneratedCohort {
  std::vector<SubjectRecord> records;
  std::vector<GroundTruth> truth;  // aligned with records
};

// All-nonzero descriptor baseline so relative jitter is well defined.
Eigen::VectorXd default_feature_baseline();

// Zeroed site template for the given scanner id.
SiteEffect null_site(const std::string& scanner_id);

// Cross-sectional cohort: one site per subject (uniformly assigned), the
// subject's true volumes shared across its scans, measured volumes biased
// through the descriptors.
GeneratedCohort generate_cohort(const CohortSpec& spec);

// Patients x scanners x 2 layout: every patient is scanned twice on every
// site in the spec, with shared true volume and fresh jitter and noise per
// scan.
GeneratedCohort generate_test_retest(const CohortSpec& spec, int n_patients);

// JSON cohort description (feature maps keyed by descriptor name). Unknown
// keys are rejected.
CohortSpec parse_cohort_spec(const std::string& json_text);

void write_ground_truth_csv(const std::string& path,
                            const std::vector<GroundTruth>& truth);
std::vector<GroundTruth> read_ground_truth_csv(const std::string& path);

}  // namespace volharm
