#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "volharm/descriptors.hpp"
#include "volharm/detrend.hpp"
#include "volharm/rvm.hpp"

namespace volharm {

// One scan of one subject. Optionals mirror empty cells in the cohort CSV;
// only ids and the descriptor block are mandatory.
struct SubjectRecord {
  std::string subject_id;
  std::string scan_id;
  std::optional<double> age;             // years
  std::string sex;                       // carried only, may be empty
  std::optional<std::string> scanner_id;
  std::optional<double> field_strength;  // tesla
  std::optional<double> te_ms;
  std::optional<double> tr_ms;
  FeatureVector features;
  std::optional<double> gm_ml;
  std::optional<double> wm_ml;

  std::optional<double> wb_ml() const {
    if (gm_ml && wm_ml) return *gm_ml + *wm_ml;
    return std::nullopt;
  }
};

enum class WbMode { sum_of_corrected, direct_model };

std::string wb_mode_name(WbMode mode);
WbMode wb_mode_from_name(const std::string& name);

struct HarmonizationModel {
  DetrendModel detrend;
  RvmModel gm_model;
  RvmModel wm_model;
  std::optional<RvmModel> wb_model;  // present only for direct_model
  WbMode wb_mode = WbMode::sum_of_corrected;
  std::vector<std::string> schema;   // feature names, flattening order
  std::uint64_t split_seed = 0;      // provenance from the fit-time split
  double split_fraction = 0.0;       // 0 when fit on an unsplit cohort
};

struct CorrectedRecord {
  double gm_ml = 0.0;  // originals
  double wm_ml = 0.0;
  double wb_ml = 0.0;
  double gm_corr_ml = 0.0;
  double wm_corr_ml = 0.0;
  double wb_corr_ml = 0.0;
  double gm_pred_ml = 0.0;  // descriptor-explained part removed from each volume
  double wm_pred_ml = 0.0;
  double gm_var = 0.0;      // predictive variances, mL^2
  double wm_var = 0.0;
};

struct HarmonizeConfig {
  TrainConfig train;
  double detrend_window = 5.0;  // years, half-width
  double detrend_grid_step = 1.0;
  WbMode wb_mode = WbMode::sum_of_corrected;
  int min_records = 30;
};

// Deterministic subject-level split: every scan of a subject lands on one
// side. The train side receives round(fraction * n_subjects) subjects,
// clamped to [1, n_subjects - 1].
std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>> split_cohort(
    const std::vector<SubjectRecord>& records, double fraction, std::uint64_t seed);

// Age model alone: median curves for the volumes, linear fits for NMI/CNR.
// Every record needs age and both volumes.
DetrendModel fit_detrend(const std::vector<SubjectRecord>& records,
                         double window = 5.0, double grid_step = 1.0);

// Fits the age model on the training cohort, then one sparse regressor per
// tissue from age-detrended descriptors to age-detrended volumes. For the
// rbf kernel each tissue model picks its length scale from
// cfg.train.rbf_gamma_grid (or the derived default grid) by evidence.
HarmonizationModel fit(const std::vector<SubjectRecord>& records,
                       const KernelSpec& spec, const HarmonizeConfig& cfg = {});

// y_corr = y - predicted descriptor contribution, per tissue. WB follows
// wb_mode. Age is optional; descriptor detrending falls back to the
// training-cohort reference age.
CorrectedRecord correct(const HarmonizationModel& model, const SubjectRecord& record);

// Descriptor block as the regressors see it: geometry raw, NMI and CNRs
// age-detrended.
Eigen::VectorXd detrended_features(const DetrendModel& detrend,
                                   const SubjectRecord& record);

void save_model(const HarmonizationModel& model, const std::string& path);
HarmonizationModel load_model(const std::string& path);

// Cohort CSV, one row per scan. Columns:
// subject_id, scan_id, age, sex, scanner_id, field_strength, te_ms, tr_ms,
// <16 feature columns>, gm_ml, wm_ml. Empty cells are absent optionals.
std::vector<SubjectRecord> read_cohort_csv(const std::string& path);
void write_cohort_csv(const std::string& path,
                      const std::vector<SubjectRecord>& records);

// Corrected-output CSV: the cohort columns plus gm_corr_ml, wm_corr_ml,
// wb_corr_ml, gm_pred_ml, wm_pred_ml, gm_var, wm_var.
void write_corrected_csv(const std::string& path,
                         const std::vector<SubjectRecord>& records,
                         const std::vector<CorrectedRecord>& corrected);

const std::vector<std::string>& cohort_columns();

}  // namespace volharm
