#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "volharm/harmonize.hpp"

namespace volharm {

enum class VolumeKind { gm, wm, wb };

std::string volume_kind_name(VolumeKind kind);

// Distribution of one scanner's age-detrended volumes.
struct ScannerSummary {
  std::string scanner_id;
  int n = 0;
  double median = 0.0;  // mL
  double std = 0.0;     // mL, n-1 denominator
  double q1 = 0.0;
  double q3 = 0.0;
};

struct SummaryReport {
  std::vector<ScannerSummary> per_scanner;  // groups with n >= min_n, sorted by id
  ScannerSummary pooled;                    // every detrendable record
};

// Groups records by scanner (absent ids pool under "N.S."), detrends the
// selected volume with the supplied curves, and summarizes each group with at
// least min_n scans. Records without an age or the volume are skipped.
SummaryReport scanner_summaries(const std::vector<SubjectRecord>& records,
                                VolumeKind kind, const DetrendModel& detrend,
                                int min_n = 10);

struct CorrelationMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd r;                // Pearson, unit diagonal
  std::vector<bool> zero_variance;  // flagged columns; their off-diagonals are 0
};

// Pearson correlations between the three age-detrended volumes, the 16
// descriptors, and the per-axis angle/scale/shear products.
CorrelationMatrix correlation_matrix(const std::vector<SubjectRecord>& records,
                                     const DetrendModel& detrend);

struct PairedTTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
};

// Two-sided paired t-test; p through the regularized incomplete beta.
PairedTTestResult paired_t_test(const std::vector<double>& a,
                                const std::vector<double>& b);

// I_x(a, b) by continued fraction, absolute error < 1e-10.
double regularized_incomplete_beta(double a, double b, double x);

struct DiffDistribution {
  std::vector<double> signed_diffs;  // mL, one per patient-scanner cell
  std::vector<double> abs_diffs;

  double mean_abs() const;
};

// Test-retest errors over a patients x scanners x 2-scans layout.
// intra: scan1 - scan2 within a cell. inter: cell mean minus the mean over
// the patient's scans on all other scanners. With a model, the corrected
// distributions and original-vs-corrected paired t-tests (on absolute
// values) are filled in; t_statistic/p_value/df mirror the intra test.
struct TestRetestResult {
  DiffDistribution intra;
  DiffDistribution inter;
  std::optional<DiffDistribution> intra_corrected;
  std::optional<DiffDistribution> inter_corrected;
  std::optional<PairedTTestResult> intra_test;
  std::optional<PairedTTestResult> inter_test;
  double t_statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
};

TestRetestResult test_retest(const std::vector<SubjectRecord>& records,
                             VolumeKind kind,
                             const HarmonizationModel* model = nullptr);

// True when every (subject, scanner) cell holds exactly 2 scans and every
// subject spans at least 2 scanners.
bool is_test_retest_layout(const std::vector<SubjectRecord>& records);

// Median/STD rows, one per labeled variant.
std::string summary_table_text(
    const std::string& title,
    const std::vector<std::pair<std::string, ScannerSummary>>& rows);

// Per-scanner table: id, n, median, std, q1, q3.
std::string scanner_table_text(const std::string& title, const SummaryReport& report);

// Static box plot (min, q1, median, q3, max per labeled group).
std::string svg_boxplot(const std::string& title,
                        const std::vector<std::pair<std::string, std::vector<double>>>&
                            groups);

}  // namespace volharm
