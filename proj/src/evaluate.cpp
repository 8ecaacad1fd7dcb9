#include "volharm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "volharm/error.hpp"

namespace volharm {

namespace {

constexpr const char* kUnspecifiedScanner = "N.S.";

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double sample_std(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

ScannerSummary summarize(const std::string& id, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  ScannerSummary s;
  s.scanner_id = id;
  s.n = static_cast<int>(values.size());
  s.median = quantile_sorted(values, 0.5);
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  s.std = sample_std(values);
  return s;
}

std::optional<double> raw_volume(const SubjectRecord& r, VolumeKind kind) {
  switch (kind) {
    case VolumeKind::gm: return r.gm_ml;
    case VolumeKind::wm: return r.wm_ml;
    case VolumeKind::wb: return r.wb_ml();
  }
  return std::nullopt;
}

const AgeMedianCurve& curve_for(const DetrendModel& detrend, VolumeKind kind) {
  switch (kind) {
    case VolumeKind::gm: return detrend.gm_curve;
    case VolumeKind::wm: return detrend.wm_curve;
    case VolumeKind::wb: break;
  }
  return detrend.wb_curve;
}

struct BoxStats {
  double lo, q1, median, q3, hi;
};

BoxStats box_stats(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return {values.front(), quantile_sorted(values, 0.25), quantile_sorted(values, 0.5),
          quantile_sorted(values, 0.75), values.back()};
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string volume_kind_name(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::gm: return "gm";
    case VolumeKind::wm: return "wm";
    case VolumeKind::wb: break;
  }
  return "wb";
}

SummaryReport scanner_summaries(const std::vector<SubjectRecord>& records,
                                VolumeKind kind, const DetrendModel& detrend,
                                int min_n) {
  const AgeMedianCurve& curve = curve_for(detrend, kind);
  std::map<std::string, std::vector<double>> groups;
  std::vector<double> pooled;
  for (const auto& r : records) {
    const auto volume = raw_volume(r, kind);
    if (!r.age || !volume) continue;
    const double detrended = detrend_volume(curve, *r.age, *volume);
    groups[r.scanner_id.value_or(kUnspecifiedScanner)].push_back(detrended);
    pooled.push_back(detrended);
  }

  SummaryReport report;
  for (const auto& [id, values] : groups) {
    if (static_cast<int>(values.size()) < min_n) continue;
    report.per_scanner.push_back(summarize(id, values));
  }
  if (report.per_scanner.empty()) {
    throw Error(Errc::NoEligibleScanners,
                "no scanner reaches " + std::to_string(min_n) + " usable scans");
  }
  report.pooled = summarize("pooled", pooled);
  return report;
}

CorrelationMatrix correlation_matrix(const std::vector<SubjectRecord>& records,
                                     const DetrendModel& detrend) {
  std::vector<const SubjectRecord*> usable;
  for (const auto& r : records) {
    if (r.age && r.gm_ml && r.wm_ml) usable.push_back(&r);
  }
  const auto n = static_cast<Eigen::Index>(usable.size());
  if (n < 3) {
    throw Error(Errc::TooFewSamples,
                "correlation needs at least 3 complete records, got " +
                    std::to_string(n));
  }

  CorrelationMatrix out;
  out.names = {"gm", "wm", "wb"};
  for (const auto& f : feature_names()) out.names.push_back(f);
  out.names.insert(out.names.end(), {"angle_product", "scale_product", "shear_product"});
  const auto vars = static_cast<Eigen::Index>(out.names.size());

  Eigen::MatrixXd data(n, vars);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SubjectRecord& r = *usable[static_cast<std::size_t>(i)];
    data(i, 0) = detrend_volume(detrend.gm_curve, *r.age, *r.gm_ml);
    data(i, 1) = detrend_volume(detrend.wm_curve, *r.age, *r.wm_ml);
    data(i, 2) = detrend_volume(detrend.wb_curve, *r.age, *r.wb_ml());
    const auto flat = r.features.flatten();
    for (int f = 0; f < kFeatureCount; ++f) data(i, 3 + f) = flat[static_cast<std::size_t>(f)];
    const auto& fv = r.features;
    data(i, 3 + kFeatureCount + 0) = fv.angles[0] * fv.angles[1] * fv.angles[2];
    data(i, 3 + kFeatureCount + 1) = fv.scales[0] * fv.scales[1] * fv.scales[2];
    data(i, 3 + kFeatureCount + 2) = fv.shears[0] * fv.shears[1] * fv.shears[2];
  }

  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  out.zero_variance.assign(static_cast<std::size_t>(vars), false);
  for (Eigen::Index j = 0; j < vars; ++j) {
    if (norms[j] <= 0.0) {
      out.zero_variance[static_cast<std::size_t>(j)] = true;
      norms[j] = 1.0;
    }
  }
  out.r = (centered.transpose() * centered)
              .cwiseQuotient(norms * norms.transpose())
              .cwiseMax(-1.0)
              .cwiseMin(1.0);
  for (Eigen::Index i = 0; i < vars; ++i) {
    for (Eigen::Index j = 0; j < vars; ++j) {
      if (i == j) {
        out.r(i, j) = 1.0;
      } else if (out.zero_variance[static_cast<std::size_t>(i)] ||
                 out.zero_variance[static_cast<std::size_t>(j)]) {
        out.r(i, j) = 0.0;
      }
    }
  }
  return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw Error(Errc::InvalidSpec, "beta parameters must be positive");
  }
  if (!(x >= 0.0) || !(x <= 1.0)) {
    throw Error(Errc::InvalidSpec, "beta argument outside [0,1]");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  // Continued fraction for the incomplete beta (modified Lentz), swapped via
  // I_x(a,b) = 1 - I_{1-x}(b,a) in the slowly converging half.
  const bool swap = x >= (a + 1.0) / (a + b + 2.0);
  const double aa = swap ? b : a;
  const double bb = swap ? a : b;
  const double xx = swap ? 1.0 - x : x;

  const double log_front = aa * std::log(xx) + bb * std::log1p(-xx) -
                           (std::lgamma(aa) + std::lgamma(bb) - std::lgamma(aa + bb));

  constexpr double tiny = 1e-300;
  const double qab = aa + bb;
  const double qap = aa + 1.0;
  const double qam = aa - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * xx / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  bool converged = false;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double numer = m * (bb - m) * xx / ((qam + m2) * (aa + m2));
    d = 1.0 + numer * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + numer / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    numer = -(aa + m) * (qab + m) * xx / ((aa + m2) * (qap + m2));
    d = 1.0 + numer * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + numer / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(Errc::NoConvergence, "incomplete beta continued fraction stalled");
  }
  const double value = std::exp(log_front) * h / aa;
  return swap ? 1.0 - value : value;
}

PairedTTestResult paired_t_test(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(a.size()) + " vs " +
                                          std::to_string(b.size()) + " values");
  }
  const std::size_t n = a.size();
  if (n < 2) throw Error(Errc::TooFewSamples, "paired test needs n >= 2");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean =
      std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) {
    throw Error(Errc::DegenerateDifferences, "all paired differences are equal");
  }

  PairedTTestResult out;
  out.df = static_cast<int>(n) - 1;
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(out.df);
  out.p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + out.t * out.t));
  return out;
}

double DiffDistribution::mean_abs() const {
  if (abs_diffs.empty()) return 0.0;
  return std::accumulate(abs_diffs.begin(), abs_diffs.end(), 0.0) /
         static_cast<double>(abs_diffs.size());
}

namespace {

// patient -> scanner -> volumes of the cell's scans, insertion-ordered scans.
using RetestCells = std::map<std::string, std::map<std::string, std::vector<double>>>;

RetestCells collect_cells(const std::vector<SubjectRecord>& records, VolumeKind kind,
                          const HarmonizationModel* model,
                          std::vector<std::string>* problems) {
  RetestCells cells;
  for (const auto& r : records) {
    const auto volume = raw_volume(r, kind);
    if (!r.scanner_id || !volume) {
      if (problems) {
        problems->push_back("scan '" + r.scan_id + "' lacks " +
                            (r.scanner_id ? "a volume" : "a scanner id"));
      }
      continue;
    }
    double value = *volume;
    if (model) {
      const CorrectedRecord c = correct(*model, r);
      switch (kind) {
        case VolumeKind::gm: value = c.gm_corr_ml; break;
        case VolumeKind::wm: value = c.wm_corr_ml; break;
        case VolumeKind::wb: value = c.wb_corr_ml; break;
      }
    }
    cells[r.subject_id][*r.scanner_id].push_back(value);
  }
  return cells;
}

void validate_layout(const RetestCells& cells, std::vector<std::string>& problems) {
  for (const auto& [patient, scanners] : cells) {
    if (scanners.size() < 2) {
      problems.push_back("patient '" + patient + "' has scans on fewer than 2 scanners");
    }
    for (const auto& [scanner, scans] : scanners) {
      if (scans.size() != 2) {
        problems.push_back("cell (" + patient + ", " + scanner + ") has " +
                           std::to_string(scans.size()) + " scans, expected 2");
      }
    }
  }
}

DiffDistribution distributions(const RetestCells& cells, bool intra) {
  DiffDistribution out;
  for (const auto& [patient, scanners] : cells) {
    for (const auto& [scanner, scans] : scanners) {
      double diff;
      if (intra) {
        diff = scans[0] - scans[1];
      } else {
        double other_sum = 0.0;
        int other_n = 0;
        for (const auto& [other, other_scans] : scanners) {
          if (other == scanner) continue;
          for (double v : other_scans) {
            other_sum += v;
            ++other_n;
          }
        }
        const double cell_mean = 0.5 * (scans[0] + scans[1]);
        diff = cell_mean - other_sum / static_cast<double>(other_n);
      }
      out.signed_diffs.push_back(diff);
      out.abs_diffs.push_back(std::abs(diff));
    }
  }
  return out;
}

}  // namespace

bool is_test_retest_layout(const std::vector<SubjectRecord>& records) {
  if (records.empty()) return false;
  RetestCells cells;
  for (const auto& r : records) {
    if (!r.scanner_id || !r.gm_ml || !r.wm_ml) return false;
    cells[r.subject_id][*r.scanner_id].push_back(0.0);
  }
  for (const auto& [patient, scanners] : cells) {
    if (scanners.size() < 2) return false;
    for (const auto& [scanner, scans] : scanners) {
      if (scans.size() != 2) return false;
    }
  }
  return true;
}

TestRetestResult test_retest(const std::vector<SubjectRecord>& records,
                             VolumeKind kind, const HarmonizationModel* model) {
  std::vector<std::string> problems;
  const RetestCells original = collect_cells(records, kind, nullptr, &problems);
  validate_layout(original, problems);
  if (original.empty()) problems.push_back("no usable scans");
  if (!problems.empty()) {
    std::string msg = "test-retest layout incomplete:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(Errc::IncompleteDesign, msg);
  }

  TestRetestResult out;
  out.intra = distributions(original, true);
  out.inter = distributions(original, false);
  out.df = static_cast<int>(out.intra.abs_diffs.size()) - 1;

  if (model) {
    const RetestCells corrected = collect_cells(records, kind, model, nullptr);
    out.intra_corrected = distributions(corrected, true);
    out.inter_corrected = distributions(corrected, false);
    try {
      out.intra_test =
          paired_t_test(out.intra.abs_diffs, out.intra_corrected->abs_diffs);
      out.t_statistic = out.intra_test->t;
      out.p_value = out.intra_test->p;
      out.df = out.intra_test->df;
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateDifferences) throw;
    }
    try {
      out.inter_test =
          paired_t_test(out.inter.abs_diffs, out.inter_corrected->abs_diffs);
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateDifferences) throw;
    }
  }
  return out;
}

std::string summary_table_text(
    const std::string& title,
    const std::vector<std::pair<std::string, ScannerSummary>>& rows) {
  char buf[128];
  std::string out = title + "\n";
  std::snprintf(buf, sizeof(buf), "  %-12s %8s %8s\n", "", "Median", "STD");
  out += buf;
  for (const auto& [label, s] : rows) {
    std::snprintf(buf, sizeof(buf), "  %-12s %8.1f %8.1f\n", label.c_str(), s.median,
                  s.std);
    out += buf;
  }
  return out;
}

std::string scanner_table_text(const std::string& title, const SummaryReport& report) {
  char buf[160];
  std::string out = title + "\n";
  std::snprintf(buf, sizeof(buf), "  %-12s %6s %8s %8s %8s %8s\n", "scanner", "n",
                "median", "std", "q1", "q3");
  out += buf;
  auto row = [&](const ScannerSummary& s) {
    std::snprintf(buf, sizeof(buf), "  %-12s %6d %8.1f %8.1f %8.1f %8.1f\n",
                  s.scanner_id.c_str(), s.n, s.median, s.std, s.q1, s.q3);
    out += buf;
  };
  for (const auto& s : report.per_scanner) row(s);
  row(report.pooled);
  return out;
}

std::string svg_boxplot(
    const std::string& title,
    const std::vector<std::pair<std::string, std::vector<double>>>& groups) {
  constexpr double width = 640.0, height = 360.0;
  constexpr double left = 60.0, right = 20.0, top = 40.0, bottom = 40.0;

  double lo = 0.0, hi = 1.0;
  bool first = true;
  std::vector<std::pair<std::string, BoxStats>> stats;
  for (const auto& [label, values] : groups) {
    if (values.empty()) continue;
    const BoxStats s = box_stats(values);
    stats.emplace_back(label, s);
    lo = first ? s.lo : std::min(lo, s.lo);
    hi = first ? s.hi : std::max(hi, s.hi);
    first = false;
  }
  if (first) {
    lo = 0.0;
    hi = 1.0;
  }
  double pad = 0.05 * (hi - lo);
  if (pad <= 0.0) pad = 1.0;
  lo -= pad;
  hi += pad;

  const auto y_of = [&](double v) {
    return top + (hi - v) / (hi - lo) * (height - top - bottom);
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    fixed(width, 0) + "\" height=\"" + fixed(height, 0) + "\">\n";
  svg += "<text x=\"" + fixed(width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
  svg += "<line x1=\"" + fixed(left) + "\" y1=\"" + fixed(top) + "\" x2=\"" +
         fixed(left) + "\" y2=\"" + fixed(height - bottom) +
         "\" stroke=\"black\"/>\n";
  for (double frac : {0.0, 0.5, 1.0}) {
    const double v = lo + frac * (hi - lo);
    svg += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(y_of(v) + 4) +
           "\" text-anchor=\"end\" font-size=\"10\">" + fixed(v, 1) + "</text>\n";
  }

  const auto n_groups = static_cast<double>(stats.size());
  const double span = (width - left - right) / std::max(n_groups, 1.0);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& [label, s] = stats[i];
    const double cx = left + span * (static_cast<double>(i) + 0.5);
    const double half = std::min(30.0, span * 0.3);
    svg += "<line x1=\"" + fixed(cx) + "\" y1=\"" + fixed(y_of(s.lo)) + "\" x2=\"" +
           fixed(cx) + "\" y2=\"" + fixed(y_of(s.hi)) + "\" stroke=\"black\"/>\n";
    svg += "<rect x=\"" + fixed(cx - half) + "\" y=\"" + fixed(y_of(s.q3)) +
           "\" width=\"" + fixed(2 * half) + "\" height=\"" +
           fixed(y_of(s.q1) - y_of(s.q3)) +
           "\" fill=\"white\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fixed(cx - half) + "\" y1=\"" + fixed(y_of(s.median)) +
           "\" x2=\"" + fixed(cx + half) + "\" y2=\"" + fixed(y_of(s.median)) +
           "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fixed(cx) + "\" y=\"" + fixed(height - bottom + 16) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace volharm
