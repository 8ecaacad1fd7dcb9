// volharm: command-line front end for the harmonization library.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "volharm/csv.hpp"
#include "volharm/descriptors.hpp"
#include "volharm/error.hpp"
#include "volharm/evaluate.hpp"
#include "volharm/harmonize.hpp"
#include "volharm/rvm.hpp"
#include "volharm/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace volharm;

namespace {

enum LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("VOLHARM_LOG");
    if (!env) return kWarn;
    const std::string v = env;
    if (v == "error" || v == "0") return kError;
    if (v == "warn" || v == "1") return kWarn;
    if (v == "info" || v == "2") return kInfo;
    if (v == "debug" || v == "3") return kDebug;
    return kWarn;
  }();
  return level;
}

void logf(int level, const char* fmt, ...) {
  if (level > log_level()) return;
  std::va_list args;
  va_start(args, fmt);
  std::fputs("volharm: ", stderr);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
  va_end(args);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw Error(Errc::IoError, "cannot create directory '" + path + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error(Errc::IoError, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------- features

const std::vector<std::string>& stats_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> out;
    for (const auto& pair : default_cnr_pairs()) {
      for (const auto& label : {pair.first, pair.second}) {
        if (std::find(out.begin(), out.end(), label) == out.end()) {
          out.push_back(label);
        }
      }
    }
    return out;
  }();
  return labels;
}

int cmd_features(const std::string& input, const std::string& output) {
  const CsvTable table = read_csv(input);

  std::vector<std::string> needed = {"subject_id", "scan_id"};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      needed.push_back("affine_" + std::to_string(r) + std::to_string(c));
    }
  }
  needed.push_back("nmi");
  for (const auto& label : stats_labels()) {
    needed.push_back("mean_" + label);
    needed.push_back("var_" + label);
  }
  std::map<std::string, int> col;
  std::string missing;
  for (const auto& name : needed) {
    col[name] = table.column(name);
    if (col[name] < 0) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty()) {
    throw Error(Errc::SchemaMismatch, "'" + input + "' lacks columns: " + missing);
  }

  CsvTable out;
  out.header = {"subject_id", "scan_id"};
  for (const auto& f : feature_names()) out.header.push_back(f);

  std::vector<std::string> failures;
  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const std::string row_id = "row " + std::to_string(row + 2) + " (scan '" +
                               table.cell(row, col["scan_id"]) + "')";
    try {
      AffineMatrix affine;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          affine.linear(r, c) = parse_double(
              table.cell(row, col["affine_" + std::to_string(r) + std::to_string(c)]),
              row_id);
        }
        affine.translation[r] = parse_double(
            table.cell(row, col["affine_" + std::to_string(r) + "3"]), row_id);
      }
      const AffineDecomposition dec = decompose_affine(affine);

      std::map<std::string, StructureStats> stats;
      for (const auto& label : stats_labels()) {
        stats[label] = {label,
                        parse_double(table.cell(row, col["mean_" + label]), row_id),
                        parse_double(table.cell(row, col["var_" + label]), row_id)};
      }
      std::array<double, kCnrPairCount> cnrs{};
      for (int p = 0; p < kCnrPairCount; ++p) {
        const auto& pair = default_cnr_pairs()[static_cast<std::size_t>(p)];
        cnrs[static_cast<std::size_t>(p)] = cnr(stats[pair.first], stats[pair.second]);
      }
      const double nmi_value = parse_double(table.cell(row, col["nmi"]), row_id);
      const FeatureVector features = assemble_features(dec, nmi_value, cnrs);

      std::vector<std::string> cells = {table.cell(row, col["subject_id"]),
                                        table.cell(row, col["scan_id"])};
      for (double v : features.flatten()) cells.push_back(format_double(v));
      out.rows.push_back(std::move(cells));
    } catch (const Error& e) {
      failures.push_back(row_id + ": " + e.what());
    }
  }

  if (!failures.empty()) {
    for (const auto& f : failures) logf(kError, "%s", f.c_str());
    logf(kError, "%zu of %zu rows failed; no output written", failures.size(),
         table.rows.size());
    return 2;
  }
  write_csv(output, out);
  logf(kInfo, "wrote %zu feature rows to %s", out.rows.size(), output.c_str());
  return 0;
}

// ------------------------------------------------------------------- synth

int cmd_synth(const std::string& input, const std::string& output,
              std::uint64_t seed, int retest_patients) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + input + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();

  CohortSpec spec = parse_cohort_spec(buffer.str());
  spec.seed = seed;

  const GeneratedCohort cohort = retest_patients > 0
                                     ? generate_test_retest(spec, retest_patients)
                                     : generate_cohort(spec);
  ensure_dir(output);
  write_cohort_csv(output + "/cohort.csv", cohort.records);
  write_ground_truth_csv(output + "/truth.csv", cohort.truth);
  logf(kInfo, "wrote %zu scans to %s", cohort.records.size(), output.c_str());
  return 0;
}

// ------------------------------------------------------------------- split

int cmd_split(const std::string& input, const std::string& output, double fraction,
              std::uint64_t seed) {
  const auto records = read_cohort_csv(input);
  const auto [train_side, test_side] = split_cohort(records, fraction, seed);
  ensure_dir(output);
  write_cohort_csv(output + "/train.csv", train_side);
  write_cohort_csv(output + "/test.csv", test_side);
  logf(kInfo, "split %zu scans into %zu train / %zu test", records.size(),
       train_side.size(), test_side.size());
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const std::string& input, const std::string& model_path,
              const std::string& kernel, const std::vector<double>& gamma_grid,
              const std::string& wb_mode, double detrend_window,
              std::optional<std::uint64_t> seed, std::optional<double> fraction) {
  const auto records = read_cohort_csv(input);

  KernelSpec spec;
  spec.kind = kernel_kind_from_name(kernel);
  HarmonizeConfig cfg;
  cfg.train.rbf_gamma_grid = gamma_grid;
  cfg.wb_mode = wb_mode_from_name(wb_mode);
  cfg.detrend_window = detrend_window;

  HarmonizationModel model = fit(records, spec, cfg);
  if (seed) model.split_seed = *seed;
  if (fraction) model.split_fraction = *fraction;

  for (const auto& [name, rvm] :
       std::initializer_list<std::pair<const char*, const RvmModel*>>{
           {"gm", &model.gm_model},
           {"wm", &model.wm_model},
           {"wb", model.wb_model ? &*model.wb_model : nullptr}}) {
    if (!rvm) continue;
    logf(kInfo, "%s model: %d active weights, %d iterations, log evidence %.3f%s",
         name, rvm->active_count(), rvm->meta.iterations, rvm->meta.log_evidence,
         rvm->kernel.kind == KernelKind::rbf
             ? (" (gamma " + format_double(rvm->kernel.rbf_gamma) + ")").c_str()
             : "");
    if (!rvm->meta.converged) {
      throw Error(Errc::NoConvergence,
                  std::string(name) + " model stopped at max_iter without meeting tol");
    }
  }
  save_model(model, model_path);
  logf(kInfo, "model written to %s", model_path.c_str());
  return 0;
}

// ----------------------------------------------------------------- correct

int cmd_correct(const std::string& model_path, const std::string& input,
                const std::string& output) {
  const HarmonizationModel model = load_model(model_path);
  const auto records = read_cohort_csv(input);
  std::vector<CorrectedRecord> corrected;
  corrected.reserve(records.size());
  for (const auto& r : records) corrected.push_back(correct(model, r));
  write_corrected_csv(output, records, corrected);
  logf(kInfo, "corrected %zu scans", corrected.size());
  return 0;
}

// ---------------------------------------------------------------- evaluate

json summary_to_json(const ScannerSummary& s) {
  return {{"scanner_id", s.scanner_id}, {"n", s.n},   {"median", s.median},
          {"std", s.std},               {"q1", s.q1}, {"q3", s.q3}};
}

json report_to_json(const SummaryReport& r) {
  json scanners = json::array();
  for (const auto& s : r.per_scanner) scanners.push_back(summary_to_json(s));
  return {{"per_scanner", std::move(scanners)}, {"pooled", summary_to_json(r.pooled)}};
}

json distribution_to_json(const DiffDistribution& d) {
  return {{"signed", d.signed_diffs},
          {"abs", d.abs_diffs},
          {"mean_abs", d.mean_abs()}};
}

json t_test_to_json(const PairedTTestResult& t) {
  return {{"t", t.t}, {"df", t.df}, {"p", t.p}};
}

// Corrected-volume stand-ins so the summary machinery sees the kind's
// corrected value through gm_ml/wm_ml.
std::vector<SubjectRecord> substituted(const std::vector<SubjectRecord>& records,
                                       const std::vector<CorrectedRecord>& corrected,
                                       VolumeKind kind) {
  std::vector<SubjectRecord> out = records;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case VolumeKind::gm:
        out[i].gm_ml = corrected[i].gm_corr_ml;
        break;
      case VolumeKind::wm:
        out[i].wm_ml = corrected[i].wm_corr_ml;
        break;
      case VolumeKind::wb:
        out[i].gm_ml = corrected[i].wb_corr_ml - corrected[i].wm_corr_ml;
        out[i].wm_ml = corrected[i].wm_corr_ml;
        break;
    }
  }
  return out;
}

std::map<std::string, std::vector<double>> detrended_by_scanner(
    const std::vector<SubjectRecord>& records, VolumeKind kind,
    const DetrendModel& detrend) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) {
    std::optional<double> volume;
    switch (kind) {
      case VolumeKind::gm: volume = r.gm_ml; break;
      case VolumeKind::wm: volume = r.wm_ml; break;
      case VolumeKind::wb: volume = r.wb_ml(); break;
    }
    if (!r.age || !volume) continue;
    const AgeMedianCurve& curve = kind == VolumeKind::gm   ? detrend.gm_curve
                                  : kind == VolumeKind::wm ? detrend.wm_curve
                                                           : detrend.wb_curve;
    groups[r.scanner_id.value_or("N.S.")].push_back(
        detrend_volume(curve, *r.age, *volume));
  }
  return groups;
}

int cmd_evaluate(const std::string& input, const std::string& model_path,
                 const std::string& output, int min_n, const std::string& format,
                 double detrend_window) {
  const auto records = read_cohort_csv(input);

  std::optional<HarmonizationModel> model;
  if (!model_path.empty()) model = load_model(model_path);

  DetrendModel detrend;
  if (model) {
    detrend = model->detrend;
  } else {
    std::vector<SubjectRecord> complete;
    for (const auto& r : records) {
      if (r.age && r.gm_ml && r.wm_ml) complete.push_back(r);
    }
    detrend = fit_detrend(complete, detrend_window);
    logf(kInfo, "fitted detrend curves on %zu complete records", complete.size());
  }

  std::vector<CorrectedRecord> corrected;
  if (model) {
    corrected.reserve(records.size());
    for (const auto& r : records) corrected.push_back(correct(*model, r));
  }

  const bool retest = is_test_retest_layout(records);
  json report;
  std::string text;

  for (VolumeKind kind : {VolumeKind::gm, VolumeKind::wm, VolumeKind::wb}) {
    const std::string kind_name = volume_kind_name(kind);
    json kind_json;
    std::vector<std::pair<std::string, ScannerSummary>> pooled_rows;

    const SummaryReport original = scanner_summaries(records, kind, detrend, min_n);
    kind_json["original"] = report_to_json(original);
    pooled_rows.emplace_back("Original", original.pooled);
    text += scanner_table_text(kind_name + " original (age-detrended, mL)", original);

    if (model) {
      const auto records_corr = substituted(records, corrected, kind);
      const SummaryReport after = scanner_summaries(records_corr, kind, detrend, min_n);
      kind_json["corrected"] = report_to_json(after);
      pooled_rows.emplace_back("Corrected", after.pooled);
      text += scanner_table_text(kind_name + " corrected (age-detrended, mL)", after);
    }
    text += summary_table_text(kind_name + " pooled (age-detrended, mL)", pooled_rows) +
            "\n";

    if (retest) {
      const TestRetestResult rt =
          test_retest(records, kind, model ? &*model : nullptr);
      json rt_json;
      rt_json["intra"] = distribution_to_json(rt.intra);
      rt_json["inter"] = distribution_to_json(rt.inter);
      if (rt.intra_corrected) {
        rt_json["intra_corrected"] = distribution_to_json(*rt.intra_corrected);
        rt_json["inter_corrected"] = distribution_to_json(*rt.inter_corrected);
      }
      if (rt.intra_test) rt_json["intra_test"] = t_test_to_json(*rt.intra_test);
      if (rt.inter_test) rt_json["inter_test"] = t_test_to_json(*rt.inter_test);
      kind_json["test_retest"] = std::move(rt_json);

      char line[256];
      std::snprintf(line, sizeof(line),
                    "%s test-retest: mean intra %.3f, mean inter %.3f",
                    kind_name.c_str(), rt.intra.mean_abs(), rt.inter.mean_abs());
      text += line;
      if (rt.intra_corrected) {
        std::snprintf(line, sizeof(line),
                      "; corrected intra %.3f, inter %.3f",
                      rt.intra_corrected->mean_abs(), rt.inter_corrected->mean_abs());
        text += line;
      }
      if (rt.intra_test) {
        std::snprintf(line, sizeof(line),
                      "; intra t=%.4f df=%d p=%.4g", rt.intra_test->t,
                      rt.intra_test->df, rt.intra_test->p);
        text += line;
      }
      text += "\n\n";
    }
    report["volumes"][kind_name] = std::move(kind_json);
  }

  const CorrelationMatrix corr = correlation_matrix(records, detrend);
  json corr_json;
  corr_json["names"] = corr.names;
  corr_json["zero_variance"] = corr.zero_variance;
  json rows = json::array();
  for (Eigen::Index i = 0; i < corr.r.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < corr.r.cols(); ++j) row.push_back(corr.r(i, j));
    rows.push_back(std::move(row));
  }
  corr_json["r"] = std::move(rows);
  report["correlation"] = std::move(corr_json);

  text += "correlation matrix (Pearson r)\n  ";
  for (const auto& name : corr.names) text += " " + name;
  text += "\n";
  for (Eigen::Index i = 0; i < corr.r.rows(); ++i) {
    char cell[32];
    text += "  " + corr.names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < corr.r.cols(); ++j) {
      std::snprintf(cell, sizeof(cell), " %+.2f", corr.r(i, j));
      text += cell;
    }
    text += "\n";
  }

  ensure_dir(output);
  if (format == "text") {
    write_text_file(output + "/report.txt", text);
  } else {
    write_text_file(output + "/report.json", report.dump(2) + "\n");
  }
  if (format == "svg") {
    for (VolumeKind kind : {VolumeKind::gm, VolumeKind::wm, VolumeKind::wb}) {
      const std::string kind_name = volume_kind_name(kind);
      std::vector<std::pair<std::string, std::vector<double>>> groups;
      for (auto& [scanner, values] : detrended_by_scanner(records, kind, detrend)) {
        groups.emplace_back(scanner, std::move(values));
      }
      if (model) {
        for (auto& [scanner, values] : detrended_by_scanner(
                 substituted(records, corrected, kind), kind, detrend)) {
          groups.emplace_back(scanner + " corr", std::move(values));
        }
      }
      write_text_file(output + "/boxplot_" + kind_name + ".svg",
                      svg_boxplot(kind_name + " by scanner (age-detrended, mL)",
                                  groups));
    }
  }
  logf(kInfo, "report written to %s", output.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Harmonization of multi-scanner brain volumetry"};
  app.require_subcommand(1);

  std::string input, output, model_path, kernel = "linear", wb_mode = "sum";
  std::string report_format = "json";
  std::vector<double> gamma_grid;
  double fraction = 0.7;
  double detrend_window = 5.0;
  std::uint64_t seed = 0;
  int min_n = 10;
  int retest_patients = 0;

  auto* features = app.add_subcommand(
      "features", "Turn registration/intensity statistics into descriptor rows");
  features->add_option("--input", input, "statistics CSV")->required();
  features->add_option("--output", output, "feature CSV to write")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  synth->add_option("--input", input, "cohort spec JSON")->required();
  synth->add_option("--output", output, "output directory")->required();
  synth->add_option("--seed", seed, "generator seed")->required();
  synth->add_option("--retest-patients", retest_patients,
                    "emit a patients x scanners x 2 design instead");

  auto* split = app.add_subcommand("split", "Subject-level train/test split");
  split->add_option("--input", input, "cohort CSV")->required();
  split->add_option("--output", output, "output directory")->required();
  split->add_option("--split-fraction", fraction, "train fraction, default 0.7");
  split->add_option("--seed", seed, "shuffle seed")->required();

  auto* train = app.add_subcommand("train", "Fit a harmonization model");
  train->add_option("--input", input, "training cohort CSV")->required();
  train->add_option("--model", model_path, "model JSON to write")->required();
  train->add_option("--kernel", kernel, "linear|rbf")
      ->check(CLI::IsMember({"linear", "rbf"}));
  train->add_option("--rbf-gamma-grid", gamma_grid,
                    "candidate rbf length scales (default: derived)")
      ->delimiter(',');
  train->add_option("--wb-mode", wb_mode, "sum|direct")
      ->check(CLI::IsMember({"sum", "direct"}));
  train->add_option("--detrend-window-years", detrend_window,
                    "median window half-width");
  std::optional<std::uint64_t> train_seed;
  std::optional<double> train_fraction;
  train->add_option("--seed", train_seed, "split seed, recorded as provenance");
  train->add_option("--split-fraction", train_fraction,
                    "split fraction, recorded as provenance");

  auto* correct = app.add_subcommand("correct", "Apply a model to a cohort");
  correct->add_option("--model", model_path, "model JSON")->required();
  correct->add_option("--input", input, "cohort CSV")->required();
  correct->add_option("--output", output, "corrected CSV to write")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Summaries, correlations, test-retest");
  evaluate->add_option("--input", input, "cohort CSV")->required();
  evaluate->add_option("--model", model_path, "model JSON (enables before/after)");
  evaluate->add_option("--output", output, "report directory")->required();
  evaluate->add_option("--min-scanner-n", min_n, "per-scanner minimum, default 10");
  evaluate->add_option("--report-format", report_format, "json|text|svg")
      ->check(CLI::IsMember({"json", "text", "svg"}));
  evaluate->add_option("--detrend-window-years", detrend_window,
                       "median window when no model is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (features->parsed()) return cmd_features(input, output);
  if (synth->parsed()) return cmd_synth(input, output, seed, retest_patients);
  if (split->parsed()) return cmd_split(input, output, fraction, seed);
  if (train->parsed()) {
    return cmd_train(input, model_path, kernel, gamma_grid, wb_mode, detrend_window,
                     train_seed, train_fraction);
  }
  if (correct->parsed()) return cmd_correct(model_path, input, output);
  if (evaluate->parsed()) {
    return cmd_evaluate(input, model_path, output, min_n, report_format,
                        detrend_window);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    logf(kError, "%s", e.what());
    return is_data_error(e.code()) ? 2 : 3;
  } catch (const std::exception& e) {
    logf(kError, "unexpected failure: %s", e.what());
    return 2;
  }
}
