#include "volharm/harmonize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "volharm/csv.hpp"
#include "volharm/error.hpp"
#include "volharm/rng.hpp"

namespace volharm {

namespace {

using json = nlohmann::json;

constexpr int kModelFormatVersion = 1;

std::vector<AgeSample> volume_samples(const std::vector<SubjectRecord>& records,
                                      double (*pick)(const SubjectRecord&)) {
  std::vector<AgeSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({*r.age, pick(r)});
  return out;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json obj;
  obj["rows"] = m.rows();
  obj["cols"] = m.cols();
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  obj["data"] = std::move(data);
  return obj;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr.at(i).get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& obj) {
  const auto rows = obj.at("rows").get<Eigen::Index>();
  const auto cols = obj.at("cols").get<Eigen::Index>();
  const json& data = obj.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(Errc::SchemaVersionMismatch, "matrix payload size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data.at(k++).get<double>();
  }
  return m;
}

json curve_to_json(const AgeMedianCurve& c) {
  return {{"grid_ages", c.grid_ages}, {"grid_medians", c.grid_medians}, {"window", c.window}};
}

AgeMedianCurve curve_from_json(const json& obj) {
  AgeMedianCurve c;
  c.grid_ages = obj.at("grid_ages").get<std::vector<double>>();
  c.grid_medians = obj.at("grid_medians").get<std::vector<double>>();
  c.window = obj.at("window").get<double>();
  return c;
}

json rvm_to_json(const RvmModel& m) {
  json obj;
  obj["kernel"] = kernel_kind_name(m.kernel.kind);
  obj["rbf_gamma"] = m.kernel.rbf_gamma;
  obj["standardize"] = m.standardizer.enabled;
  obj["standardize_mean"] = vector_to_json(m.standardizer.mean);
  obj["standardize_sd"] = vector_to_json(m.standardizer.sd);
  obj["bias_active"] = m.bias_active;
  obj["relevance_vectors"] = matrix_to_json(m.relevance_vectors);
  obj["weights"] = vector_to_json(m.weights);
  obj["sigma"] = matrix_to_json(m.sigma);
  obj["beta"] = m.beta;
  obj["iterations"] = m.meta.iterations;
  obj["converged"] = m.meta.converged;
  obj["log_evidence"] = m.meta.log_evidence;
  return obj;
}

RvmModel rvm_from_json(const json& obj) {
  RvmModel m;
  m.kernel.kind = kernel_kind_from_name(obj.at("kernel").get<std::string>());
  m.kernel.rbf_gamma = obj.at("rbf_gamma").get<double>();
  m.standardizer.enabled = obj.at("standardize").get<bool>();
  m.standardizer.mean = vector_from_json(obj.at("standardize_mean"));
  m.standardizer.sd = vector_from_json(obj.at("standardize_sd"));
  m.bias_active = obj.at("bias_active").get<bool>();
  m.relevance_vectors = matrix_from_json(obj.at("relevance_vectors"));
  m.weights = vector_from_json(obj.at("weights"));
  m.sigma = matrix_from_json(obj.at("sigma"));
  m.beta = obj.at("beta").get<double>();
  m.meta.iterations = obj.at("iterations").get<int>();
  m.meta.converged = obj.at("converged").get<bool>();
  m.meta.log_evidence = obj.at("log_evidence").get<double>();
  return m;
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

std::string wb_mode_name(WbMode mode) {
  return mode == WbMode::sum_of_corrected ? "sum" : "direct";
}

WbMode wb_mode_from_name(const std::string& name) {
  if (name == "sum") return WbMode::sum_of_corrected;
  if (name == "direct") return WbMode::direct_model;
  throw Error(Errc::InvalidSpec, "unknown wb mode '" + name + "'");
}

std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>> split_cohort(
    const std::vector<SubjectRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw Error(Errc::InvalidSpec, "split fraction must lie in (0, 1)");
  }
  std::vector<std::string> subjects;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.subject_id).second) subjects.push_back(r.subject_id);
  }
  if (subjects.size() < 2) {
    throw Error(Errc::TooFewSubjects,
                "need at least 2 subjects, got " + std::to_string(subjects.size()));
  }

  Rng rng(seed);
  rng.shuffle(subjects);
  const auto n = static_cast<long long>(subjects.size());
  long long n_train = std::llround(fraction * static_cast<double>(n));
  n_train = std::clamp(n_train, 1LL, n - 1LL);

  std::unordered_set<std::string> train_side(subjects.begin(),
                                             subjects.begin() + n_train);
  std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>> out;
  for (const auto& r : records) {
    (train_side.count(r.subject_id) ? out.first : out.second).push_back(r);
  }
  return out;
}

Eigen::VectorXd detrended_features(const DetrendModel& detrend,
                                   const SubjectRecord& record) {
  const auto flat = record.features.flatten();
  Eigen::VectorXd x(kFeatureCount);
  for (int i = 0; i < 9; ++i) x[i] = flat[static_cast<std::size_t>(i)];
  for (int i = 9; i < kFeatureCount; ++i) {
    x[i] = detrend_feature(detrend.feature_fits[static_cast<std::size_t>(i - 9)],
                           record.age, flat[static_cast<std::size_t>(i)]);
  }
  return x;
}

DetrendModel fit_detrend(const std::vector<SubjectRecord>& records, double window,
                         double grid_step) {
  for (const auto& r : records) {
    if (!r.age) {
      throw Error(Errc::MissingAge, "record '" + r.scan_id + "' lacks an age");
    }
    if (!r.gm_ml || !r.wm_ml) {
      throw Error(Errc::SchemaMismatch, "record '" + r.scan_id + "' lacks a volume");
    }
  }

  DetrendModel detrend;
  detrend.gm_curve = fit_age_median(
      volume_samples(records, [](const SubjectRecord& r) { return *r.gm_ml; }),
      window, grid_step);
  detrend.wm_curve = fit_age_median(
      volume_samples(records, [](const SubjectRecord& r) { return *r.wm_ml; }),
      window, grid_step);
  detrend.wb_curve = fit_age_median(
      volume_samples(records, [](const SubjectRecord& r) { return *r.wb_ml(); }),
      window, grid_step);

  detrend.feature_fits.resize(kFeatureCount - 9);
  for (int f = 9; f < kFeatureCount; ++f) {
    std::vector<AgeSample> samples;
    samples.reserve(records.size());
    for (const auto& r : records) {
      samples.push_back({*r.age, r.features.flatten()[static_cast<std::size_t>(f)]});
    }
    detrend.feature_fits[static_cast<std::size_t>(f - 9)] = fit_feature_age(samples);
  }
  return detrend;
}

HarmonizationModel fit(const std::vector<SubjectRecord>& records,
                       const KernelSpec& spec, const HarmonizeConfig& cfg) {
  if (static_cast<int>(records.size()) < cfg.min_records) {
    throw Error(Errc::CohortTooSmall, "fit needs at least " +
                                          std::to_string(cfg.min_records) +
                                          " records, got " +
                                          std::to_string(records.size()));
  }

  HarmonizationModel model;
  model.wb_mode = cfg.wb_mode;
  model.schema = feature_names();
  model.detrend = fit_detrend(records, cfg.detrend_window, cfg.detrend_grid_step);

  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd inputs(n, kFeatureCount);
  Eigen::VectorXd t_gm(n), t_wm(n), t_wb(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    inputs.row(i) = detrended_features(model.detrend, r).transpose();
    t_gm[i] = detrend_volume(model.detrend.gm_curve, *r.age, *r.gm_ml);
    t_wm[i] = detrend_volume(model.detrend.wm_curve, *r.age, *r.wm_ml);
    t_wb[i] = detrend_volume(model.detrend.wb_curve, *r.age, *r.wb_ml());
  }

  model.gm_model = train_auto(spec.kind, inputs, t_gm, cfg.train);
  model.wm_model = train_auto(spec.kind, inputs, t_wm, cfg.train);
  if (cfg.wb_mode == WbMode::direct_model) {
    model.wb_model = train_auto(spec.kind, inputs, t_wb, cfg.train);
  }
  return model;
}

CorrectedRecord correct(const HarmonizationModel& model, const SubjectRecord& record) {
  if (model.schema != feature_names()) {
    throw Error(Errc::SchemaMismatch, "model schema differs from the feature set");
  }
  if (!record.gm_ml || !record.wm_ml) {
    throw Error(Errc::SchemaMismatch,
                "record '" + record.scan_id + "' lacks a volume to correct");
  }
  const Eigen::VectorXd x = detrended_features(model.detrend, record);

  CorrectedRecord out;
  out.gm_ml = *record.gm_ml;
  out.wm_ml = *record.wm_ml;
  out.wb_ml = *record.wb_ml();

  const Prediction gm = predict(model.gm_model, x);
  const Prediction wm = predict(model.wm_model, x);
  out.gm_pred_ml = gm.mean;
  out.wm_pred_ml = wm.mean;
  out.gm_var = gm.variance;
  out.wm_var = wm.variance;
  out.gm_corr_ml = out.gm_ml - gm.mean;
  out.wm_corr_ml = out.wm_ml - wm.mean;
  if (model.wb_mode == WbMode::sum_of_corrected) {
    out.wb_corr_ml = out.gm_corr_ml + out.wm_corr_ml;
  } else {
    if (!model.wb_model) {
      throw Error(Errc::SchemaVersionMismatch, "direct wb mode without a wb model");
    }
    out.wb_corr_ml = out.wb_ml - predict(*model.wb_model, x).mean;
  }
  return out;
}

void save_model(const HarmonizationModel& model, const std::string& path) {
  json obj;
  obj["format_version"] = kModelFormatVersion;
  obj["wb_mode"] = wb_mode_name(model.wb_mode);
  obj["schema"] = model.schema;
  obj["split_seed"] = model.split_seed;
  obj["split_fraction"] = model.split_fraction;

  json detrend;
  detrend["gm_curve"] = curve_to_json(model.detrend.gm_curve);
  detrend["wm_curve"] = curve_to_json(model.detrend.wm_curve);
  detrend["wb_curve"] = curve_to_json(model.detrend.wb_curve);
  json fits = json::array();
  for (const auto& f : model.detrend.feature_fits) {
    fits.push_back({{"slope", f.slope},
                    {"intercept", f.intercept},
                    {"reference_age", f.reference_age}});
  }
  detrend["feature_fits"] = std::move(fits);
  obj["detrend"] = std::move(detrend);

  obj["gm_model"] = rvm_to_json(model.gm_model);
  obj["wm_model"] = rvm_to_json(model.wm_model);
  if (model.wb_model) obj["wb_model"] = rvm_to_json(*model.wb_model);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  out << obj.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "write to '" + path + "' failed");
}

HarmonizationModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path + "'");
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw Error(Errc::IoError, "cannot parse '" + path + "': " + e.what());
  }

  try {
    const int version = obj.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(Errc::SchemaVersionMismatch,
                  "model format version " + std::to_string(version) +
                      ", expected " + std::to_string(kModelFormatVersion));
    }
    HarmonizationModel model;
    model.wb_mode = wb_mode_from_name(obj.at("wb_mode").get<std::string>());
    model.schema = obj.at("schema").get<std::vector<std::string>>();
    model.split_seed = obj.at("split_seed").get<std::uint64_t>();
    model.split_fraction = obj.at("split_fraction").get<double>();

    const json& detrend = obj.at("detrend");
    model.detrend.gm_curve = curve_from_json(detrend.at("gm_curve"));
    model.detrend.wm_curve = curve_from_json(detrend.at("wm_curve"));
    model.detrend.wb_curve = curve_from_json(detrend.at("wb_curve"));
    for (const auto& f : detrend.at("feature_fits")) {
      LinearAgeFit fit;
      fit.slope = f.at("slope").get<double>();
      fit.intercept = f.at("intercept").get<double>();
      fit.reference_age = f.at("reference_age").get<double>();
      model.detrend.feature_fits.push_back(fit);
    }

    model.gm_model = rvm_from_json(obj.at("gm_model"));
    model.wm_model = rvm_from_json(obj.at("wm_model"));
    if (obj.contains("wb_model")) model.wb_model = rvm_from_json(obj.at("wb_model"));
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaVersionMismatch,
                std::string("model file missing or malformed field: ") + e.what());
  }
}

const std::vector<std::string>& cohort_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"subject_id", "scan_id",        "age",
                                  "sex",        "scanner_id",     "field_strength",
                                  "te_ms",      "tr_ms"};
    for (const auto& f : feature_names()) c.push_back(f);
    c.push_back("gm_ml");
    c.push_back("wm_ml");
    return c;
  }();
  return cols;
}

std::vector<SubjectRecord> read_cohort_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  std::vector<int> idx;
  std::vector<std::string> missing;
  for (const auto& name : cohort_columns()) {
    const int col = table.column(name);
    if (col < 0) missing.push_back(name);
    idx.push_back(col);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(Errc::SchemaMismatch, "'" + path + "' lacks columns: " + list);
  }

  std::vector<SubjectRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const auto ctx = [&](const std::string& col) {
      return path + " row " + std::to_string(row + 2) + " column " + col;
    };
    SubjectRecord r;
    r.subject_id = table.cell(row, idx[0]);
    r.scan_id = table.cell(row, idx[1]);
    if (r.subject_id.empty() || r.scan_id.empty()) {
      throw Error(Errc::SchemaMismatch, ctx("subject_id/scan_id") + " is empty");
    }
    r.age = parse_optional_double(table.cell(row, idx[2]), ctx("age"));
    r.sex = table.cell(row, idx[3]);
    const std::string& scanner = table.cell(row, idx[4]);
    if (!scanner.empty()) r.scanner_id = scanner;
    r.field_strength =
        parse_optional_double(table.cell(row, idx[5]), ctx("field_strength"));
    r.te_ms = parse_optional_double(table.cell(row, idx[6]), ctx("te_ms"));
    r.tr_ms = parse_optional_double(table.cell(row, idx[7]), ctx("tr_ms"));

    std::array<double, kFeatureCount> flat{};
    for (int f = 0; f < kFeatureCount; ++f) {
      flat[static_cast<std::size_t>(f)] =
          parse_double(table.cell(row, idx[static_cast<std::size_t>(8 + f)]),
                       ctx(feature_names()[static_cast<std::size_t>(f)]));
    }
    r.features = FeatureVector::from_flat(flat);

    r.gm_ml = parse_optional_double(table.cell(row, idx[24]), ctx("gm_ml"));
    r.wm_ml = parse_optional_double(table.cell(row, idx[25]), ctx("wm_ml"));
    if ((r.gm_ml && *r.gm_ml <= 0.0) || (r.wm_ml && *r.wm_ml <= 0.0)) {
      throw Error(Errc::SchemaMismatch, ctx("gm_ml/wm_ml") + " is not positive");
    }
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

std::vector<std::string> record_cells(const SubjectRecord& r) {
  std::vector<std::string> cells = {r.subject_id,
                                    r.scan_id,
                                    optional_cell(r.age),
                                    r.sex,
                                    r.scanner_id.value_or(""),
                                    optional_cell(r.field_strength),
                                    optional_cell(r.te_ms),
                                    optional_cell(r.tr_ms)};
  for (double v : r.features.flatten()) cells.push_back(format_double(v));
  cells.push_back(optional_cell(r.gm_ml));
  cells.push_back(optional_cell(r.wm_ml));
  return cells;
}

}  // namespace

void write_cohort_csv(const std::string& path,
                      const std::vector<SubjectRecord>& records) {
  CsvTable table;
  table.header = cohort_columns();
  table.rows.reserve(records.size());
  for (const auto& r : records) table.rows.push_back(record_cells(r));
  write_csv(path, table);
}

void write_corrected_csv(const std::string& path,
                         const std::vector<SubjectRecord>& records,
                         const std::vector<CorrectedRecord>& corrected) {
  if (records.size() != corrected.size()) {
    throw Error(Errc::LengthMismatch, "records and corrections differ in size");
  }
  CsvTable table;
  table.header = cohort_columns();
  for (const char* extra : {"gm_corr_ml", "wm_corr_ml", "wb_corr_ml", "gm_pred_ml",
                            "wm_pred_ml", "gm_var", "wm_var"}) {
    table.header.push_back(extra);
  }
  table.rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto cells = record_cells(records[i]);
    const auto& c = corrected[i];
    for (double v : {c.gm_corr_ml, c.wm_corr_ml, c.wb_corr_ml, c.gm_pred_ml,
                     c.wm_pred_ml, c.gm_var, c.wm_var}) {
      cells.push_back(format_double(v));
    }
    table.rows.push_back(std::move(cells));
  }
  write_csv(path, table);
}

}  // namespace volharm
