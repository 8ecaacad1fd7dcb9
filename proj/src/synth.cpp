#include "volharm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "volharm/csv.hpp"
#include "volharm/error.hpp"
#include "volharm/rng.hpp"

namespace volharm {

namespace {

using json = nlohmann::json;

void require_finite_vector(const Eigen::VectorXd& v, const std::string& what) {
  if (v.size() != kFeatureCount) {
    throw Error(Errc::InvalidSpec, what + " must have " +
                                       std::to_string(kFeatureCount) + " entries");
  }
  if (!v.allFinite()) throw Error(Errc::InvalidSpec, what + " has non-finite entries");
}

void validate_common(const CohortSpec& spec) {
  if (!(spec.age_max >= spec.age_min)) {
    throw Error(Errc::InvalidSpec, "age range is inverted");
  }
  if (spec.gm_sd_ml < 0.0 || spec.wm_sd_ml < 0.0) {
    throw Error(Errc::InvalidSpec, "volume sds must be non-negative");
  }
  if (!std::isfinite(spec.gm_mean_ml) || !std::isfinite(spec.wm_mean_ml) ||
      !std::isfinite(spec.gm_age_slope) || !std::isfinite(spec.wm_age_slope)) {
    throw Error(Errc::InvalidSpec, "volume parameters must be finite");
  }
  if (spec.sites.empty()) throw Error(Errc::InvalidSpec, "at least one site required");
  std::set<std::string> ids;
  for (const auto& site : spec.sites) {
    if (site.scanner_id.empty()) {
      throw Error(Errc::InvalidSpec, "site with empty scanner_id");
    }
    if (!ids.insert(site.scanner_id).second) {
      throw Error(Errc::InvalidSpec, "duplicate scanner_id '" + site.scanner_id + "'");
    }
    require_finite_vector(site.feature_shift, "feature_shift of " + site.scanner_id);
    require_finite_vector(site.gm_bias_ml, "gm_bias_ml of " + site.scanner_id);
    require_finite_vector(site.wm_bias_ml, "wm_bias_ml of " + site.scanner_id);
    if (!(site.intra_noise_sd >= 0.0) || !std::isfinite(site.intra_noise_sd)) {
      throw Error(Errc::InvalidSpec,
                  "intra_noise_sd of " + site.scanner_id + " must be >= 0");
    }
  }
}

struct Resolved {
  Eigen::VectorXd baseline;
  Eigen::VectorXd jitter_sd;
};

Resolved resolve_features(const CohortSpec& spec) {
  Resolved r;
  r.baseline =
      spec.feature_baseline.size() == 0 ? default_feature_baseline() : spec.feature_baseline;
  require_finite_vector(r.baseline, "feature_baseline");
  if (spec.feature_jitter_sd.size() == 0) {
    r.jitter_sd = 0.1 * r.baseline.cwiseAbs();
  } else {
    r.jitter_sd = spec.feature_jitter_sd;
    require_finite_vector(r.jitter_sd, "feature_jitter_sd");
    if ((r.jitter_sd.array() < 0.0).any()) {
      throw Error(Errc::InvalidSpec, "feature_jitter_sd entries must be >= 0");
    }
  }
  return r;
}

struct ScanDraw {
  FeatureVector features;
  double gm_ml;
  double wm_ml;
};

// One scan: per-feature jitter first, then gm noise, then wm noise. The draw
// order is part of the determinism contract.
ScanDraw draw_scan(Rng& rng, const Resolved& feat, const SiteEffect& site,
                   double true_gm, double true_wm) {
  std::array<double, kFeatureCount> flat{};
  double gm_bias = 0.0;
  double wm_bias = 0.0;
  for (int f = 0; f < kFeatureCount; ++f) {
    const double offset = site.feature_shift[f] + rng.normal(0.0, feat.jitter_sd[f]);
    flat[static_cast<std::size_t>(f)] = feat.baseline[f] + offset;
    gm_bias += site.gm_bias_ml[f] * offset;
    wm_bias += site.wm_bias_ml[f] * offset;
  }
  ScanDraw out;
  out.features = FeatureVector::from_flat(flat);
  out.gm_ml = true_gm + gm_bias + rng.normal(0.0, site.intra_noise_sd);
  out.wm_ml = true_wm + wm_bias + rng.normal(0.0, site.intra_noise_sd);
  if (!(out.gm_ml > 0.0) || !(out.wm_ml > 0.0)) {
    throw Error(Errc::InvalidSpec, "spec produces non-positive measured volumes");
  }
  return out;
}

SubjectRecord make_record(const std::string& subject_id, const std::string& scan_id,
                          double age, int subject_index, const std::string& scanner_id,
                          const ScanDraw& draw) {
  SubjectRecord r;
  r.subject_id = subject_id;
  r.scan_id = scan_id;
  r.age = age;
  r.sex = subject_index % 2 == 0 ? "F" : "M";
  r.scanner_id = scanner_id;
  r.features = draw.features;
  r.gm_ml = draw.gm_ml;
  r.wm_ml = draw.wm_ml;
  return r;
}

std::string padded(const char* prefix, int value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, value);
  return buf;
}

const std::unordered_map<std::string, int>& feature_index() {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& names = feature_names();
    for (int i = 0; i < kFeatureCount; ++i) m[names[static_cast<std::size_t>(i)]] = i;
    return m;
  }();
  return index;
}

Eigen::VectorXd feature_map_from_json(const json& obj, const Eigen::VectorXd& base,
                                      const std::string& what) {
  if (!obj.is_object()) {
    throw Error(Errc::InvalidSpec, what + " must be an object of descriptor values");
  }
  Eigen::VectorXd out = base;
  for (const auto& [key, value] : obj.items()) {
    const auto it = feature_index().find(key);
    if (it == feature_index().end()) {
      throw Error(Errc::InvalidSpec, what + " names unknown descriptor '" + key + "'");
    }
    if (!value.is_number()) {
      throw Error(Errc::InvalidSpec, what + "." + key + " must be a number");
    }
    out[it->second] = value.get<double>();
  }
  return out;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& what) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw Error(Errc::InvalidSpec, what + " has unknown key '" + key + "'");
    }
  }
}

}  // namespace

Eigen::VectorXd default_feature_baseline() {
  Eigen::VectorXd base(kFeatureCount);
  base << 0.02, 0.02, 0.02,  // angles, radians
      1.0, 1.0, 1.0,         // scales
      0.01, 0.01, 0.01,      // shears
      1.15,                  // nmi
      2.0, 2.0, 2.0, 1.5, 1.5, 1.5;  // cnr pairs
  return base;
}

SiteEffect null_site(const std::string& scanner_id) {
  SiteEffect site;
  site.scanner_id = scanner_id;
  site.feature_shift = Eigen::VectorXd::Zero(kFeatureCount);
  site.gm_bias_ml = Eigen::VectorXd::Zero(kFeatureCount);
  site.wm_bias_ml = Eigen::VectorXd::Zero(kFeatureCount);
  return site;
}

GeneratedCohort generate_cohort(const CohortSpec& spec) {
  if (spec.n_subjects < 1) throw Error(Errc::InvalidSpec, "n_subjects must be >= 1");
  if (spec.scans_per_subject < 1) {
    throw Error(Errc::InvalidSpec, "scans_per_subject must be >= 1");
  }
  validate_common(spec);
  const Resolved feat = resolve_features(spec);

  Rng rng(spec.seed);
  const double mid_age = 0.5 * (spec.age_min + spec.age_max);
  GeneratedCohort out;
  out.records.reserve(static_cast<std::size_t>(spec.n_subjects) *
                      static_cast<std::size_t>(spec.scans_per_subject));

  for (int i = 0; i < spec.n_subjects; ++i) {
    const double age = rng.uniform(spec.age_min, spec.age_max);
    const double true_gm = spec.gm_mean_ml + spec.gm_age_slope * (age - mid_age) +
                           rng.normal(0.0, spec.gm_sd_ml);
    const double true_wm = spec.wm_mean_ml + spec.wm_age_slope * (age - mid_age) +
                           rng.normal(0.0, spec.wm_sd_ml);
    const auto site_index = rng.below(spec.sites.size());
    const SiteEffect& site = spec.sites[static_cast<std::size_t>(site_index)];

    const std::string subject_id = padded("S", i + 1);
    for (int s = 0; s < spec.scans_per_subject; ++s) {
      const ScanDraw draw = draw_scan(rng, feat, site, true_gm, true_wm);
      const std::string scan_id = subject_id + "-" + std::to_string(s + 1);
      out.records.push_back(make_record(subject_id, scan_id, age, i, site.scanner_id, draw));
      out.truth.push_back({scan_id, true_gm, true_wm});
    }
  }
  return out;
}

GeneratedCohort generate_test_retest(const CohortSpec& spec, int n_patients) {
  if (n_patients < 1) throw Error(Errc::InvalidSpec, "n_patients must be >= 1");
  validate_common(spec);
  if (spec.sites.size() < 2) {
    throw Error(Errc::InvalidSpec, "test-retest needs at least 2 scanners");
  }
  const Resolved feat = resolve_features(spec);

  Rng rng(spec.seed);
  const double mid_age = 0.5 * (spec.age_min + spec.age_max);
  GeneratedCohort out;

  for (int i = 0; i < n_patients; ++i) {
    const double age = rng.uniform(spec.age_min, spec.age_max);
    const double true_gm = spec.gm_mean_ml + spec.gm_age_slope * (age - mid_age) +
                           rng.normal(0.0, spec.gm_sd_ml);
    const double true_wm = spec.wm_mean_ml + spec.wm_age_slope * (age - mid_age) +
                           rng.normal(0.0, spec.wm_sd_ml);
    const std::string patient_id = padded("P", i + 1);

    for (const auto& site : spec.sites) {
      for (int s = 1; s <= 2; ++s) {
        const ScanDraw draw = draw_scan(rng, feat, site, true_gm, true_wm);
        const std::string scan_id = patient_id + "-" + site.scanner_id + "-" +
                                    std::to_string(s);
        out.records.push_back(make_record(patient_id, scan_id, age, i, site.scanner_id, draw));
        out.truth.push_back({scan_id, true_gm, true_wm});
      }
    }
  }
  return out;
}

CohortSpec parse_cohort_spec(const std::string& json_text) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("cohort spec is not valid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw Error(Errc::InvalidSpec, "cohort spec must be an object");

  static const std::set<std::string> known_top = {
      "n_subjects", "age_min", "age_max", "gm_mean_ml", "gm_sd_ml", "wm_mean_ml",
      "wm_sd_ml", "gm_age_slope", "wm_age_slope", "feature_baseline",
      "feature_jitter_sd", "sites", "scans_per_subject", "seed"};
  reject_unknown_keys(obj, known_top, "cohort spec");

  CohortSpec spec;
  try {
    spec.n_subjects = obj.at("n_subjects").get<int>();
    spec.age_min = obj.at("age_min").get<double>();
    spec.age_max = obj.at("age_max").get<double>();
    spec.gm_mean_ml = obj.at("gm_mean_ml").get<double>();
    spec.gm_sd_ml = obj.at("gm_sd_ml").get<double>();
    spec.wm_mean_ml = obj.at("wm_mean_ml").get<double>();
    spec.wm_sd_ml = obj.at("wm_sd_ml").get<double>();
    spec.gm_age_slope = obj.value("gm_age_slope", 0.0);
    spec.wm_age_slope = obj.value("wm_age_slope", 0.0);
    spec.scans_per_subject = obj.value("scans_per_subject", 1);
    spec.seed = obj.value("seed", std::uint64_t{0});

    spec.feature_baseline = obj.contains("feature_baseline")
                                ? feature_map_from_json(obj.at("feature_baseline"),
                                                        default_feature_baseline(),
                                                        "feature_baseline")
                                : default_feature_baseline();
    if (obj.contains("feature_jitter_sd")) {
      spec.feature_jitter_sd =
          feature_map_from_json(obj.at("feature_jitter_sd"),
                                0.1 * spec.feature_baseline.cwiseAbs(),
                                "feature_jitter_sd");
    }

    if (!obj.contains("sites") || !obj.at("sites").is_array()) {
      throw Error(Errc::InvalidSpec, "cohort spec needs a sites array");
    }
    static const std::set<std::string> known_site = {
        "scanner_id", "feature_shift", "gm_bias_ml", "wm_bias_ml", "intra_noise_sd"};
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(kFeatureCount);
    for (const auto& entry : obj.at("sites")) {
      if (!entry.is_object()) {
        throw Error(Errc::InvalidSpec, "site entries must be objects");
      }
      reject_unknown_keys(entry, known_site, "site");
      SiteEffect site;
      site.scanner_id = entry.at("scanner_id").get<std::string>();
      site.feature_shift =
          entry.contains("feature_shift")
              ? feature_map_from_json(entry.at("feature_shift"), zero, "feature_shift")
              : zero;
      site.gm_bias_ml =
          entry.contains("gm_bias_ml")
              ? feature_map_from_json(entry.at("gm_bias_ml"), zero, "gm_bias_ml")
              : zero;
      site.wm_bias_ml =
          entry.contains("wm_bias_ml")
              ? feature_map_from_json(entry.at("wm_bias_ml"), zero, "wm_bias_ml")
              : zero;
      site.intra_noise_sd = entry.value("intra_noise_sd", 0.0);
      spec.sites.push_back(std::move(site));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("cohort spec field error: ") + e.what());
  }
  return spec;
}

void write_ground_truth_csv(const std::string& path,
                            const std::vector<GroundTruth>& truth) {
  CsvTable table;
  table.header = {"scan_id", "true_gm_ml", "true_wm_ml"};
  table.rows.reserve(truth.size());
  for (const auto& t : truth) {
    table.rows.push_back(
        {t.scan_id, format_double(t.true_gm_ml), format_double(t.true_wm_ml)});
  }
  write_csv(path, table);
}

std::vector<GroundTruth> read_ground_truth_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int id = table.column("scan_id");
  const int gm = table.column("true_gm_ml");
  const int wm = table.column("true_wm_ml");
  if (id < 0 || gm < 0 || wm < 0) {
    throw Error(Errc::SchemaMismatch, "'" + path + "' is not a ground-truth table");
  }
  std::vector<GroundTruth> truth;
  truth.reserve(table.rows.size());
  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const std::string ctx = path + " row " + std::to_string(row + 2);
    truth.push_back({table.cell(row, id),
                     parse_double(table.cell(row, gm), ctx + " true_gm_ml"),
                     parse_double(table.cell(row, wm), ctx + " true_wm_ml")});
  }
  return truth;
}

}  // namespace volharm
