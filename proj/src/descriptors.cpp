#include "volharm/descriptors.hpp"

#include <algorithm>
#include <cmath>

#include "volharm/error.hpp"

namespace volharm {

std::array<double, kFeatureCount> FeatureVector::flatten() const {
  return {angles[0], angles[1], angles[2], scales[0], scales[1], scales[2],
          shears[0], shears[1], shears[2], nmi,       cnr[0],    cnr[1],
          cnr[2],    cnr[3],    cnr[4],    cnr[5]};
}

FeatureVector FeatureVector::from_flat(const std::array<double, kFeatureCount>& v) {
  FeatureVector f;
  f.angles = {v[0], v[1], v[2]};
  f.scales = {v[3], v[4], v[5]};
  f.shears = {v[6], v[7], v[8]};
  f.nmi = v[9];
  f.cnr = {v[10], v[11], v[12], v[13], v[14], v[15]};
  return f;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "angle_x",  "angle_y",  "angle_z",  "scale_x", "scale_y", "scale_z",
      "shear_xy", "shear_xz", "shear_yz", "nmi",     "cnr_1",   "cnr_2",
      "cnr_3",    "cnr_4",    "cnr_5",    "cnr_6"};
  return names;
}

const std::vector<CnrPair>& default_cnr_pairs() {
  static const std::vector<CnrPair> pairs = {
      {"GM", "WM"},
      {"GM", "CSF"},
      {"WM", "CSF"},
      {"lobe_frontal", "cerebellum"},
      {"lobe_parietal", "cerebellum"},
      {"lobe_occipital", "cerebellum"}};
  return pairs;
}

double cnr(const StructureStats& t1, const StructureStats& t2) {
  const double var_sum = t1.variance + t2.variance;
  if (var_sum <= 0.0) {
    throw Error(Errc::ZeroVariancePair,
                "structures '" + t1.label + "' and '" + t2.label +
                    "' have zero total variance");
  }
  return std::sqrt(2.0) * std::abs(t1.mean_intensity - t2.mean_intensity) /
         std::sqrt(var_sum);
}

namespace {

double entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

}  // namespace

double nmi(const JointHistogram& h) {
  const double total = h.counts.sum();
  if (total <= 0.0) throw Error(Errc::EmptyHistogram, "histogram has zero total count");
  const Eigen::MatrixXd p = h.counts / total;
  const double h_a = entropy(p.rowwise().sum());
  const double h_b = entropy(p.colwise().sum().transpose());
  double h_ab = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) > 0.0) h_ab -= p(i, j) * std::log(p(i, j));
    }
  }
  if (h_ab == 0.0) return 2.0;  // single nonzero bin: perfect dependence
  return (h_a + h_b) / h_ab;
}

JointHistogram joint_histogram(const std::vector<double>& a,
                               const std::vector<double>& b, int bins) {
  if (a.size() != b.size()) {
    throw Error(Errc::LengthMismatch, "sequences have lengths " +
                                          std::to_string(a.size()) + " and " +
                                          std::to_string(b.size()));
  }
  if (a.empty()) throw Error(Errc::LengthMismatch, "sequences are empty");
  if (bins < 2) throw Error(Errc::InvalidSpec, "bins must be >= 2");

  const auto [a_min_it, a_max_it] = std::minmax_element(a.begin(), a.end());
  const auto [b_min_it, b_max_it] = std::minmax_element(b.begin(), b.end());
  const double a_min = *a_min_it, a_span = *a_max_it - *a_min_it;
  const double b_min = *b_min_it, b_span = *b_max_it - *b_min_it;

  auto bin_of = [bins](double v, double lo, double span) {
    if (span <= 0.0) return 0;  // degenerate range: all mass in bin 0
    int k = static_cast<int>((v - lo) / span * bins);
    return std::clamp(k, 0, bins - 1);
  };

  JointHistogram h;
  h.counts = Eigen::MatrixXd::Zero(bins, bins);
  for (std::size_t n = 0; n < a.size(); ++n) {
    h.counts(bin_of(a[n], a_min, a_span), bin_of(b[n], b_min, b_span)) += 1.0;
  }
  return h;
}

Eigen::Matrix3d rotation_from_angles(const std::array<double, 3>& angles) {
  const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
  const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
  Eigen::Matrix3d rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rz * ry * rx;
}

AffineDecomposition decompose_affine(const AffineMatrix& m) {
  const double det = m.linear.determinant();
  if (std::abs(det) < 1e-12) {
    throw Error(Errc::SingularMatrix, "determinant " + std::to_string(det));
  }
  if (det < 0.0) {
    throw Error(Errc::ReflectionNotSupported,
                "negative determinant " + std::to_string(det));
  }

  Eigen::HouseholderQR<Eigen::Matrix3d> qr(m.linear);
  Eigen::Matrix3d q = qr.householderQ();
  Eigen::Matrix3d u = qr.matrixQR().triangularView<Eigen::Upper>();
  // Flip signs so U has a positive diagonal; Q stays orthogonal and, with
  // det(linear) > 0, proper.
  for (int i = 0; i < 3; ++i) {
    if (u(i, i) < 0.0) {
      u.row(i) = -u.row(i);
      q.col(i) = -q.col(i);
    }
  }

  AffineDecomposition d;
  d.scales = {u(0, 0), u(1, 1), u(2, 2)};
  d.shears = {u(0, 1) / u(1, 1), u(0, 2) / u(2, 2), u(1, 2) / u(2, 2)};

  // Euler extraction; sin(angle_y) lives at -Q(2,0).
  const double sy = std::clamp(-q(2, 0), -1.0, 1.0);
  d.angles[1] = std::asin(sy);
  if (std::abs(q(2, 0)) < 1.0 - 1e-12) {
    d.angles[0] = std::atan2(q(2, 1), q(2, 2));
    d.angles[2] = std::atan2(q(1, 0), q(0, 0));
  } else {
    // Gimbal lock: x and z rotations are indistinguishable; pin angle_x = 0.
    d.angles[0] = 0.0;
    d.angles[2] = std::atan2(-q(0, 1), q(1, 1));
  }
  return d;
}

Eigen::Matrix3d recompose_affine(const AffineDecomposition& d) {
  Eigen::Matrix3d shear = Eigen::Matrix3d::Identity();
  shear(0, 1) = d.shears[0];
  shear(0, 2) = d.shears[1];
  shear(1, 2) = d.shears[2];
  const Eigen::Vector3d scale(d.scales[0], d.scales[1], d.scales[2]);
  return rotation_from_angles(d.angles) * shear * scale.asDiagonal();
}

FeatureVector assemble_features(const AffineDecomposition& dec, double nmi_value,
                                const std::array<double, kCnrPairCount>& cnrs) {
  FeatureVector f;
  f.angles = dec.angles;
  f.scales = dec.scales;
  f.shears = dec.shears;
  f.nmi = nmi_value;
  f.cnr = cnrs;
  for (double v : f.flatten()) {
    if (!std::isfinite(v)) {
      throw Error(Errc::NonFiniteInput, "feature value " + std::to_string(v));
    }
  }
  return f;
}

}  // namespace volharm
