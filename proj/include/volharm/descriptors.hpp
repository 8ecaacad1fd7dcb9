#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace volharm {

// Intensity moments of one segmented structure, supplied by the caller
// (no image access happens here).
struct StructureStats {
  std::string label;
  double mean_intensity = 0.0;
  double variance = 0.0;
};

// B x B joint intensity count grid between two registered images.
struct JointHistogram {
  Eigen::MatrixXd counts;  // non-negative, square

  int bins() const { return static_cast<int>(counts.rows()); }
};

// Linear part plus translation of the subject-to-atlas affine transform.
struct AffineMatrix {
  Eigen::Matrix3d linear = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

// Rotation / shear / scale factors of an affine linear part, ordered so that
// rotation(angles) * shear(shears) * scale(scales) reproduces the input.
// Angles are Euler angles with the x rotation applied first, then y, then z
// (the sine of the y angle sits at entry (2,0) of the rotation matrix).
struct AffineDecomposition {
  std::array<double, 3> angles{};  // radians: x, y, z
  std::array<double, 3> scales{};  // positive
  std::array<double, 3> shears{};  // xy, xz, yz
};

inline constexpr int kFeatureCount = 16;
inline constexpr int kCnrPairCount = 6;

// The 16 image descriptors feeding the regressor, flattened as
// angles(x,y,z), scales(x,y,z), shears(xy,xz,yz), nmi, cnr[0..5].
struct FeatureVector {
  std::array<double, 3> angles{};
  std::array<double, 3> scales{1.0, 1.0, 1.0};
  std::array<double, 3> shears{};
  double nmi = 1.0;
  std::array<double, kCnrPairCount> cnr{};

  std::array<double, kFeatureCount> flatten() const;
  static FeatureVector from_flat(const std::array<double, kFeatureCount>& values);
};

// Canonical feature names, in flattening order. This is the model schema and
// the cohort CSV column set.
const std::vector<std::string>& feature_names();

// Contrast-to-noise ratio sqrt(2)*|m1-m2|/sqrt(v1+v2). Symmetric in its
// arguments; throws ZeroVariancePair when both variances vanish.
double cnr(const StructureStats& t1, const StructureStats& t2);

// Studholme normalized mutual information (H(A)+H(B))/H(A,B) of the
// normalized histogram; in [1,2]. A single nonzero bin (H(A,B)=0) gives 2.
double nmi(const JointHistogram& h);

// Equal-width 2-D histogram over each sequence's [min,max] range; maxima land
// in the last bin. A constant sequence puts all its mass in bin 0.
JointHistogram joint_histogram(const std::vector<double>& a,
                               const std::vector<double>& b, int bins);

// Factor the linear part as Q * U (Q proper rotation, U upper triangular with
// positive diagonal) and read scales/shears off U. det(linear) must be
// positive and bounded away from zero.
AffineDecomposition decompose_affine(const AffineMatrix& m);

// Rebuild the linear part from its factors.
Eigen::Matrix3d recompose_affine(const AffineDecomposition& d);

Eigen::Matrix3d rotation_from_angles(const std::array<double, 3>& angles);

// Deterministic flattening of the descriptor set; rejects non-finite input.
FeatureVector assemble_features(const AffineDecomposition& dec, double nmi_value,
                                const std::array<double, kCnrPairCount>& cnrs);

// One CNR structure pair, referencing StructureStats labels.
struct CnrPair {
  std::string first;
  std::string second;
};

// Default pairs: tissue contrasts plus lobe-vs-cerebellum contrasts.
const std::vector<CnrPair>& default_cnr_pairs();

}  // namespace volharm
