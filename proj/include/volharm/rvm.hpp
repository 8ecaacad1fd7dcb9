#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

namespace volharm {

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double rbf_gamma = 1.0;  // length scale, rbf only
};

// N x (M+1) kernel design: a bias column of ones followed by one column per
// center, entry (n, m+1) = K(rows[n], centers[m]).
struct DesignMatrix {
  Eigen::MatrixXd values;
  Eigen::MatrixXd centers;  // M x D
};

// Per-weight precisions plus the noise precision. A pruned weight is encoded
// as alpha = +inf; the operations below expect active (finite) entries only.
struct Hyperparameters {
  Eigen::VectorXd alpha;
  double beta = 1.0;

  static constexpr double pruned = std::numeric_limits<double>::infinity();
};

// Gaussian weight posterior over the active weights.
struct Posterior {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

struct TrainConfig {
  double tol = 1e-6;            // on max |delta log alpha|, |delta log beta|
  int max_iter = 1000;
  double alpha_init = 1e-3;
  double alpha_prune = 1e9;
  double mu_underflow = 1e-12;  // on mu_i^2
  double beta_cap = 1e12;
  double residual_floor = 1e-12;
  std::vector<double> rbf_gamma_grid;  // empty: derive from data
};

// Per-dimension z-score transform; disabled for the linear kernel.
struct Standardizer {
  bool enabled = false;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd apply_row(const Eigen::VectorXd& x) const;
};

struct TrainingMeta {
  int iterations = 0;
  bool converged = false;
  double log_evidence = 0.0;
};

// Sparse kernel regressor: the training samples that survived pruning, their
// posterior-mean weights, and the posterior pieces needed for predictive
// variances. An empty model (everything pruned) predicts 0 with variance
// 1/beta.
struct RvmModel {
  KernelSpec kernel;
  Standardizer standardizer;
  bool bias_active = false;
  Eigen::MatrixXd relevance_vectors;  // R x D, raw (unstandardized) inputs
  Eigen::VectorXd weights;            // bias first when active, then one per vector
  Eigen::MatrixXd sigma;              // posterior covariance over active weights
  double beta = 1.0;
  TrainingMeta meta;

  int active_count() const { return static_cast<int>(weights.size()); }
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y);

DesignMatrix build_design(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                          const Eigen::MatrixXd& centers);

// Weight posterior Sigma = (beta Phi'Phi + diag(alpha))^-1, mu = beta Sigma
// Phi't, computed through a Cholesky solve rather than an explicit inverse
// for mu.
Posterior posterior(const DesignMatrix& phi, const Eigen::VectorXd& t,
                    const Hyperparameters& hp);

// One evidence fixed-point step: alpha_i <- gamma_i / mu_i^2 with
// gamma_i = 1 - alpha_i Sigma_ii (clamped to [0,1]) and
// 1/beta <- ||t - Phi mu||^2 / (N - sum gamma). Weights whose mu underflows
// or whose new alpha crosses the prune threshold come back as pruned (+inf).
Hyperparameters update_hyperparameters(const DesignMatrix& phi,
                                       const Eigen::VectorXd& t,
                                       const Hyperparameters& hp,
                                       const Posterior& post,
                                       const TrainConfig& cfg = {});

// log p(t | alpha, beta) = log N(t | 0, beta^-1 I + Phi diag(alpha)^-1 Phi'),
// evaluated through the active-weight Cholesky factorization.
double log_evidence(const DesignMatrix& phi, const Eigen::VectorXd& t,
                    const Hyperparameters& hp);

// Full evidence-maximization loop over the N+1 basis functions (bias plus one
// kernel per training sample), with pruning and active-design rebuilds.
RvmModel train(const KernelSpec& spec, const Eigen::MatrixXd& inputs,
               const Eigen::VectorXd& targets, const TrainConfig& cfg = {});

// For the rbf kernel, trains across a log-spaced gamma grid (default: 7
// values spanning 0.1-10 x the median pairwise distance of the standardized
// inputs) and keeps the highest-evidence model. Linear falls through to
// train().
RvmModel train_auto(KernelKind kind, const Eigen::MatrixXd& inputs,
                    const Eigen::VectorXd& targets, const TrainConfig& cfg = {});

Prediction predict(const RvmModel& model, const Eigen::VectorXd& x);

// Gamma grid helper, exposed for the CLI and tests.
std::vector<double> default_rbf_gamma_grid(const Eigen::MatrixXd& inputs);

std::string kernel_kind_name(KernelKind kind);
KernelKind kernel_kind_from_name(const std::string& name);

}  // namespace volharm
