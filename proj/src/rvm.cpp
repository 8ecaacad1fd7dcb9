#include "volharm/rvm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volharm/error.hpp"

namespace volharm {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

void check_hyperparameters(const Hyperparameters& hp) {
  if (!(hp.beta > 0.0) || !std::isfinite(hp.beta)) {
    throw Error(Errc::NotPositiveDefinite, "beta must be positive and finite");
  }
  for (Eigen::Index i = 0; i < hp.alpha.size(); ++i) {
    if (!(hp.alpha[i] > 0.0) || !std::isfinite(hp.alpha[i])) {
      throw Error(Errc::NotPositiveDefinite,
                  "alpha[" + std::to_string(i) + "] must be positive and finite");
    }
  }
}

// Shared solve: A = beta G + diag(alpha), mu = A^-1 (beta b), Sigma = A^-1,
// with one refinement pass on mu when the residual is not already tiny.
struct PosteriorSolve {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// Factorization with escalating relative diagonal jitter. With beta at its
// cap (noiseless fits, zero targets) the system's condition number exceeds
// what plain LLT survives; a jitter of up to 1e-6 of the diagonal scale is
// far below the cancellation noise already present in those systems.
Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (double rel = 1e-14; rel <= 1e-6; rel *= 100.0) {
    Eigen::MatrixXd boosted = a;
    boosted.diagonal().array() += rel * scale;
    llt.compute(boosted);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw Error(Errc::NotPositiveDefinite, "Cholesky factorization failed");
}

PosteriorSolve solve_posterior(const Eigen::MatrixXd& gram, const Eigen::VectorXd& b,
                               const Eigen::VectorXd& alpha, double beta) {
  const Eigen::Index m = gram.rows();
  Eigen::MatrixXd a = beta * gram;
  a.diagonal() += alpha;
  const Eigen::LLT<Eigen::MatrixXd> llt = cholesky_with_jitter(a);
  const Eigen::VectorXd rhs = beta * b;
  Eigen::VectorXd mu = llt.solve(rhs);
  const double rhs_norm = rhs.norm();
  if (rhs_norm > 0.0) {
    const Eigen::VectorXd r = rhs - a * mu;
    if (r.norm() > 1e-14 * rhs_norm) mu += llt.solve(r);
  }
  Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(m, m));
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return {std::move(mu), std::move(sigma)};
}

double log_evidence_from_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& b,
                              double t_sq_norm, Eigen::Index n,
                              const Eigen::VectorXd& alpha, double beta) {
  // log N(t | 0, C) with C = beta^-1 I + Phi diag(alpha)^-1 Phi', via
  // |C| = beta^-N |diag(alpha)|^-1 |beta Phi'Phi + diag(alpha)| and
  // t'C^-1 t = beta (t't - b'mu).
  const Eigen::Index m = gram.rows();
  double log_det_c = -static_cast<double>(n) * std::log(beta);
  double quad = beta * t_sq_norm;
  if (m > 0) {
    Eigen::MatrixXd a = beta * gram;
    a.diagonal() += alpha;
    const Eigen::LLT<Eigen::MatrixXd> llt = cholesky_with_jitter(a);
    for (Eigen::Index i = 0; i < m; ++i) {
      log_det_c += 2.0 * std::log(llt.matrixLLT()(i, i)) - std::log(alpha[i]);
    }
    const Eigen::VectorXd mu = llt.solve(beta * b);
    quad -= beta * b.dot(mu);
  }
  return -0.5 * (static_cast<double>(n) * std::log(kTwoPi) + log_det_c + quad);
}

Eigen::MatrixXd kernel_block(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                             const Eigen::MatrixXd& centers) {
  if (spec.kind == KernelKind::linear) return rows * centers.transpose();
  const Eigen::VectorXd r2 = rows.rowwise().squaredNorm();
  const Eigen::VectorXd c2 = centers.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * rows * centers.transpose();
  d2.colwise() += r2;
  d2.rowwise() += c2.transpose();
  const double inv = -1.0 / (2.0 * spec.rbf_gamma * spec.rbf_gamma);
  return (d2.cwiseMax(0.0) * inv).array().exp();
}

}  // namespace

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (!enabled) return x;
  Eigen::MatrixXd out = x;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= sd.transpose().array();
  return out;
}

Eigen::VectorXd Standardizer::apply_row(const Eigen::VectorXd& x) const {
  if (!enabled) return x;
  return (x - mean).cwiseQuotient(sd);
}

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y) {
  if (x.size() != y.size()) {
    throw Error(Errc::DimensionMismatch, "vectors of size " + std::to_string(x.size()) +
                                             " and " + std::to_string(y.size()));
  }
  if (spec.kind == KernelKind::linear) return x.dot(y);
  return std::exp(-(x - y).squaredNorm() / (2.0 * spec.rbf_gamma * spec.rbf_gamma));
}

DesignMatrix build_design(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                          const Eigen::MatrixXd& centers) {
  if (rows.cols() != centers.cols()) {
    throw Error(Errc::DimensionMismatch,
                "rows have dimension " + std::to_string(rows.cols()) + ", centers " +
                    std::to_string(centers.cols()));
  }
  if (rows.rows() < 1 || centers.rows() < 1) {
    throw Error(Errc::DimensionMismatch, "need at least one row and one center");
  }
  DesignMatrix design;
  design.centers = centers;
  design.values.resize(rows.rows(), centers.rows() + 1);
  design.values.col(0).setOnes();
  design.values.rightCols(centers.rows()) = kernel_block(spec, rows, centers);
  return design;
}

Posterior posterior(const DesignMatrix& phi, const Eigen::VectorXd& t,
                    const Hyperparameters& hp) {
  const Eigen::MatrixXd& values = phi.values;
  if (values.rows() != t.size() || values.cols() != hp.alpha.size()) {
    throw Error(Errc::DimensionMismatch,
                "design " + std::to_string(values.rows()) + "x" +
                    std::to_string(values.cols()) + " vs " + std::to_string(t.size()) +
                    " targets, " + std::to_string(hp.alpha.size()) + " alphas");
  }
  check_hyperparameters(hp);
  auto solved = solve_posterior(values.transpose() * values, values.transpose() * t,
                                hp.alpha, hp.beta);
  return {std::move(solved.mu), std::move(solved.sigma)};
}

Hyperparameters update_hyperparameters(const DesignMatrix& phi,
                                       const Eigen::VectorXd& t,
                                       const Hyperparameters& hp, const Posterior& post,
                                       const TrainConfig& cfg) {
  const Eigen::Index m = hp.alpha.size();
  if (post.mu.size() != m || post.sigma.rows() != m) {
    throw Error(Errc::DimensionMismatch, "posterior inconsistent with hyperparameters");
  }
  check_hyperparameters(hp);

  Hyperparameters out;
  out.alpha.resize(m);
  double gamma_sum = 0.0;
  int active = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double gamma = std::clamp(1.0 - hp.alpha[i] * post.sigma(i, i), 0.0, 1.0);
    gamma_sum += gamma;
    const double mu_sq = post.mu[i] * post.mu[i];
    if (mu_sq < cfg.mu_underflow) {
      out.alpha[i] = Hyperparameters::pruned;
      continue;
    }
    const double alpha_new = std::max(gamma / mu_sq, 1e-12);
    if (alpha_new > cfg.alpha_prune) {
      out.alpha[i] = Hyperparameters::pruned;
    } else {
      out.alpha[i] = alpha_new;
      ++active;
    }
  }
  if (active == 0) {
    throw Error(Errc::AllWeightsPruned, "no active basis function remains");
  }

  const double n = static_cast<double>(t.size());
  const double residual_sq = (t - phi.values * post.mu).squaredNorm();
  const double dof = std::max(n - gamma_sum, 1e-12);
  double beta_new = dof / std::max(residual_sq, cfg.residual_floor);
  if (!std::isfinite(beta_new) || beta_new > cfg.beta_cap) beta_new = cfg.beta_cap;
  out.beta = beta_new;
  return out;
}

double log_evidence(const DesignMatrix& phi, const Eigen::VectorXd& t,
                    const Hyperparameters& hp) {
  const Eigen::MatrixXd& values = phi.values;
  if (values.cols() != hp.alpha.size() ||
      (values.cols() > 0 && values.rows() != t.size())) {
    throw Error(Errc::DimensionMismatch, "design inconsistent with hyperparameters");
  }
  check_hyperparameters(hp);
  return log_evidence_from_gram(values.transpose() * values, values.transpose() * t,
                                t.squaredNorm(), t.size(), hp.alpha, hp.beta);
}

RvmModel train(const KernelSpec& spec, const Eigen::MatrixXd& inputs,
               const Eigen::VectorXd& targets, const TrainConfig& cfg) {
  const Eigen::Index n = inputs.rows();
  if (n < 2) throw Error(Errc::InvalidSpec, "need at least 2 training samples");
  if (targets.size() != n) {
    throw Error(Errc::DimensionMismatch, std::to_string(n) + " inputs vs " +
                                             std::to_string(targets.size()) + " targets");
  }
  if (!targets.allFinite() || !inputs.allFinite()) {
    throw Error(Errc::NonFiniteInput, "training data must be finite");
  }

  RvmModel model;
  model.kernel = spec;
  if (spec.kind == KernelKind::rbf) {
    model.standardizer.enabled = true;
    model.standardizer.mean = inputs.colwise().mean();
    Eigen::MatrixXd centered = inputs.rowwise() - model.standardizer.mean.transpose();
    model.standardizer.sd =
        (centered.colwise().squaredNorm() / static_cast<double>(n - 1))
            .cwiseSqrt()
            .transpose();
    for (Eigen::Index j = 0; j < model.standardizer.sd.size(); ++j) {
      if (model.standardizer.sd[j] <= 0.0) model.standardizer.sd[j] = 1.0;
    }
  }
  const Eigen::MatrixXd work = model.standardizer.apply(inputs);

  // Full design and its Gram form, reused through active-set shrinkage.
  Eigen::MatrixXd phi_full(n, n + 1);
  phi_full.col(0).setOnes();
  phi_full.rightCols(n) = kernel_block(spec, work, work);
  const Eigen::MatrixXd gram_full = phi_full.transpose() * phi_full;
  const Eigen::VectorXd b_full = phi_full.transpose() * targets;
  const double t_sq = targets.squaredNorm();

  auto rebuild = [&](const std::vector<int>& active, Eigen::MatrixXd& phi_act,
                     Eigen::MatrixXd& gram_act, Eigen::VectorXd& b_act) {
    const Eigen::Index m = static_cast<Eigen::Index>(active.size());
    phi_act.resize(n, m);
    gram_act.resize(m, m);
    b_act.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      phi_act.col(j) = phi_full.col(active[static_cast<std::size_t>(j)]);
      b_act[j] = b_full[active[static_cast<std::size_t>(j)]];
      for (Eigen::Index i = 0; i < m; ++i) {
        gram_act(i, j) = gram_full(active[static_cast<std::size_t>(i)],
                                   active[static_cast<std::size_t>(j)]);
      }
    }
  };

  // Outcome of one fixed-point run; log_ev is comparable across runs because
  // every run scores the same targets on (a subset of) the same design.
  struct Run {
    std::vector<int> active;  // empty when everything pruned
    Eigen::VectorXd alpha;
    double beta = 0.0;
    int iterations = 0;
    bool converged = false;
    double log_ev = 0.0;
  };

  auto run_from = [&](double alpha0, double beta0) {
    Run run;
    std::vector<int> active(static_cast<std::size_t>(n) + 1);
    std::iota(active.begin(), active.end(), 0);
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(n + 1, alpha0);
    double beta = beta0;

    Eigen::MatrixXd phi_act = phi_full;
    Eigen::MatrixXd gram_act = gram_full;
    Eigen::VectorXd b_act = b_full;

    PosteriorSolve post;
    bool converged = false;
    bool all_pruned = false;
    int iterations = 0;

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
      iterations = iter;
      post = solve_posterior(gram_act, b_act, alpha, beta);

      // Fixed-point step, inline mirror of update_hyperparameters() on the
      // active design.
      const Eigen::Index m = alpha.size();
      Eigen::VectorXd alpha_new(m);
      double gamma_sum = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double gamma = std::clamp(1.0 - alpha[i] * post.sigma(i, i), 0.0, 1.0);
        gamma_sum += gamma;
        const double mu_sq = post.mu[i] * post.mu[i];
        if (mu_sq < cfg.mu_underflow) {
          alpha_new[i] = Hyperparameters::pruned;
          continue;
        }
        alpha_new[i] = std::max(gamma / mu_sq, 1e-12);
        if (alpha_new[i] > cfg.alpha_prune) alpha_new[i] = Hyperparameters::pruned;
      }
      const double residual_sq = (targets - phi_act * post.mu).squaredNorm();
      const double dof = std::max(static_cast<double>(n) - gamma_sum, 1e-12);
      double beta_new = dof / std::max(residual_sq, cfg.residual_floor);
      if (!std::isfinite(beta_new) || beta_new > cfg.beta_cap) beta_new = cfg.beta_cap;

      double delta = std::abs(std::log(beta_new) - std::log(beta));
      bool pruned_any = false;
      std::vector<int> next_active;
      next_active.reserve(active.size());
      Eigen::VectorXd next_alpha(m);
      Eigen::Index kept = 0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!std::isfinite(alpha_new[i])) {
          pruned_any = true;
          continue;
        }
        delta = std::max(delta, std::abs(std::log(alpha_new[i]) - std::log(alpha[i])));
        next_active.push_back(active[static_cast<std::size_t>(i)]);
        next_alpha[kept++] = alpha_new[i];
      }

      if (kept == 0) {
        all_pruned = true;
        beta = beta_new;
        break;
      }
      active = std::move(next_active);
      alpha = next_alpha.head(kept).eval();
      beta = beta_new;
      if (pruned_any) {
        rebuild(active, phi_act, gram_act, b_act);
      } else if (delta < cfg.tol) {
        converged = true;
        break;
      }
    }

    run.beta = beta;
    run.iterations = iterations;
    if (all_pruned) {
      run.converged = true;
      run.log_ev = log_evidence_from_gram(Eigen::MatrixXd(0, 0), Eigen::VectorXd(0),
                                          t_sq, n, Eigen::VectorXd(0), beta);
      return run;
    }
    run.active = std::move(active);
    run.alpha = std::move(alpha);
    run.converged = converged;
    rebuild(run.active, phi_act, gram_act, b_act);
    run.log_ev = log_evidence_from_gram(gram_act, b_act, t_sq, n, run.alpha, beta);
    return run;
  };

  // The evidence surface of small noisy designs is multimodal, and the MacKay
  // fixed point only ever prunes, so a single start can stall below optima
  // that a coarse hyperparameter grid still finds. A fixed set of shrunk
  // (large alpha) and noise-dominated (small beta) starts covers those
  // basins; the default start runs first and keeps ties, so well-conditioned
  // fits are unaffected.
  const double var_t =
      (targets.array() - targets.mean()).square().sum() / static_cast<double>(n - 1);
  const double beta_hi = std::min(100.0 / std::max(var_t, 1e-300), cfg.beta_cap);
  const double beta_lo = std::min(1.0 / std::max(var_t, 1e-300), cfg.beta_cap);
  const std::pair<double, double> starts[] = {{cfg.alpha_init, beta_hi},
                                              {1e3, beta_hi},
                                              {cfg.alpha_init, beta_lo},
                                              {1e3, beta_lo}};
  Run best;
  bool have_best = false;
  for (std::size_t s = 0; s < std::size(starts); ++s) {
    bool duplicate = false;
    for (std::size_t p = 0; p < s; ++p) {
      if (starts[p] == starts[s]) duplicate = true;
    }
    if (duplicate) continue;
    Run run = run_from(starts[s].first, starts[s].second);
    if (!have_best ||
        run.log_ev > best.log_ev + 1e-9 * std::max(1.0, std::abs(best.log_ev))) {
      best = std::move(run);
      have_best = true;
    }
  }

  model.beta = best.beta;
  model.meta.iterations = best.iterations;
  model.meta.converged = best.converged;
  model.meta.log_evidence = best.log_ev;
  if (best.active.empty()) {
    model.bias_active = false;
    model.relevance_vectors.resize(0, inputs.cols());
    model.weights.resize(0);
    model.sigma.resize(0, 0);
    return model;
  }

  // Posterior at the winning run's hyperparameters defines the stored model.
  Eigen::MatrixXd phi_act, gram_act;
  Eigen::VectorXd b_act;
  rebuild(best.active, phi_act, gram_act, b_act);
  const PosteriorSolve post = solve_posterior(gram_act, b_act, best.alpha, best.beta);

  model.bias_active = best.active.front() == 0;
  const int n_centers =
      static_cast<int>(best.active.size()) - (model.bias_active ? 1 : 0);
  model.relevance_vectors.resize(n_centers, inputs.cols());
  for (int k = 0; k < n_centers; ++k) {
    const int idx =
        best.active[static_cast<std::size_t>(k + (model.bias_active ? 1 : 0))];
    model.relevance_vectors.row(k) = inputs.row(idx - 1);
  }
  model.weights = post.mu;
  model.sigma = post.sigma;
  return model;
}

std::vector<double> default_rbf_gamma_grid(const Eigen::MatrixXd& inputs) {
  const Eigen::Index n = inputs.rows();
  Standardizer std_inputs;
  std_inputs.enabled = true;
  std_inputs.mean = inputs.colwise().mean();
  Eigen::MatrixXd centered = inputs.rowwise() - std_inputs.mean.transpose();
  std_inputs.sd = (centered.colwise().squaredNorm() /
                   static_cast<double>(std::max<Eigen::Index>(n - 1, 1)))
                      .cwiseSqrt()
                      .transpose();
  for (Eigen::Index j = 0; j < std_inputs.sd.size(); ++j) {
    if (std_inputs.sd[j] <= 0.0) std_inputs.sd[j] = 1.0;
  }
  const Eigen::MatrixXd work = std_inputs.apply(inputs);

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((work.row(i) - work.row(j)).norm());
    }
  }
  double median_dist = 1.0;
  if (!dists.empty()) {
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid), dists.end());
    median_dist = dists[mid];
  }
  if (median_dist <= 0.0) return {1.0};

  std::vector<double> grid;
  for (int k = 0; k < 7; ++k) {
    grid.push_back(median_dist * std::pow(10.0, -1.0 + 2.0 * k / 6.0));
  }
  return grid;
}

RvmModel train_auto(KernelKind kind, const Eigen::MatrixXd& inputs,
                    const Eigen::VectorXd& targets, const TrainConfig& cfg) {
  if (kind == KernelKind::linear) {
    return train(KernelSpec{KernelKind::linear, 1.0}, inputs, targets, cfg);
  }
  const std::vector<double> grid =
      cfg.rbf_gamma_grid.empty() ? default_rbf_gamma_grid(inputs) : cfg.rbf_gamma_grid;
  RvmModel best;
  bool have_best = false;
  for (double gamma : grid) {
    RvmModel candidate = train(KernelSpec{KernelKind::rbf, gamma}, inputs, targets, cfg);
    if (!have_best || candidate.meta.log_evidence > best.meta.log_evidence) {
      best = std::move(candidate);
      have_best = true;
    }
  }
  return best;
}

Prediction predict(const RvmModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.relevance_vectors.cols()) {
    throw Error(Errc::DimensionMismatch,
                "query dimension " + std::to_string(x.size()) + " vs model dimension " +
                    std::to_string(model.relevance_vectors.cols()));
  }
  const Eigen::Index m = model.weights.size();
  Eigen::VectorXd phi(m);
  Eigen::Index k = 0;
  if (model.bias_active) phi[k++] = 1.0;
  if (model.relevance_vectors.rows() > 0) {
    const Eigen::VectorXd xw = model.standardizer.apply_row(x);
    for (Eigen::Index r = 0; r < model.relevance_vectors.rows(); ++r) {
      const Eigen::VectorXd center =
          model.standardizer.apply_row(model.relevance_vectors.row(r).transpose());
      phi[k++] = kernel_eval(model.kernel, xw, center);
    }
  }
  Prediction pred;
  pred.mean = m > 0 ? phi.dot(model.weights) : 0.0;
  pred.variance = 1.0 / model.beta + (m > 0 ? phi.dot(model.sigma * phi) : 0.0);
  return pred;
}

std::string kernel_kind_name(KernelKind kind) {
  return kind == KernelKind::linear ? "linear" : "rbf";
}

KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  throw Error(Errc::InvalidSpec, "unknown kernel '" + name + "'");
}

}  // namespace volharm
