#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "volharm/error.hpp"
#include "volharm/rng.hpp"
#include "volharm/rvm.hpp"

using namespace volharm;

namespace {

Errc thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected an Error");
}

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v[0] = x;
  return v;
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

// Marginal likelihood evaluated in the N-dimensional data domain: build
// C = beta^-1 I + Phi diag(alpha)^-1 Phi' densely and take the Gaussian
// log density directly. Independent of the weight-space route the library
// uses.
double oracle_log_evidence(const Eigen::MatrixXd& phi, const Eigen::VectorXd& t,
                           const Eigen::VectorXd& alpha, double beta) {
  const Eigen::Index n = t.size();
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(n, n) / beta;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    c += phi.col(j) * phi.col(j).transpose() / alpha[j];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  REQUIRE(llt.info() == Eigen::Success);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  }
  const double quad = t.dot(llt.solve(t));
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) + log_det + quad);
}

// Re-implementation of the training loop in terms of the public single-step
// operations only. Tracks the hyperparameter state that RvmModel does not
// expose, for the stationarity and pruning-equivalence checks.
struct MirrorState {
  std::vector<int> active;  // indices into the full design (0 = bias)
  Eigen::VectorXd alpha;    // over active columns
  double beta = 0.0;
  Posterior post;           // at the final hyperparameters
  DesignMatrix phi;         // final active design
  int iterations = 0;
  bool converged = false;
};

MirrorState mirror_train(const KernelSpec& spec, const Eigen::MatrixXd& inputs,
                         const Eigen::VectorXd& targets, const TrainConfig& cfg) {
  const Eigen::Index n = inputs.rows();
  const DesignMatrix full = build_design(spec, inputs, inputs);

  MirrorState s;
  s.active.resize(static_cast<std::size_t>(n) + 1);
  std::iota(s.active.begin(), s.active.end(), 0);
  s.alpha = Eigen::VectorXd::Constant(n + 1, cfg.alpha_init);
  const double var_t = (targets.array() - targets.mean()).square().sum() /
                       static_cast<double>(n - 1);
  s.beta = std::min(100.0 / std::max(var_t, 1e-300), cfg.beta_cap);

  auto slice = [&](const std::vector<int>& idx) {
    DesignMatrix act;
    act.values.resize(n, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      act.values.col(static_cast<Eigen::Index>(j)) = full.values.col(idx[j]);
    }
    return act;
  };

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    s.iterations = iter;
    s.phi = slice(s.active);
    const Hyperparameters hp{s.alpha, s.beta};
    s.post = posterior(s.phi, targets, hp);
    const Hyperparameters next = update_hyperparameters(s.phi, targets, hp, s.post, cfg);

    double delta = std::abs(std::log(next.beta) - std::log(s.beta));
    bool pruned_any = false;
    std::vector<int> kept;
    std::vector<double> kept_alpha;
    for (Eigen::Index i = 0; i < next.alpha.size(); ++i) {
      if (!std::isfinite(next.alpha[i])) {
        pruned_any = true;
        continue;
      }
      delta = std::max(delta, std::abs(std::log(next.alpha[i]) - std::log(s.alpha[i])));
      kept.push_back(s.active[static_cast<std::size_t>(i)]);
      kept_alpha.push_back(next.alpha[i]);
    }
    s.active = kept;
    s.alpha = Eigen::Map<Eigen::VectorXd>(kept_alpha.data(),
                                          static_cast<Eigen::Index>(kept_alpha.size()));
    s.beta = next.beta;
    if (!pruned_any && delta < cfg.tol) {
      s.converged = true;
      break;
    }
  }
  s.phi = slice(s.active);
  s.post = posterior(s.phi, targets, Hyperparameters{s.alpha, s.beta});
  return s;
}

// Shared noisy-line training problem; small enough that pruning leaves only a
// couple of basis functions.
struct LineProblem {
  Eigen::MatrixXd x;
  Eigen::VectorXd t;
};

LineProblem make_line_problem() {
  Rng rng(31);
  LineProblem p;
  p.x.resize(20, 2);
  p.t.resize(20);
  for (int i = 0; i < 20; ++i) {
    p.x(i, 0) = rng.uniform(-2.0, 2.0);
    p.x(i, 1) = rng.uniform(-2.0, 2.0);
    p.t[i] = 1.0 + 2.0 * p.x(i, 0) - p.x(i, 1) + rng.normal(0.0, 0.05);
  }
  return p;
}

}  // namespace

TEST_SUITE("rvm") {

TEST_CASE("kernel_eval covers both kernels") {
  Eigen::VectorXd x(2), y(2);
  x << 1, 2;
  y << 1, 2;
  CHECK(kernel_eval({KernelKind::linear, 1.0}, x, y) == 5.0);
  CHECK(kernel_eval({KernelKind::rbf, 0.7}, x, y) == 1.0);

  // squared distance 2 with gamma 1: exp(-2 / 2) = 1/e
  Eigen::VectorXd z(2);
  z << 2, 3;
  CHECK(kernel_eval({KernelKind::rbf, 1.0}, x, z) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  Eigen::VectorXd w(3);
  CHECK(thrown_code([&] { kernel_eval({KernelKind::linear, 1.0}, x, w); }) ==
        Errc::DimensionMismatch);
}

TEST_CASE("build_design prepends a ones column") {
  Eigen::MatrixXd pts(2, 1);
  pts << 1, 2;
  const DesignMatrix d = build_design({KernelKind::linear, 1.0}, pts, pts);
  Eigen::MatrixXd expected(2, 3);
  expected << 1, 1, 2, 1, 2, 4;
  CHECK((d.values - expected).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(32);
  Eigen::MatrixXd rows(6, 3);
  for (int i = 0; i < rows.size(); ++i) rows(i / 3, i % 3) = rng.normal();
  const DesignMatrix r = build_design({KernelKind::rbf, 1.3}, rows, rows);
  CHECK((r.values.col(0).array() == 1.0).all());
  for (int i = 0; i < 6; ++i) {
    CHECK(r.values(i, i + 1) == doctest::Approx(1.0).epsilon(1e-14));
  }

  Eigen::MatrixXd centers(2, 2);
  CHECK(thrown_code([&] { build_design({KernelKind::linear, 1.0}, rows, centers); }) ==
        Errc::DimensionMismatch);
}

TEST_CASE("posterior matches the scalar closed form") {
  DesignMatrix phi;
  phi.values = Eigen::MatrixXd::Ones(1, 1);
  Hyperparameters hp;
  hp.alpha = vec1(1.0);
  hp.beta = 1.0;
  const Posterior post = posterior(phi, vec1(2.0), hp);
  CHECK(post.sigma(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(post.mu[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("posterior approaches least squares as noise vanishes") {
  Rng rng(33);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd a(5, 3);
    for (int i = 0; i < a.size(); ++i) a(i / 3, i % 3) = rng.normal();
    // Orthonormal columns make the least-squares solution Q't.
    const Eigen::MatrixXd q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() *
        Eigen::MatrixXd::Identity(5, 3);
    Eigen::VectorXd t(5);
    for (int i = 0; i < 5; ++i) t[i] = rng.normal(0.0, 2.0);

    DesignMatrix phi;
    phi.values = q;
    Hyperparameters hp;
    hp.alpha = Eigen::VectorXd::Constant(3, 1e-3);
    hp.beta = 1e12;
    const Posterior post = posterior(phi, t, hp);
    const Eigen::VectorXd ls = q.colPivHouseholderQr().solve(t);
    CHECK((post.mu - ls).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("a huge prior precision pins its weight near zero") {
  Rng rng(34);
  Eigen::MatrixXd x(8, 2);
  for (int i = 0; i < x.size(); ++i) x(i / 2, i % 2) = rng.normal();
  Eigen::VectorXd t(8);
  for (int i = 0; i < 8; ++i) t[i] = rng.normal(0.0, 3.0);
  DesignMatrix phi;
  phi.values = x;
  Hyperparameters hp;
  hp.alpha.resize(2);
  hp.alpha << 1e10, 1e-3;
  hp.beta = 10.0;
  const Posterior post = posterior(phi, t, hp);
  CHECK(std::abs(post.mu[0]) < 1e-6);
}

TEST_CASE("posterior satisfies the normal-equation residual bound") {
  Rng rng(35);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 3 + static_cast<int>(rng.below(10));
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    Eigen::MatrixXd values(n, m);
    for (int i = 0; i < values.size(); ++i) values(i / m, i % m) = rng.normal();
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t[i] = rng.normal(0.0, 2.0);
    Hyperparameters hp;
    hp.alpha.resize(m);
    for (int i = 0; i < m; ++i) hp.alpha[i] = std::pow(10.0, rng.uniform(-3.0, 3.0));
    hp.beta = std::pow(10.0, rng.uniform(-2.0, 4.0));

    DesignMatrix phi;
    phi.values = values;
    const Posterior post = posterior(phi, t, hp);

    const Eigen::MatrixXd a = hp.beta * values.transpose() * values +
                              Eigen::MatrixXd(hp.alpha.asDiagonal());
    const Eigen::VectorXd rhs = hp.beta * values.transpose() * t;
    CHECK((a * post.mu - rhs).norm() <= 1e-8 * rhs.norm());

    // Covariance stays symmetric and positive definite.
    CHECK((post.sigma - post.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::LLT<Eigen::MatrixXd> llt(post.sigma);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("posterior rejects invalid hyperparameters") {
  DesignMatrix phi;
  phi.values = Eigen::MatrixXd::Ones(2, 1);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(2);

  Hyperparameters bad_beta;
  bad_beta.alpha = vec1(1.0);
  bad_beta.beta = -1.0;
  CHECK(thrown_code([&] { posterior(phi, t, bad_beta); }) == Errc::NotPositiveDefinite);

  Hyperparameters pruned_alpha;
  pruned_alpha.alpha = vec1(Hyperparameters::pruned);
  pruned_alpha.beta = 1.0;
  CHECK(thrown_code([&] { posterior(phi, t, pruned_alpha); }) ==
        Errc::NotPositiveDefinite);

  Hyperparameters hp;
  hp.alpha = Eigen::VectorXd::Ones(2);
  hp.beta = 1.0;
  CHECK(thrown_code([&] { posterior(phi, t, hp); }) == Errc::DimensionMismatch);
}

TEST_CASE("update_hyperparameters applies the fixed-point formulas") {
  // Two weights with gamma = 1 - 1*0.5 = 0.5 each, so alpha_new = 0.5/4 and
  // beta_new = (3 - 1) / 0.5.
  DesignMatrix phi;
  phi.values.resize(3, 2);
  phi.values << 1, 0, 0, 1, 0, 0;
  Eigen::VectorXd t(3);
  t << 2.0, 2.0, 1.0 / std::sqrt(2.0);
  Hyperparameters hp;
  hp.alpha = Eigen::VectorXd::Ones(2);
  hp.beta = 1.0;
  Posterior post;
  post.mu.resize(2);
  post.mu << 2.0, 2.0;
  post.sigma = 0.5 * Eigen::MatrixXd::Identity(2, 2);

  const Hyperparameters next = update_hyperparameters(phi, t, hp, post);
  CHECK(next.alpha[0] == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(next.alpha[1] == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(next.beta == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("a perfect fit drives beta to its cap") {
  DesignMatrix phi;
  phi.values = Eigen::MatrixXd::Ones(3, 1);
  Hyperparameters hp;
  hp.alpha = vec1(1.0);
  hp.beta = 1.0;
  Posterior post;
  post.mu = vec1(1.0);
  post.sigma = 0.5 * Eigen::MatrixXd::Identity(1, 1);
  const Eigen::VectorXd t = Eigen::VectorXd::Ones(3);  // exactly Phi * mu

  TrainConfig cfg;
  const Hyperparameters next = update_hyperparameters(phi, t, hp, post, cfg);
  CHECK(next.beta == cfg.beta_cap);
}

TEST_CASE("update_hyperparameters prunes and clamps") {
  DesignMatrix phi;
  phi.values = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd t(3);
  t << 1.0, 0.5, -0.5;
  Hyperparameters hp;
  hp.alpha.resize(3);
  hp.alpha << 1.0, 1.0, 3.0;
  hp.beta = 2.0;
  Posterior post;
  post.mu.resize(3);
  post.mu << 1e-7, 2.0, 1.0;  // mu^2 = 1e-14 underflows the first weight
  post.sigma = 0.5 * Eigen::MatrixXd::Identity(3, 3);

  const Hyperparameters next = update_hyperparameters(phi, t, hp, post);
  CHECK(std::isinf(next.alpha[0]));
  CHECK(next.alpha[1] == doctest::Approx(0.125).epsilon(1e-14));
  // gamma = 1 - 3*0.5 clamps to 0; alpha keeps its configured floor.
  CHECK(next.alpha[2] == 1e-12);

  Posterior all_tiny;
  all_tiny.mu = Eigen::VectorXd::Constant(3, 1e-7);
  all_tiny.sigma = post.sigma;
  CHECK(thrown_code([&] { update_hyperparameters(phi, t, hp, all_tiny); }) ==
        Errc::AllWeightsPruned);
}

TEST_CASE("log_evidence matches the scalar Gaussian") {
  DesignMatrix phi;
  phi.values = Eigen::MatrixXd::Ones(1, 1);
  Hyperparameters hp;
  hp.alpha = vec1(1.0);
  hp.beta = 1.0;
  // C = 1/beta + 1/alpha = 2; log N(0 | 0, 2) = -0.5 log(4 pi)
  CHECK(log_evidence(phi, vec1(0.0), hp) ==
        doctest::Approx(-0.5 * std::log(4.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("log_evidence matches a dense covariance-domain oracle") {
  Rng rng(36);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(8));
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    DesignMatrix phi;
    phi.values.resize(n, m);
    for (int i = 0; i < phi.values.size(); ++i) {
      phi.values(i / m, i % m) = rng.normal();
    }
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t[i] = rng.normal(0.0, 1.5);
    Hyperparameters hp;
    hp.alpha.resize(m);
    for (int i = 0; i < m; ++i) hp.alpha[i] = std::pow(10.0, rng.uniform(-2.0, 3.0));
    hp.beta = std::pow(10.0, rng.uniform(-1.0, 3.0));

    const double expected = oracle_log_evidence(phi.values, t, hp.alpha, hp.beta);
    CHECK(log_evidence(phi, t, hp) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("log_evidence handles an empty active set") {
  DesignMatrix phi;
  phi.values.resize(3, 0);
  Eigen::VectorXd t(3);
  t << 1.0, -1.0, 0.5;
  Hyperparameters hp;
  hp.alpha.resize(0);
  hp.beta = 4.0;
  // Isotropic Gaussian with variance 1/4.
  const double expected =
      -0.5 * (3.0 * std::log(2.0 * M_PI / 4.0) + 4.0 * t.squaredNorm());
  CHECK(log_evidence(phi, t, hp) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_evidence only sees columns through the marginal covariance") {
  // Scaling column j by k and alpha_j by k^2 leaves C unchanged, so the
  // evidence cannot move.
  Rng rng(37);
  DesignMatrix phi;
  phi.values.resize(5, 3);
  for (int i = 0; i < phi.values.size(); ++i) phi.values(i / 3, i % 3) = rng.normal();
  Eigen::VectorXd t(5);
  for (int i = 0; i < 5; ++i) t[i] = rng.normal();
  Hyperparameters hp;
  hp.alpha.resize(3);
  hp.alpha << 0.5, 2.0, 8.0;
  hp.beta = 3.0;
  const double base = log_evidence(phi, t, hp);

  DesignMatrix scaled = phi;
  Hyperparameters hp2 = hp;
  const double ks[3] = {2.0, 0.25, 10.0};
  for (int j = 0; j < 3; ++j) {
    scaled.values.col(j) *= ks[j];
    hp2.alpha[j] *= ks[j] * ks[j];
  }
  CHECK(log_evidence(scaled, t, hp2) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("training on zero targets prunes everything") {
  Eigen::MatrixXd x(10, 1);
  for (int i = 0; i < 10; ++i) x(i, 0) = i;
  const RvmModel model = train({KernelKind::linear, 1.0}, x, Eigen::VectorXd::Zero(10));
  CHECK(model.active_count() == 0);
  CHECK(model.meta.converged);
  Rng rng(38);
  for (int i = 0; i < 20; ++i) {
    const Prediction p = predict(model, vec1(rng.uniform(-20.0, 20.0)));
    CHECK(std::abs(p.mean) <= 1e-9);
    CHECK(p.variance > 0.0);
  }
}

TEST_CASE("noiseless linear data is interpolated with beta at the cap") {
  Rng rng(39);
  Eigen::MatrixXd x(50, 1);
  Eigen::VectorXd t(50);
  for (int i = 0; i < 50; ++i) {
    x(i, 0) = rng.uniform(-5.0, 5.0);
    t[i] = 2.0 * x(i, 0) + 1.0;
  }
  TrainConfig cfg;
  const RvmModel model = train({KernelKind::linear, 1.0}, x, t, cfg);
  CHECK(model.beta == cfg.beta_cap);
  for (int i = 0; i < 50; ++i) {
    const Prediction p = predict(model, x.row(i).transpose());
    CHECK(std::abs(p.mean - t[i]) < 1e-6);
  }
  // Same bound holds exactly at the retained centers.
  REQUIRE(model.relevance_vectors.rows() > 0);
  const Eigen::VectorXd rv = model.relevance_vectors.row(0).transpose();
  CHECK(std::abs(predict(model, rv).mean - (2.0 * rv[0] + 1.0)) < 1e-6);
}

TEST_CASE("sinc benchmark stays sparse and accurate") {
  Rng rng(11);
  const int n = 100;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-10.0, 10.0);
    t[i] = sinc(x(i, 0)) + rng.normal(0.0, 0.1);
  }
  // Length scale of 2 in raw input units; training standardizes internally.
  const double sd =
      std::sqrt((x.col(0).array() - x.col(0).mean()).square().sum() / (n - 1));
  const RvmModel model = train({KernelKind::rbf, 2.0 / sd}, x, t);
  CHECK(model.meta.converged);
  CHECK(model.relevance_vectors.rows() <= 20);

  double se = 0.0;
  for (int i = 0; i < 400; ++i) {
    const double q = -10.0 + 20.0 * i / 399.0;
    const double err = predict(model, vec1(q)).mean - sinc(q);
    se += err * err;
  }
  CHECK(std::sqrt(se / 400.0) <= 0.05);
}

TEST_CASE("training is deterministic") {
  const LineProblem p = make_line_problem();
  const RvmModel a = train({KernelKind::linear, 1.0}, p.x, p.t);
  const RvmModel b = train({KernelKind::linear, 1.0}, p.x, p.t);
  REQUIRE(a.weights.size() == b.weights.size());
  for (Eigen::Index i = 0; i < a.weights.size(); ++i) {
    CHECK(a.weights[i] == b.weights[i]);
  }
  CHECK(a.beta == b.beta);
  CHECK(a.meta.log_evidence == b.meta.log_evidence);
  CHECK((a.relevance_vectors - b.relevance_vectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sigma - b.sigma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train agrees with a public-ops re-implementation") {
  const LineProblem p = make_line_problem();
  const TrainConfig cfg;
  const KernelSpec spec{KernelKind::linear, 1.0};
  const RvmModel model = train(spec, p.x, p.t, cfg);
  const MirrorState mirror = mirror_train(spec, p.x, p.t, cfg);

  CHECK(mirror.converged == model.meta.converged);
  CHECK(mirror.iterations == model.meta.iterations);
  REQUIRE(static_cast<int>(mirror.active.size()) == model.active_count());
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
    CHECK(model.weights[i] == doctest::Approx(mirror.post.mu[i]).epsilon(1e-9));
  }
  CHECK(model.beta == doctest::Approx(mirror.beta).epsilon(1e-9));
  CHECK(model.meta.log_evidence ==
        doctest::Approx(log_evidence(mirror.phi, p.t,
                                     Hyperparameters{mirror.alpha, mirror.beta}))
            .epsilon(1e-9));
}

TEST_CASE("the converged state is a fixed point of the update") {
  const LineProblem p = make_line_problem();
  const TrainConfig cfg;
  const MirrorState s = mirror_train({KernelKind::linear, 1.0}, p.x, p.t, cfg);
  REQUIRE(s.converged);

  const Hyperparameters hp{s.alpha, s.beta};
  const Hyperparameters next = update_hyperparameters(s.phi, p.t, hp, s.post, cfg);
  CHECK(std::abs(std::log(next.beta) - std::log(s.beta)) < cfg.tol);
  for (Eigen::Index i = 0; i < s.alpha.size(); ++i) {
    REQUIRE(std::isfinite(next.alpha[i]));
    CHECK(std::abs(std::log(next.alpha[i]) - std::log(s.alpha[i])) < cfg.tol);
  }
}

TEST_CASE("pruned and threshold-alpha models predict alike") {
  const LineProblem p = make_line_problem();
  const TrainConfig cfg;
  const KernelSpec spec{KernelKind::linear, 1.0};
  const RvmModel pruned_model = train(spec, p.x, p.t, cfg);
  const MirrorState s = mirror_train(spec, p.x, p.t, cfg);
  REQUIRE(s.active.size() < static_cast<std::size_t>(p.x.rows()) + 1);

  // Rebuild the full-width model with pruned weights held at the prune
  // threshold instead of removed.
  const Eigen::Index width = p.x.rows() + 1;
  Eigen::VectorXd alpha_full = Eigen::VectorXd::Constant(width, cfg.alpha_prune);
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    alpha_full[s.active[k]] = s.alpha[static_cast<Eigen::Index>(k)];
  }
  const DesignMatrix full = build_design(spec, p.x, p.x);
  const Posterior post = posterior(full, p.t, Hyperparameters{alpha_full, s.beta});

  RvmModel wide;
  wide.kernel = spec;
  wide.bias_active = true;
  wide.relevance_vectors = p.x;
  wide.weights = post.mu;
  wide.sigma = post.sigma;
  wide.beta = s.beta;

  Rng rng(40);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd q(2);
    q << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    CHECK(predict(pruned_model, q).mean ==
          doctest::Approx(predict(wide, q).mean).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("converged evidence beats random hyperparameter draws") {
  Eigen::MatrixXd x(6, 1);
  x << -2, -1, 0, 1, 2, 3;
  Eigen::VectorXd t(6);
  t << -1.52, -0.48, 0.51, 1.47, 2.53, 3.49;  // 0.5 + x plus small noise
  const KernelSpec spec{KernelKind::linear, 1.0};
  const RvmModel model = train(spec, x, t);
  const DesignMatrix full = build_design(spec, x, x);

  Rng rng(41);
  for (int draw = 0; draw < 100; ++draw) {
    Hyperparameters hp;
    hp.alpha.resize(7);
    for (int i = 0; i < 7; ++i) hp.alpha[i] = std::pow(10.0, rng.uniform(-4.0, 4.0));
    hp.beta = std::pow(10.0, rng.uniform(-2.0, 6.0));
    CHECK(log_evidence(full, t, hp) <= model.meta.log_evidence + 1e-9);
  }
}

TEST_CASE("train reports the last state when iterations run out") {
  const LineProblem p = make_line_problem();
  TrainConfig cfg;
  cfg.max_iter = 3;
  const RvmModel model = train({KernelKind::linear, 1.0}, p.x, p.t, cfg);
  CHECK_FALSE(model.meta.converged);
  CHECK(model.meta.iterations == 3);
  CHECK(model.weights.allFinite());
  CHECK(std::isfinite(model.meta.log_evidence));
}

TEST_CASE("train validates its input") {
  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  CHECK(thrown_code([&] {
          train({KernelKind::linear, 1.0}, one, Eigen::VectorXd::Zero(1));
        }) == Errc::InvalidSpec);

  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  CHECK(thrown_code([&] {
          train({KernelKind::linear, 1.0}, x, Eigen::VectorXd::Zero(2));
        }) == Errc::DimensionMismatch);

  Eigen::VectorXd bad(3);
  bad << 1.0, std::nan(""), 0.0;
  CHECK(thrown_code([&] { train({KernelKind::linear, 1.0}, x, bad); }) ==
        Errc::NonFiniteInput);
}

TEST_CASE("default gamma grid spans a decade around the median distance") {
  Rng rng(42);
  Eigen::MatrixXd x(30, 2);
  for (int i = 0; i < x.size(); ++i) x(i / 2, i % 2) = rng.normal(5.0, 3.0);
  const std::vector<double> grid = default_rbf_gamma_grid(x);
  REQUIRE(grid.size() == 7);

  // Brute-force median pairwise distance of the standardized inputs.
  Eigen::MatrixXd z = x;
  for (int j = 0; j < 2; ++j) {
    const double mean = x.col(j).mean();
    const double sd =
        std::sqrt((x.col(j).array() - mean).square().sum() / (x.rows() - 1));
    z.col(j) = (x.col(j).array() - mean) / sd;
  }
  std::vector<double> dists;
  for (int i = 0; i < 30; ++i) {
    for (int j = i + 1; j < 30; ++j) {
      dists.push_back((z.row(i) - z.row(j)).norm());
    }
  }
  std::sort(dists.begin(), dists.end());
  const double median = dists[dists.size() / 2];

  CHECK(grid[0] == doctest::Approx(0.1 * median).epsilon(1e-12));
  CHECK(grid[3] == doctest::Approx(median).epsilon(1e-12));
  CHECK(grid[6] == doctest::Approx(10.0 * median).epsilon(1e-12));
  for (int k = 1; k < 7; ++k) {
    CHECK(grid[k] / grid[k - 1] ==
          doctest::Approx(std::pow(10.0, 2.0 / 6.0)).epsilon(1e-12));
  }
}

TEST_CASE("train_auto keeps the highest-evidence gamma") {
  Rng rng(11);
  const int n = 100;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-10.0, 10.0);
    t[i] = sinc(x(i, 0)) + rng.normal(0.0, 0.1);
  }
  const RvmModel best = train_auto(KernelKind::rbf, x, t);

  double max_evidence = -std::numeric_limits<double>::infinity();
  double argmax_gamma = 0.0;
  for (double gamma : default_rbf_gamma_grid(x)) {
    const RvmModel candidate = train({KernelKind::rbf, gamma}, x, t);
    CHECK(candidate.meta.log_evidence <= best.meta.log_evidence + 1e-12);
    if (candidate.meta.log_evidence > max_evidence) {
      max_evidence = candidate.meta.log_evidence;
      argmax_gamma = gamma;
    }
  }
  CHECK(best.kernel.rbf_gamma == argmax_gamma);
  CHECK(best.meta.log_evidence == max_evidence);

  // Linear requests fall straight through to train().
  const RvmModel lin_auto = train_auto(KernelKind::linear, x, t);
  const RvmModel lin = train({KernelKind::linear, 1.0}, x, t);
  CHECK(lin_auto.meta.log_evidence == lin.meta.log_evidence);
  CHECK((lin_auto.weights - lin.weights).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a bias-only model predicts its constant") {
  RvmModel model;
  model.kernel = {KernelKind::linear, 1.0};
  model.bias_active = true;
  model.relevance_vectors.resize(0, 1);
  model.weights = vec1(5.0);
  model.sigma = 0.1 * Eigen::MatrixXd::Identity(1, 1);
  model.beta = 4.0;
  for (double q : {-3.0, 0.0, 7.5}) {
    const Prediction p = predict(model, vec1(q));
    CHECK(p.mean == 5.0);
    CHECK(p.variance == doctest::Approx(0.25 + 0.1).epsilon(1e-14));
  }
}

TEST_CASE("predictive variance never drops below the noise floor") {
  const LineProblem p = make_line_problem();
  const RvmModel model = train({KernelKind::linear, 1.0}, p.x, p.t);
  Rng rng(43);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd q(2);
    q << rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0);
    CHECK(predict(model, q).variance >= 1.0 / model.beta - 1e-15);
  }
  Eigen::VectorXd wrong(3);
  CHECK(thrown_code([&] { predict(model, wrong); }) == Errc::DimensionMismatch);
}

TEST_CASE("kernel kind names round-trip") {
  CHECK(kernel_kind_name(KernelKind::linear) == "linear");
  CHECK(kernel_kind_name(KernelKind::rbf) == "rbf");
  CHECK(kernel_kind_from_name("linear") == KernelKind::linear);
  CHECK(kernel_kind_from_name("rbf") == KernelKind::rbf);
  CHECK(thrown_code([] { kernel_kind_from_name("cubic"); }) == Errc::InvalidSpec);
}

}  // TEST_SUITE
