#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metapop/es.hpp"

using namespace metapop;

namespace {

Vector random_vector(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.game.kind = GameKind::kGos;
  cfg.game.gos_dim = 5;
  cfg.arch = SolverArch::kMlp;
  cfg.hidden = 4;
  cfg.psro.iterations = 3;
  cfg.psro.br.method = OracleMethod::kGradDescent;
  cfg.psro.br.lr = 10.0;
  cfg.psro.br.steps = 3;
  cfg.psro.exploit.exact_nfg = true;
  cfg.mode = TrainMode::kEs;
  cfg.es.n_perturb = 4;
  cfg.es.sigma = 0.1;
  cfg.meta_steps = 2;
  cfg.meta_batch = 2;
  cfg.outer_lr = 0.01;
  return cfg;
}

}  // namespace

TEST_CASE("es gradient calibration on the quadratic bowl") {
  Rng rng(1);
  const Vector theta = random_vector(10, rng);
  auto f = [](const Vector& x) { return 0.5 * x.squaredNorm(); };

  EsConfig cfg;
  cfg.n_perturb = 2000;
  cfg.sigma = 0.1;
  cfg.antithetic = false;
  cfg.control = ControlVariate::kForwardFd;
  const Vector estimate = es_gradient(f, theta, cfg, 7);
  CHECK((estimate - theta).norm() / theta.norm() < 0.15);
}

TEST_CASE("forward-fd control variate: same mean, lower variance") {
  Rng rng(2);
  const Vector theta = random_vector(10, rng);
  auto f = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
  const double sigma = 0.1;
  const double baseline = f(theta);
  const int n = 10000;

  // Replicates the estimator's per-index perturbation streams.
  const uint64_t seed = 99;
  Vector mean_fd = Vector::Zero(10), mean_raw = Vector::Zero(10);
  double var_fd = 0.0, var_raw = 0.0;
  std::vector<Vector> c_fd, c_raw;
  for (int i = 0; i < n; ++i) {
    Rng stream(derive_seed(seed, 0xe5, static_cast<uint64_t>(i)));
    Vector eps(10);
    for (int j = 0; j < 10; ++j) eps(j) = stream.normal();
    const double up = f(theta + sigma * eps);
    c_fd.push_back((up - baseline) / sigma * eps);
    c_raw.push_back(up / sigma * eps);
    mean_fd += c_fd.back();
    mean_raw += c_raw.back();
  }
  mean_fd /= n;
  mean_raw /= n;
  for (int i = 0; i < n; ++i) {
    var_fd += (c_fd[i] - mean_fd).squaredNorm();
    var_raw += (c_raw[i] - mean_raw).squaredNorm();
  }
  CHECK(var_fd < var_raw);

  // Means agree within 3 combined standard errors, per coordinate.
  for (int j = 0; j < 10; ++j) {
    double se2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d_fd = c_fd[i](j) - mean_fd(j);
      const double d_raw = c_raw[i](j) - mean_raw(j);
      se2 += d_fd * d_fd + d_raw * d_raw;
    }
    se2 /= static_cast<double>(n) * n;
    CHECK(std::abs(mean_fd(j) - mean_raw(j)) <= 3.0 * std::sqrt(se2));
  }

  // And the manual replication matches es_gradient bitwise when summed in
  // index order.
  EsConfig cfg;
  cfg.n_perturb = n;
  cfg.sigma = sigma;
  cfg.antithetic = false;
  cfg.control = ControlVariate::kForwardFd;
  Vector replicated = Vector::Zero(10);
  for (int i = 0; i < n; ++i) replicated += c_fd[i] * sigma;  // un-divided
  replicated /= n * sigma;
  CHECK((es_gradient(f, theta, cfg, seed) - replicated).cwiseAbs().maxCoeff() <
        1e-15);
}

TEST_CASE("constant objectives give an exactly zero estimate under forward-fd") {
  auto f = [](const Vector&) { return 3.25; };
  EsConfig cfg;
  cfg.n_perturb = 64;
  cfg.sigma = 0.5;
  cfg.antithetic = false;
  cfg.control = ControlVariate::kForwardFd;
  const Vector estimate = es_gradient(f, Vector::Zero(6), cfg, 3);
  CHECK(estimate == Vector::Zero(6));
}

TEST_CASE("antithetic pairs recover directional derivatives of linear maps") {
  Rng rng(4);
  const Vector c = random_vector(8, rng);
  const Vector theta = random_vector(8, rng);
  auto f = [&](const Vector& x) { return c.dot(x); };
  const double sigma = 0.3;

  // Per pair, the symmetric difference is the exact directional derivative.
  for (int i = 0; i < 20; ++i) {
    Rng stream(derive_seed(11, 0xe5, static_cast<uint64_t>(i)));
    Vector eps(8);
    for (int j = 0; j < 8; ++j) eps(j) = stream.normal();
    const double fwd = f(theta + sigma * eps);
    const double bwd = f(theta - sigma * eps);
    CHECK(std::abs((fwd - bwd) / (2.0 * sigma) - c.dot(eps)) < 1e-9);
  }

  EsConfig cfg;
  cfg.n_perturb = 4000;
  cfg.sigma = sigma;
  cfg.antithetic = true;
  cfg.control = ControlVariate::kNone;
  const Vector estimate = es_gradient(f, theta, cfg, 11);
  CHECK((estimate - c).norm() / c.norm() < 0.1);
}

TEST_CASE("es config validation") {
  EsConfig cfg;
  cfg.n_perturb = 5;
  cfg.antithetic = true;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg.antithetic = false;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("update_params: null update, norm clipping") {
  Rng rng(5);
  const Vector theta = random_vector(6, rng);
  CHECK(update_params(theta, Vector::Zero(6), 0.5, 1.0) == theta);

  Vector g = random_vector(6, rng);
  const double clip = g.norm() / 2.0;
  const Vector updated = update_params(theta, g, 1.0, clip);
  const Vector step = theta - updated;
  CHECK(step.norm() == doctest::Approx(clip).epsilon(1e-12));
  CHECK(step.normalized().dot(g.normalized()) == doctest::Approx(1.0));

  Vector bad = g;
  bad(0) = std::nan("");
  CHECK_THROWS_AS(update_params(theta, bad, 1.0, 1.0), std::runtime_error);
}

TEST_CASE("train: zero steps, determinism, history shape") {
  TrainConfig cfg = tiny_train_config();
  cfg.meta_steps = 0;
  const TrainResult empty = train(cfg, 5);
  CHECK(empty.history.empty());
  CHECK(empty.params.flat ==
        init_params(cfg.arch, cfg.hidden, derive_seed(5, 0x11)).flat);

  cfg.meta_steps = 2;
  const TrainResult a = train(cfg, 6);
  const TrainResult b = train(cfg, 6);
  CHECK(a.params.flat == b.params.flat);
  REQUIRE(a.history.size() == 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(a.history[s].step == s);
    CHECK(a.history[s].mean_exploitability ==
          b.history[s].mean_exploitability);
    CHECK(a.history[s].grad_norm == b.history[s].grad_norm);
    CHECK(a.history[s].per_game_exploitability.size() == cfg.meta_batch);
  }
  // One update per history entry.
  CHECK(a.params.flat !=
        init_params(cfg.arch, cfg.hidden, derive_seed(6, 0x11)).flat);
}

TEST_CASE("train validates the mode/architecture pairing") {
  TrainConfig cfg = tiny_train_config();
  cfg.mode = TrainMode::kDirect;
  cfg.arch = SolverArch::kGru;
  CHECK_THROWS_AS(train(cfg, 1), std::invalid_argument);
}

TEST_CASE("direct-mode training runs and matches its recorded objective") {
  TrainConfig cfg = tiny_train_config();
  cfg.mode = TrainMode::kDirect;
  cfg.metagrad.iterations = 2;
  cfg.metagrad.window = 2;
  cfg.metagrad.oracle.method = OracleMethod::kGradDescent;
  cfg.metagrad.oracle.steps = 1;
  cfg.metagrad.oracle.lr = 1.0;
  cfg.meta_steps = 2;
  cfg.meta_batch = 2;
  const TrainResult result = train(cfg, 7);
  REQUIRE(result.history.size() == 2);
  for (const StepRecord& rec : result.history)
    CHECK(std::isfinite(rec.mean_exploitability));
}
