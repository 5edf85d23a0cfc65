#include <doctest.h>

#include <cmath>

#include "metapop/metagrad.hpp"

using namespace metapop;

namespace {

GameConfig tiny_config(GameKind kind) {
  GameConfig cfg;
  cfg.kind = kind;
  cfg.gos_dim = 4;
  cfg.lotto_customers = 3;
  cfg.lotto_servers = 2;
  return cfg;
}

MetaGradConfig tiny_metagrad() {
  MetaGradConfig cfg;
  cfg.iterations = 3;
  cfg.window = 3;
  cfg.oracle.method = OracleMethod::kGradDescent;
  cfg.oracle.steps = 1;
  cfg.oracle.lr = 1.0;
  return cfg;
}

double rel_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

// Evaluation point away from the relu kinks the raw zero-bias init sits on;
// central differences are only meaningful where the objective is smooth.
MetaSolverParams generic_params(int hidden, uint64_t seed) {
  MetaSolverParams params = init_params(SolverArch::kMlp, hidden, seed);
  Rng rng(derive_seed(seed, 0x6e1e));
  for (Eigen::Index i = 0; i < params.flat.size(); ++i)
    params.flat(i) += 0.25 * rng.normal();
  return params;
}

}  // namespace

TEST_CASE("central differences are near-exact on quadratics") {
  Rng rng(1);
  Vector theta(10);
  for (int i = 0; i < 10; ++i) theta(i) = rng.normal();
  const Vector grad = central_difference(
      [](const Vector& x) { return 0.5 * x.squaredNorm(); }, theta, 1e-5);
  CHECK((grad - theta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("unrolled forward: determinism, replay, singleton start") {
  const GameInstance game = sample_game(tiny_config(GameKind::kGos), 5);
  const MetaSolverParams params = init_params(SolverArch::kMlp, 8, 6);
  const MetaGradConfig cfg = tiny_metagrad();

  const UnrolledRun a = unrolled_psro_forward(params, game, cfg, 7);
  const UnrolledRun b = unrolled_psro_forward(params, game, cfg, 7);
  CHECK(a.value == b.value);

  // Replaying the tape reproduces the objective bitwise.
  const double before = a.tape->scalar_value(a.objective);
  a.tape->replay();
  CHECK(a.tape->scalar_value(a.objective) == before);

  // A size-one meta-game maps to pi = [1] regardless of theta.
  MetaGradConfig one = cfg;
  one.iterations = 1;
  one.window = 1;
  const MetaSolverParams other = init_params(SolverArch::kMlp, 8, 99);
  const UnrolledRun ra = unrolled_psro_forward(params, game, one, 8);
  const UnrolledRun rb = unrolled_psro_forward(other, game, one, 8);
  // Both runs best-respond to the same singleton opponent in iteration 1.
  // The objective then differs only through pi_1 = f(M_1).
  CHECK(std::isfinite(ra.value));
  CHECK(std::isfinite(rb.value));
}

TEST_CASE("direct gradient matches finite differences across kinds") {
  for (GameKind kind : {GameKind::kGos, GameKind::kLotto, GameKind::kRps2d}) {
    const GameInstance game = sample_game(tiny_config(kind), 60);
    const MetaSolverParams params = generic_params(8, 61);
    MetaGradConfig cfg = tiny_metagrad();
    if (kind == GameKind::kRps2d) cfg.oracle.lr = 0.5;
    const Vector direct = direct_meta_gradient(params, game, cfg, 62);
    const Vector direct2 = direct_meta_gradient(params, game, cfg, 62);
    CHECK(direct == direct2);
    const Vector fd = finite_diff_gradient(params, game, cfg, 62, 1e-4);
    CHECK(rel_error(direct, fd) < 1e-3);
  }
}

TEST_CASE("finite-difference error shrinks quadratically in h") {
  // Order check on smooth objectives with an analytic reference gradient.
  double shrink_sum = 0.0;
  int measured = 0;
  for (int i = 0; i < 5; ++i) {
    const GameInstance game =
        sample_game(tiny_config(GameKind::kRps2d), 600 + i);
    Rng rng(610 + i);
    const Vector x = sample_policy(game, rng);
    const Vector y = sample_policy(game, rng);
    const Vector reference = payoff_grad_row(game, x, y);
    auto objective = [&](const Vector& probe) {
      return payoff(game, probe, y);
    };
    for (double h : {4e-2, 2e-2}) {
      const double err_coarse =
          (central_difference(objective, x, h) - reference).norm();
      const double err_fine =
          (central_difference(objective, x, h / 2.0) - reference).norm();
      if (err_fine > 1e-12) {
        shrink_sum += err_coarse / err_fine;
        ++measured;
      }
    }
  }
  REQUIRE(measured >= 5);
  const double mean_shrink = shrink_sum / measured;
  CHECK(mean_shrink > 2.5);
  CHECK(mean_shrink < 8.0);
}

TEST_CASE("window zero detaches the population path") {
  const GameInstance game = sample_game(tiny_config(GameKind::kGos), 70);
  const MetaSolverParams params = generic_params(8, 71);

  MetaGradConfig full = tiny_metagrad();
  MetaGradConfig detached = tiny_metagrad();
  detached.window = 0;

  const Vector g_full = direct_meta_gradient(params, game, full, 72);
  const Vector g_detached = direct_meta_gradient(params, game, detached, 72);
  CHECK((g_full - g_detached).norm() > 1e-10);

  // The window-0 gradient is the gradient of the final stage with the
  // population frozen at its forward-pass values.
  const std::vector<Vector> pool =
      unrolled_population(params, game, detached, 72);
  MetaSolverParams probe = params;
  const Vector fd = central_difference(
      [&](const Vector& flat) {
        probe.flat = flat;
        return detached_objective(probe, game, detached, pool, 72);
      },
      params.flat, 1e-4);
  CHECK(rel_error(g_detached, fd) < 1e-3);
}

TEST_CASE("zeroing the final layer kills the gradient of earlier layers") {
  const GameInstance game = sample_game(tiny_config(GameKind::kGos), 80);
  MetaSolverParams params = init_params(SolverArch::kMlp, 8, 81);
  const MlpLayout layout = MlpLayout::make(8);
  params.flat.segment(layout.w4, 2 * 8 + 1).setZero();  // w4 and b4

  const MetaGradConfig cfg = tiny_metagrad();
  const Vector grad = direct_meta_gradient(params, game, cfg, 82);
  // With logits identically zero the meta-distribution is uniform whatever
  // the earlier layers do: every path to the objective runs through w4.
  CHECK(grad.head(layout.w4).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(grad.segment(layout.w4, 2 * 8).cwiseAbs().maxCoeff() > 1e-12);
}

TEST_CASE("implicit gradient: cosine with unrolled, lambda limits, flags") {
  const GameInstance game = sample_game(tiny_config(GameKind::kRps2d), 90);
  const MetaSolverParams params = generic_params(8, 91);

  MetaGradConfig cfg = tiny_metagrad();
  cfg.iterations = 2;
  cfg.window = 2;
  cfg.oracle.lr = 0.5;
  cfg.oracle.steps = 400;
  cfg.stationarity_tol = 1e-6;
  cfg.max_inner_steps = 4000;
  cfg.lambda = 1e-3;

  const Vector unrolled = direct_meta_gradient(params, game, cfg, 92);
  const Vector implicit = implicit_meta_gradient(params, game, cfg, 92);
  const double cos =
      unrolled.dot(implicit) / (unrolled.norm() * implicit.norm());
  CHECK(cos >= 0.99);

  SUBCASE("large lambda reduces to the pi-path-only gradient") {
    MetaGradConfig frozen = cfg;
    frozen.oracle.init = OracleInit::kZeros;
    frozen.lambda = 1e12;
    const Vector g_inf = implicit_meta_gradient(params, game, frozen, 93);

    // Reconstruct by hand: frozen pool, stationary final best response held
    // constant, gradient flowing through pi only.
    MetaGradConfig implicit_cfg = frozen;
    implicit_cfg.mode = MetaGradMode::kImplicit;
    const std::vector<Vector> pool =
        unrolled_population(params, game, implicit_cfg, 93);
    Population pop;
    pop.members = pool;
    const Matrix m = evaluate_meta_game(game, pop);
    const MetaDistribution pi = solver_forward(params, m);
    Vector phi = Vector::Zero(policy_dim(game));
    for (int n = 0; n < frozen.max_inner_steps; ++n) {
      const Vector g = deviation_grad(game, phi, pi, pop, BrSide::kRow);
      if (g.norm() < frozen.stationarity_tol) break;
      phi += frozen.oracle.lr * g;
    }

    Tape t;
    const MlpLayout layout = MlpLayout::make(8);
    const Var theta = t.leaf(params.flat);
    const int size = static_cast<int>(pool.size());
    std::vector<std::vector<Var>> entries(size, std::vector<Var>(size));
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        entries[i][j] = t.constant_scalar(m(i, j));
    const Var pi_var = mlp_solver_graph(t, layout, theta, entries);
    const GameGraphContext gctx = GameGraphContext::make(game);
    const Var phi_var = t.constant(phi);
    Var objective = -1;
    for (int k = 0; k < size; ++k) {
      const Var term = t.smul(t.segment(pi_var, k, 1),
                              payoff_graph(t, gctx, phi_var, t.constant(pool[k])));
      objective = k == 0 ? term : t.add(objective, term);
    }
    const Vector pi_only = t.value(t.gradient(objective, {theta})[0]);
    CHECK(rel_error(g_inf, pi_only) < 1e-6);
  }

  SUBCASE("bilinear payoffs flag near-singular curvature at lambda zero") {
    const GameInstance gos = sample_game(tiny_config(GameKind::kGos), 94);
    MetaGradConfig singular = cfg;
    singular.oracle.lr = 25.0;
    singular.stationarity_tol = 1e-5;
    singular.max_inner_steps = 200000;
    singular.lambda = 0.0;
    CHECK_THROWS_AS(implicit_meta_gradient(params, gos, singular, 95),
                    std::runtime_error);
  }
}

TEST_CASE("config validation") {
  MetaGradConfig cfg = tiny_metagrad();
  cfg.window = 5;  // > iterations
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = tiny_metagrad();
  cfg.oracle.method = OracleMethod::kReinforce;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = tiny_metagrad();
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}
