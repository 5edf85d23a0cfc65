#include "metapop/metagrad.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <ostream>

#include "metapop/check.hpp"

namespace metapop {

void validate(const MetaGradConfig& cfg) {
  require(cfg.iterations >= 1, "metagrad: iterations must be >= 1");
  require(cfg.window >= 0 && cfg.window <= cfg.iterations,
          "metagrad: window must lie in [0, iterations]");
  require(cfg.oracle.method == OracleMethod::kGradDescent,
          "metagrad: only the gradient-descent oracle is differentiable");
  require(cfg.lambda >= 0.0, "metagrad: lambda must be nonnegative");
  validate(cfg.oracle);
}

namespace {

// Seed streams shared by the plain and the taped phases of one run.
uint64_t init_seed(uint64_t seed) { return derive_seed(seed, 1); }
uint64_t br_seed(uint64_t seed, int t) { return derive_seed(seed, 2, t); }
uint64_t final_seed(uint64_t seed) { return derive_seed(seed, 3); }

Var aggregate_graph(Tape& t, const GameGraphContext& gctx, Var pi, Var phi,
                    const std::vector<Var>& members) {
  Var agg = -1;
  for (size_t k = 0; k < members.size(); ++k) {
    const Var m = payoff_graph(t, gctx, phi, members[k]);
    const Var term = t.smul(t.segment(pi, static_cast<int>(k), 1), m);
    agg = k == 0 ? term : t.add(agg, term);
  }
  return agg;
}

Var taped_gd_br(Tape& t, const GameGraphContext& gctx, Var pi,
                const std::vector<Var>& members, const OracleConfig& oracle,
                const Vector& init) {
  Var phi = t.leaf(init);
  for (int n = 0; n < oracle.steps; ++n) {
    const Var agg = aggregate_graph(t, gctx, pi, phi, members);
    const Var grad = t.gradient(agg, {phi})[0];
    require_numeric(t.value(grad).allFinite(),
                    "unrolled forward: non-finite best-response gradient");
    phi = t.add(phi, t.scale(grad, oracle.lr));
  }
  return phi;
}

// Inner loop run to near-stationarity; plain values only.
Vector stationary_br(const GameInstance& game, const Vector& weights,
                     const std::vector<Vector>& members,
                     const MetaGradConfig& cfg, const Vector& init) {
  Population pop;
  pop.members = members;
  Vector phi = init;
  for (int n = 0; n < cfg.max_inner_steps; ++n) {
    const Vector g = deviation_grad(game, phi, weights, pop, BrSide::kRow);
    require_numeric(g.allFinite(), "implicit: non-finite inner gradient");
    if (g.norm() < cfg.stationarity_tol) return phi;
    phi += cfg.oracle.lr * g;
  }
  const Vector g = deviation_grad(game, phi, weights, pop, BrSide::kRow);
  require_numeric(g.norm() < cfg.stationarity_tol,
                  "implicit: inner loop did not reach stationarity");
  return phi;
}

// Best response as a single tape node; the backward rule applies the
// regularized stationary-point sensitivities instead of unrolling.
class ImplicitBrOp : public CustomOp {
 public:
  ImplicitBrOp(std::shared_ptr<const GameInstance> game, MetaGradConfig cfg,
               Vector init, std::vector<Var> parents)
      : game_(std::move(game)),
        cfg_(std::move(cfg)),
        init_(std::move(init)),
        parents_(std::move(parents)),
        gctx_(GameGraphContext::make(*game_)) {}

  Vector forward(const std::vector<Vector>& parents) const override {
    std::vector<Vector> members(parents.begin() + 1, parents.end());
    return stationary_br(*game_, parents[0], members, cfg_, init_);
  }

  void vjp(Tape& tape, Var self, Var adjoint,
           std::vector<std::pair<Var, Var>>& contribs) const override {
    const Vector phi = tape.value(self);
    const Vector u = tape.value(adjoint);
    const int dim = static_cast<int>(phi.size());

    Tape local;
    const Var lx = local.leaf(phi);
    const Var lpi = local.leaf(tape.value(parents_[0]));
    std::vector<Var> lmem;
    for (size_t k = 1; k < parents_.size(); ++k)
      lmem.push_back(local.leaf(tape.value(parents_[k])));

    const Var agg = aggregate_graph(local, gctx_, lpi, lx, lmem);
    const Var grad = local.gradient(agg, {lx})[0];

    Matrix hessian(dim, dim);
    for (int j = 0; j < dim; ++j) {
      const Var gj = local.segment(grad, j, 1);
      hessian.col(j) = local.value(local.gradient(gj, {lx})[0]);
    }
    hessian = ((hessian + hessian.transpose()) / 2.0).eval();

    // Ascent problem: regularize as (lambda I - H); positive definite at a
    // strict maximum, and -> infinity kills the sensitivities as lambda
    // grows.
    const Matrix a =
        cfg_.lambda * Matrix::Identity(dim, dim) - hessian;
    const Eigen::JacobiSVD<Matrix> svd(a);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(dim - 1);
    require_numeric(smin > std::max(smax / cfg_.cond_limit, 1e-14),
                    "implicit gradient: (lambda I - H) is near-singular; "
                    "raise lambda");
    const Vector v = a.ldlt().solve(u);

    const Var sens = local.dot(grad, local.constant(v));
    std::vector<Var> targets = {lpi};
    targets.insert(targets.end(), lmem.begin(), lmem.end());
    const std::vector<Var> grads = local.gradient(sens, targets);
    for (size_t k = 0; k < parents_.size(); ++k)
      contribs.push_back(
          {parents_[k], tape.constant(local.value(grads[k]))});
  }

 private:
  std::shared_ptr<const GameInstance> game_;
  MetaGradConfig cfg_;
  Vector init_;
  std::vector<Var> parents_;
  GameGraphContext gctx_;
};

struct ForwardState {
  std::shared_ptr<Tape> tape = std::make_shared<Tape>();
  Var theta = -1;
  std::vector<Vector> plain_members;
  Matrix mplain;
  std::vector<Var> members;              // valid once taped
  std::vector<std::vector<Var>> mvars;   // valid once taped
  bool taped = false;
};

void wrap_constants(ForwardState& st) {
  if (st.taped) return;
  Tape& t = *st.tape;
  st.members.clear();
  for (const Vector& m : st.plain_members) st.members.push_back(t.constant(m));
  const int n = static_cast<int>(st.plain_members.size());
  st.mvars.assign(n, std::vector<Var>(n, -1));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      st.mvars[i][j] = t.constant_scalar(st.mplain(i, j));
  st.taped = true;
}

void append_member_plain(ForwardState& st, const GameInstance& game,
                         const Vector& member) {
  const int n = static_cast<int>(st.plain_members.size());
  Matrix next(n + 1, n + 1);
  next.topLeftCorner(n, n) = st.mplain;
  for (int i = 0; i < n; ++i) {
    next(i, n) = payoff(game, st.plain_members[i], member);
    next(n, i) = payoff(game, member, st.plain_members[i]);
  }
  next(n, n) = payoff(game, member, member);
  st.plain_members.push_back(member);
  st.mplain = next;
}

void append_member_taped(ForwardState& st, const GameInstance& game,
                         const GameGraphContext& gctx, Var member) {
  Tape& t = *st.tape;
  const int n = static_cast<int>(st.members.size());
  for (int i = 0; i < n; ++i)
    st.mvars[i].push_back(payoff_graph(t, gctx, st.members[i], member));
  std::vector<Var> row;
  for (int i = 0; i < n; ++i)
    row.push_back(payoff_graph(t, gctx, member, st.members[i]));
  row.push_back(payoff_graph(t, gctx, member, member));
  st.mvars.push_back(std::move(row));
  st.members.push_back(member);

  // Mirror the values for any later plain consumers.
  const int m = n + 1;
  Matrix next(m, m);
  next.topLeftCorner(n, n) = st.mplain;
  for (int i = 0; i < n; ++i) {
    next(i, n) = t.scalar_value(st.mvars[i][n]);
    next(n, i) = t.scalar_value(st.mvars[n][i]);
  }
  next(n, n) = t.scalar_value(st.mvars[n][n]);
  st.mplain = next;
  st.plain_members.push_back(t.value(member));
}

UnrolledRun forward_impl(const MetaSolverParams& params,
                         const GameInstance& game, const MetaGradConfig& cfg,
                         uint64_t seed,
                         const std::vector<Vector>* frozen_pool) {
  validate(cfg);
  require(params.arch == SolverArch::kMlp,
          "unrolled forward: only the Mlp solver is recorded on the tape");
  require(differentiable(game.kind) && game.symmetric,
          "unrolled forward: needs a differentiable single-population game");
  const MlpLayout layout = MlpLayout::make(params.hidden);
  require(layout.total == params.flat.size(),
          "unrolled forward: parameter size mismatch");

  const GameGraphContext gctx = GameGraphContext::make(game);
  ForwardState st;
  Tape& t = *st.tape;
  st.theta = t.leaf(params.flat);

  const bool implicit = cfg.mode == MetaGradMode::kImplicit;
  auto game_ptr = std::make_shared<const GameInstance>(game);

  auto plain_pi = [&]() { return solver_forward(params, st.mplain); };
  auto taped_pi = [&]() {
    return mlp_solver_graph(t, layout, st.theta, st.mvars);
  };
  auto plain_br = [&](const Vector& weights, const Vector& init) {
    if (implicit)
      return stationary_br(game, weights, st.plain_members, cfg, init);
    Population pop;
    pop.members = st.plain_members;
    Vector phi = init;
    for (int n = 0; n < cfg.oracle.steps; ++n)
      phi += cfg.oracle.lr * deviation_grad(game, phi, weights, pop, BrSide::kRow);
    return phi;
  };
  auto taped_br = [&](Var pi, const Vector& init) {
    if (!implicit) return taped_gd_br(t, gctx, pi, st.members, cfg.oracle, init);
    const Vector weights = t.value(pi);
    const Vector phi = stationary_br(game, weights, st.plain_members, cfg, init);
    std::vector<Var> parents = {pi};
    parents.insert(parents.end(), st.members.begin(), st.members.end());
    auto op = std::make_shared<ImplicitBrOp>(game_ptr, cfg, init, parents);
    return t.custom(std::move(op), std::move(parents), phi);
  };

  if (frozen_pool != nullptr) {
    for (const Vector& m : *frozen_pool) append_member_plain(st, game, m);
  } else {
    Rng rng(init_seed(seed));
    append_member_plain(st, game, sample_policy(game, rng));
    const int first_taped =
        cfg.window == 0 ? cfg.iterations + 1 : cfg.iterations - cfg.window + 1;
    for (int iter = 1; iter <= cfg.iterations; ++iter) {
      Rng br_rng(br_seed(seed, iter));
      const Vector init = cfg.oracle.init == OracleInit::kZeros
                              ? Vector::Zero(policy_dim(game))
                              : sample_policy(game, br_rng);
      if (iter < first_taped) {
        append_member_plain(st, game, plain_br(plain_pi(), init));
      } else {
        wrap_constants(st);
        append_member_taped(st, game, gctx, taped_br(taped_pi(), init));
      }
    }
  }

  wrap_constants(st);
  const Var pi_final = taped_pi();
  Rng final_rng(final_seed(seed));
  const Vector final_init = cfg.oracle.init == OracleInit::kZeros
                                ? Vector::Zero(policy_dim(game))
                                : sample_policy(game, final_rng);
  const Var br_final = taped_br(pi_final, final_init);
  const Var objective = aggregate_graph(t, gctx, pi_final, br_final, st.members);
  require_numeric(t.value(objective).allFinite(),
                  "unrolled forward: non-finite objective");

  UnrolledRun run;
  run.tape = st.tape;
  run.theta = st.theta;
  run.objective = objective;
  run.value = t.scalar_value(objective);
  return run;
}

}  // namespace

UnrolledRun unrolled_psro_forward(const MetaSolverParams& params,
                                  const GameInstance& game,
                                  const MetaGradConfig& cfg, uint64_t seed) {
  return forward_impl(params, game, cfg, seed, nullptr);
}

double unrolled_objective(const MetaSolverParams& params,
                          const GameInstance& game, const MetaGradConfig& cfg,
                          uint64_t seed) {
  return forward_impl(params, game, cfg, seed, nullptr).value;
}

Vector direct_meta_gradient(const UnrolledRun& run) {
  const std::vector<Var> grads =
      run.tape->gradient(run.objective, {run.theta});
  return run.tape->value(grads[0]);
}

Vector direct_meta_gradient(const MetaSolverParams& params,
                            const GameInstance& game, const MetaGradConfig& cfg,
                            uint64_t seed) {
  require(cfg.mode == MetaGradMode::kDirect,
          "direct_meta_gradient: config selects implicit mode");
  const UnrolledRun run = unrolled_psro_forward(params, game, cfg, seed);
  return direct_meta_gradient(run);
}

Vector implicit_meta_gradient(const MetaSolverParams& params,
                              const GameInstance& game,
                              const MetaGradConfig& cfg, uint64_t seed) {
  MetaGradConfig implicit_cfg = cfg;
  implicit_cfg.mode = MetaGradMode::kImplicit;
  const UnrolledRun run =
      forward_impl(params, game, implicit_cfg, seed, nullptr);
  return direct_meta_gradient(run);
}

std::vector<Vector> unrolled_population(const MetaSolverParams& params,
                                        const GameInstance& game,
                                        const MetaGradConfig& cfg,
                                        uint64_t seed) {
  validate(cfg);
  // Same plain pool-building phase as a window-0 forward pass.
  std::vector<Vector> members;
  Rng rng(init_seed(seed));
  members.push_back(sample_policy(game, rng));
  Population pop;
  pop.members = members;
  Matrix m(1, 1);
  m(0, 0) = payoff(game, members[0], members[0]);
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const MetaDistribution pi = solver_forward(params, m);
    Rng br_rng(br_seed(seed, iter));
    Vector phi = cfg.oracle.init == OracleInit::kZeros
                     ? Vector::Zero(policy_dim(game))
                     : sample_policy(game, br_rng);
    if (cfg.mode == MetaGradMode::kImplicit) {
      phi = stationary_br(game, pi, pop.members, cfg, phi);
    } else {
      for (int n = 0; n < cfg.oracle.steps; ++n)
        phi += cfg.oracle.lr * deviation_grad(game, phi, pi, pop, BrSide::kRow);
    }
    pop = extend_population(pop, phi);
    m = extend_meta_game(game, pop, m);
  }
  return pop.members;
}

double detached_objective(const MetaSolverParams& params,
                          const GameInstance& game, const MetaGradConfig& cfg,
                          const std::vector<Vector>& frozen_pool,
                          uint64_t seed) {
  MetaGradConfig detached_cfg = cfg;
  detached_cfg.window = 0;
  return forward_impl(params, game, detached_cfg, seed, &frozen_pool).value;
}

Vector central_difference(const std::function<double(const Vector&)>& f,
                          const Vector& x, double h) {
  require(h > 0.0, "central_difference: h must be positive");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    require_numeric(std::isfinite(up) && std::isfinite(down),
                    "central_difference: non-finite objective");
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

Vector finite_diff_gradient(const MetaSolverParams& params,
                            const GameInstance& game, const MetaGradConfig& cfg,
                            uint64_t seed, double h) {
  MetaSolverParams probe = params;
  return central_difference(
      [&](const Vector& flat) {
        probe.flat = flat;
        return unrolled_objective(probe, game, cfg, seed);
      },
      params.flat, h);
}

// --- gradcheck ---------------------------------------------------------------

namespace {

double relative_l2_error(const Vector& a, const Vector& b) {
  const double scale = std::max(b.norm(), 1e-12);
  return (a - b).norm() / scale;
}

double cosine(const Vector& a, const Vector& b) {
  return a.dot(b) / std::max(a.norm() * b.norm(), 1e-300);
}

GameConfig tiny_game_config(GameKind kind) {
  GameConfig gc;
  gc.kind = kind;
  gc.gos_dim = 4;
  gc.lotto_customers = 3;
  gc.lotto_servers = 2;
  return gc;
}

// A generic parameter point: the raw init leaves every bias exactly at a
// relu kink (where central differences see the average of both one-sided
// slopes), so the agreement checks evaluate at a seeded perturbation.
MetaSolverParams generic_params(SolverArch arch, int hidden, uint64_t seed) {
  MetaSolverParams params = init_params(arch, hidden, seed);
  Rng rng(derive_seed(seed, 0x6e1e));
  for (Eigen::Index i = 0; i < params.flat.size(); ++i)
    params.flat(i) += 0.25 * rng.normal();
  return params;
}

MetaGradConfig tiny_metagrad_config() {
  MetaGradConfig cfg;
  cfg.iterations = 3;
  cfg.window = 3;
  cfg.oracle.method = OracleMethod::kGradDescent;
  cfg.oracle.steps = 1;
  cfg.oracle.lr = 1.0;
  return cfg;
}

}  // namespace

bool run_gradcheck(std::ostream& log) {
  bool ok = true;

  {
    // Direct vs central differences, Mlp hidden 8, GoS dim 4.
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const GameInstance game =
          sample_game(tiny_game_config(GameKind::kGos), 9000 + i);
      const MetaSolverParams params =
          generic_params(SolverArch::kMlp, 8, 100 + i);
      const MetaGradConfig cfg = tiny_metagrad_config();
      const Vector direct = direct_meta_gradient(params, game, cfg, 40 + i);
      const Vector fd = finite_diff_gradient(params, game, cfg, 40 + i, 1e-4);
      worst = std::max(worst, relative_l2_error(direct, fd));
    }
    const bool pass = worst < 1e-3;
    ok &= pass;
    log << (pass ? "PASS" : "FAIL")
        << " direct versus finite differences on gos (max rel err " << worst
        << ")\n";
  }

  {
    // The same agreement across the remaining differentiable kinds.
    double worst = 0.0;
    for (GameKind kind : {GameKind::kLotto, GameKind::kRps2d}) {
      for (int i = 0; i < 10; ++i) {
        const GameInstance game = sample_game(tiny_game_config(kind), 7000 + i);
        const MetaSolverParams params =
            generic_params(SolverArch::kMlp, 8, 200 + i);
        MetaGradConfig cfg = tiny_metagrad_config();
        cfg.oracle.lr = kind == GameKind::kRps2d ? 0.5 : 1.0;
        const Vector direct = direct_meta_gradient(params, game, cfg, 50 + i);
        const Vector fd = finite_diff_gradient(params, game, cfg, 50 + i, 1e-4);
        worst = std::max(worst, relative_l2_error(direct, fd));
      }
    }
    const bool pass = worst < 1e-3;
    ok &= pass;
    log << (pass ? "PASS" : "FAIL")
        << " direct versus finite differences on lotto/rps2d (max rel err "
        << worst << ")\n";
  }

  {
    // Implicit vs fully unrolled on converged-inner 2D-RPS instances.
    double worst = 1.0;
    for (int i = 0; i < 10; ++i) {
      const GameInstance game =
          sample_game(tiny_game_config(GameKind::kRps2d), 8100 + i);
      const MetaSolverParams params =
          generic_params(SolverArch::kMlp, 8, 300 + i);
      MetaGradConfig cfg = tiny_metagrad_config();
      cfg.iterations = 2;
      cfg.window = 2;
      cfg.oracle.lr = 0.5;
      cfg.oracle.steps = 400;
      cfg.stationarity_tol = 1e-6;
      cfg.max_inner_steps = 4000;
      const Vector direct = direct_meta_gradient(params, game, cfg, 60 + i);
      const Vector implicit = implicit_meta_gradient(params, game, cfg, 60 + i);
      worst = std::min(worst, cosine(implicit, direct));
    }
    const bool pass = worst >= 0.99;
    ok &= pass;
    log << (pass ? "PASS" : "FAIL")
        << " implicit versus unrolled cosine on rps2d (min cosine " << worst
        << ")\n";
  }

  return ok;
}

}  // namespace metapop
