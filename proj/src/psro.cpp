#include "metapop/psro.hpp"

#include "metapop/check.hpp"

namespace metapop {

MetaSolverFn make_solver_fn(const MetaSolverParams& params) {
  return [params](const PayoffMatrix& m) { return solver_forward(params, m); };
}

MetaSolverFn make_solver_fn(const SolverSpec& spec) {
  return [spec](const PayoffMatrix& m) {
    return baseline_distribution(spec, m);
  };
}

namespace {

PsroOutcome run_single(const GameInstance& game, const MetaSolverFn& solver,
                       const PsroConfig& cfg, uint64_t seed,
                       bool record_curve) {
  PsroOutcome out;
  Rng init_rng(derive_seed(seed, 1));
  out.pop.members.push_back(sample_policy(game, init_rng));
  PayoffMatrix m =
      PayoffMatrix::Constant(1, 1, payoff(game, out.pop.members[0], out.pop.members[0]));

  auto measure = [&](int t) {
    const MetaDistribution pi = solver(m);
    Rng rng(derive_seed(seed, 3, t));
    return exploitability(game, pi, out.pop, cfg.exploit, rng);
  };

  if (record_curve) out.curve.push_back(measure(0));
  for (int t = 1; t <= cfg.iterations; ++t) {
    const MetaDistribution pi = solver(m);
    Rng br_rng(derive_seed(seed, 2, t));
    const Vector br = best_response(game, pi, out.pop, cfg.br, br_rng);
    out.pop = extend_population(out.pop, br);
    m = extend_meta_game(game, out.pop, m);
    if (record_curve) out.curve.push_back(measure(t));
  }
  out.final_exploitability =
      record_curve ? out.curve.back() : measure(cfg.iterations);
  if (!record_curve) out.curve.push_back(out.final_exploitability);
  return out;
}

PsroOutcome run_two(const GameInstance& game, const MetaSolverFn& solver,
                    const PsroConfig& cfg, uint64_t seed, bool record_curve) {
  PsroOutcome out;
  out.row_pop.side = Side::kRow;
  out.col_pop.side = Side::kCol;
  Rng init_row(derive_seed(seed, 1, 0));
  Rng init_col(derive_seed(seed, 1, 1));
  out.row_pop.members.push_back(sample_policy(game, init_row));
  out.col_pop.members.push_back(sample_policy(game, init_col));
  PayoffMatrix m = evaluate_meta_game(game, out.row_pop, out.col_pop);

  auto measure = [&](int t) {
    const MetaDistribution pi_row = solver(m);
    const MetaDistribution pi_col = solver(PayoffMatrix(-m.transpose()));
    Rng rng(derive_seed(seed, 3, t));
    return exploitability_two(game, pi_row, out.row_pop, pi_col, out.col_pop,
                              cfg.exploit, rng);
  };

  if (record_curve) out.curve.push_back(measure(0));
  for (int t = 1; t <= cfg.iterations; ++t) {
    const MetaDistribution pi_row = solver(m);
    const MetaDistribution pi_col = solver(PayoffMatrix(-m.transpose()));
    Rng row_rng(derive_seed(seed, 2, t, 0));
    Rng col_rng(derive_seed(seed, 2, t, 1));
    const Vector row_br =
        best_response(game, pi_col, out.col_pop, cfg.br, row_rng, BrSide::kRow);
    const Vector col_br =
        best_response(game, pi_row, out.row_pop, cfg.br, col_rng, BrSide::kCol);
    out.row_pop = extend_population(out.row_pop, row_br);
    out.col_pop = extend_population(out.col_pop, col_br);
    m = extend_meta_game(game, out.row_pop, out.col_pop, m);
    if (record_curve) out.curve.push_back(measure(t));
  }
  out.final_exploitability =
      record_curve ? out.curve.back() : measure(cfg.iterations);
  if (!record_curve) out.curve.push_back(out.final_exploitability);
  return out;
}

}  // namespace

PsroOutcome run_psro(const GameInstance& game, const MetaSolverFn& solver,
                     const PsroConfig& cfg, uint64_t seed, bool record_curve) {
  require(cfg.iterations >= 1, "run_psro: iterations must be >= 1");
  return game.symmetric ? run_single(game, solver, cfg, seed, record_curve)
                        : run_two(game, solver, cfg, seed, record_curve);
}

}  // namespace metapop
