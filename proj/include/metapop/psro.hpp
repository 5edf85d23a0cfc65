#pragma once

#include <functional>

#include "metapop/oracles.hpp"
#include "metapop/solvers.hpp"

namespace metapop {

// Maps the current meta-game to the meta-distribution the next best response
// trains against; either a learned solver or one of the baselines.
using MetaSolverFn = std::function<MetaDistribution(const PayoffMatrix&)>;

MetaSolverFn make_solver_fn(const MetaSolverParams& params);
MetaSolverFn make_solver_fn(const SolverSpec& spec);

struct PsroConfig {
  int iterations = 10;  // population expansions
  OracleConfig br;      // population-building oracle
  ExploitConfig exploit;
};

struct PsroOutcome {
  // Exploitability of <pi_t, Phi_t> for t = 0..iterations when recorded,
  // otherwise just the final value.
  std::vector<double> curve;
  double final_exploitability = 0.0;
  Population pop;       // single-population games
  Population row_pop;   // two-population games
  Population col_pop;
};

// One full population-expansion run; pure function of (game, solver, cfg,
// seed). Handles both the single- and the two-population case.
PsroOutcome run_psro(const GameInstance& game, const MetaSolverFn& solver,
                     const PsroConfig& cfg, uint64_t seed,
                     bool record_curve = false);

}  // namespace metapop
