#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>

#include "metapop/graphs.hpp"
#include "metapop/oracles.hpp"

namespace metapop {

enum class MetaGradMode { kDirect, kImplicit };

struct MetaGradConfig {
  int iterations = 3;  // T
  int window = 3;      // trailing iterations kept on the tape; 0 detaches all
  OracleConfig oracle;
  MetaGradMode mode = MetaGradMode::kDirect;
  double lambda = 1e-3;             // implicit Hessian regularizer
  double stationarity_tol = 1e-3;   // implicit inner-loop gradient norm break
  int max_inner_steps = 2000;       // implicit inner-loop step cap
  double cond_limit = 1e12;         // condition ceiling for (lambda I - H)
};

void validate(const MetaGradConfig& cfg);

// A recorded PSRO run: the exploitability objective with everything inside
// the window differentiable with respect to theta.
struct UnrolledRun {
  std::shared_ptr<Tape> tape;
  Var objective = -1;
  Var theta = -1;
  double value = 0.0;
};

UnrolledRun unrolled_psro_forward(const MetaSolverParams& params,
                                  const GameInstance& game,
                                  const MetaGradConfig& cfg, uint64_t seed);

double unrolled_objective(const MetaSolverParams& params,
                          const GameInstance& game, const MetaGradConfig& cfg,
                          uint64_t seed);

Vector direct_meta_gradient(const UnrolledRun& run);
Vector direct_meta_gradient(const MetaSolverParams& params,
                            const GameInstance& game, const MetaGradConfig& cfg,
                            uint64_t seed);

Vector implicit_meta_gradient(const MetaSolverParams& params,
                              const GameInstance& game,
                              const MetaGradConfig& cfg, uint64_t seed);

// Population values produced by the plain forward pass of the same seeded
// run, without any tape.
std::vector<Vector> unrolled_population(const MetaSolverParams& params,
                                        const GameInstance& game,
                                        const MetaGradConfig& cfg,
                                        uint64_t seed);

// Final-stage objective (pi_T, final best response, payoff) over a frozen
// population: the function the window-0 gradient differentiates.
double detached_objective(const MetaSolverParams& params,
                          const GameInstance& game, const MetaGradConfig& cfg,
                          const std::vector<Vector>& frozen_pool,
                          uint64_t seed);

// Coordinate-wise central differences of an arbitrary objective.
Vector central_difference(const std::function<double(const Vector&)>& f,
                          const Vector& x, double h);

Vector finite_diff_gradient(const MetaSolverParams& params,
                            const GameInstance& game, const MetaGradConfig& cfg,
                            uint64_t seed, double h);

// Validation suite behind the `gradcheck` subcommand; prints one line per
// block and returns overall success.
bool run_gradcheck(std::ostream& log);

}  // namespace metapop
