#pragma once

#include <functional>
#include <string>

#include "metapop/population.hpp"

namespace metapop {

enum class OracleMethod {
  kGradDescent,
  kReinforce,
  kKuhnExact,
  kKuhnApproxV1,
  kKuhnApproxV2,
};

std::string oracle_name(OracleMethod method);
OracleMethod oracle_from_name(const std::string& name);

enum class OracleInit { kRandom, kZeros };

struct OracleConfig {
  OracleMethod method = OracleMethod::kGradDescent;
  OracleInit init = OracleInit::kRandom;
  int steps = 5;
  double lr = 1.0;
  int batch = 32;  // trajectories per REINFORCE update and opponent
};

void validate(const OracleConfig& cfg);

// Which player the deviation is computed for in a two-population game; in
// the single-population case everything is kRow.
enum class BrSide { kRow, kCol };

// Payoff of `policy` deviating against the aggregated opponent.
double deviation_payoff(const GameInstance& game, const Vector& policy,
                        const MetaDistribution& weights, const Population& opp,
                        BrSide side);

Vector deviation_grad(const GameInstance& game, const Vector& policy,
                      const MetaDistribution& weights, const Population& opp,
                      BrSide side);

Vector gd_best_response(const GameInstance& game,
                        const MetaDistribution& weights, const Population& opp,
                        const OracleConfig& cfg, Rng& rng,
                        BrSide side = BrSide::kRow);

Vector reinforce_best_response(const GameInstance& game,
                               const MetaDistribution& weights,
                               const Population& opp, const OracleConfig& cfg,
                               Rng& rng, BrSide side = BrSide::kRow);

// Single-step REINFORCE gradient estimate (with the batch-mean baseline) of
// the deviation payoff, exposed for calibration tests.
Vector reinforce_gradient(const GameInstance& game, const Vector& policy,
                          const MetaDistribution& weights,
                          const Population& opp, int batch, Rng& rng,
                          BrSide side, Vector* standard_error = nullptr);

// Tabular Kuhn best responses per the configured flavour. The noise source
// feeds the V2 perturbations, two draws per infostate.
Vector kuhn_best_response(const GameInstance& game,
                          const MetaDistribution& weights,
                          const Population& pop, const OracleConfig& cfg,
                          Rng& rng);

Vector kuhn_best_response_from_values(const Matrix& values, OracleMethod method,
                                      const std::function<double()>& noise);

// Dispatch on cfg.method.
Vector best_response(const GameInstance& game, const MetaDistribution& weights,
                     const Population& opp, const OracleConfig& cfg, Rng& rng,
                     BrSide side = BrSide::kRow);

struct ExploitConfig {
  OracleConfig oracle;
  // Normal-form kinds only: measure against the best pure strategy instead
  // of running the oracle.
  bool exact_nfg = false;
};

// Best achievable deviation payoff against <weights, pop>.
double exploitability(const GameInstance& game, const MetaDistribution& weights,
                      const Population& pop, const ExploitConfig& cfg,
                      Rng& rng);

// Two-population form: the sum of both players' deviation gains.
double exploitability_two(const GameInstance& game,
                          const MetaDistribution& row_weights,
                          const Population& row_pop,
                          const MetaDistribution& col_weights,
                          const Population& col_pop, const ExploitConfig& cfg,
                          Rng& rng);

// Aggregated mixed strategy sum_k w_k softmax(member_k) for the NFG kinds.
Vector nfg_aggregate_mixture(const GameInstance& game,
                             const MetaDistribution& weights,
                             const Population& pop);

}  // namespace metapop
