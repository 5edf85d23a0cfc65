#pragma once

#include <vector>

#include "metapop/game.hpp"

namespace metapop {

enum class Side { kSingle, kRow, kCol };

// Ordered, append-only pool of fixed policies.
struct Population {
  std::vector<Vector> members;
  Side side = Side::kSingle;

  int size() const { return static_cast<int>(members.size()); }
};

using PayoffMatrix = Matrix;
using MetaDistribution = Vector;

Population extend_population(const Population& pop, const Vector& policy);

// Full |pop| x |pop| meta-game for a single population.
PayoffMatrix evaluate_meta_game(const GameInstance& game,
                                const Population& pop);

// Two-population meta-game, entries from the row player's perspective.
PayoffMatrix evaluate_meta_game(const GameInstance& game,
                                const Population& row, const Population& col);

// Extends a previously computed meta-game by the last member of `pop`,
// computing only the new row and column.
PayoffMatrix extend_meta_game(const GameInstance& game, const Population& pop,
                              const PayoffMatrix& previous);

PayoffMatrix extend_meta_game(const GameInstance& game, const Population& row,
                              const Population& col,
                              const PayoffMatrix& previous);

// Payoff of `policy` against the aggregated opponent <weights, pop>.
double aggregate_payoff(const GameInstance& game, const Vector& policy,
                        const MetaDistribution& weights, const Population& pop);

Vector aggregate_payoff_grad(const GameInstance& game, const Vector& policy,
                             const MetaDistribution& weights,
                             const Population& pop);

// Simplex check used by every consumer of a meta-distribution.
void check_distribution(const MetaDistribution& weights, double tol = 1e-6);

}  // namespace metapop
