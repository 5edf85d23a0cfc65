#pragma once

#include <memory>

#include "metapop/solvers.hpp"
#include "metapop/tape.hpp"

namespace metapop {

// Offsets into the flat Mlp parameter vector; matches the canonical layout
// used by init_params and the checkpoint format.
struct MlpLayout {
  int hidden = 0;
  int w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, w4 = 0, b4 = 0;
  int total = 0;

  static MlpLayout make(int hidden);
};

// Shares the game's constant matrices across all payoff nodes of one run.
struct GameGraphContext {
  GameKind kind = GameKind::kGos;
  LottoPayload lotto;
  Rps2dPayload rps2d;
  std::shared_ptr<const Matrix> nfg;  // gos / external payoff matrix

  static GameGraphContext make(const GameInstance& game);
};

// Payoff of the differentiable kinds as a recorded scalar node.
Var payoff_graph(Tape& tape, const GameGraphContext& game, Var row, Var col);

// Mlp meta-solver on the tape: `entries` is the t x t grid of scalar payoff
// nodes, `theta` the flat parameter leaf. Returns the simplex output node.
Var mlp_solver_graph(Tape& tape, const MlpLayout& layout, Var theta,
                     const std::vector<std::vector<Var>>& entries);

}  // namespace metapop
