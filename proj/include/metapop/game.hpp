#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "metapop/rng.hpp"

namespace metapop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class GameKind { kGos, kLotto, kRps2d, kImp, kKuhn, kExternalMatrix };

std::string kind_name(GameKind kind);
GameKind kind_from_name(const std::string& name);

// Games of skill: antisymmetric payoff matrix over pure strategies; policies
// are logit vectors mapped onto the simplex by softmax.
struct GosPayload {
  int dim = 0;
  Matrix g;  // dim x dim, exactly antisymmetric
};

// Differentiable lotto: k servers per player, each with a resource logit and
// a 2D position; customers softly assign to the 2k servers by distance.
struct LottoPayload {
  Matrix customers;  // c x 2
  int servers = 0;   // k
};

// Non-transitive mixture game on the plane: seven Gaussian modes on a ring,
// cyclic mode-interaction matrix, plus a transitive climb-the-density term.
struct Rps2dPayload {
  Matrix centers;  // 7 x 2
  Matrix s;        // 7 x 7 antisymmetric
  double bandwidth = 0.5;
};

// Iterated matching pennies as a memory-1 joint-action MRP. Policies hold 5
// logits: sigmoid gives the head probability at the start state and after
// each of the joint actions HH, HT, TH, TT (row action first).
struct ImpPayload {
  double a = 1.0;
  double b = 1.0;
  int horizon = 50;
};

// Kuhn poker, fixed rules. Policies hold 12 probabilities of the aggressive
// action (bet/call), indexed by kuhn_infostate_index below.
struct KuhnPayload {};

// Square payoff matrix loaded from disk, antisymmetrized; behaves like a
// games-of-skill instance over its indices.
struct ExternalMatrixPayload {
  Matrix g;
  double antisym_deviation = 0.0;  // max |(A + A^T)/2| seen before projection
};

struct GameInstance {
  GameKind kind = GameKind::kGos;
  bool symmetric = true;
  uint64_t seed = 0;
  std::variant<GosPayload, LottoPayload, Rps2dPayload, ImpPayload, KuhnPayload,
               ExternalMatrixPayload>
      payload;

  const GosPayload& gos() const { return std::get<GosPayload>(payload); }
  const LottoPayload& lotto() const { return std::get<LottoPayload>(payload); }
  const Rps2dPayload& rps2d() const { return std::get<Rps2dPayload>(payload); }
  const ImpPayload& imp() const { return std::get<ImpPayload>(payload); }
  const ExternalMatrixPayload& external() const {
    return std::get<ExternalMatrixPayload>(payload);
  }
  // Payoff matrix for the normal-form kinds (GoS / external).
  const Matrix& nfg_matrix() const;
};

// Distribution settings for sample_game.
struct GameConfig {
  GameKind kind = GameKind::kGos;
  int gos_dim = 200;
  double gos_sigma_w = 1.0;
  double gos_sigma_s = 1.0;
  int lotto_customers = 9;
  int lotto_servers = 16;
  double rps2d_bandwidth = 0.5;
  double rps2d_ring_radius = 2.0;
  double rps2d_center_jitter = 0.1;
  int imp_horizon = 50;
};

GameInstance sample_game(const GameConfig& cfg, uint64_t seed);

// Antisymmetrize (a - a^T)/2 and wrap as an ExternalMatrix game; the max
// deviation from antisymmetry of the input is recorded on the payload.
GameInstance make_external_matrix(const Matrix& a);

bool differentiable(GameKind kind);
int policy_dim(const GameInstance& game);

// Random policy for the game kind: N(0,1) logits/coordinates, U(0,1)
// probabilities for Kuhn.
Vector sample_policy(const GameInstance& game, Rng& rng);

// Payoff to the row policy. Antisymmetric in its arguments for every
// symmetric kind.
double payoff(const GameInstance& game, const Vector& row, const Vector& col);

// Exact analytic d payoff / d row. Throws for Kuhn.
Vector payoff_grad_row(const GameInstance& game, const Vector& row,
                       const Vector& col);

// --- IMP ----------------------------------------------------------------

struct ImpStep {
  int state;    // previous joint action 0..3, or -1 at the start
  int action1;  // 0 = heads, 1 = tails
  int action2;
  double reward1;
};

using ImpTrajectory = std::vector<ImpStep>;

ImpTrajectory imp_rollout(const GameInstance& game, const Vector& p1,
                          const Vector& p2, Rng& rng);

double imp_return(const ImpTrajectory& traj);

// --- Kuhn poker -----------------------------------------------------------

inline constexpr int kKuhnInfostates = 12;

// Infostates are ordered lexicographically by (seat, card, betting history):
//   seat 1 (first to act), histories "" then "cb" (checked, facing a bet):
//     0: (J, "")    1: (J, "cb")   2: (Q, "")    3: (Q, "cb")
//     4: (K, "")    5: (K, "cb")
//   seat 2, histories "b" (facing a bet) then "c" (facing a check):
//     6: (J, "b")   7: (J, "c")    8: (Q, "b")   9: (Q, "c")
//    10: (K, "b")  11: (K, "c")
// The stored probability is that of the aggressive action (bet or call).
int kuhn_infostate_index(int seat, int card, bool facing_bet_or_checked);

// Expected value for seat 1 when x plays seat 1 and y plays seat 2, averaged
// over the six deals.
double kuhn_seat_value(const Vector& x, const Vector& y);

// Reach-weighted expected value of each action at each of the 12 infostates
// against the aggregated opponent, from the deviating player's perspective.
// Column 0 is pass (check/fold), column 1 is bet (bet/call). Values at the
// seat-1 opening infostates assume greedy continuation at the corresponding
// facing-a-bet infostate.
Matrix kuhn_infostate_action_values(const GameInstance& game,
                                    const Vector& weights,
                                    const std::vector<Vector>& members);

}  // namespace metapop
