#include <doctest.h>

#include <cmath>

#include "metapop/game.hpp"
#include "metapop/metagrad.hpp"

using namespace metapop;

namespace {

GameConfig small_config(GameKind kind) {
  GameConfig cfg;
  cfg.kind = kind;
  cfg.gos_dim = 5;
  cfg.lotto_customers = 4;
  cfg.lotto_servers = 3;
  return cfg;
}

const GameKind kSymmetricKinds[] = {GameKind::kGos, GameKind::kLotto,
                                    GameKind::kRps2d, GameKind::kKuhn};

// The canonical Kuhn equilibrium family (alpha = 1/6), both seats stacked in
// the documented infostate order.
Vector kuhn_equilibrium() {
  Vector v(12);
  const double alpha = 1.0 / 6.0;
  v << alpha, 0.0,             // J: open bet, call after check-bet
      0.0, alpha + 1.0 / 3.0,  // Q
      3.0 * alpha, 1.0,        // K
      0.0, 1.0 / 3.0,          // J seat 2: call facing bet, bet after check
      1.0 / 3.0, 0.0,          // Q
      1.0, 1.0;                // K
  return v;
}

}  // namespace

TEST_CASE("sampling is bit-reproducible and antisymmetric by construction") {
  for (GameKind kind : {GameKind::kGos, GameKind::kLotto, GameKind::kRps2d,
                        GameKind::kImp}) {
    const GameConfig cfg = small_config(kind);
    const GameInstance a = sample_game(cfg, 1234);
    const GameInstance b = sample_game(cfg, 1234);
    const GameInstance c = sample_game(cfg, 1235);
    Rng ra(7), rb(7), rc(9);
    CHECK(sample_policy(a, ra) == sample_policy(b, rb));
    CHECK(sample_policy(a, ra) != sample_policy(c, rc));
  }
  const GameInstance g = sample_game(small_config(GameKind::kGos), 99);
  CHECK((g.gos().g + g.gos().g.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const GameInstance h = sample_game(small_config(GameKind::kGos), 99);
  CHECK(g.gos().g == h.gos().g);
}

TEST_CASE("gos sampling honours the configured scale and bounds") {
  GameConfig cfg = small_config(GameKind::kGos);
  cfg.gos_dim = 200;
  const GameInstance g = sample_game(cfg, 5);
  CHECK(g.gos().g.rows() == 200);
  CHECK(g.gos().g.allFinite());

  const GameInstance imp = sample_game(small_config(GameKind::kImp), 17);
  for (int s = 0; s < 32; ++s) {
    const GameInstance gi = sample_game(small_config(GameKind::kImp), s);
    CHECK(gi.imp().a >= 0.5);
    CHECK(gi.imp().a <= 2.0);
    CHECK(gi.imp().b >= 0.5);
    CHECK(gi.imp().b <= 2.0);
  }
  CHECK(imp.imp().horizon == 50);
  CHECK_FALSE(imp.symmetric);

  GameConfig bad;
  bad.kind = GameKind::kGos;
  bad.gos_dim = 0;
  CHECK_THROWS_AS(sample_game(bad, 1), std::invalid_argument);
}

TEST_CASE("payoffs are antisymmetric for every symmetric kind") {
  for (GameKind kind : kSymmetricKinds) {
    const GameInstance game = sample_game(small_config(kind), 42);
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
      const Vector x = sample_policy(game, rng);
      const Vector y = sample_policy(game, rng);
      CHECK(std::abs(payoff(game, x, y) + payoff(game, y, x)) < 1e-9);
      CHECK(std::abs(payoff(game, x, x)) < 1e-9);
    }
  }
}

TEST_CASE("analytic payoff gradients match central finite differences") {
  for (GameKind kind : {GameKind::kGos, GameKind::kLotto, GameKind::kRps2d,
                        GameKind::kImp}) {
    const GameInstance game = sample_game(small_config(kind), 314);
    Rng rng(315);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const Vector x = sample_policy(game, rng);
      const Vector y = sample_policy(game, rng);
      const Vector analytic = payoff_grad_row(game, x, y);
      const Vector fd = central_difference(
          [&](const Vector& probe) { return payoff(game, probe, y); }, x, 1e-5);
      worst = std::max(worst,
                       (analytic - fd).norm() / std::max(fd.norm(), 1e-10));
    }
    INFO("kind ", kind_name(kind));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("gradients are rejected for kuhn") {
  const GameInstance game = sample_game(small_config(GameKind::kKuhn), 0);
  Rng rng(1);
  const Vector x = sample_policy(game, rng);
  const Vector y = sample_policy(game, rng);
  CHECK_THROWS_AS(payoff_grad_row(game, x, y), std::invalid_argument);
}

TEST_CASE("rps2d gradient at a mode center with col == row") {
  const GameInstance game = sample_game(small_config(GameKind::kRps2d), 77);
  // With equal arguments the cyclic term contributes nothing to the value;
  // the analytic gradient there must still match finite differences.
  const Vector x = game.rps2d().centers.row(2).transpose();
  const Vector g = payoff_grad_row(game, x, x);
  const Vector fd = central_difference(
      [&](const Vector& probe) { return payoff(game, probe, x); }, x, 1e-6);
  CHECK((g - fd).norm() < 1e-6);
}

TEST_CASE("imp exact payoff is zero for the uniform matching-pennies profile") {
  GameInstance game = sample_game(small_config(GameKind::kImp), 3);
  game.payload = ImpPayload{1.0, 1.0, 50};
  const Vector uniform = Vector::Zero(5);  // sigmoid(0) = 1/2 everywhere
  CHECK(payoff(game, uniform, uniform) == 0.0);
}

TEST_CASE("imp rollouts: length, determinism limit, monte carlo consistency") {
  GameInstance game = sample_game(small_config(GameKind::kImp), 8);
  game.payload = ImpPayload{1.0, 1.0, 50};
  Rng rng(4);

  const Vector p1 = sample_policy(game, rng);
  const Vector p2 = sample_policy(game, rng);
  CHECK(imp_rollout(game, p1, p2, rng).size() == 50);

  // Saturated logits make both policies deterministic: the return has zero
  // variance and equals the exact expected payoff.
  Vector d1(5), d2(5);
  d1 << 50, -50, 50, -50, 50;
  d2 << -50, 50, 50, -50, -50;
  const double exact = payoff(game, d1, d2);
  for (int rep = 0; rep < 20; ++rep) {
    const double ret = imp_return(imp_rollout(game, d1, d2, rng));
    CHECK(ret == doctest::Approx(exact).epsilon(1e-12));
  }

  // 1e5 rollouts of the uniform profile stay within 3 standard errors of 0.
  const Vector uniform = Vector::Zero(5);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double ret = imp_return(imp_rollout(game, uniform, uniform, rng));
    sum += ret;
    sq += ret * ret;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 0.0) < 3.0 * se);
}

TEST_CASE("imp exact payoff matches monte carlo on a random instance") {
  const GameInstance game = sample_game(small_config(GameKind::kImp), 21);
  Rng rng(22);
  const Vector p1 = sample_policy(game, rng);
  const Vector p2 = sample_policy(game, rng);
  const double exact = payoff(game, p1, p2);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double ret = imp_return(imp_rollout(game, p1, p2, rng));
    sum += ret;
    sq += ret * ret;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("kuhn self-play is exactly zero; the equilibrium is unexploitable") {
  const GameInstance game = sample_game(small_config(GameKind::kKuhn), 0);
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = sample_policy(game, rng);
    CHECK(payoff(game, x, x) == 0.0);
  }

  const Vector ne = kuhn_equilibrium();
  const Matrix q = kuhn_infostate_action_values(game, Vector::Ones(1), {ne});
  // The best-response value is the sum of the per-root maxima; against the
  // equilibrium the total deviation gain vanishes.
  double seat1 = 0.0, seat2 = 0.0;
  for (int card = 0; card < 3; ++card) {
    seat1 += std::max(q(kuhn_infostate_index(1, card, false), 0),
                      q(kuhn_infostate_index(1, card, false), 1));
    seat2 += std::max(q(kuhn_infostate_index(2, card, true), 0),
                      q(kuhn_infostate_index(2, card, true), 1));
    seat2 += std::max(q(kuhn_infostate_index(2, card, false), 0),
                      q(kuhn_infostate_index(2, card, false), 1));
  }
  CHECK(std::abs(0.5 * (seat1 + seat2)) < 1e-9);
  // Seat 1 best response against the equilibrium recovers the known first
  // mover value.
  CHECK(seat1 == doctest::Approx(-1.0 / 18.0).epsilon(1e-9));
}

TEST_CASE("kuhn infostate values are linear in the opponent mixture") {
  const GameInstance game = sample_game(small_config(GameKind::kKuhn), 0);
  Rng rng(6);
  const Vector a = sample_policy(game, rng);
  const Vector b = sample_policy(game, rng);
  const std::vector<Vector> members = {a, b};

  Vector mix(2);
  mix << 0.3, 0.7;
  const Matrix qa = kuhn_infostate_action_values(game, Vector::Ones(1), {a});
  const Matrix qb = kuhn_infostate_action_values(game, Vector::Ones(1), {b});
  const Matrix qm = kuhn_infostate_action_values(game, mix, members);
  // Exact at every infostate without an own continuation; the three seat-1
  // opening pass-values fold in a greedy continuation and are only piecewise
  // linear, so they are excluded here.
  for (int s = 0; s < kKuhnInfostates; ++s) {
    const bool has_continuation = s < 6 && s % 2 == 0;
    for (int action = 0; action < 2; ++action) {
      if (has_continuation && action == 0) continue;
      CHECK(qm(s, action) ==
            doctest::Approx(0.3 * qa(s, action) + 0.7 * qb(s, action))
                .epsilon(1e-12));
    }
  }

  Vector onehot(2);
  onehot << 1.0, 0.0;
  const Matrix q1 = kuhn_infostate_action_values(game, onehot, members);
  CHECK((q1 - qa).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("external matrices are antisymmetrized with reported deviation") {
  Matrix a(3, 3);
  a << 0, 1, -0.5, -1, 0, 2, 0.5, -2, 0;
  const GameInstance exact = make_external_matrix(a);
  CHECK(exact.external().antisym_deviation == 0.0);
  CHECK(exact.external().g == a);

  Matrix skew = a;
  skew(0, 1) += 0.3;
  const GameInstance fixed = make_external_matrix(skew);
  CHECK(fixed.external().antisym_deviation == doctest::Approx(0.15));
  CHECK((fixed.external().g + fixed.external().g.transpose())
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Matrix bad(2, 3);
  bad.setZero();
  CHECK_THROWS_AS(make_external_matrix(bad), std::invalid_argument);
}

TEST_CASE("policy and payoff argument validation") {
  const GameInstance game = sample_game(small_config(GameKind::kGos), 1);
  Rng rng(2);
  const Vector x = sample_policy(game, rng);
  Vector bad = x;
  bad(0) = std::nan("");
  CHECK_THROWS_AS(payoff(game, bad, x), std::invalid_argument);
  CHECK_THROWS_AS(payoff(game, x.head(3).eval(), x), std::invalid_argument);
}
