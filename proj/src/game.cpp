#include "metapop/game.hpp"

#include <cmath>

#include "metapop/check.hpp"

namespace metapop {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp();
  return e / e.sum();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_policy(const GameInstance& game, const Vector& v, const char* who) {
  require(v.size() == policy_dim(game),
          std::string(who) + ": policy length does not match game kind");
  require(v.allFinite(), std::string(who) + ": non-finite policy parameters");
}

}  // namespace

std::string kind_name(GameKind kind) {
  switch (kind) {
    case GameKind::kGos: return "gos";
    case GameKind::kLotto: return "lotto";
    case GameKind::kRps2d: return "rps2d";
    case GameKind::kImp: return "imp";
    case GameKind::kKuhn: return "kuhn";
    case GameKind::kExternalMatrix: return "external_matrix";
  }
  throw std::invalid_argument("unknown game kind");
}

GameKind kind_from_name(const std::string& name) {
  if (name == "gos") return GameKind::kGos;
  if (name == "lotto") return GameKind::kLotto;
  if (name == "rps2d") return GameKind::kRps2d;
  if (name == "imp") return GameKind::kImp;
  if (name == "kuhn") return GameKind::kKuhn;
  if (name == "external_matrix") return GameKind::kExternalMatrix;
  throw std::invalid_argument("unknown game kind: " + name);
}

const Matrix& GameInstance::nfg_matrix() const {
  if (kind == GameKind::kGos) return gos().g;
  require(kind == GameKind::kExternalMatrix,
          "nfg_matrix: game has no normal-form payoff matrix");
  return external().g;
}

bool differentiable(GameKind kind) {
  return kind != GameKind::kKuhn;
}

GameInstance sample_game(const GameConfig& cfg, uint64_t seed) {
  GameInstance game;
  game.kind = cfg.kind;
  game.seed = seed;
  game.symmetric = cfg.kind != GameKind::kImp;
  Rng rng(derive_seed(seed, 0x9a41e));

  switch (cfg.kind) {
    case GameKind::kGos: {
      require(cfg.gos_dim > 0, "sample_game: gos_dim must be positive");
      const int n = cfg.gos_dim;
      Matrix w(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w(i, j) = rng.normal(0.0, cfg.gos_sigma_w);
      Vector s(n);
      for (int i = 0; i < n; ++i) s(i) = rng.normal(0.0, cfg.gos_sigma_s);
      GosPayload p;
      p.dim = n;
      // (W - W^T) rather than (W - W^T)/2: heavier non-transitive cycles.
      // Filled entrywise so antisymmetry holds bit-exactly.
      p.g = Matrix::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double v = (w(i, j) - w(j, i)) + (s(i) - s(j));
          p.g(i, j) = v;
          p.g(j, i) = -v;
        }
      }
      game.payload = std::move(p);
      break;
    }
    case GameKind::kLotto: {
      require(cfg.lotto_customers >= 1 && cfg.lotto_servers >= 1,
              "sample_game: lotto sizes must be positive");
      LottoPayload p;
      p.servers = cfg.lotto_servers;
      p.customers.resize(cfg.lotto_customers, 2);
      for (int i = 0; i < cfg.lotto_customers; ++i) {
        p.customers(i, 0) = rng.normal();
        p.customers(i, 1) = rng.normal();
      }
      game.payload = std::move(p);
      break;
    }
    case GameKind::kRps2d: {
      require(cfg.rps2d_bandwidth > 0.0,
              "sample_game: rps2d bandwidth must be positive");
      Rps2dPayload p;
      p.bandwidth = cfg.rps2d_bandwidth;
      p.centers.resize(7, 2);
      const double phase = rng.uniform(0.0, kTwoPi);
      for (int m = 0; m < 7; ++m) {
        const double angle = phase + kTwoPi * m / 7.0;
        p.centers(m, 0) =
            cfg.rps2d_ring_radius * std::cos(angle) +
            rng.normal(0.0, cfg.rps2d_center_jitter);
        p.centers(m, 1) =
            cfg.rps2d_ring_radius * std::sin(angle) +
            rng.normal(0.0, cfg.rps2d_center_jitter);
      }
      // Cyclic interaction: each mode beats the next three around the ring.
      p.s = Matrix::Zero(7, 7);
      for (int i = 0; i < 7; ++i) {
        for (int d = 1; d <= 3; ++d) {
          p.s(i, (i + d) % 7) = 1.0;
          p.s((i + d) % 7, i) = -1.0;
        }
      }
      game.payload = std::move(p);
      break;
    }
    case GameKind::kImp: {
      require(cfg.imp_horizon >= 1, "sample_game: imp horizon must be >= 1");
      ImpPayload p;
      p.a = rng.uniform(0.5, 2.0);
      p.b = rng.uniform(0.5, 2.0);
      p.horizon = cfg.imp_horizon;
      game.payload = p;
      break;
    }
    case GameKind::kKuhn: {
      game.payload = KuhnPayload{};
      break;
    }
    case GameKind::kExternalMatrix:
      throw std::invalid_argument(
          "sample_game: external_matrix games are loaded, not sampled");
  }
  return game;
}

GameInstance make_external_matrix(const Matrix& a) {
  require(a.rows() == a.cols(), "external matrix must be square");
  require(a.rows() >= 1, "external matrix must be nonempty");
  require(a.allFinite(), "external matrix has non-finite entries");
  ExternalMatrixPayload p;
  p.antisym_deviation = ((a + a.transpose()) / 2.0).cwiseAbs().maxCoeff();
  // Entrywise projection keeps the result bit-exactly antisymmetric.
  const int n = static_cast<int>(a.rows());
  p.g = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double v = (a(i, j) - a(j, i)) / 2.0;
      p.g(i, j) = v;
      p.g(j, i) = -v;
    }
  }
  GameInstance game;
  game.kind = GameKind::kExternalMatrix;
  game.symmetric = true;
  game.seed = 0;
  game.payload = std::move(p);
  return game;
}

int policy_dim(const GameInstance& game) {
  switch (game.kind) {
    case GameKind::kGos: return game.gos().dim;
    case GameKind::kLotto: return 3 * game.lotto().servers;
    case GameKind::kRps2d: return 2;
    case GameKind::kImp: return 5;
    case GameKind::kKuhn: return kKuhnInfostates;
    case GameKind::kExternalMatrix:
      return static_cast<int>(game.external().g.rows());
  }
  throw std::invalid_argument("unknown game kind");
}

Vector sample_policy(const GameInstance& game, Rng& rng) {
  const int n = policy_dim(game);
  Vector v(n);
  if (game.kind == GameKind::kKuhn) {
    for (int i = 0; i < n; ++i) v(i) = rng.uniform();
  } else {
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
  }
  return v;
}

// --- payoffs ----------------------------------------------------------------

namespace {

double nfg_payoff(const Matrix& g, const Vector& x, const Vector& y) {
  const Vector p = softmax(x);
  const Vector q = softmax(y);
  return p.dot(g * q);
}

Vector nfg_grad_row(const Matrix& g, const Vector& x, const Vector& y) {
  const Vector p = softmax(x);
  const Vector q = softmax(y);
  const Vector gq = g * q;
  return p.cwiseProduct(gq) - p.dot(gq) * p;
}

// Soft assignment of customer i over the 2k servers of both players.
Vector lotto_assignment(const LottoPayload& l, const Vector& x, const Vector& y,
                        int customer) {
  const int k = l.servers;
  Vector z(2 * k);
  const Eigen::Vector2d c = l.customers.row(customer);
  for (int j = 0; j < k; ++j) {
    const Eigen::Vector2d v(x(k + 2 * j), x(k + 2 * j + 1));
    z(j) = -(v - c).squaredNorm();
  }
  for (int j = 0; j < k; ++j) {
    const Eigen::Vector2d w(y(k + 2 * j), y(k + 2 * j + 1));
    z(k + j) = -(w - c).squaredNorm();
  }
  return softmax(z);
}

double lotto_payoff(const LottoPayload& l, const Vector& x, const Vector& y) {
  const int k = l.servers;
  const Vector p = softmax(x.head(k));
  const Vector q = softmax(y.head(k));
  double total = 0.0;
  for (int i = 0; i < l.customers.rows(); ++i) {
    const Vector a = lotto_assignment(l, x, y, i);
    total += p.dot(a.head(k)) - q.dot(a.tail(k));
  }
  return total;
}

Vector lotto_grad_row(const LottoPayload& l, const Vector& x, const Vector& y) {
  const int k = l.servers;
  const Vector p = softmax(x.head(k));
  const Vector q = softmax(y.head(k));
  Vector coef(2 * k);
  coef << p, -q;
  Vector grad = Vector::Zero(3 * k);
  Vector assign_sum = Vector::Zero(k);
  for (int i = 0; i < l.customers.rows(); ++i) {
    const Vector a = lotto_assignment(l, x, y, i);
    assign_sum += a.head(k);
    // d payoff / d z through the softmax Jacobian, then d z / d positions.
    const Vector t = a.cwiseProduct(coef) - a.dot(coef) * a;
    const Eigen::Vector2d c = l.customers.row(i);
    for (int j = 0; j < k; ++j) {
      const Eigen::Vector2d v(x(k + 2 * j), x(k + 2 * j + 1));
      const Eigen::Vector2d dz = -2.0 * (v - c);
      grad(k + 2 * j) += t(j) * dz(0);
      grad(k + 2 * j + 1) += t(j) * dz(1);
    }
  }
  grad.head(k) = p.cwiseProduct(assign_sum) - p.dot(assign_sum) * p;
  return grad;
}

Vector rps2d_weights(const Rps2dPayload& r, const Vector& x) {
  const double b2 = r.bandwidth * r.bandwidth;
  const double norm = 1.0 / (kTwoPi * b2);
  Vector u(7);
  for (int m = 0; m < 7; ++m) {
    const Eigen::Vector2d d = x - r.centers.row(m).transpose();
    u(m) = norm * std::exp(-d.squaredNorm() / (2.0 * b2));
  }
  return u;
}

double rps2d_payoff(const Rps2dPayload& r, const Vector& x, const Vector& y) {
  const Vector ux = rps2d_weights(r, x);
  const Vector uy = rps2d_weights(r, y);
  return ux.dot(r.s * uy) + ux.sum() - uy.sum();
}

Vector rps2d_grad_row(const Rps2dPayload& r, const Vector& x, const Vector& y) {
  const Vector ux = rps2d_weights(r, x);
  const Vector uy = rps2d_weights(r, y);
  const Vector coef = r.s * uy + Vector::Ones(7);
  const double b2 = r.bandwidth * r.bandwidth;
  Vector grad = Vector::Zero(2);
  for (int m = 0; m < 7; ++m) {
    const Eigen::Vector2d d = r.centers.row(m).transpose() - x;
    grad += coef(m) * ux(m) / b2 * d;
  }
  return grad;
}

// state index of a joint action, row action first: HH=0, HT=1, TH=2, TT=3
int imp_state(int a1, int a2) { return 2 * a1 + a2; }

Eigen::Vector4d imp_rewards(const ImpPayload& g) {
  return {g.a, -g.a, -g.b, g.b};
}

// Head probabilities [start, HH, HT, TH, TT] from the 5 logits.
Eigen::Matrix<double, 5, 1> imp_probs(const Vector& v) {
  Eigen::Matrix<double, 5, 1> p;
  for (int i = 0; i < 5; ++i) p(i) = sigmoid(v(i));
  return p;
}

double imp_payoff(const ImpPayload& g, const Vector& x, const Vector& y) {
  const auto p1 = imp_probs(x);
  const auto p2 = imp_probs(y);
  const Eigen::Vector4d r = imp_rewards(g);

  auto joint = [&](int heads_idx1, int heads_idx2) {
    Eigen::Vector4d d;
    const double h1 = p1(heads_idx1), h2 = p2(heads_idx2);
    d << h1 * h2, h1 * (1 - h2), (1 - h1) * h2, (1 - h1) * (1 - h2);
    return d;
  };

  Eigen::Vector4d d = joint(0, 0);
  double total = r.dot(d);
  Eigen::Matrix4d t;
  for (int s = 0; s < 4; ++s) t.row(s) = joint(1 + s, 1 + s).transpose();
  for (int step = 1; step < g.horizon; ++step) {
    d = t.transpose() * d;
    total += r.dot(d);
  }
  return total;
}

Vector imp_grad_row(const ImpPayload& g, const Vector& x, const Vector& y) {
  const auto p1 = imp_probs(x);
  const auto p2 = imp_probs(y);
  const Eigen::Vector4d r = imp_rewards(g);

  // d (joint action distribution from state s) / d p1(head | s)
  auto joint = [&](int i1, int i2) {
    Eigen::Vector4d d;
    const double h1 = p1(i1), h2 = p2(i2);
    d << h1 * h2, h1 * (1 - h2), (1 - h1) * h2, (1 - h1) * (1 - h2);
    return d;
  };
  auto djoint_dh1 = [&](int i2) {
    Eigen::Vector4d d;
    const double h2 = p2(i2);
    d << h2, (1 - h2), -h2, -(1 - h2);
    return d;
  };

  Eigen::Matrix4d t;
  for (int s = 0; s < 4; ++s) t.row(s) = joint(1 + s, 1 + s).transpose();

  // Forward-mode tangents of the state distribution, one per head parameter.
  Eigen::Vector4d d = joint(0, 0);
  Eigen::Matrix<double, 4, 5> tang = Eigen::Matrix<double, 4, 5>::Zero();
  tang.col(0) = djoint_dh1(0);
  Vector grad = Vector::Zero(5);
  grad(0) += r.dot(tang.col(0));
  for (int step = 1; step < g.horizon; ++step) {
    Eigen::Matrix<double, 4, 5> next = Eigen::Matrix<double, 4, 5>::Zero();
    for (int h = 0; h < 5; ++h) next.col(h) = t.transpose() * tang.col(h);
    // dT/dp1(head|s) contributes d(s) * djoint_dh1 on the column block of s.
    for (int s = 0; s < 4; ++s) next.col(1 + s) += d(s) * djoint_dh1(1 + s);
    d = t.transpose() * d;
    tang = next;
    for (int h = 0; h < 5; ++h) grad(h) += r.dot(tang.col(h));
  }
  // Chain through the sigmoid.
  for (int h = 0; h < 5; ++h) grad(h) *= p1(h) * (1 - p1(h));
  return grad;
}

double kuhn_payoff(const Vector& x, const Vector& y) {
  return 0.5 * (kuhn_seat_value(x, y) - kuhn_seat_value(y, x));
}

}  // namespace

double payoff(const GameInstance& game, const Vector& row, const Vector& col) {
  check_policy(game, row, "payoff(row)");
  check_policy(game, col, "payoff(col)");
  switch (game.kind) {
    case GameKind::kGos: return nfg_payoff(game.gos().g, row, col);
    case GameKind::kExternalMatrix:
      return nfg_payoff(game.external().g, row, col);
    case GameKind::kLotto: return lotto_payoff(game.lotto(), row, col);
    case GameKind::kRps2d: return rps2d_payoff(game.rps2d(), row, col);
    case GameKind::kImp: return imp_payoff(game.imp(), row, col);
    case GameKind::kKuhn: return kuhn_payoff(row, col);
  }
  throw std::invalid_argument("unknown game kind");
}

Vector payoff_grad_row(const GameInstance& game, const Vector& row,
                       const Vector& col) {
  check_policy(game, row, "payoff_grad_row(row)");
  check_policy(game, col, "payoff_grad_row(col)");
  switch (game.kind) {
    case GameKind::kGos: return nfg_grad_row(game.gos().g, row, col);
    case GameKind::kExternalMatrix:
      return nfg_grad_row(game.external().g, row, col);
    case GameKind::kLotto: return lotto_grad_row(game.lotto(), row, col);
    case GameKind::kRps2d: return rps2d_grad_row(game.rps2d(), row, col);
    case GameKind::kImp: return imp_grad_row(game.imp(), row, col);
    case GameKind::kKuhn:
      throw std::invalid_argument(
          "payoff_grad_row: kuhn payoffs are not differentiable");
  }
  throw std::invalid_argument("unknown game kind");
}

// --- IMP rollouts -----------------------------------------------------------

ImpTrajectory imp_rollout(const GameInstance& game, const Vector& p1,
                          const Vector& p2, Rng& rng) {
  require(game.kind == GameKind::kImp, "imp_rollout: wrong game kind");
  check_policy(game, p1, "imp_rollout(p1)");
  check_policy(game, p2, "imp_rollout(p2)");
  const ImpPayload& g = game.imp();
  const auto probs1 = imp_probs(p1);
  const auto probs2 = imp_probs(p2);
  const Eigen::Vector4d r = imp_rewards(g);

  ImpTrajectory traj;
  traj.reserve(g.horizon);
  int state = -1;
  for (int step = 0; step < g.horizon; ++step) {
    const int head_idx = state < 0 ? 0 : 1 + state;
    const int a1 = rng.uniform() < probs1(head_idx) ? 0 : 1;
    const int a2 = rng.uniform() < probs2(head_idx) ? 0 : 1;
    const int z = imp_state(a1, a2);
    traj.push_back({state, a1, a2, r(z)});
    state = z;
  }
  return traj;
}

double imp_return(const ImpTrajectory& traj) {
  double total = 0.0;
  for (const ImpStep& s : traj) total += s.reward1;
  return total;
}

// --- Kuhn poker -------------------------------------------------------------

int kuhn_infostate_index(int seat, int card, bool facing_bet_or_checked) {
  require(seat == 1 || seat == 2, "kuhn_infostate_index: seat must be 1 or 2");
  require(card >= 0 && card <= 2, "kuhn_infostate_index: card must be 0..2");
  if (seat == 1) return 2 * card + (facing_bet_or_checked ? 1 : 0);
  return 6 + 2 * card + (facing_bet_or_checked ? 0 : 1);
}

double kuhn_seat_value(const Vector& x, const Vector& y) {
  double total = 0.0;
  for (int c1 = 0; c1 < 3; ++c1) {
    for (int c2 = 0; c2 < 3; ++c2) {
      if (c1 == c2) continue;
      const double sgn = c1 > c2 ? 1.0 : -1.0;
      const double bet1 = x(kuhn_infostate_index(1, c1, false));
      const double call1 = x(kuhn_infostate_index(1, c1, true));
      const double call2 = y(kuhn_infostate_index(2, c2, true));
      const double bet2 = y(kuhn_infostate_index(2, c2, false));
      // seat 1 bets: seat 2 calls (showdown for 2) or folds (+1)
      const double v_bet = call2 * 2.0 * sgn + (1.0 - call2) * 1.0;
      // seat 1 checks: seat 2 checks (showdown for 1) or bets, after which
      // seat 1 calls (showdown for 2) or folds (-1)
      const double v_check =
          (1.0 - bet2) * sgn + bet2 * (call1 * 2.0 * sgn - (1.0 - call1));
      total += (bet1 * v_bet + (1.0 - bet1) * v_check) / 6.0;
    }
  }
  return total;
}

Matrix kuhn_infostate_action_values(const GameInstance& game,
                                    const Vector& weights,
                                    const std::vector<Vector>& members) {
  require(game.kind == GameKind::kKuhn,
          "kuhn_infostate_action_values: wrong game kind");
  require(!members.empty(), "kuhn_infostate_action_values: empty population");
  require(weights.size() == static_cast<Eigen::Index>(members.size()),
          "kuhn_infostate_action_values: weight/member size mismatch");

  Matrix q = Matrix::Zero(kKuhnInfostates, 2);
  for (size_t k = 0; k < members.size(); ++k) {
    const double w = weights(static_cast<Eigen::Index>(k));
    const Vector& y = members[k];
    for (int mine = 0; mine < 3; ++mine) {
      for (int theirs = 0; theirs < 3; ++theirs) {
        if (mine == theirs) continue;
        const double sgn = mine > theirs ? 1.0 : -1.0;
        const double reach = w / 6.0;
        {
          // We are seat 1; the opponent holds `theirs` in seat 2.
          const int open = kuhn_infostate_index(1, mine, false);
          const int facing = kuhn_infostate_index(1, mine, true);
          const double call2 = y(kuhn_infostate_index(2, theirs, true));
          const double bet2 = y(kuhn_infostate_index(2, theirs, false));
          q(open, 1) += reach * (call2 * 2.0 * sgn + (1.0 - call2));
          q(open, 0) += reach * (1.0 - bet2) * sgn;
          q(facing, 1) += reach * bet2 * 2.0 * sgn;
          q(facing, 0) += reach * bet2 * -1.0;
        }
        {
          // We are seat 2 with card `mine`; values are our own utility.
          const int facing = kuhn_infostate_index(2, mine, true);
          const int checked = kuhn_infostate_index(2, mine, false);
          const double bet1 = y(kuhn_infostate_index(1, theirs, false));
          const double call1 = y(kuhn_infostate_index(1, theirs, true));
          q(facing, 1) += reach * bet1 * 2.0 * sgn;
          q(facing, 0) += reach * bet1 * -1.0;
          q(checked, 0) += reach * (1.0 - bet1) * sgn;
          q(checked, 1) +=
              reach * (1.0 - bet1) * (call1 * 2.0 * sgn + (1.0 - call1));
        }
      }
    }
  }
  // Greedy continuation: the value of checking at the opening infostate
  // includes the best response at the matching facing-a-bet infostate.
  for (int card = 0; card < 3; ++card) {
    const int open = kuhn_infostate_index(1, card, false);
    const int facing = kuhn_infostate_index(1, card, true);
    q(open, 0) += std::max(q(facing, 0), q(facing, 1));
  }
  return q;
}

}  // namespace metapop
