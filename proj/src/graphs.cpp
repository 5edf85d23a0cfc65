#include "metapop/graphs.hpp"

#include <cmath>

#include "metapop/check.hpp"

namespace metapop {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Var nfg_payoff_graph(Tape& t, const std::shared_ptr<const Matrix>& g, Var x,
                     Var y) {
  const Var p = t.softmax(x);
  const Var q = t.softmax(y);
  return t.dot(p, t.matvec(g, q, false));
}

Var lotto_payoff_graph(Tape& t, const LottoPayload& l, Var x, Var y) {
  const int k = l.servers;
  const Var p = t.softmax(t.segment(x, 0, k));
  const Var q = t.softmax(t.segment(y, 0, k));

  Var total = t.constant_scalar(0.0);
  for (int i = 0; i < l.customers.rows(); ++i) {
    const Var cv = t.constant(l.customers.row(i).transpose());
    std::vector<Var> dists;
    dists.reserve(2 * k);
    for (int j = 0; j < k; ++j) {
      const Var d = t.sub(t.segment(x, k + 2 * j, 2), cv);
      dists.push_back(t.scale(t.dot(d, d), -1.0));
    }
    for (int j = 0; j < k; ++j) {
      const Var d = t.sub(t.segment(y, k + 2 * j, 2), cv);
      dists.push_back(t.scale(t.dot(d, d), -1.0));
    }
    const Var assign = t.softmax(t.concat(dists));
    const Var gain = t.dot(p, t.segment(assign, 0, k));
    const Var loss = t.dot(q, t.segment(assign, k, k));
    total = t.add(total, t.sub(gain, loss));
  }
  return total;
}

Var rps2d_weights_graph(Tape& t, const Rps2dPayload& r, Var x) {
  const double b2 = r.bandwidth * r.bandwidth;
  const double norm = 1.0 / (kTwoPi * b2);
  std::vector<Var> parts;
  parts.reserve(7);
  for (int m = 0; m < 7; ++m) {
    const Var d = t.sub(x, t.constant(r.centers.row(m).transpose()));
    const Var e = t.expv(t.scale(t.dot(d, d), -1.0 / (2.0 * b2)));
    parts.push_back(t.scale(e, norm));
  }
  return t.concat(parts);
}

Var rps2d_payoff_graph(Tape& t, const Rps2dPayload& r,
                       const std::shared_ptr<const Matrix>& s, Var x, Var y) {
  const Var ux = rps2d_weights_graph(t, r, x);
  const Var uy = rps2d_weights_graph(t, r, y);
  const Var cyclic = t.dot(ux, t.matvec(s, uy, false));
  return t.add(cyclic, t.sub(t.sum(ux), t.sum(uy)));
}

}  // namespace

GameGraphContext GameGraphContext::make(const GameInstance& game) {
  GameGraphContext ctx;
  ctx.kind = game.kind;
  switch (game.kind) {
    case GameKind::kGos:
      ctx.nfg = std::make_shared<const Matrix>(game.gos().g);
      break;
    case GameKind::kExternalMatrix:
      ctx.nfg = std::make_shared<const Matrix>(game.external().g);
      break;
    case GameKind::kLotto:
      ctx.lotto = game.lotto();
      break;
    case GameKind::kRps2d:
      ctx.rps2d = game.rps2d();
      ctx.nfg = std::make_shared<const Matrix>(game.rps2d().s);
      break;
    default:
      throw std::invalid_argument(
          "game graph: kind has no differentiable payoff graph");
  }
  return ctx;
}

Var payoff_graph(Tape& tape, const GameGraphContext& game, Var row, Var col) {
  switch (game.kind) {
    case GameKind::kGos:
    case GameKind::kExternalMatrix:
      return nfg_payoff_graph(tape, game.nfg, row, col);
    case GameKind::kLotto:
      return lotto_payoff_graph(tape, game.lotto, row, col);
    case GameKind::kRps2d:
      return rps2d_payoff_graph(tape, game.rps2d, game.nfg, row, col);
    default:
      throw std::invalid_argument(
          "payoff_graph: game kind has no differentiable payoff graph");
  }
}

MlpLayout MlpLayout::make(int hidden) {
  MlpLayout l;
  l.hidden = hidden;
  const int h = hidden;
  int pos = 0;
  l.w1 = pos, pos += h;
  l.b1 = pos, pos += h;
  l.w2 = pos, pos += h * h;
  l.b2 = pos, pos += h;
  l.w3 = pos, pos += 4 * h * h;
  l.b3 = pos, pos += 2 * h;
  l.w4 = pos, pos += 2 * h;
  l.b4 = pos, pos += 1;
  l.total = pos;
  return l;
}

Var mlp_solver_graph(Tape& t, const MlpLayout& l, Var theta,
                     const std::vector<std::vector<Var>>& entries) {
  const int h = l.hidden;
  const int n = static_cast<int>(entries.size());
  require(n >= 1, "mlp_solver_graph: empty meta-game");
  require(t.value(theta).size() == l.total,
          "mlp_solver_graph: parameter size mismatch");

  const Var w1 = t.segment(theta, l.w1, h);
  const Var b1 = t.segment(theta, l.b1, h);
  const Var w2 = t.segment(theta, l.w2, h * h);
  const Var b2 = t.segment(theta, l.b2, h);
  const Var w3 = t.segment(theta, l.w3, 4 * h * h);
  const Var b3 = t.segment(theta, l.b3, 2 * h);
  const Var w4 = t.segment(theta, l.w4, 2 * h);
  const Var b4 = t.segment(theta, l.b4, 1);

  // Per-entry MLP + column mean-pool.
  std::vector<Var> rows(n);
  for (int i = 0; i < n; ++i) {
    Var acc = -1;
    for (int j = 0; j < n; ++j) {
      const Var e = t.relu(t.add(t.smul(entries[i][j], w1), b1));
      acc = j == 0 ? e : t.add(acc, e);
    }
    rows[i] = t.scale(acc, 1.0 / n);
  }
  // Row-wise MLP + row mean-pool into the global feature.
  Var global = -1;
  for (int i = 0; i < n; ++i) {
    const Var s = t.relu(t.add(t.matvec_param(w2, h, h, rows[i], false), b2));
    global = i == 0 ? s : t.add(global, s);
  }
  global = t.scale(global, 1.0 / n);

  std::vector<Var> logits(n);
  for (int i = 0; i < n; ++i) {
    const Var u = t.concat({rows[i], global});
    const Var z = t.relu(t.add(t.matvec_param(w3, 2 * h, 2 * h, u, false), b3));
    logits[i] = t.add(t.dot(w4, z), b4);
  }
  return t.softmax(t.concat(logits));
}

}  // namespace metapop
