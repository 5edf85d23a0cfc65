#include "metapop/oracles.hpp"

#include <cmath>

#include "metapop/check.hpp"

namespace metapop {

namespace {

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp();
  return e / e.sum();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Vector payoff_grad_col(const GameInstance& game, const Vector& row,
                       const Vector& col) {
  if (game.symmetric) return -payoff_grad_row(game, col, row);
  require(game.kind == GameKind::kImp, "payoff_grad_col: unsupported kind");
  // IMP: forward-mode tangents w.r.t. the column player's head parameters.
  const ImpPayload& g = game.imp();
  auto probs = [](const Vector& v) {
    Eigen::Matrix<double, 5, 1> p;
    for (int i = 0; i < 5; ++i) p(i) = sigmoid(v(i));
    return p;
  };
  const auto p1 = probs(row);
  const auto p2 = probs(col);
  const Eigen::Vector4d r(g.a, -g.a, -g.b, g.b);

  auto joint = [&](int i1, int i2) {
    Eigen::Vector4d d;
    const double h1 = p1(i1), h2 = p2(i2);
    d << h1 * h2, h1 * (1 - h2), (1 - h1) * h2, (1 - h1) * (1 - h2);
    return d;
  };
  auto djoint_dh2 = [&](int i1) {
    Eigen::Vector4d d;
    const double h1 = p1(i1);
    d << h1, -h1, (1 - h1), -(1 - h1);
    return d;
  };

  Eigen::Matrix4d t;
  for (int s = 0; s < 4; ++s) t.row(s) = joint(1 + s, 1 + s).transpose();

  Eigen::Vector4d d = joint(0, 0);
  Eigen::Matrix<double, 4, 5> tang = Eigen::Matrix<double, 4, 5>::Zero();
  tang.col(0) = djoint_dh2(0);
  Vector grad = Vector::Zero(5);
  grad(0) += r.dot(tang.col(0));
  for (int step = 1; step < g.horizon; ++step) {
    Eigen::Matrix<double, 4, 5> next = Eigen::Matrix<double, 4, 5>::Zero();
    for (int h = 0; h < 5; ++h) next.col(h) = t.transpose() * tang.col(h);
    for (int s = 0; s < 4; ++s) next.col(1 + s) += d(s) * djoint_dh2(1 + s);
    d = t.transpose() * d;
    tang = next;
    for (int h = 0; h < 5; ++h) grad(h) += r.dot(tang.col(h));
  }
  for (int h = 0; h < 5; ++h) grad(h) *= p2(h) * (1 - p2(h));
  return grad;
}

}  // namespace

std::string oracle_name(OracleMethod method) {
  switch (method) {
    case OracleMethod::kGradDescent: return "gradient_descent";
    case OracleMethod::kReinforce: return "reinforce";
    case OracleMethod::kKuhnExact: return "kuhn_exact";
    case OracleMethod::kKuhnApproxV1: return "kuhn_approx_v1";
    case OracleMethod::kKuhnApproxV2: return "kuhn_approx_v2";
  }
  throw std::invalid_argument("unknown oracle method");
}

OracleMethod oracle_from_name(const std::string& name) {
  if (name == "gradient_descent") return OracleMethod::kGradDescent;
  if (name == "reinforce") return OracleMethod::kReinforce;
  if (name == "kuhn_exact") return OracleMethod::kKuhnExact;
  if (name == "kuhn_approx_v1") return OracleMethod::kKuhnApproxV1;
  if (name == "kuhn_approx_v2") return OracleMethod::kKuhnApproxV2;
  throw std::invalid_argument("unknown oracle method: " + name);
}

void validate(const OracleConfig& cfg) {
  require(cfg.steps >= 1, "oracle: steps must be >= 1");
  require(cfg.lr >= 0.0 && std::isfinite(cfg.lr),
          "oracle: learning rate must be finite and nonnegative");
  require(cfg.batch >= 1, "oracle: batch must be >= 1");
}

double deviation_payoff(const GameInstance& game, const Vector& policy,
                        const MetaDistribution& weights, const Population& opp,
                        BrSide side) {
  require(weights.size() == opp.size(),
          "deviation_payoff: weight/population size mismatch");
  check_distribution(weights);
  double total = 0.0;
  for (int k = 0; k < opp.size(); ++k) {
    const double m = side == BrSide::kRow
                         ? payoff(game, policy, opp.members[k])
                         : -payoff(game, opp.members[k], policy);
    total += weights(k) * m;
  }
  return total;
}

Vector deviation_grad(const GameInstance& game, const Vector& policy,
                      const MetaDistribution& weights, const Population& opp,
                      BrSide side) {
  require(weights.size() == opp.size(),
          "deviation_grad: weight/population size mismatch");
  check_distribution(weights);
  Vector grad = Vector::Zero(policy.size());
  for (int k = 0; k < opp.size(); ++k) {
    if (side == BrSide::kRow) {
      grad += weights(k) * payoff_grad_row(game, policy, opp.members[k]);
    } else {
      grad -= weights(k) * payoff_grad_col(game, opp.members[k], policy);
    }
  }
  return grad;
}

namespace {

Vector oracle_init(const GameInstance& game, const OracleConfig& cfg,
                   Rng& rng) {
  if (cfg.init == OracleInit::kZeros)
    return Vector::Zero(policy_dim(game));
  return sample_policy(game, rng);
}

}  // namespace

Vector gd_best_response(const GameInstance& game,
                        const MetaDistribution& weights, const Population& opp,
                        const OracleConfig& cfg, Rng& rng, BrSide side) {
  validate(cfg);
  require(cfg.method == OracleMethod::kGradDescent,
          "gd_best_response: wrong oracle method");
  require(differentiable(game.kind),
          "gd_best_response: game kind is not differentiable");
  Vector phi = oracle_init(game, cfg, rng);
  for (int n = 0; n < cfg.steps; ++n) {
    const Vector g = deviation_grad(game, phi, weights, opp, side);
    require_numeric(g.allFinite(), "gd_best_response: non-finite gradient");
    phi += cfg.lr * g;
  }
  return phi;
}

Vector reinforce_gradient(const GameInstance& game, const Vector& policy,
                          const MetaDistribution& weights,
                          const Population& opp, int batch, Rng& rng,
                          BrSide side, Vector* standard_error) {
  require(game.kind == GameKind::kImp, "reinforce_gradient: wrong game kind");
  require(!opp.members.empty(), "reinforce_gradient: empty population");
  Eigen::Matrix<double, 5, 1> probs;
  for (int i = 0; i < 5; ++i) probs(i) = sigmoid(policy(i));

  Vector grad = Vector::Zero(5);
  Vector sq = Vector::Zero(5);
  int total_samples = 0;
  for (int k = 0; k < opp.size(); ++k) {
    std::vector<Vector> scores(batch);
    Vector returns(batch);
    for (int b = 0; b < batch; ++b) {
      const ImpTrajectory traj =
          side == BrSide::kRow
              ? imp_rollout(game, policy, opp.members[k], rng)
              : imp_rollout(game, opp.members[k], policy, rng);
      // Score function of the head logits: (1 - p) when heads, -p when tails.
      Vector score = Vector::Zero(5);
      double ret = 0.0;
      for (const ImpStep& s : traj) {
        const int head = s.state < 0 ? 0 : 1 + s.state;
        const int own = side == BrSide::kRow ? s.action1 : s.action2;
        score(head) += own == 0 ? (1.0 - probs(head)) : -probs(head);
        ret += side == BrSide::kRow ? s.reward1 : -s.reward1;
      }
      scores[b] = score;
      returns(b) = ret;
    }
    const double baseline = returns.mean();
    Vector gk = Vector::Zero(5);
    Vector gk_sq = Vector::Zero(5);
    for (int b = 0; b < batch; ++b) {
      const Vector contrib = (returns(b) - baseline) * scores[b];
      gk += contrib;
      gk_sq += contrib.cwiseProduct(contrib);
    }
    gk /= batch;
    grad += weights(k) * gk;
    // Per-coordinate variance of the weighted contribution stream.
    sq += weights(k) * weights(k) *
          (gk_sq / batch - gk.cwiseProduct(gk)) / batch;
    total_samples += batch;
  }
  if (standard_error != nullptr) *standard_error = sq.cwiseMax(0.0).cwiseSqrt();
  (void)total_samples;
  return grad;
}

Vector reinforce_best_response(const GameInstance& game,
                               const MetaDistribution& weights,
                               const Population& opp, const OracleConfig& cfg,
                               Rng& rng, BrSide side) {
  validate(cfg);
  require(cfg.method == OracleMethod::kReinforce,
          "reinforce_best_response: wrong oracle method");
  require(game.kind == GameKind::kImp,
          "reinforce_best_response: reinforce oracle is for IMP");
  require(!opp.members.empty(), "reinforce_best_response: empty population");
  check_distribution(weights);
  Vector phi = oracle_init(game, cfg, rng);
  for (int n = 0; n < cfg.steps; ++n) {
    const Vector g =
        reinforce_gradient(game, phi, weights, opp, cfg.batch, rng, side);
    require_numeric(g.allFinite(), "reinforce_best_response: non-finite gradient");
    phi += cfg.lr * g;
  }
  return phi;
}

Vector kuhn_best_response_from_values(const Matrix& values, OracleMethod method,
                                      const std::function<double()>& noise) {
  Vector out(kKuhnInfostates);
  for (int s = 0; s < kKuhnInfostates; ++s) {
    const int best = values(s, 1) > values(s, 0) ? 1 : 0;
    double p_best = 1.0;
    switch (method) {
      case OracleMethod::kKuhnExact:
        p_best = 1.0;
        break;
      case OracleMethod::kKuhnApproxV1:
        p_best = 0.75;
        break;
      case OracleMethod::kKuhnApproxV2: {
        double w_best = 0.0, w_other = 0.0;
        do {
          w_best = std::max(0.0, 1.0 + noise());
          w_other = std::max(0.0, noise());
        } while (w_best + w_other <= 0.0);
        p_best = w_best / (w_best + w_other);
        break;
      }
      default:
        throw std::invalid_argument("kuhn_best_response: wrong oracle method");
    }
    out(s) = best == 1 ? p_best : 1.0 - p_best;
  }
  return out;
}

Vector kuhn_best_response(const GameInstance& game,
                          const MetaDistribution& weights,
                          const Population& pop, const OracleConfig& cfg,
                          Rng& rng) {
  require(game.kind == GameKind::kKuhn, "kuhn_best_response: wrong game kind");
  require(!pop.members.empty(), "kuhn_best_response: empty population");
  check_distribution(weights);
  const Matrix values = kuhn_infostate_action_values(game, weights, pop.members);
  return kuhn_best_response_from_values(values, cfg.method,
                                        [&rng] { return rng.normal(); });
}

Vector best_response(const GameInstance& game, const MetaDistribution& weights,
                     const Population& opp, const OracleConfig& cfg, Rng& rng,
                     BrSide side) {
  switch (cfg.method) {
    case OracleMethod::kGradDescent:
      return gd_best_response(game, weights, opp, cfg, rng, side);
    case OracleMethod::kReinforce:
      return reinforce_best_response(game, weights, opp, cfg, rng, side);
    case OracleMethod::kKuhnExact:
    case OracleMethod::kKuhnApproxV1:
    case OracleMethod::kKuhnApproxV2:
      require(side == BrSide::kRow,
              "best_response: kuhn oracles are single-population");
      return kuhn_best_response(game, weights, opp, cfg, rng);
  }
  throw std::invalid_argument("unknown oracle method");
}

Vector nfg_aggregate_mixture(const GameInstance& game,
                             const MetaDistribution& weights,
                             const Population& pop) {
  const Matrix& g = game.nfg_matrix();
  Vector mix = Vector::Zero(g.rows());
  for (int k = 0; k < pop.size(); ++k)
    mix += weights(k) * softmax(pop.members[k]);
  return mix;
}

double exploitability(const GameInstance& game, const MetaDistribution& weights,
                      const Population& pop, const ExploitConfig& cfg,
                      Rng& rng) {
  require(game.symmetric, "exploitability: use exploitability_two for IMP");
  require(weights.size() == pop.size(),
          "exploitability: weight/population size mismatch");
  if (cfg.exact_nfg) {
    require(game.kind == GameKind::kGos ||
                game.kind == GameKind::kExternalMatrix,
            "exploitability: exact mode needs a normal-form game");
    const Vector mix = nfg_aggregate_mixture(game, weights, pop);
    return (game.nfg_matrix() * mix).maxCoeff();
  }
  const Vector br = best_response(game, weights, pop, cfg.oracle, rng);
  return deviation_payoff(game, br, weights, pop, BrSide::kRow);
}

double exploitability_two(const GameInstance& game,
                          const MetaDistribution& row_weights,
                          const Population& row_pop,
                          const MetaDistribution& col_weights,
                          const Population& col_pop, const ExploitConfig& cfg,
                          Rng& rng) {
  const Vector row_br =
      best_response(game, col_weights, col_pop, cfg.oracle, rng, BrSide::kRow);
  const Vector col_br =
      best_response(game, row_weights, row_pop, cfg.oracle, rng, BrSide::kCol);
  const double row_gain =
      deviation_payoff(game, row_br, col_weights, col_pop, BrSide::kRow);
  const double col_gain =
      deviation_payoff(game, col_br, row_weights, row_pop, BrSide::kCol);
  return row_gain + col_gain;
}

}  // namespace metapop
