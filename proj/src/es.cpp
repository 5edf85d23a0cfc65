#include "metapop/es.hpp"

#include <chrono>
#include <cmath>

#include "metapop/check.hpp"

namespace metapop {

void validate(const EsConfig& cfg) {
  require(cfg.n_perturb >= 1, "es: n_perturb must be >= 1");
  require(cfg.sigma > 0.0, "es: sigma must be positive");
  require(!cfg.antithetic || cfg.n_perturb % 2 == 0,
          "es: antithetic sampling needs an even n_perturb");
}

Vector es_gradient(const std::function<double(const Vector&)>& objective,
                   const Vector& theta, const EsConfig& cfg, uint64_t seed) {
  validate(cfg);
  const Eigen::Index dim = theta.size();
  const double baseline =
      cfg.control == ControlVariate::kForwardFd ? objective(theta) : 0.0;
  require_numeric(std::isfinite(baseline), "es_gradient: non-finite baseline");

  const int draws = cfg.antithetic ? cfg.n_perturb / 2 : cfg.n_perturb;
  std::vector<Vector> contributions(draws);
  for (int i = 0; i < draws; ++i) {
    Rng rng(derive_seed(seed, 0xe5, static_cast<uint64_t>(i)));
    Vector eps(dim);
    for (Eigen::Index j = 0; j < dim; ++j) eps(j) = rng.normal();
    const double up = objective(theta + cfg.sigma * eps);
    require_numeric(std::isfinite(up), "es_gradient: non-finite objective");
    if (cfg.antithetic) {
      const double down = objective(theta - cfg.sigma * eps);
      require_numeric(std::isfinite(down), "es_gradient: non-finite objective");
      contributions[i] = ((up - baseline) - (down - baseline)) * eps;
    } else {
      contributions[i] = (up - baseline) * eps;
    }
  }
  // Fixed index-order reduction keeps the estimate identical no matter how
  // the evaluations were scheduled.
  Vector grad = Vector::Zero(dim);
  for (int i = 0; i < draws; ++i) grad += contributions[i];
  return grad / (cfg.n_perturb * cfg.sigma);
}

Vector update_params(const Vector& theta, const Vector& grad, double lr,
                     double clip) {
  require(theta.size() == grad.size(), "update_params: size mismatch");
  require_numeric(grad.allFinite(), "update_params: non-finite gradient");
  Vector step = grad;
  const double norm = grad.norm();
  if (clip > 0.0 && norm > clip) step *= clip / norm;
  return theta - lr * step;
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kEs: return "es";
    case TrainMode::kDirect: return "direct";
    case TrainMode::kImplicit: return "implicit";
  }
  throw std::invalid_argument("unknown train mode");
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "es") return TrainMode::kEs;
  if (name == "direct") return TrainMode::kDirect;
  if (name == "implicit") return TrainMode::kImplicit;
  throw std::invalid_argument("unknown train mode: " + name);
}

void validate(const TrainConfig& cfg) {
  require(cfg.hidden >= 1, "train: hidden size must be positive");
  require(cfg.outer_lr > 0.0, "train: outer learning rate must be positive");
  require(cfg.meta_steps >= 0, "train: meta_steps must be nonnegative");
  require(cfg.meta_batch >= 1, "train: meta_batch must be >= 1");
  require(cfg.lr_schedule_gamma > 0.0, "train: schedule gamma must be positive");
  if (cfg.mode == TrainMode::kEs) {
    validate(cfg.es);
  } else {
    require(cfg.arch == SolverArch::kMlp,
            "train: direct/implicit modes support the Mlp solver only");
    validate(cfg.metagrad);
  }
}

double psro_exploitability_objective(const MetaSolverParams& params,
                                     const GameInstance& game,
                                     const PsroConfig& cfg, uint64_t seed) {
  return run_psro(game, make_solver_fn(params), cfg, seed).final_exploitability;
}

TrainResult train(const TrainConfig& cfg, uint64_t seed) {
  validate(cfg);
  constexpr double kGradCeiling = 1e8;

  TrainResult out;
  out.params = init_params(cfg.arch, cfg.hidden, derive_seed(seed, 0x11));

  for (int step = 0; step < cfg.meta_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    double lr = cfg.outer_lr;
    if (cfg.lr_schedule_step > 0)
      lr *= std::pow(cfg.lr_schedule_gamma, step / cfg.lr_schedule_step);

    std::vector<GameInstance> games;
    std::vector<uint64_t> rollout_seeds;
    for (int k = 0; k < cfg.meta_batch; ++k) {
      games.push_back(
          sample_game(cfg.game, derive_seed(seed, 0x9a, step, k)));
      rollout_seeds.push_back(derive_seed(seed, 0x70, step, k));
    }

    StepRecord rec;
    rec.step = step;
    rec.per_game_exploitability.resize(cfg.meta_batch);

    Vector grad;
    if (cfg.mode == TrainMode::kEs) {
      MetaSolverParams probe = out.params;
      auto mean_objective = [&](const Vector& flat) {
        probe.flat = flat;
        double total = 0.0;
        for (int k = 0; k < cfg.meta_batch; ++k)
          total += psro_exploitability_objective(probe, games[k], cfg.psro,
                                                 rollout_seeds[k]);
        return total / cfg.meta_batch;
      };
      grad = es_gradient(mean_objective, out.params.flat, cfg.es,
                         derive_seed(seed, 0xe5ba5e, step));
      for (int k = 0; k < cfg.meta_batch; ++k)
        rec.per_game_exploitability(k) = psro_exploitability_objective(
            out.params, games[k], cfg.psro, rollout_seeds[k]);
    } else {
      grad = Vector::Zero(out.params.flat.size());
      for (int k = 0; k < cfg.meta_batch; ++k) {
        UnrolledRun run;
        if (cfg.mode == TrainMode::kDirect) {
          run = unrolled_psro_forward(out.params, games[k], cfg.metagrad,
                                      rollout_seeds[k]);
        } else {
          MetaGradConfig implicit_cfg = cfg.metagrad;
          implicit_cfg.mode = MetaGradMode::kImplicit;
          run = unrolled_psro_forward(out.params, games[k], implicit_cfg,
                                      rollout_seeds[k]);
        }
        grad += direct_meta_gradient(run);
        rec.per_game_exploitability(k) = run.value;
      }
      grad /= cfg.meta_batch;
    }

    require_numeric(grad.allFinite() && grad.norm() < kGradCeiling,
                    "train: meta-gradient exploded at step " +
                        std::to_string(step));

    rec.mean_exploitability = rec.per_game_exploitability.mean();
    rec.grad_norm = grad.norm();
    out.params.flat = update_params(out.params.flat, grad, lr, cfg.grad_clip);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    out.history.push_back(std::move(rec));
  }
  return out;
}

}  // namespace metapop
