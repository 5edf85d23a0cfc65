#pragma once

#include <functional>

#include "metapop/metagrad.hpp"
#include "metapop/psro.hpp"

namespace metapop {

enum class ControlVariate { kNone, kForwardFd };

struct EsConfig {
  int n_perturb = 30;  // Gaussian perturbations per estimate
  double sigma = 0.1;
  bool antithetic = true;  // pair +eps with -eps (n_perturb must be even)
  ControlVariate control = ControlVariate::kForwardFd;
};

void validate(const EsConfig& cfg);

// Zero-order gradient estimate of an arbitrary objective. The i-th
// perturbation is drawn from a stream seeded by (seed, i), so the averaged
// estimate is independent of evaluation order.
Vector es_gradient(const std::function<double(const Vector&)>& objective,
                   const Vector& theta, const EsConfig& cfg, uint64_t seed);

// theta - lr * g, with g rescaled onto the clip sphere when its norm
// exceeds `clip` (clip <= 0 disables clipping).
Vector update_params(const Vector& theta, const Vector& grad, double lr,
                     double clip);

enum class TrainMode { kEs, kDirect, kImplicit };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  GameConfig game;
  SolverArch arch = SolverArch::kMlp;
  int hidden = 64;
  PsroConfig psro;  // rollouts used to evaluate exploitability
  TrainMode mode = TrainMode::kEs;
  EsConfig es;
  MetaGradConfig metagrad;  // direct / implicit modes
  double outer_lr = 0.01;
  int meta_steps = 100;
  int meta_batch = 5;  // games per meta-step
  double grad_clip = 1.0;
  int lr_schedule_step = 0;  // 0 disables the step decay
  double lr_schedule_gamma = 1.0;
};

void validate(const TrainConfig& cfg);

struct StepRecord {
  int step = 0;
  double mean_exploitability = 0.0;
  Vector per_game_exploitability;
  double grad_norm = 0.0;
  double wall_ms = 0.0;  // never serialized; results stay bit-reproducible
};

using TrainHistory = std::vector<StepRecord>;

struct TrainResult {
  MetaSolverParams params;
  TrainHistory history;
};

// Full outer loop: sample a meta-batch of games, estimate the meta-gradient
// (zero-order or via the tape), and descend. Reproducible from (cfg, seed).
TrainResult train(const TrainConfig& cfg, uint64_t seed);

// Exploitability after a full PSRO run of `cfg.psro` on `game`; the
// objective the trainer minimizes.
double psro_exploitability_objective(const MetaSolverParams& params,
                                     const GameInstance& game,
                                     const PsroConfig& cfg, uint64_t seed);

}  // namespace metapop
