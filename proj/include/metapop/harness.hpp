#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "metapop/es.hpp"

namespace metapop {

// Everything a run needs, with defaults per game kind (paper-scale or the
// scaled-down desk profile) overridable from a flat key = value config file.
struct ExperimentConfig {
  GameConfig game;
  std::string external_matrix_path;

  SolverVariant solver = SolverVariant::kLearned;
  SolverArch arch = SolverArch::kMlp;
  int hidden = 64;
  int nash_fp_iterations = 10000;

  OracleConfig br_oracle;
  OracleConfig exploit_oracle;
  bool exact_exploitability = false;

  int psro_iterations = 10;
  int window_size = 3;

  TrainMode trainer_mode = TrainMode::kEs;
  EsConfig es;
  double outer_lr = 0.01;
  int meta_steps = 100;
  int meta_batch = 5;
  double grad_clip = 1.0;
  int lr_schedule_step = 0;
  double lr_schedule_gamma = 1.0;
  double implicit_lambda = 1e-3;
  double stationarity_tol = 1e-3;
  int max_inner_steps = 2000;

  int eval_tasks = 20;
};

ExperimentConfig default_config(GameKind kind, bool desk_profile);

// Parses `key = value` lines ('#' comments); unknown keys are rejected.
ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                   bool desk_profile);

TrainConfig make_train_config(const ExperimentConfig& cfg);
PsroConfig make_psro_config(const ExperimentConfig& cfg);

// --- persistence --------------------------------------------------------------

void save_checkpoint(const MetaSolverParams& params,
                     const std::filesystem::path& path);
MetaSolverParams load_checkpoint(const std::filesystem::path& path);

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix_csv(const std::filesystem::path& path);

GameInstance load_payoff_csv(const std::filesystem::path& path);

inline constexpr const char* kResultsHeader =
    "run_id,seed,game_kind,game_seed,solver,iteration,exploitability";

struct ResultsRow {
  std::string run_id;
  uint64_t seed = 0;
  std::string game_kind;
  uint64_t game_seed = 0;
  std::string solver;
  int iteration = 0;
  double exploitability = 0.0;
};

void write_results_csv(const std::vector<ResultsRow>& rows,
                       const std::filesystem::path& path);

// --- command line ---------------------------------------------------------------

// Exit codes: 0 ok, 2 config error, 3 numeric/runtime failure,
// 4 gradcheck failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace metapop
