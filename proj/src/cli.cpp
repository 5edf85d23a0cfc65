#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include "metapop/check.hpp"
#include "metapop/harness.hpp"

namespace metapop {

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%F %T", std::gmtime(&t));
  return buf;
}

// Timestamps are confined to this sidecar so result files stay
// byte-reproducible.
class RunLog {
 public:
  RunLog(const std::filesystem::path& dir) : out_(dir / "run.log") {}
  void line(const std::string& msg) { out_ << timestamp() << " " << msg << "\n"; }

 private:
  std::ofstream out_;
};

struct CommonArgs {
  std::string config;
  std::string out_dir = "out";
  std::string profile = "desk";
  std::string checkpoint;
  std::string dims = "30,50";
  uint64_t seed = 0;
};

ExperimentConfig load_config(const CommonArgs& args) {
  require(args.profile == "desk" || args.profile == "paper",
          "profile must be desk or paper");
  require(!args.config.empty(), "missing --config");
  return parse_config_file(args.config, args.profile == "desk");
}

GameInstance make_task(const ExperimentConfig& cfg, uint64_t game_seed) {
  if (cfg.game.kind == GameKind::kExternalMatrix) {
    require(!cfg.external_matrix_path.empty(),
            "external_matrix_path is required for external_matrix games");
    GameInstance game = load_payoff_csv(cfg.external_matrix_path);
    game.seed = game_seed;
    return game;
  }
  return sample_game(cfg.game, game_seed);
}

std::vector<ResultsRow> psro_rows(const ExperimentConfig& cfg,
                                  const std::string& run_id, uint64_t seed,
                                  const MetaSolverFn& solver,
                                  const std::string& solver_name,
                                  int task_count) {
  const PsroConfig psro = make_psro_config(cfg);
  std::vector<ResultsRow> rows;
  for (int i = 0; i < task_count; ++i) {
    const uint64_t game_seed = derive_seed(seed, 0xe7a1, i);
    const GameInstance game = make_task(cfg, game_seed);
    const PsroOutcome outcome =
        run_psro(game, solver, psro, derive_seed(seed, 0x2b, i), true);
    for (size_t t = 0; t < outcome.curve.size(); ++t) {
      ResultsRow r;
      r.run_id = run_id;
      r.seed = seed;
      r.game_kind = kind_name(game.kind);
      r.game_seed = game_seed;
      r.solver = solver_name;
      r.iteration = static_cast<int>(t);
      r.exploitability = outcome.curve[t];
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void write_train_history_csv(const TrainHistory& history,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "history csv: cannot write " + path.string());
  out << "step,mean_exploitability,grad_norm\n";
  char buf[160];
  for (const StepRecord& rec : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g", rec.step,
                  rec.mean_exploitability, rec.grad_norm);
    out << buf << "\n";
  }
}

int cmd_train(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load_config(args);
  std::filesystem::create_directories(args.out_dir);
  RunLog log(args.out_dir);
  log.line("train start, seed " + std::to_string(args.seed));

  const TrainConfig tc = make_train_config(cfg);
  const TrainResult result = train(tc, args.seed);

  save_checkpoint(result.params, std::filesystem::path(args.out_dir) / "checkpoint.json");
  write_train_history_csv(result.history,
                          std::filesystem::path(args.out_dir) / "train_history.csv");
  double total_ms = 0.0;
  for (const StepRecord& rec : result.history) total_ms += rec.wall_ms;
  log.line("train done in " + std::to_string(total_ms) + " ms");
  if (!result.history.empty())
    out << "final mean exploitability "
        << result.history.back().mean_exploitability << "\n";
  out << "wrote " << args.out_dir << "/checkpoint.json and train_history.csv\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load_config(args);
  require(!args.checkpoint.empty(), "missing --checkpoint");
  std::filesystem::create_directories(args.out_dir);
  RunLog log(args.out_dir);
  log.line("eval start");

  const MetaSolverParams params = load_checkpoint(args.checkpoint);
  const std::string run_id = "eval-" + kind_name(cfg.game.kind);
  const std::vector<ResultsRow> rows =
      psro_rows(cfg, run_id, args.seed, make_solver_fn(params), "learned",
                cfg.eval_tasks);
  write_results_csv(rows, std::filesystem::path(args.out_dir) / "results.csv");
  log.line("eval done");
  out << "wrote " << args.out_dir << "/results.csv (" << rows.size()
      << " rows)\n";
  return 0;
}

int cmd_baselines(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load_config(args);
  std::filesystem::create_directories(args.out_dir);
  RunLog log(args.out_dir);
  log.line("baselines start");

  const std::string run_id = "baselines-" + kind_name(cfg.game.kind);
  std::vector<ResultsRow> rows;
  for (SolverVariant variant : {SolverVariant::kUniform, SolverVariant::kNash,
                                SolverVariant::kLastAgent}) {
    SolverSpec spec;
    spec.variant = variant;
    spec.fp_iters = cfg.nash_fp_iterations;
    const auto block =
        psro_rows(cfg, run_id, args.seed, make_solver_fn(spec),
                  solver_variant_name(variant), cfg.eval_tasks);
    rows.insert(rows.end(), block.begin(), block.end());
  }
  write_results_csv(rows, std::filesystem::path(args.out_dir) / "baselines.csv");
  log.line("baselines done");
  out << "wrote " << args.out_dir << "/baselines.csv (" << rows.size()
      << " rows)\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, std::ostream& out) {
  ExperimentConfig cfg = load_config(args);
  require(cfg.game.kind == GameKind::kGos,
          "sweep: dimension generalization is defined for gos games");
  require(!args.checkpoint.empty(), "missing --checkpoint");
  std::filesystem::create_directories(args.out_dir);
  RunLog log(args.out_dir);
  log.line("sweep start");

  std::vector<int> dims;
  {
    std::stringstream ss(args.dims);
    std::string tok;
    while (std::getline(ss, tok, ',')) dims.push_back(std::stoi(tok));
    require(!dims.empty(), "sweep: --dims is empty");
  }

  const MetaSolverParams params = load_checkpoint(args.checkpoint);
  std::vector<ResultsRow> rows;
  std::ofstream summary(std::filesystem::path(args.out_dir) / "sweep.csv");
  summary << "dim,solver,mean_final_exploitability,std_final_exploitability\n";

  for (int dim : dims) {
    cfg.game.gos_dim = dim;
    struct Entry {
      std::string name;
      MetaSolverFn fn;
    };
    std::vector<Entry> entries;
    entries.push_back({"learned", make_solver_fn(params)});
    SolverSpec uniform{SolverVariant::kUniform};
    SolverSpec nash{SolverVariant::kNash, SolverArch::kMlp,
                    cfg.nash_fp_iterations};
    entries.push_back({"uniform", make_solver_fn(uniform)});
    entries.push_back({"nash", make_solver_fn(nash)});
    for (const Entry& entry : entries) {
      const auto block = psro_rows(cfg, "sweep-dim" + std::to_string(dim),
                                   args.seed, entry.fn, entry.name,
                                   cfg.eval_tasks);
      // Final-iteration summary per dimension.
      double mean = 0.0, sq = 0.0;
      int count = 0;
      for (const ResultsRow& r : block) {
        if (r.iteration != cfg.psro_iterations) continue;
        mean += r.exploitability;
        sq += r.exploitability * r.exploitability;
        ++count;
      }
      mean /= count;
      const double var = std::max(0.0, sq / count - mean * mean);
      char buf[128];
      std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g", dim,
                    entry.name.c_str(), mean, std::sqrt(var));
      summary << buf << "\n";
      rows.insert(rows.end(), block.begin(), block.end());
    }
  }
  write_results_csv(rows,
                    std::filesystem::path(args.out_dir) / "sweep_results.csv");
  log.line("sweep done");
  out << "wrote " << args.out_dir << "/sweep.csv and sweep_results.csv\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"meta-game auto-curricula: train, evaluate and compare "
               "population-based game solvers"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&common](CLI::App* cmd) {
    cmd->add_option("--config", common.config, "experiment config file");
    cmd->add_option("--seed", common.seed, "run seed");
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--profile", common.profile, "defaults profile: desk|paper");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a meta-solver");
  add_common(train_cmd);
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on held-out games");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", common.checkpoint, "checkpoint path");
  CLI::App* base_cmd = app.add_subcommand(
      "baselines", "run the game-theoretic baselines on held-out games");
  add_common(base_cmd);
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "evaluate a gos checkpoint across game dimensions");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--checkpoint", common.checkpoint, "checkpoint path");
  sweep_cmd->add_option("--dims", common.dims, "comma-separated dimensions");
  CLI::App* check_cmd =
      app.add_subcommand("gradcheck", "run the meta-gradient validation suite");
  (void)check_cmd;

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(common, out);
    if (app.got_subcommand("eval")) return cmd_eval(common, out);
    if (app.got_subcommand("baselines")) return cmd_baselines(common, out);
    if (app.got_subcommand("sweep")) return cmd_sweep(common, out);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(out) ? 0 : 4;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    err << "runtime error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace metapop
