#include "metapop/harness.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "metapop/check.hpp"

namespace metapop {

namespace {

using nlohmann::json;

// Scaled-down defaults used when --profile desk is active; the paper-scale
// numbers follow the hyperparameter tables that ship with each game.
void apply_gos(ExperimentConfig& c, bool desk) {
  c.game.gos_dim = desk ? 20 : 200;
  c.arch = SolverArch::kMlp;
  c.hidden = desk ? 16 : 64;
  c.psro_iterations = desk ? 10 : 20;
  c.window_size = desk ? 3 : 5;
  c.br_oracle.method = OracleMethod::kGradDescent;
  c.br_oracle.lr = 25.0;
  c.br_oracle.steps = 5;
  c.exploit_oracle.method = OracleMethod::kGradDescent;
  c.exploit_oracle.lr = 10.0;
  c.exploit_oracle.steps = desk ? 10 : 20;
  c.exact_exploitability = desk;
  c.trainer_mode = desk ? TrainMode::kEs : TrainMode::kDirect;
  c.es.n_perturb = desk ? 16 : 30;
  c.outer_lr = 0.01;
  c.meta_steps = 100;
  c.meta_batch = 5;
  c.grad_clip = 1.0;
}

void apply_lotto(ExperimentConfig& c, bool desk) {
  c.game.lotto_customers = 9;
  c.game.lotto_servers = desk ? 16 : 500;
  c.arch = SolverArch::kMlp;
  c.hidden = desk ? 16 : 64;
  c.psro_iterations = desk ? 10 : 20;
  c.window_size = desk ? 3 : 5;
  c.br_oracle.method = OracleMethod::kGradDescent;
  c.br_oracle.lr = 20.0;
  c.br_oracle.steps = desk ? 10 : 20;
  c.exploit_oracle.method = OracleMethod::kGradDescent;
  c.exploit_oracle.lr = 20.0;
  c.exploit_oracle.steps = desk ? 15 : 30;
  c.trainer_mode = TrainMode::kDirect;
  c.outer_lr = 0.001;
  c.meta_steps = desk ? 50 : 100;
  c.meta_batch = 5;
  c.grad_clip = 1.0;
}

void apply_rps2d(ExperimentConfig& c, bool desk) {
  c.arch = SolverArch::kMlp;
  c.hidden = desk ? 16 : 64;
  c.psro_iterations = desk ? 8 : 15;
  c.window_size = desk ? 4 : 9;
  c.br_oracle.method = OracleMethod::kGradDescent;
  c.br_oracle.lr = 2.0;
  c.br_oracle.steps = 5;
  c.exploit_oracle.method = OracleMethod::kGradDescent;
  c.exploit_oracle.lr = 2.0;
  c.exploit_oracle.steps = desk ? 10 : 20;
  c.trainer_mode = TrainMode::kDirect;
  c.outer_lr = 0.007;
  c.meta_steps = desk ? 50 : 400;
  c.meta_batch = desk ? 4 : 8;
  c.grad_clip = 2.0;
  c.lr_schedule_step = desk ? 25 : 100;
  c.lr_schedule_gamma = 0.3;
  c.stationarity_tol = 1e-3;
  c.max_inner_steps = desk ? 2000 : 5000;
}

void apply_imp(ExperimentConfig& c, bool desk) {
  c.arch = SolverArch::kGru;
  c.hidden = desk ? 8 : 64;
  c.psro_iterations = desk ? 6 : 9;
  c.window_size = 3;
  c.br_oracle.method = OracleMethod::kReinforce;
  c.br_oracle.lr = 10.0;
  c.br_oracle.steps = 10;
  c.br_oracle.batch = desk ? 16 : 32;
  // Deviation gains are measured on the exact expected return.
  c.exploit_oracle.method = OracleMethod::kGradDescent;
  c.exploit_oracle.lr = 10.0;
  c.exploit_oracle.steps = 20;
  c.trainer_mode = TrainMode::kEs;
  c.es.n_perturb = desk ? 16 : 30;
  c.outer_lr = 0.05;
  c.meta_steps = 50;
  c.meta_batch = desk ? 4 : 8;
  c.grad_clip = 1.0;
}

void apply_kuhn(ExperimentConfig& c, bool desk) {
  c.arch = SolverArch::kConv1d;
  c.hidden = 64;
  c.psro_iterations = 15;
  c.window_size = 3;
  c.br_oracle.method = OracleMethod::kKuhnApproxV1;
  c.exploit_oracle.method = OracleMethod::kKuhnExact;
  c.trainer_mode = TrainMode::kEs;
  c.es.n_perturb = desk ? 16 : 30;
  c.outer_lr = 0.1;
  c.meta_steps = desk ? 50 : 100;
  c.meta_batch = desk ? 3 : 5;
  c.grad_clip = 1.0;
  c.lr_schedule_step = 50;
  c.lr_schedule_gamma = 0.5;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int out = std::stoi(v, &pos);
    require(pos == v.size(), "trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    require(pos == v.size(), "trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

void apply_key(ExperimentConfig& c, const std::string& key,
               const std::string& value) {
  if (key == "game_kind") c.game.kind = kind_from_name(value);
  else if (key == "gos_dim") c.game.gos_dim = parse_int(value, key);
  else if (key == "gos_sigma_w") c.game.gos_sigma_w = parse_double(value, key);
  else if (key == "gos_sigma_s") c.game.gos_sigma_s = parse_double(value, key);
  else if (key == "lotto_customers") c.game.lotto_customers = parse_int(value, key);
  else if (key == "lotto_servers") c.game.lotto_servers = parse_int(value, key);
  else if (key == "rps2d_bandwidth") c.game.rps2d_bandwidth = parse_double(value, key);
  else if (key == "rps2d_ring_radius") c.game.rps2d_ring_radius = parse_double(value, key);
  else if (key == "rps2d_center_jitter") c.game.rps2d_center_jitter = parse_double(value, key);
  else if (key == "imp_horizon") c.game.imp_horizon = parse_int(value, key);
  else if (key == "external_matrix_path") c.external_matrix_path = value;
  else if (key == "solver") c.solver = solver_variant_from_name(value);
  else if (key == "model_type") c.arch = arch_from_name(value);
  else if (key == "hidden_size") c.hidden = parse_int(value, key);
  else if (key == "nash_fp_iterations") c.nash_fp_iterations = parse_int(value, key);
  else if (key == "oracle") c.br_oracle.method = oracle_from_name(value);
  else if (key == "oracle_init")
    c.br_oracle.init = value == "zeros" ? OracleInit::kZeros : OracleInit::kRandom;
  else if (key == "inner_lr") c.br_oracle.lr = parse_double(value, key);
  else if (key == "inner_steps") c.br_oracle.steps = parse_int(value, key);
  else if (key == "reinforce_batch") c.br_oracle.batch = parse_int(value, key);
  else if (key == "exploit_oracle") c.exploit_oracle.method = oracle_from_name(value);
  else if (key == "exploit_lr") c.exploit_oracle.lr = parse_double(value, key);
  else if (key == "exploit_steps") c.exploit_oracle.steps = parse_int(value, key);
  else if (key == "exact_exploitability") c.exact_exploitability = parse_bool(value, key);
  else if (key == "psro_iterations") c.psro_iterations = parse_int(value, key);
  else if (key == "window_size") c.window_size = parse_int(value, key);
  else if (key == "trainer_mode") c.trainer_mode = train_mode_from_name(value);
  else if (key == "es_perturbations") c.es.n_perturb = parse_int(value, key);
  else if (key == "es_sigma") c.es.sigma = parse_double(value, key);
  else if (key == "antithetic") c.es.antithetic = parse_bool(value, key);
  else if (key == "control_variate") {
    if (value == "none") c.es.control = ControlVariate::kNone;
    else if (value == "forward_fd") c.es.control = ControlVariate::kForwardFd;
    else throw std::invalid_argument("config: bad control_variate: " + value);
  } else if (key == "outer_lr") c.outer_lr = parse_double(value, key);
  else if (key == "meta_steps") c.meta_steps = parse_int(value, key);
  else if (key == "meta_batch_size") c.meta_batch = parse_int(value, key);
  else if (key == "gradient_clip") c.grad_clip = parse_double(value, key);
  else if (key == "lr_schedule_step") c.lr_schedule_step = parse_int(value, key);
  else if (key == "lr_schedule_gamma") c.lr_schedule_gamma = parse_double(value, key);
  else if (key == "implicit_lambda") c.implicit_lambda = parse_double(value, key);
  else if (key == "stationarity_tol") c.stationarity_tol = parse_double(value, key);
  else if (key == "max_inner_steps") c.max_inner_steps = parse_int(value, key);
  else if (key == "eval_tasks") c.eval_tasks = parse_int(value, key);
  else throw std::invalid_argument("config: unknown key: " + key);
}

}  // namespace

ExperimentConfig default_config(GameKind kind, bool desk_profile) {
  ExperimentConfig c;
  c.game.kind = kind;
  switch (kind) {
    case GameKind::kGos: apply_gos(c, desk_profile); break;
    case GameKind::kLotto: apply_lotto(c, desk_profile); break;
    case GameKind::kRps2d: apply_rps2d(c, desk_profile); break;
    case GameKind::kImp: apply_imp(c, desk_profile); break;
    case GameKind::kKuhn: apply_kuhn(c, desk_profile); break;
    case GameKind::kExternalMatrix: apply_gos(c, desk_profile); break;
  }
  return c;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                   bool desk_profile) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path.string());

  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "config: line " + std::to_string(line_no) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(),
            "config: empty key or value at line " + std::to_string(line_no));
    entries.emplace_back(key, value);
  }

  // The game kind picks the defaults; every other key overrides them.
  GameKind kind = GameKind::kGos;
  for (const auto& [key, value] : entries)
    if (key == "game_kind") kind = kind_from_name(value);
  ExperimentConfig cfg = default_config(kind, desk_profile);
  for (const auto& [key, value] : entries) apply_key(cfg, key, value);
  return cfg;
}

PsroConfig make_psro_config(const ExperimentConfig& cfg) {
  PsroConfig p;
  p.iterations = cfg.psro_iterations;
  p.br = cfg.br_oracle;
  p.exploit.oracle = cfg.exploit_oracle;
  p.exploit.exact_nfg = cfg.exact_exploitability;
  return p;
}

TrainConfig make_train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.game = cfg.game;
  t.arch = cfg.arch;
  t.hidden = cfg.hidden;
  t.psro = make_psro_config(cfg);
  t.mode = cfg.trainer_mode;
  t.es = cfg.es;
  t.metagrad.iterations = cfg.psro_iterations;
  t.metagrad.window = cfg.window_size;
  t.metagrad.oracle = cfg.br_oracle;
  t.metagrad.mode = cfg.trainer_mode == TrainMode::kImplicit
                        ? MetaGradMode::kImplicit
                        : MetaGradMode::kDirect;
  t.metagrad.lambda = cfg.implicit_lambda;
  t.metagrad.stationarity_tol = cfg.stationarity_tol;
  t.metagrad.max_inner_steps = cfg.max_inner_steps;
  t.outer_lr = cfg.outer_lr;
  t.meta_steps = cfg.meta_steps;
  t.meta_batch = cfg.meta_batch;
  t.grad_clip = cfg.grad_clip;
  t.lr_schedule_step = cfg.lr_schedule_step;
  t.lr_schedule_gamma = cfg.lr_schedule_gamma;
  return t;
}

// --- persistence ----------------------------------------------------------------

namespace {

std::vector<int> layer_sizes(SolverArch arch, int hidden) {
  switch (arch) {
    case SolverArch::kMlp: return {hidden, hidden, 2 * hidden, 1};
    case SolverArch::kConv1d: return {8, 1, 8, 1};
    case SolverArch::kGru: return {hidden, hidden, hidden, 1};
  }
  throw std::invalid_argument("unknown solver arch");
}

}  // namespace

void save_checkpoint(const MetaSolverParams& params,
                     const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = 1;
  doc["arch"] = arch_name(params.arch);
  doc["hidden"] = params.hidden;
  doc["layer_sizes"] = layer_sizes(params.arch, params.hidden);
  doc["flat_params"] =
      std::vector<double>(params.flat.data(), params.flat.data() + params.flat.size());
  std::ofstream out(path);
  require(out.good(), "checkpoint: cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

MetaSolverParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "checkpoint: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::invalid_argument("checkpoint: parse failure: " +
                                std::string(e.what()));
  }
  require(doc.contains("format_version") && doc["format_version"] == 1,
          "checkpoint: format_version mismatch");
  MetaSolverParams params;
  params.arch = arch_from_name(doc.at("arch").get<std::string>());
  params.hidden = doc.at("hidden").get<int>();
  const auto flat = doc.at("flat_params").get<std::vector<double>>();
  require(static_cast<int>(flat.size()) ==
              solver_param_count(params.arch, params.hidden),
          "checkpoint: flat_params length does not match the architecture");
  params.flat = Eigen::Map<const Vector>(flat.data(), flat.size());
  require(params.flat.allFinite(), "checkpoint: non-finite parameters");
  return params;
}

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "matrix csv: cannot write " + path.string());
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << buf << (j + 1 < m.cols() ? "," : "");
    }
    out << "\n";
  }
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "matrix csv: cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      try {
        size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        require(pos == cell.size(), "trailing characters");
      } catch (const std::exception&) {
        throw std::invalid_argument("matrix csv: non-numeric cell at line " +
                                    std::to_string(line_no) + ": " + cell);
      }
    }
    require(rows.empty() || row.size() == rows.front().size(),
            "matrix csv: ragged row at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "matrix csv: empty file");
  Matrix m(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

GameInstance load_payoff_csv(const std::filesystem::path& path) {
  const Matrix a = load_matrix_csv(path);
  require(a.rows() == a.cols(),
          "payoff csv: matrix must be square, got " + std::to_string(a.rows()) +
              "x" + std::to_string(a.cols()));
  return make_external_matrix(a);
}

void write_results_csv(const std::vector<ResultsRow>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "results csv: cannot write " + path.string());
  out << kResultsHeader << "\n";
  char buf[64];
  for (const ResultsRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.exploitability);
    out << r.run_id << "," << r.seed << "," << r.game_kind << ","
        << r.game_seed << "," << r.solver << "," << r.iteration << "," << buf
        << "\n";
  }
}

}  // namespace metapop
