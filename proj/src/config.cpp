#include "metastrat/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace metastrat {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ValidationError("invalid value for '" + key + "': '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ValidationError("invalid value for '" + key + "': '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    unsigned long long x = std::stoull(value, &used);
    if (used != value.size() || value.find('-') != std::string::npos)
      throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ValidationError("invalid value for '" + key + "': '" + value + "'");
  }
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string token;
  while (in >> token) out.push_back(parse_double(key, token));
  if (out.empty())
    throw ValidationError("invalid value for '" + key + "': empty list");
  return out;
}

std::vector<std::vector<double>> parse_double_rows(const std::string& key,
                                                   const std::string& value) {
  std::vector<std::vector<double>> rows;
  std::string row;
  std::istringstream in(value);
  while (std::getline(in, row, ';')) {
    row = trim(row);
    if (row.empty())
      throw ValidationError("invalid value for '" + key + "': empty row");
    rows.push_back(parse_double_list(key, row));
  }
  if (rows.empty())
    throw ValidationError("invalid value for '" + key + "': empty list");
  return rows;
}

}  // namespace

std::string algorithm_name(AlgorithmKind algorithm) {
  switch (algorithm) {
    case AlgorithmKind::kPredict: return "predict";
    case AlgorithmKind::kThompson: return "thompson";
    case AlgorithmKind::kBayesOpt: return "bayesopt";
  }
  throw ValidationError("unknown algorithm");
}

AlgorithmKind parse_algorithm(const std::string& name) {
  if (name == "predict") return AlgorithmKind::kPredict;
  if (name == "thompson") return AlgorithmKind::kThompson;
  if (name == "bayesopt") return AlgorithmKind::kBayesOpt;
  throw ValidationError("invalid value for 'algorithm': '" + name + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": missing key");
    if (!seen.insert(key).second)
      throw ValidationError("duplicate key '" + key + "'");

    if (key == "algorithm") cfg.algorithm = parse_algorithm(value);
    else if (key == "task") {
      if (value != "dirichlet" && value != "coins" && value != "bandit")
        throw ValidationError("invalid value for 'task': '" + value + "'");
      cfg.task = value;
    }
    else if (key == "symbols") cfg.symbols = static_cast<int>(parse_int(key, value));
    else if (key == "concentration") cfg.concentration = parse_double_list(key, value);
    else if (key == "thetas") cfg.thetas = parse_double_rows(key, value);
    else if (key == "prior") cfg.prior = parse_double_list(key, value);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "horizon") cfg.horizon = static_cast<int>(parse_int(key, value));
    else if (key == "batches") cfg.batches = static_cast<int>(parse_int(key, value));
    else if (key == "hidden") cfg.hidden = static_cast<int>(parse_int(key, value));
    else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
    else if (key == "beta_start") cfg.beta_start = parse_double(key, value);
    else if (key == "beta_max") cfg.beta_max = parse_double(key, value);
    else if (key == "beta_tau") cfg.beta_tau = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_int(key, value));
    else if (key == "eval_rollouts") cfg.eval_rollouts = static_cast<int>(parse_int(key, value));
    else if (key == "early_stop_delta") cfg.early_stop_delta = parse_double(key, value);
    else if (key == "early_stop_window") cfg.early_stop_window = static_cast<int>(parse_int(key, value));
    else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(parse_int(key, value));
    else throw ValidationError("unknown key '" + key + "'");
  }
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

void validate_run_config(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
  };
  require(cfg.symbols >= 2, "'symbols' must be >= 2");
  require(cfg.batch_size >= 1, "'batch_size' must be >= 1");
  require(cfg.horizon >= 1, "'horizon' must be >= 1");
  require(cfg.batches >= 1, "'batches' must be >= 1");
  require(cfg.hidden >= 1, "'hidden' must be >= 1");
  require(cfg.learning_rate > 0, "'learning_rate' must be > 0");
  require(cfg.beta_start >= 0, "'beta_start' must be >= 0");
  require(cfg.beta_max >= cfg.beta_start,
          "'beta_max' must be >= 'beta_start'");
  require(cfg.beta_tau >= 0, "'beta_tau' must be >= 0");
  require(cfg.eval_every >= 1, "'eval_every' must be >= 1");
  require(cfg.eval_rollouts >= 1, "'eval_rollouts' must be >= 1");
  require(cfg.early_stop_delta >= 0, "'early_stop_delta' must be >= 0");
  require(cfg.early_stop_window >= 0, "'early_stop_window' must be >= 0");
  require(cfg.checkpoint_every >= 0, "'checkpoint_every' must be >= 0");

  bool bandit_task = cfg.task == "bandit";
  bool needs_bandit = cfg.algorithm != AlgorithmKind::kPredict;
  if (needs_bandit && !bandit_task)
    throw ValidationError("'" + algorithm_name(cfg.algorithm) +
                          "' needs task = bandit");
  if (!needs_bandit && bandit_task)
    throw ValidationError("'predict' needs task = dirichlet or coins");

  if (cfg.task == "dirichlet") {
    if (!cfg.concentration.empty() &&
        static_cast<int>(cfg.concentration.size()) != cfg.symbols)
      throw ValidationError("'concentration' size must equal 'symbols'");
    if (!cfg.thetas.empty())
      throw ValidationError("'thetas' does not apply to task = dirichlet");
  } else {
    if (cfg.thetas.empty())
      throw ValidationError("task = " + cfg.task + " needs 'thetas'");
    if (!cfg.prior.empty() && cfg.prior.size() != cfg.thetas.size())
      throw ValidationError("'prior' size must match the number of thetas");
  }
  // the class constructors check the per-row contents
  make_task(cfg);
}

std::unique_ptr<HypothesisClass> make_task(const RunConfig& cfg) {
  if (cfg.task == "dirichlet") {
    std::vector<double> conc = cfg.concentration;
    if (conc.empty()) conc.assign(cfg.symbols, 1.0);
    return std::make_unique<DirichletCategorical>(cfg.symbols, std::move(conc));
  }
  if (cfg.task == "coins") {
    bool biases = std::all_of(cfg.thetas.begin(), cfg.thetas.end(),
                              [](const auto& row) { return row.size() == 1; });
    std::vector<ProbVector> thetas;
    if (biases) {
      std::vector<double> b;
      for (const auto& row : cfg.thetas) b.push_back(row[0]);
      FiniteCoinSet coins = FiniteCoinSet::from_biases(b);
      for (int k = 0; k < coins.hypothesis_count(); ++k)
        thetas.push_back(ProbVector(coins.hypothesis(k).values));
    } else {
      for (const auto& row : cfg.thetas) thetas.push_back(ProbVector(row));
    }
    ProbVector prior = cfg.prior.empty()
                           ? ProbVector::uniform(static_cast<int>(thetas.size()))
                           : ProbVector(cfg.prior);
    return std::make_unique<FiniteCoinSet>(std::move(thetas), std::move(prior));
  }
  if (cfg.task == "bandit") {
    ProbVector prior =
        cfg.prior.empty()
            ? ProbVector::uniform(static_cast<int>(cfg.thetas.size()))
            : ProbVector(cfg.prior);
    return std::make_unique<BernoulliBanditSet>(cfg.thetas, std::move(prior));
  }
  throw ValidationError("invalid value for 'task': '" + cfg.task + "'");
}

}  // namespace metastrat
