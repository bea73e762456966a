#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "metastrat/analysis.hpp"
#include "metastrat/train.hpp"

namespace fs = std::filesystem;
using namespace metastrat;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << content;
}

// the stored snapshot must reproduce the run byte for byte, so a command
// line seed replaces any seed line in the text
std::string config_snapshot(const std::string& text,
                            std::optional<std::uint64_t> seed_override) {
  if (!seed_override) return text;
  std::string out;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::string stripped = line.substr(0, line.find('#'));
    size_t eq = stripped.find('=');
    if (eq != std::string::npos) {
      std::string key = stripped.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      if (key == "seed") continue;
    }
    out += line + "\n";
  }
  out += "seed = " + std::to_string(*seed_override) + "\n";
  return out;
}

std::string checkpoint_name(int batch, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_b%06d_s%llu.txt", batch,
                static_cast<unsigned long long>(seed));
  return buf;
}

void print_eval_report(const RunConfig& cfg, const EvalReport& rep,
                       std::ostream& out) {
  out << "algorithm: " << algorithm_name(cfg.algorithm) << "\n";
  out << "rollouts: " << rep.rollouts << "\n";
  switch (cfg.algorithm) {
    case AlgorithmKind::kPredict:
      out << "kl_mean: " << fmt(rep.kl_mean) << "\n";
      out << "kl_se: " << fmt(rep.kl_se) << "\n";
      out << "agent_log_loss: " << fmt(rep.agent_log_loss) << "\n";
      out << "oracle_log_loss: " << fmt(rep.oracle_log_loss) << "\n";
      break;
    case AlgorithmKind::kThompson:
      out << "tv_mean: " << fmt(rep.tv_mean) << "\n";
      out << "tv_se: " << fmt(rep.tv_se) << "\n";
      break;
    case AlgorithmKind::kBayesOpt:
      out << "agreement: " << fmt(rep.agreement) << "\n";
      out << "mean_return: " << fmt(rep.mean_return) << "\n";
      out << "oracle_return: " << fmt(rep.oracle_return) << "\n";
      out << "return_gap: " << fmt(rep.return_gap) << "\n";
      break;
  }
}

// the oracle measured against itself; pins the zero of each metric and the
// Monte Carlo spread of the planner's own return
EvalReport oracle_self_report(const RunConfig& cfg, const HypothesisClass& task,
                              int rollouts, RandomSource rng) {
  if (rollouts < 1) throw ValidationError("'rollouts' must be >= 1");
  EvalReport rep;
  rep.rollouts = rollouts;
  switch (cfg.algorithm) {
    case AlgorithmKind::kPredict: {
      double ll = 0.0;
      for (int r = 0; r < rollouts; ++r) {
        RandomSource rr = rng.split(r);
        Hypothesis hyp = task.sample_hypothesis(rr);
        Belief belief = prior_belief(task);
        std::vector<int> history;
        for (int t = 0; t < cfg.horizon; ++t) {
          ProbVector pred = mixture_predictive(belief, task, history);
          int symbol = task.sample_symbol(hyp, history, rr);
          ll += log_loss(pred, symbol);
          belief = posterior_update(belief, task, history, symbol);
          history.push_back(symbol);
        }
      }
      rep.kl_mean = 0.0;
      rep.kl_se = 0.0;
      rep.agent_log_loss = ll / (static_cast<double>(rollouts) * cfg.horizon);
      rep.oracle_log_loss = rep.agent_log_loss;
      break;
    }
    case AlgorithmKind::kThompson: {
      rep.tv_mean = 0.0;
      rep.tv_se = 0.0;
      break;
    }
    case AlgorithmKind::kBayesOpt: {
      BayesOptimalPlanner planner(task);
      Belief prior = prior_belief(task);
      rep.oracle_return = planner.value(prior, cfg.horizon);
      double total = 0.0;
      for (int r = 0; r < rollouts; ++r) {
        RandomSource rr = rng.split(r);
        Hypothesis hyp = task.sample_hypothesis(rr);
        Belief belief = prior;
        for (int t = 0; t < cfg.horizon; ++t) {
          std::vector<double> q = planner.q_values(belief, cfg.horizon - t);
          int action = 0;
          for (int a = 1; a < static_cast<int>(q.size()); ++a)
            if (q[a] > q[action]) action = a;
          int obs = task.sample_observation(hyp, action, rr);
          double reward = task.reward(action, obs);
          total += reward;
          belief = posterior_update(belief, task,
                                    Interaction{action, obs, reward});
        }
      }
      rep.agreement = 1.0;
      rep.mean_return = total / rollouts;
      rep.return_gap = rep.oracle_return - rep.mean_return;
      break;
    }
  }
  return rep;
}

Checkpoint load_checkpoint_for(const RunConfig& cfg,
                               const HypothesisClass& task,
                               const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path.string());
  NetShape expected = net_shape_for(cfg, task);
  if (ckpt.shape.input != expected.input ||
      ckpt.shape.output != expected.output)
    throw ValidationError("checkpoint shape does not match the config task");
  if (ckpt.mode != head_mode_for(cfg.algorithm))
    throw ValidationError("checkpoint head '" + head_mode_name(ckpt.mode) +
                          "' does not match algorithm '" +
                          algorithm_name(cfg.algorithm) + "'");
  return ckpt;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  std::string text = read_file(config_path);
  RunConfig cfg = parse_run_config(text);
  if (seed_override) cfg.seed = *seed_override;

  fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "config.txt", config_snapshot(text, seed_override));

  std::ofstream metrics(out / "metrics.csv", std::ios::binary);
  std::ofstream eval(out / "eval.csv", std::ios::binary);
  TrainSinks sinks;
  sinks.metrics = &metrics;
  sinks.eval = &eval;
  sinks.progress = &std::cout;
  sinks.on_checkpoint = [&](int batch, const Checkpoint& ckpt) {
    save_checkpoint(ckpt, (out / checkpoint_name(batch, cfg.seed)).string());
  };
  TrainResult res = train(cfg, sinks);
  std::cout << "final checkpoint: "
            << (out / checkpoint_name(res.batches_run, cfg.seed)).string()
            << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             int rollouts, const std::string& out_dir) {
  RunConfig cfg = parse_run_config(read_file(config_path));
  std::unique_ptr<HypothesisClass> task = make_task(cfg);
  // a stream disjoint from every training-time eval
  RandomSource rng = RandomSource(cfg.seed).split(1).split(cfg.batches);

  EvalReport rep;
  if (ckpt_path.empty()) {
    rep = oracle_self_report(cfg, *task, rollouts, rng);
  } else {
    Net net = net_from_checkpoint(load_checkpoint_for(cfg, *task, ckpt_path));
    rep = evaluate_against_oracle(net, cfg, *task, rollouts, rng);
  }
  std::ostringstream report;
  print_eval_report(cfg, rep, report);
  std::cout << report.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "eval_report.txt", report.str());
  }
  return 0;
}

int cmd_extract(const std::string& config_path, const std::string& ckpt_path,
                double delta, int depth, int probe, const std::string& out_dir) {
  RunConfig cfg = parse_run_config(read_file(config_path));
  std::unique_ptr<HypothesisClass> task = make_task(cfg);
  Net net = net_from_checkpoint(load_checkpoint_for(cfg, *task, ckpt_path));

  MemoryCloud cloud = enumerate_memory_cloud(net, depth);
  CloudProjection proj = project_cloud(cloud);
  StateMachine machine = extract_state_machine(net, depth, delta, probe);
  LatticeReference lattice = make_laplace_lattice(cloud.alphabet, depth);
  LatticeComparison cmp = compare_to_lattice(machine, lattice, depth);

  fs::path out(out_dir);
  fs::create_directories(out);

  auto history_text = [](const std::vector<int>& h) {
    std::string s;
    for (size_t i = 0; i < h.size(); ++i) {
      if (i > 0 && h[i] >= 10) s += '.';
      s += std::to_string(h[i]);
    }
    return s;
  };

  std::string cloud_csv = "history";
  int hidden = net.shape().hidden;
  for (int i = 0; i < hidden; ++i) cloud_csv += ",h" + std::to_string(i);
  for (int s = 0; s < cloud.alphabet; ++s)
    cloud_csv += ",p" + std::to_string(s);
  cloud_csv += ",state\n";
  for (size_t i = 0; i < cloud.records.size(); ++i) {
    const MemoryRecord& rec = cloud.records[i];
    cloud_csv += history_text(rec.history);
    for (double h : rec.memory) cloud_csv += "," + fmt(h);
    for (double p : rec.prediction) cloud_csv += "," + fmt(p);
    cloud_csv += "," + std::to_string(machine.record_state[i]) + "\n";
  }
  write_file(out / "memory_cloud.csv", cloud_csv);

  std::string proj_csv = "history,x,y\n";
  for (size_t i = 0; i < proj.coords.size(); ++i)
    proj_csv += history_text(cloud.records[i].history) + "," +
                fmt(proj.coords[i][0]) + "," + fmt(proj.coords[i][1]) + "\n";
  write_file(out / "projection.csv", proj_csv);

  write_file(out / "machine.dot", export_machine(machine));

  std::ostringstream rep;
  rep << "depth: " << depth << "\n";
  rep << "delta: " << fmt(delta) << "\n";
  rep << "probe_depth: " << probe << "\n";
  rep << "cloud_records: " << cloud.records.size() << "\n";
  rep << "variance_1: " << fmt(proj.var1) << "\n";
  rep << "variance_2: " << fmt(proj.var2) << "\n";
  rep << "rank_deficient: " << (proj.rank_deficient ? "yes" : "no") << "\n";
  rep << "machine_states: " << machine.states.size() << "\n";
  rep << "lattice_states: " << lattice.states.size() << "\n";
  rep << "bisimilar: " << (cmp.bisimilar ? "yes" : "no") << "\n";
  rep << "max_discrepancy: " << fmt(cmp.max_discrepancy) << "\n";
  rep << "conflicts: " << cmp.conflicts.size() << "\n";
  rep << "missing_transitions: " << cmp.missing.size() << "\n";
  for (const MachineState& s : machine.states) {
    rep << "state " << s.id << ": members " << s.members << " history '"
        << history_text(s.representative) << "' prediction";
    for (double p : s.prediction) rep << " " << fmt(p);
    rep << "\n";
  }
  write_file(out / "lattice_report.txt", rep.str());
  std::cout << rep.str();
  return 0;
}

struct SelfTestFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw SelfTestFailure(what);
}

int cmd_selftest() {
  int failures = 0;
  auto check = [&](const std::string& name, auto&& body) {
    try {
      body();
      std::cout << "ok: " << name << "\n";
    } catch (const std::exception& e) {
      std::cout << "FAIL: " << name << " (" << e.what() << ")\n";
      failures++;
    }
  };

  auto chained_marginal = [](const HypothesisClass& cls,
                             const std::vector<int>& seq) {
    Belief b = prior_belief(cls);
    double chained = 1.0;
    std::vector<int> prefix;
    for (int s : seq) {
      chained *= mixture_predictive(b, cls, prefix)[s];
      b = posterior_update(b, cls, prefix, s);
      prefix.push_back(s);
    }
    return chained;
  };

  check("coin mixture matches the brute-force marginal", [&] {
    FiniteCoinSet coins = FiniteCoinSet::from_biases({0.3, 0.7});
    for (int len = 1; len <= 6; ++len) {
      std::vector<double> all = brute_force_marginal(coins, len);
      for (size_t idx = 0; idx < all.size(); ++idx) {
        std::vector<int> seq(len);
        for (int i = 0; i < len; ++i)
          seq[i] = static_cast<int>(idx >> (len - 1 - i)) & 1;
        expect(std::abs(all[idx] - chained_marginal(coins, seq)) <= 1e-12,
               "mismatch at length " + std::to_string(len));
      }
    }
  });

  check("dirichlet mixture matches the brute-force marginal", [&] {
    DirichletCategorical cls(2, {1.0, 1.0});
    std::vector<double> all = brute_force_marginal(cls, 5);
    std::vector<int> seq{1, 0, 1, 1, 0};
    size_t idx = 0;
    for (int s : seq) idx = idx * 2 + s;
    expect(std::abs(all[idx] - chained_marginal(cls, seq)) <= 1e-12,
           "chain mismatch");
  });

  check("posterior dominance bound holds", [] {
    RandomSource rng(100);
    FiniteCoinSet coins = FiniteCoinSet::from_biases({0.2, 0.5, 0.8});
    for (int trial = 0; trial < 50; ++trial) {
      RandomSource tr = rng.split(trial);
      Hypothesis hyp = coins.sample_hypothesis(tr);
      std::vector<int> history;
      for (int t = 0; t < 10; ++t) {
        history.push_back(coins.sample_symbol(hyp, history, tr));
        DominanceReport rep =
            regret_dominance_check(coins, hyp.index, Trajectory{history});
        expect(rep.holds, "violated at step " + std::to_string(t));
      }
    }
  });

  check("planner value is monotone in horizon", [] {
    BernoulliBanditSet bandit({{0.9, 0.1}, {0.1, 0.9}},
                              ProbVector::uniform(2));
    BayesOptimalPlanner planner(bandit);
    Belief prior = prior_belief(bandit);
    double prev = 0.0;
    for (int h = 1; h <= 8; ++h) {
      double v = planner.value(prior, h);
      expect(v >= prev - 1e-12, "value dropped at horizon " +
                                    std::to_string(h));
      expect(v <= h + 1e-12, "value exceeds horizon");
      prev = v;
    }
  });

  check("intervened beliefs ignore the action", [] {
    BernoulliBanditSet bandit({{0.9, 0.1}, {0.1, 0.9}},
                              ProbVector::uniform(2));
    Belief b = prior_belief(bandit);
    b = posterior_update(b, bandit, Interaction{0, 1, 1.0});
    Belief same = intervene_action(b, 1);
    for (int i = 0; i < 2; ++i)
      expect(std::abs(b.weights()[i] - same.weights()[i]) == 0.0,
             "intervention changed the belief");
  });

  check("predictive distributions stay normalized", [] {
    DirichletCategorical cls(3, {0.5, 1.0, 2.0});
    RandomSource rng(7);
    Belief b = prior_belief(cls);
    std::vector<int> history;
    Hypothesis hyp = cls.sample_hypothesis(rng);
    for (int t = 0; t < 20; ++t) {
      ProbVector pred = mixture_predictive(b, cls, history);
      double sum = 0.0;
      for (int s = 0; s < pred.size(); ++s) sum += pred[s];
      expect(std::abs(sum - 1.0) <= 1e-12, "sum drifted");
      int symbol = cls.sample_symbol(hyp, history, rng);
      b = posterior_update(b, cls, history, symbol);
      history.push_back(symbol);
    }
  });

  if (failures > 0) {
    std::cout << failures << " check(s) failed\n";
    return 3;
  }
  std::cout << "all oracle checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learned sequential strategies against exact Bayesian "
               "references"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt_path;
  std::uint64_t seed_value = 0;
  int rollouts = 1000;
  double delta = 0.02;
  int depth = 5, probe = 3;

  CLI::App* train_cmd =
      app.add_subcommand("train", "train an agent and log metrics");
  train_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  CLI::Option* seed_opt = train_cmd->add_option(
      "--seed", seed_value, "override the seed from the config");

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "score a checkpoint against the Bayesian reference");
  eval_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  eval_cmd->add_option("--checkpoint", ckpt_path,
                       "checkpoint to score; omit for the oracle itself");
  eval_cmd->add_option("--rollouts", rollouts, "held-out rollouts");
  eval_cmd->add_option("--out", out_dir, "directory for eval_report.txt");

  CLI::App* extract_cmd = app.add_subcommand(
      "extract", "quantize a predictor's memory into a state machine");
  extract_cmd->add_option("--config", config_path, "run configuration file")
      ->required();
  extract_cmd->add_option("--checkpoint", ckpt_path, "prediction checkpoint")
      ->required();
  extract_cmd->add_option("--delta", delta, "behavioral merge tolerance");
  extract_cmd->add_option("--depth", depth, "history depth to enumerate");
  extract_cmd->add_option("--probe", probe, "continuation probe depth");
  extract_cmd->add_option("--out", out_dir, "output directory")->required();

  app.add_subcommand("oracle-selftest",
                     "run the Bayesian reference invariant checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      std::optional<std::uint64_t> seed_override;
      if (seed_opt->count() > 0) seed_override = seed_value;
      return cmd_train(config_path, out_dir, seed_override);
    }
    if (eval_cmd->parsed())
      return cmd_eval(config_path, ckpt_path, rollouts, out_dir);
    if (extract_cmd->parsed())
      return cmd_extract(config_path, ckpt_path, delta, depth, probe, out_dir);
    return cmd_selftest();
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
