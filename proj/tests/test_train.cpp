#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metastrat/train.hpp"

using namespace metastrat;

namespace {

RunConfig tiny_predict_config() {
  RunConfig cfg;
  cfg.algorithm = AlgorithmKind::kPredict;
  cfg.task = "dirichlet";
  cfg.symbols = 2;
  cfg.batch_size = 20;
  cfg.horizon = 6;
  cfg.batches = 60;
  cfg.hidden = 8;
  cfg.learning_rate = 3e-3;
  cfg.eval_every = 20;
  cfg.eval_rollouts = 64;
  cfg.early_stop_window = 0;
  cfg.seed = 7;
  return cfg;
}

RunConfig tiny_bandit_config(AlgorithmKind algorithm) {
  RunConfig cfg;
  cfg.algorithm = algorithm;
  cfg.task = "bandit";
  cfg.thetas = {{0.9, 0.1}, {0.1, 0.9}};
  cfg.batch_size = 20;
  cfg.horizon = 6;
  cfg.batches = 80;
  cfg.hidden = 8;
  cfg.learning_rate = 3e-3;
  cfg.eval_every = 20;
  cfg.eval_rollouts = 64;
  cfg.early_stop_window = 0;
  cfg.beta_start = 0.0;
  cfg.beta_max = 10.0;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("cooling schedule ramps from beta_start toward beta_max") {
  RunConfig cfg;
  cfg.batches = 100;
  cfg.beta_start = 0.0;
  cfg.beta_max = 20.0;
  cfg.beta_tau = 0.0;  // defaults to batches / 5 = 20
  CHECK(cooling_schedule(0, cfg) == doctest::Approx(0.0));
  double prev = -1.0;
  for (int k = 0; k <= 400; ++k) {
    double b = cooling_schedule(k, cfg);
    CHECK(b >= prev);
    CHECK(b <= cfg.beta_max);
    prev = b;
  }
  CHECK(cooling_schedule(400, cfg) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(cooling_schedule(20, cfg) ==
        doctest::Approx(20.0 * (1.0 - std::exp(-1.0))));

  cfg.beta_tau = 5.0;
  CHECK(cooling_schedule(5, cfg) ==
        doctest::Approx(20.0 * (1.0 - std::exp(-1.0))));
  cfg.beta_start = 2.0;
  CHECK(cooling_schedule(0, cfg) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cooling_schedule(-1, cfg), ValidationError);
}

TEST_CASE("interaction encoding is one-hot action, one-hot observation, reward") {
  BernoulliBanditSet task({{0.9, 0.1}, {0.1, 0.9}}, ProbVector::uniform(2));
  std::vector<double> blank = encode_interaction(task, nullptr);
  CHECK(blank == std::vector<double>{0.0, 0.0, 0.0, 0.0, 0.0});
  Interaction step{1, 0, 0.0};
  std::vector<double> enc = encode_interaction(task, &step);
  CHECK(enc == std::vector<double>{0.0, 1.0, 1.0, 0.0, 0.0});
  Interaction hit{0, 1, 1.0};
  enc = encode_interaction(task, &hit);
  CHECK(enc == std::vector<double>{1.0, 0.0, 0.0, 1.0, 1.0});
}

TEST_CASE("net shape follows task interface") {
  RunConfig cfg = tiny_predict_config();
  cfg.symbols = 3;
  cfg.hidden = 12;
  DirichletCategorical pred(3, {1.0, 1.0, 1.0});
  NetShape s = net_shape_for(cfg, pred);
  CHECK(s.input == 3);
  CHECK(s.hidden == 12);
  CHECK(s.output == 3);

  BernoulliBanditSet bandit({{0.9, 0.1}, {0.1, 0.9}}, ProbVector::uniform(2));
  cfg.hidden = 8;
  s = net_shape_for(cfg, bandit);
  CHECK(s.input == 5);  // 2 actions + 2 observations + reward
  CHECK(s.output == 2);

  CHECK(head_mode_for(AlgorithmKind::kPredict) == HeadMode::kPrediction);
  CHECK(head_mode_for(AlgorithmKind::kThompson) == HeadMode::kPolicy);
  CHECK(head_mode_for(AlgorithmKind::kBayesOpt) == HeadMode::kValue);
}

TEST_CASE("prediction rollout feeds back the sampled symbol") {
  DirichletCategorical task(2, {1.0, 1.0});
  RandomSource rng(11);
  Net net = Net::initialized(NetShape{2, 6, 2}, HeadMode::kPrediction, rng);
  RandomSource roll_rng = rng.split(1);
  Hypothesis hyp = task.sample_hypothesis(roll_rng);
  Rollout r = run_prediction_rollout(net, task, hyp, 5, roll_rng);
  REQUIRE(r.steps.size() == 5);
  REQUIRE(r.losses.size() == 5);
  CHECK(r.steps[0].input == std::vector<double>{0.0, 0.0});
  for (int t = 0; t < 5; ++t) {
    CHECK(r.losses[t].kind == LossRecord::Kind::kObserved);
    int sym = r.losses[t].symbol;
    CHECK(sym >= 0);
    CHECK(sym < 2);
    if (t > 0) {
      std::vector<double> expect(2, 0.0);
      expect[r.losses[t - 1].symbol] = 1.0;
      CHECK(r.steps[t].input == expect);
    }
  }
  CHECK(std::isfinite(rollout_loss(r, HeadMode::kPrediction)));
}

TEST_CASE("thompson rollout distills the sampled expert and acts from itself") {
  BernoulliBanditSet task({{0.9, 0.1}, {0.1, 0.9}}, ProbVector::uniform(2));
  RandomSource rng(3);
  Net net = Net::initialized(NetShape{5, 6, 2}, HeadMode::kPolicy, rng);
  RandomSource roll_rng = rng.split(9);
  Hypothesis hyp = task.sample_hypothesis(roll_rng);
  DecisionRollout out = run_thompson_rollout(net, task, hyp, 8, roll_rng);
  REQUIRE(out.tape.steps.size() == 8);
  REQUIRE(out.tape.losses.size() == 8);
  REQUIRE(out.interactions.size() == 8);

  ProbVector expert = task.expert_policy(hyp, {});
  double reward_sum = 0.0;
  for (int t = 0; t < 8; ++t) {
    const LossRecord& rec = out.tape.losses[t];
    CHECK(rec.kind == LossRecord::Kind::kDistill);
    REQUIRE(rec.target.size() == 2);
    // the expert for a fixed bandit hypothesis ignores history
    CHECK(rec.target[0] == doctest::Approx(expert[0]));
    CHECK(rec.target[1] == doctest::Approx(expert[1]));
    const Interaction& step = out.interactions[t];
    CHECK(step.reward == (step.observation == 1 ? 1.0 : 0.0));
    reward_sum += step.reward;
    if (t > 0) {
      std::vector<double> expect = encode_interaction(task,
                                                      &out.interactions[t - 1]);
      CHECK(out.tape.steps[t].input == expect);
    }
  }
  CHECK(out.total_reward == doctest::Approx(reward_sum));
  CHECK(std::isfinite(rollout_loss(out.tape, HeadMode::kPolicy)));
}

TEST_CASE("value rollout wires frozen one-step TD targets") {
  BernoulliBanditSet task({{0.9, 0.1}, {0.1, 0.9}}, ProbVector::uniform(2));
  RandomSource rng(5);
  Net net = Net::initialized(NetShape{5, 6, 2}, HeadMode::kValue, rng);
  RandomSource roll_rng = rng.split(4);
  Hypothesis hyp = task.sample_hypothesis(roll_rng);
  DecisionRollout out = run_value_rollout(net, task, hyp, 5, 2.0, false,
                                          roll_rng);
  REQUIRE(out.tape.losses.size() == 5);
  for (int t = 0; t < 5; ++t) {
    const LossRecord& rec = out.tape.losses[t];
    CHECK(rec.kind == LossRecord::Kind::kTd);
    CHECK(rec.action == out.interactions[t].action);
    double expect = out.interactions[t].reward;
    if (t + 1 < 5)
      expect += out.tape.steps[t + 1].output[out.interactions[t + 1].action];
    CHECK(rec.td_target.value == expect);
  }
  // frozen targets replay bitwise
  CHECK(replay_loss(net, out.tape) == rollout_loss(out.tape, HeadMode::kValue));

  RandomSource greedy_rng = rng.split(4);
  Hypothesis hyp2 = task.sample_hypothesis(greedy_rng);
  DecisionRollout g = run_value_rollout(net, task, hyp2, 5, 0.0, true,
                                        greedy_rng);
  for (int t = 0; t < 5; ++t) {
    const auto& q = g.tape.steps[t].output;
    int best = q[1] > q[0] ? 1 : 0;
    CHECK(g.interactions[t].action == best);
  }
}

TEST_CASE("uniform net scores log 2 per step against the coin oracle") {
  RunConfig cfg = tiny_predict_config();
  std::unique_ptr<HypothesisClass> task = make_task(cfg);
  Net net(net_shape_for(cfg, *task), HeadMode::kPrediction);  // all zeros
  EvalReport rep = evaluate_against_oracle(net, cfg, *task, 128,
                                           RandomSource(42));
  CHECK(rep.rollouts == 128);
  CHECK(rep.agent_log_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(rep.kl_mean > 0.0);
  CHECK(rep.kl_mean < 0.3);
  CHECK(rep.kl_se > 0.0);
  CHECK(rep.oracle_log_loss < rep.agent_log_loss);
  CHECK(rep.primary == rep.kl_mean);
}

TEST_CASE("predictor training reduces held-out KL and is reproducible") {
  RunConfig cfg = tiny_predict_config();
  std::ostringstream metrics_a, eval_a, metrics_b, eval_b;
  TrainSinks sinks_a;
  sinks_a.metrics = &metrics_a;
  sinks_a.eval = &eval_a;
  TrainResult res = train_predictor(cfg, sinks_a);

  CHECK(res.batches_run == 60);
  CHECK(!res.early_stopped);
  CHECK(std::isfinite(res.final_train_loss));
  CHECK(res.checkpoint.batches_done == 60);

  // held-out agent can beat the oracle on sampled symbols only by noise
  CHECK(res.final_eval.agent_log_loss >=
        res.final_eval.oracle_log_loss - 0.005);

  std::istringstream eval_lines(eval_a.str());
  std::string line;
  std::getline(eval_lines, line);
  CHECK(line == "batch,kl_mean,kl_se,agent_log_loss,oracle_log_loss");
  double first_kl = -1.0, last_kl = -1.0;
  while (std::getline(eval_lines, line)) {
    double kl = std::stod(line.substr(line.find(',') + 1));
    if (first_kl < 0.0) first_kl = kl;
    last_kl = kl;
  }
  CHECK(first_kl > 0.0);
  CHECK(last_kl < first_kl);
  CHECK(last_kl == doctest::Approx(res.final_eval.kl_mean).epsilon(1e-10));

  std::istringstream metric_lines(metrics_a.str());
  int rows = 0;
  while (std::getline(metric_lines, line)) rows++;
  CHECK(rows == 61);  // header + one row per batch

  TrainSinks sinks_b;
  sinks_b.metrics = &metrics_b;
  sinks_b.eval = &eval_b;
  TrainResult res_b = train_predictor(cfg, sinks_b);
  CHECK(metrics_a.str() == metrics_b.str());
  CHECK(eval_a.str() == eval_b.str());
  CHECK(res.final_eval.kl_mean == res_b.final_eval.kl_mean);

  // the final checkpoint reproduces the final eval exactly
  Net reloaded = net_from_checkpoint(res.checkpoint);
  EvalReport again = evaluate_against_oracle(
      reloaded, cfg, *make_task(cfg), cfg.eval_rollouts,
      RandomSource(cfg.seed).split(1).split(res.batches_run - 1));
  CHECK(again.kl_mean == res.final_eval.kl_mean);
  CHECK(again.agent_log_loss == res.final_eval.agent_log_loss);
}

TEST_CASE("thompson training moves the policy toward the posterior sampler") {
  RunConfig cfg = tiny_bandit_config(AlgorithmKind::kThompson);
  std::ostringstream eval_out;
  TrainSinks sinks;
  sinks.eval = &eval_out;
  TrainResult res = train_thompson(cfg, sinks);
  CHECK(res.batches_run == 80);

  std::istringstream eval_lines(eval_out.str());
  std::string line;
  std::getline(eval_lines, line);
  CHECK(line == "batch,tv_mean,tv_se");
  double first_tv = -1.0, last_tv = -1.0;
  while (std::getline(eval_lines, line)) {
    double tv = std::stod(line.substr(line.find(',') + 1));
    if (first_tv < 0.0) first_tv = tv;
    last_tv = tv;
  }
  CHECK(last_tv < first_tv);
  CHECK(last_tv == doctest::Approx(res.final_eval.tv_mean).epsilon(1e-10));
  CHECK(res.final_eval.primary == res.final_eval.tv_mean);
}

TEST_CASE("value training tracks the planner on a short-horizon bandit") {
  RunConfig cfg = tiny_bandit_config(AlgorithmKind::kBayesOpt);
  cfg.horizon = 3;
  cfg.batches = 60;
  TrainSinks sinks;
  TrainResult res = train_bayes_optimal(cfg, sinks);
  CHECK(res.batches_run == 60);
  CHECK(res.final_eval.agreement >= 0.0);
  CHECK(res.final_eval.agreement <= 1.0);
  CHECK(std::isfinite(res.final_eval.mean_return));
  CHECK(res.final_eval.oracle_return > 0.0);
  CHECK(res.final_eval.return_gap ==
        res.final_eval.oracle_return - res.final_eval.mean_return);

  Net net = net_from_checkpoint(res.checkpoint);
  std::unique_ptr<HypothesisClass> task = make_task(cfg);
  AgreementReport rep = greedy_agreement_enumerated(net, *task, 3);
  CHECK(rep.histories == 21);  // 1 + 4 + 16 reachable histories
  CHECK(rep.agree >= 0);
  CHECK(rep.agree <= rep.histories);
  CHECK(rep.fraction ==
        static_cast<double>(rep.agree) / static_cast<double>(rep.histories));
}

TEST_CASE("early stopping fires when the eval metric stalls") {
  RunConfig cfg = tiny_predict_config();
  cfg.batches = 200;
  cfg.eval_every = 5;
  cfg.early_stop_window = 10;
  cfg.early_stop_delta = 1e9;  // nothing ever counts as an improvement
  TrainSinks sinks;
  TrainResult res = train(cfg, sinks);
  CHECK(res.early_stopped);
  // best stays at the first eval (batch 4); the window closes at batch 14
  CHECK(res.batches_run == 15);
}

TEST_CASE("checkpoint callback sees periodic and final checkpoints") {
  RunConfig cfg = tiny_predict_config();
  cfg.batches = 10;
  cfg.eval_every = 10;
  cfg.checkpoint_every = 4;
  std::vector<int> seen;
  TrainSinks sinks;
  sinks.on_checkpoint = [&](int batch, const Checkpoint& ckpt) {
    seen.push_back(batch);
    CHECK(ckpt.batches_done == batch);
  };
  TrainResult res = train(cfg, sinks);
  CHECK(res.batches_run == 10);
  CHECK(seen == std::vector<int>{4, 8, 10});
}

TEST_CASE("train dispatch rejects a mismatched algorithm") {
  RunConfig cfg = tiny_predict_config();
  TrainSinks sinks;
  CHECK_THROWS_AS(train_thompson(cfg, sinks), ValidationError);
  CHECK_THROWS_AS(train_bayes_optimal(cfg, sinks), ValidationError);
}

TEST_CASE("run config text parses with strict key checking") {
  std::string text =
      "# coins demo\n"
      "algorithm = predict\n"
      "task = coins\n"
      "thetas = 0.3; 0.7\n"
      "\n"
      "batch_size = 10\n"
      "horizon = 4\n"
      "batches = 5\n"
      "hidden = 6\n"
      "seed = 99\n";
  RunConfig cfg = parse_run_config(text);
  CHECK(cfg.algorithm == AlgorithmKind::kPredict);
  CHECK(cfg.task == "coins");
  REQUIRE(cfg.thetas.size() == 2);
  CHECK(cfg.thetas[0] == std::vector<double>{0.3});
  CHECK(cfg.thetas[1] == std::vector<double>{0.7});
  CHECK(cfg.batch_size == 10);
  CHECK(cfg.seed == 99);

  CHECK_THROWS_AS(parse_run_config("nonsense = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("batches = -3\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("algorithm = sarsa\n"), ValidationError);
  // thompson needs a bandit class
  CHECK_THROWS_AS(parse_run_config("algorithm = thompson\n"), ValidationError);
}

TEST_CASE("full distribution rows are accepted for coin classes") {
  std::string text =
      "algorithm = predict\n"
      "task = coins\n"
      "thetas = 0.2 0.8; 0.6 0.4\n";
  RunConfig cfg = parse_run_config(text);
  REQUIRE(cfg.thetas.size() == 2);
  CHECK(cfg.thetas[0] == std::vector<double>{0.2, 0.8});
  std::unique_ptr<HypothesisClass> task = make_task(cfg);
  CHECK(task->hypothesis_count() == 2);
  CHECK(task->symbol_likelihood(task->hypothesis(0), {}, 1) ==
        doctest::Approx(0.8));
}
