#include "metastrat/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace metastrat {

namespace {

// stream ids under the run seed
constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kEvalStream = 1;
constexpr std::uint64_t kInitStream = 2;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::vector<double> one_hot(int n, int index) {
  std::vector<double> v(n, 0.0);
  if (index >= 0) v[index] = 1.0;
  return v;
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kLogFloor)));
  }
  return kl;
}

double total_variation(const ProbVector& p, const ProbVector& q) {
  double tv = 0.0;
  for (int i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double sq = 0.0;
  for (double x : xs) sq += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(sq / (static_cast<double>(xs.size()) - 1.0) /
                     static_cast<double>(xs.size()));
  return out;
}

std::string eval_header(AlgorithmKind algorithm) {
  switch (algorithm) {
    case AlgorithmKind::kPredict:
      return "batch,kl_mean,kl_se,agent_log_loss,oracle_log_loss";
    case AlgorithmKind::kThompson:
      return "batch,tv_mean,tv_se";
    case AlgorithmKind::kBayesOpt:
      return "batch,agreement,mean_return,oracle_return,return_gap";
  }
  throw ValidationError("unknown algorithm");
}

std::string eval_row(AlgorithmKind algorithm, int batch,
                     const EvalReport& rep) {
  std::string row = std::to_string(batch);
  switch (algorithm) {
    case AlgorithmKind::kPredict:
      row += "," + fmt(rep.kl_mean) + "," + fmt(rep.kl_se) + "," +
             fmt(rep.agent_log_loss) + "," + fmt(rep.oracle_log_loss);
      break;
    case AlgorithmKind::kThompson:
      row += "," + fmt(rep.tv_mean) + "," + fmt(rep.tv_se);
      break;
    case AlgorithmKind::kBayesOpt:
      row += "," + fmt(rep.agreement) + "," + fmt(rep.mean_return) + "," +
             fmt(rep.oracle_return) + "," + fmt(rep.return_gap);
      break;
  }
  return row;
}

Checkpoint make_checkpoint(const Net& net, const AdamState& adam,
                           int batches_done) {
  Checkpoint ckpt;
  ckpt.mode = net.mode();
  ckpt.shape = net.shape();
  ckpt.batches_done = batches_done;
  ckpt.params.assign(net.params().begin(), net.params().end());
  ckpt.adam_step = adam.step;
  ckpt.adam_m = adam.m;
  ckpt.adam_v = adam.v;
  return ckpt;
}

}  // namespace

double cooling_schedule(int batch, const RunConfig& cfg) {
  if (batch < 0) throw ValidationError("batch index must be >= 0");
  double tau = cfg.beta_tau > 0.0 ? cfg.beta_tau
                                  : static_cast<double>(cfg.batches) / 5.0;
  double ramp = 1.0 - std::exp(-static_cast<double>(batch) / tau);
  return cfg.beta_start + (cfg.beta_max - cfg.beta_start) * ramp;
}

NetShape net_shape_for(const RunConfig& cfg, const HypothesisClass& task) {
  int obs = task.observation_alphabet().size;
  if (task.kind() == HypothesisClass::Kind::kPrediction)
    return NetShape{obs, cfg.hidden, obs};
  return NetShape{task.action_count() + obs + 1, cfg.hidden,
                  task.action_count()};
}

HeadMode head_mode_for(AlgorithmKind algorithm) {
  switch (algorithm) {
    case AlgorithmKind::kPredict: return HeadMode::kPrediction;
    case AlgorithmKind::kThompson: return HeadMode::kPolicy;
    case AlgorithmKind::kBayesOpt: return HeadMode::kValue;
  }
  throw ValidationError("unknown algorithm");
}

std::vector<double> encode_interaction(const HypothesisClass& task,
                                       const Interaction* previous) {
  int actions = task.action_count();
  int obs = task.observation_alphabet().size;
  std::vector<double> v(actions + obs + 1, 0.0);
  if (previous) {
    v[previous->action] = 1.0;
    v[actions + previous->observation] = 1.0;
    v[actions + obs] = previous->reward;
  }
  return v;
}

Rollout run_prediction_rollout(const Net& net, const HypothesisClass& task,
                               const Hypothesis& hyp, int horizon,
                               RandomSource& rng) {
  int alphabet = task.observation_alphabet().size;
  Rollout rollout;
  std::vector<int> history;
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> input =
        one_hot(alphabet, history.empty() ? -1 : history.back());
    step_forward(net, input, rollout);
    int symbol = task.sample_symbol(hyp, history, rng);
    LossRecord rec;
    rec.kind = LossRecord::Kind::kObserved;
    rec.symbol = symbol;
    rollout.losses.push_back(std::move(rec));
    history.push_back(symbol);
  }
  return rollout;
}

DecisionRollout run_thompson_rollout(const Net& net, const HypothesisClass& task,
                                     const Hypothesis& hyp, int horizon,
                                     RandomSource& rng) {
  DecisionRollout out;
  for (int t = 0; t < horizon; ++t) {
    const Interaction* prev = out.interactions.empty()
                                  ? nullptr
                                  : &out.interactions.back();
    const StepTrace& trace =
        step_forward(net, encode_interaction(task, prev), out.tape);
    LossRecord rec;
    rec.kind = LossRecord::Kind::kDistill;
    ProbVector expert = task.expert_policy(hyp, out.interactions);
    rec.target.assign(expert.weights().begin(), expert.weights().end());
    out.tape.losses.push_back(std::move(rec));

    // the agent acts from its own policy
    int action = sample_categorical(softmax(trace.output), rng);
    int observation = task.sample_observation(hyp, action, rng);
    double reward = task.reward(action, observation);
    out.interactions.push_back(Interaction{action, observation, reward});
    out.total_reward += reward;
  }
  return out;
}

DecisionRollout run_value_rollout(const Net& net, const HypothesisClass& task,
                                  const Hypothesis& hyp, int horizon,
                                  double beta, bool greedy, RandomSource& rng) {
  DecisionRollout out;
  for (int t = 0; t < horizon; ++t) {
    const Interaction* prev = out.interactions.empty()
                                  ? nullptr
                                  : &out.interactions.back();
    const StepTrace& trace =
        step_forward(net, encode_interaction(task, prev), out.tape);
    int action = greedy
                     ? argmax_lowest(trace.output)
                     : sample_categorical(
                           softmax_temperature(trace.output, beta), rng);
    int observation = task.sample_observation(hyp, action, rng);
    double reward = task.reward(action, observation);
    out.interactions.push_back(Interaction{action, observation, reward});
    out.total_reward += reward;
  }
  // TD targets off the recorded tape, frozen: r_t + q_{t+1}(a_{t+1}),
  // terminal r_T alone
  for (int t = 0; t < horizon; ++t) {
    LossRecord rec;
    rec.kind = LossRecord::Kind::kTd;
    rec.action = out.interactions[t].action;
    double target = out.interactions[t].reward;
    if (t + 1 < horizon)
      target += out.tape.steps[t + 1].output[out.interactions[t + 1].action];
    rec.td_target = stop_gradient(target);
    out.tape.losses.push_back(std::move(rec));
  }
  return out;
}

EvalReport evaluate_against_oracle(const Net& net, const RunConfig& cfg,
                                   const HypothesisClass& task, int rollouts,
                                   RandomSource rng) {
  if (rollouts < 1) throw ValidationError("'rollouts' must be >= 1");
  EvalReport rep;
  rep.rollouts = rollouts;
  int horizon = cfg.horizon;

  switch (cfg.algorithm) {
    case AlgorithmKind::kPredict: {
      int alphabet = task.observation_alphabet().size;
      std::vector<double> kls;
      kls.reserve(rollouts);
      double agent_ll = 0.0, oracle_ll = 0.0;
      for (int r = 0; r < rollouts; ++r) {
        RandomSource rr = rng.split(r);
        Hypothesis hyp = task.sample_hypothesis(rr);
        Belief belief = prior_belief(task);
        std::vector<int> history;
        Rollout tape;
        double kl = 0.0;
        for (int t = 0; t < horizon; ++t) {
          std::vector<double> input =
              one_hot(alphabet, history.empty() ? -1 : history.back());
          const StepTrace& trace = step_forward(net, input, tape);
          ProbVector agent = softmax(trace.output);
          ProbVector oracle = mixture_predictive(belief, task, history);
          kl += kl_divergence(oracle, agent);
          int symbol = task.sample_symbol(hyp, history, rr);
          agent_ll += -std::log(std::max(agent[symbol], kLogFloor));
          oracle_ll += -std::log(std::max(oracle[symbol], kLogFloor));
          belief = posterior_update(belief, task, history, symbol);
          history.push_back(symbol);
        }
        kls.push_back(kl / horizon);
      }
      MeanSe ms = mean_se(kls);
      rep.kl_mean = ms.mean;
      rep.kl_se = ms.se;
      rep.agent_log_loss = agent_ll / (static_cast<double>(rollouts) * horizon);
      rep.oracle_log_loss =
          oracle_ll / (static_cast<double>(rollouts) * horizon);
      rep.primary = rep.kl_mean;
      break;
    }
    case AlgorithmKind::kThompson: {
      std::vector<double> tvs;
      tvs.reserve(rollouts);
      for (int r = 0; r < rollouts; ++r) {
        RandomSource rr = rng.split(r);
        Hypothesis hyp = task.sample_hypothesis(rr);
        Belief belief = prior_belief(task);
        std::vector<Interaction> history;
        Rollout tape;
        double tv = 0.0;
        for (int t = 0; t < horizon; ++t) {
          const Interaction* prev = history.empty() ? nullptr : &history.back();
          const StepTrace& trace =
              step_forward(net, encode_interaction(task, prev), tape);
          ProbVector agent = softmax(trace.output);
          ProbVector oracle = thompson_action_predictive(belief, task, history);
          tv += total_variation(agent, oracle);
          int action = sample_categorical(agent, rr);
          int observation = task.sample_observation(hyp, action, rr);
          double reward = task.reward(action, observation);
          belief = intervene_action(belief, action);
          belief = posterior_update(belief, task,
                                    Interaction{action, observation, reward});
          history.push_back(Interaction{action, observation, reward});
        }
        tvs.push_back(tv / horizon);
      }
      MeanSe ms = mean_se(tvs);
      rep.tv_mean = ms.mean;
      rep.tv_se = ms.se;
      rep.primary = rep.tv_mean;
      break;
    }
    case AlgorithmKind::kBayesOpt: {
      BayesOptimalPlanner planner(task);
      Belief prior = prior_belief(task);
      rep.oracle_return = planner.value(prior, horizon);
      long agree = 0, steps = 0;
      double return_total = 0.0;
      for (int r = 0; r < rollouts; ++r) {
        RandomSource rr = rng.split(r);
        Hypothesis hyp = task.sample_hypothesis(rr);
        Belief belief = prior;
        Rollout tape;
        const Interaction* prev = nullptr;
        Interaction last{0, 0, 0.0};
        for (int t = 0; t < horizon; ++t) {
          const StepTrace& trace =
              step_forward(net, encode_interaction(task, prev), tape);
          int action = argmax_lowest(trace.output);
          std::vector<double> q = planner.q_values(belief, horizon - t);
          double best = *std::max_element(q.begin(), q.end());
          if (q[action] >= best - 1e-9) agree++;
          steps++;
          int observation = task.sample_observation(hyp, action, rr);
          double reward = task.reward(action, observation);
          return_total += reward;
          belief = posterior_update(belief, task,
                                    Interaction{action, observation, reward});
          last = Interaction{action, observation, reward};
          prev = &last;
        }
      }
      rep.agreement = static_cast<double>(agree) / static_cast<double>(steps);
      rep.mean_return = return_total / static_cast<double>(rollouts);
      rep.return_gap = rep.oracle_return - rep.mean_return;
      rep.primary = rep.return_gap;
      break;
    }
  }
  return rep;
}

AgreementReport greedy_agreement_enumerated(const Net& net,
                                            const HypothesisClass& task,
                                            int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  BayesOptimalPlanner planner(task);
  AgreementReport report;

  struct Frame {
    std::vector<double> memory;
    Belief belief;
    Interaction prev;
    bool has_prev;
    int depth;
  };
  std::vector<Frame> stack;
  stack.push_back(Frame{std::vector<double>(net.shape().hidden, 0.0),
                        prior_belief(task), Interaction{}, false, 0});

  while (!stack.empty()) {
    Frame frame = std::move(stack.back());
    stack.pop_back();
    StepTrace trace = net.forward_step(
        encode_interaction(task, frame.has_prev ? &frame.prev : nullptr),
        frame.memory);
    int action = argmax_lowest(trace.output);
    std::vector<double> q =
        planner.q_values(frame.belief, horizon - frame.depth);
    double best = *std::max_element(q.begin(), q.end());
    report.histories++;
    if (q[action] >= best - 1e-9) report.agree++;

    if (frame.depth + 1 >= horizon) continue;
    for (int a = 0; a < task.action_count(); ++a) {
      ProbVector obs = observation_predictive(frame.belief, task, a);
      for (int o = 0; o < obs.size(); ++o) {
        if (obs[o] <= 0.0) continue;
        Interaction step{a, o, task.reward(a, o)};
        stack.push_back(Frame{trace.h,
                              posterior_update(frame.belief, task, step), step,
                              true, frame.depth + 1});
      }
    }
  }
  report.fraction = report.histories == 0
                        ? 0.0
                        : static_cast<double>(report.agree) /
                              static_cast<double>(report.histories);
  return report;
}

TrainResult train(const RunConfig& cfg, const TrainSinks& sinks) {
  validate_run_config(cfg);
  std::unique_ptr<HypothesisClass> task = make_task(cfg);
  NetShape shape = net_shape_for(cfg, *task);
  HeadMode mode = head_mode_for(cfg.algorithm);

  RandomSource root(cfg.seed);
  RandomSource init_rng = root.split(kInitStream);
  RandomSource train_root = root.split(kTrainStream);
  RandomSource eval_root = root.split(kEvalStream);
  Net net = Net::initialized(shape, mode, init_rng);
  AdamState adam(shape.param_count(), cfg.learning_rate);

  if (sinks.metrics)
    *sinks.metrics << "batch,beta,mean_step_loss,mean_rollout_loss\n";
  if (sinks.eval) *sinks.eval << eval_header(cfg.algorithm) << "\n";
  if (sinks.progress)
    *sinks.progress << "training " << algorithm_name(cfg.algorithm) << " on "
                    << task->name() << ", " << shape.param_count()
                    << " parameters, seed " << cfg.seed << "\n";

  std::vector<double> grad(shape.param_count(), 0.0);
  double best_primary = std::numeric_limits<double>::infinity();
  int best_batch = 0;
  bool early_stopped = false;
  EvalReport last_eval;
  double last_loss = 0.0;
  int batches_run = 0;

  for (int k = 0; k < cfg.batches; ++k) {
    double beta = cfg.algorithm == AlgorithmKind::kBayesOpt
                      ? cooling_schedule(k, cfg)
                      : 0.0;
    RandomSource batch_rng = train_root.split(k);
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;

    for (int n = 0; n < cfg.batch_size; ++n) {
      RandomSource rng = batch_rng.split(n);
      Hypothesis hyp = task->sample_hypothesis(rng);
      Rollout rollout;
      switch (cfg.algorithm) {
        case AlgorithmKind::kPredict:
          rollout =
              run_prediction_rollout(net, *task, hyp, cfg.horizon, rng);
          break;
        case AlgorithmKind::kThompson:
          rollout = run_thompson_rollout(net, *task, hyp, cfg.horizon, rng)
                        .tape;
          break;
        case AlgorithmKind::kBayesOpt:
          rollout = run_value_rollout(net, *task, hyp, cfg.horizon, beta,
                                      false, rng)
                        .tape;
          break;
      }
      double loss = rollout_loss(rollout, mode);
      if (!std::isfinite(loss))
        throw DivergenceError("non-finite loss at batch " + std::to_string(k));
      batch_loss += loss;
      backward(net, rollout, grad);
    }

    double denom = static_cast<double>(cfg.batch_size) * cfg.horizon;
    for (double& g : grad) g /= denom;
    clip_global_norm(grad, kGradClipNorm);
    adam_step(net.params(), grad, adam);
    last_loss = batch_loss / denom;
    batches_run = k + 1;

    if (sinks.metrics)
      *sinks.metrics << k << "," << fmt(beta) << "," << fmt(last_loss) << ","
                     << fmt(batch_loss / cfg.batch_size) << "\n";

    bool final_batch = k == cfg.batches - 1;
    if ((k + 1) % cfg.eval_every == 0 || final_batch) {
      last_eval = evaluate_against_oracle(net, cfg, *task, cfg.eval_rollouts,
                                          eval_root.split(k));
      if (sinks.eval)
        *sinks.eval << eval_row(cfg.algorithm, k, last_eval) << "\n";
      if (sinks.progress)
        *sinks.progress << "batch " << k << " loss " << fmt(last_loss)
                        << " eval " << fmt(last_eval.primary) << "\n";
      if (last_eval.primary < best_primary - cfg.early_stop_delta) {
        best_primary = last_eval.primary;
        best_batch = k;
      } else if (cfg.early_stop_window > 0 &&
                 k - best_batch >= cfg.early_stop_window) {
        early_stopped = true;
      }
    }

    if (sinks.on_checkpoint && cfg.checkpoint_every > 0 &&
        (k + 1) % cfg.checkpoint_every == 0 && !final_batch &&
        !early_stopped)
      sinks.on_checkpoint(batches_run, make_checkpoint(net, adam, batches_run));

    if (early_stopped) break;
  }

  TrainResult result;
  result.checkpoint = make_checkpoint(net, adam, batches_run);
  result.batches_run = batches_run;
  result.early_stopped = early_stopped;
  result.final_train_loss = last_loss;
  result.final_eval = last_eval;
  if (sinks.on_checkpoint)
    sinks.on_checkpoint(batches_run, result.checkpoint);
  if (sinks.progress)
    *sinks.progress << "done after " << batches_run << " batches"
                    << (early_stopped ? " (early stop)" : "") << "\n";
  return result;
}

namespace {

TrainResult train_checked(const RunConfig& cfg, AlgorithmKind expected,
                          const TrainSinks& sinks) {
  if (cfg.algorithm != expected)
    throw ValidationError("config algorithm is '" +
                          algorithm_name(cfg.algorithm) + "', expected '" +
                          algorithm_name(expected) + "'");
  return train(cfg, sinks);
}

}  // namespace

TrainResult train_predictor(const RunConfig& cfg, const TrainSinks& sinks) {
  return train_checked(cfg, AlgorithmKind::kPredict, sinks);
}

TrainResult train_thompson(const RunConfig& cfg, const TrainSinks& sinks) {
  return train_checked(cfg, AlgorithmKind::kThompson, sinks);
}

TrainResult train_bayes_optimal(const RunConfig& cfg, const TrainSinks& sinks) {
  return train_checked(cfg, AlgorithmKind::kBayesOpt, sinks);
}

Net net_from_checkpoint(const Checkpoint& ckpt) {
  if (static_cast<int>(ckpt.params.size()) != ckpt.shape.param_count())
    throw ValidationError("checkpoint parameter count does not match shape");
  Net net(ckpt.shape, ckpt.mode);
  std::copy(ckpt.params.begin(), ckpt.params.end(), net.params().begin());
  return net;
}

}  // namespace metastrat
