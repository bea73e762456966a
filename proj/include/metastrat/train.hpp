#pragma once

// Meta-training loops. Each batch samples fresh tasks from the class, rolls
// the net through them, and descends the algorithm's loss; evaluation runs on
// held-out streams against the exact Bayesian reference.

#include <functional>
#include <iosfwd>
#include <limits>

#include "metastrat/config.hpp"
#include "metastrat/net.hpp"
#include "metastrat/oracle.hpp"

namespace metastrat {

// saturating ramp beta(k) = start + (max - start) (1 - exp(-k / tau));
// tau defaults to batches / 5 so the policy is near-greedy late in training
double cooling_schedule(int batch, const RunConfig& cfg);

NetShape net_shape_for(const RunConfig& cfg, const HypothesisClass& task);
HeadMode head_mode_for(AlgorithmKind algorithm);

// decision-mode input encoding: [one-hot action | one-hot observation |
// reward], all zeros before the first interaction
std::vector<double> encode_interaction(const HypothesisClass& task,
                                       const Interaction* previous);

Rollout run_prediction_rollout(const Net& net, const HypothesisClass& task,
                               const Hypothesis& hyp, int horizon,
                               RandomSource& rng);

struct DecisionRollout {
  Rollout tape;
  std::vector<Interaction> interactions;
  double total_reward = 0.0;
};

// Distillation rollout: actions sampled from the net's own softmax policy,
// expert distribution recorded as the distillation target each step.
DecisionRollout run_thompson_rollout(const Net& net, const HypothesisClass& task,
                                     const Hypothesis& hyp, int horizon,
                                     RandomSource& rng);

// Value rollout: actions from softmax(beta * q) (argmax when greedy), TD
// records with frozen targets; the terminal target is the last reward alone.
DecisionRollout run_value_rollout(const Net& net, const HypothesisClass& task,
                                  const Hypothesis& hyp, int horizon,
                                  double beta, bool greedy, RandomSource& rng);

struct EvalReport {
  int rollouts = 0;
  // predict
  double kl_mean = std::numeric_limits<double>::quiet_NaN();
  double kl_se = std::numeric_limits<double>::quiet_NaN();
  double agent_log_loss = std::numeric_limits<double>::quiet_NaN();
  double oracle_log_loss = std::numeric_limits<double>::quiet_NaN();
  // thompson
  double tv_mean = std::numeric_limits<double>::quiet_NaN();
  double tv_se = std::numeric_limits<double>::quiet_NaN();
  // bayesopt
  double agreement = std::numeric_limits<double>::quiet_NaN();
  double mean_return = std::numeric_limits<double>::quiet_NaN();
  double oracle_return = std::numeric_limits<double>::quiet_NaN();
  double return_gap = std::numeric_limits<double>::quiet_NaN();
  // headline number for early stopping, lower is better
  double primary = std::numeric_limits<double>::quiet_NaN();
};

// Held-out comparison on fresh tasks. predict: mean per-step KL(oracle,
// agent) plus log-losses on the same symbols. thompson: mean total variation
// along agent-generated histories. bayesopt: greedy agreement with the
// planner, mean greedy return, and the gap to the exact optimal return.
EvalReport evaluate_against_oracle(const Net& net, const RunConfig& cfg,
                                   const HypothesisClass& task, int rollouts,
                                   RandomSource rng);

struct AgreementReport {
  long histories = 0;
  long agree = 0;
  double fraction = 0.0;
};

// Exhaustive belief-tree walk: at every reachable history, does the net's
// greedy action attain the planner's maximal Q (1e-9 tolerance)?
AgreementReport greedy_agreement_enumerated(const Net& net,
                                            const HypothesisClass& task,
                                            int horizon);

struct TrainSinks {
  std::ostream* metrics = nullptr;   // per-batch rows
  std::ostream* eval = nullptr;      // eval-cadence rows
  std::ostream* progress = nullptr;  // human-readable log
  std::function<void(int batch, const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;
  int batches_run = 0;
  bool early_stopped = false;
  double final_train_loss = 0.0;  // mean per-step loss of the last batch
  EvalReport final_eval;
};

TrainResult train_predictor(const RunConfig& cfg, const TrainSinks& sinks);
TrainResult train_thompson(const RunConfig& cfg, const TrainSinks& sinks);
TrainResult train_bayes_optimal(const RunConfig& cfg, const TrainSinks& sinks);

// dispatches on cfg.algorithm
TrainResult train(const RunConfig& cfg, const TrainSinks& sinks);

Net net_from_checkpoint(const Checkpoint& ckpt);

}  // namespace metastrat
