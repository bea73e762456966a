// Python surface for the library: task classes, exact references, training,
// evaluation, and machine extraction. Distributions and histories cross the
// boundary as plain lists; beliefs, nets, and checkpoints stay opaque handles.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>
#include <tuple>
#include <vector>

#include "metastrat/analysis.hpp"
#include "metastrat/config.hpp"
#include "metastrat/core.hpp"
#include "metastrat/net.hpp"
#include "metastrat/oracle.hpp"
#include "metastrat/tasks.hpp"
#include "metastrat/train.hpp"

namespace py = pybind11;
using namespace metastrat;

namespace {

std::vector<double> to_list(const ProbVector& p) {
  return std::vector<double>(p.weights().begin(), p.weights().end());
}

std::vector<ProbVector> to_prob_rows(
    const std::vector<std::vector<double>>& rows) {
  std::vector<ProbVector> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.emplace_back(row);
  return out;
}

}  // namespace

PYBIND11_MODULE(_metastrat, m) {
  m.doc() =
      "Sequential strategies trained against exact Bayesian references, with "
      "memory quantization into finite state machines";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ValidationError>(m, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError",
                                          PyExc_ArithmeticError);
  py::register_exception<ResourceBoundError>(m, "ResourceBoundError",
                                             PyExc_RuntimeError);

  py::class_<RandomSource>(m, "RandomSource")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("next_u64", &RandomSource::next_u64)
      .def("next_double", &RandomSource::next_double)
      .def("split", &RandomSource::split, py::arg("stream"))
      .def_property_readonly("key", &RandomSource::key)
      .def_property_readonly("counter", &RandomSource::counter);

  py::class_<Interaction>(m, "Interaction")
      .def(py::init<>())
      .def(py::init<int, int, double>(), py::arg("action"),
           py::arg("observation"), py::arg("reward"))
      .def_readwrite("action", &Interaction::action)
      .def_readwrite("observation", &Interaction::observation)
      .def_readwrite("reward", &Interaction::reward);

  py::class_<Hypothesis>(m, "Hypothesis")
      .def(py::init<>())
      .def_readwrite("index", &Hypothesis::index)
      .def_readwrite("values", &Hypothesis::values);

  py::class_<HypothesisClass, std::shared_ptr<HypothesisClass>>(
      m, "HypothesisClass")
      .def_property_readonly("kind",
                             [](const HypothesisClass& cls) {
                               return cls.kind() ==
                                              HypothesisClass::Kind::kBandit
                                          ? "bandit"
                                          : "prediction";
                             })
      .def_property_readonly("name", &HypothesisClass::name)
      .def_property_readonly("action_count", &HypothesisClass::action_count)
      .def_property_readonly("finite_support",
                             &HypothesisClass::finite_support)
      .def_property_readonly("hypothesis_count",
                             &HypothesisClass::hypothesis_count)
      .def_property_readonly(
          "prior",
          [](const HypothesisClass& cls) { return to_list(cls.prior()); })
      .def("hypothesis", &HypothesisClass::hypothesis, py::arg("index"))
      .def("sample_hypothesis", &HypothesisClass::sample_hypothesis,
           py::arg("rng"))
      .def(
          "symbol_distribution",
          [](const HypothesisClass& cls, const Hypothesis& h,
             const std::vector<int>& history) {
            return to_list(cls.symbol_distribution(h, history));
          },
          py::arg("hypothesis"), py::arg("history"))
      .def(
          "observation_distribution",
          [](const HypothesisClass& cls, const Hypothesis& h, int action) {
            return to_list(cls.observation_distribution(h, action));
          },
          py::arg("hypothesis"), py::arg("action"))
      .def(
          "expert_policy",
          [](const HypothesisClass& cls, const Hypothesis& h,
             const std::vector<Interaction>& history) {
            return to_list(cls.expert_policy(h, history));
          },
          py::arg("hypothesis"), py::arg("history"))
      .def("reward", &HypothesisClass::reward, py::arg("action"),
           py::arg("observation"));

  py::class_<FiniteCoinSet, HypothesisClass,
             std::shared_ptr<FiniteCoinSet>>(m, "FiniteCoinSet")
      .def(py::init([](const std::vector<std::vector<double>>& thetas) {
             return std::make_shared<FiniteCoinSet>(to_prob_rows(thetas));
           }),
           py::arg("thetas"))
      .def(py::init([](const std::vector<std::vector<double>>& thetas,
                       const std::vector<double>& prior) {
             return std::make_shared<FiniteCoinSet>(to_prob_rows(thetas),
                                                    ProbVector(prior));
           }),
           py::arg("thetas"), py::arg("prior"))
      .def_static("from_biases", &FiniteCoinSet::from_biases,
                  py::arg("biases"));

  py::class_<DirichletCategorical, HypothesisClass,
             std::shared_ptr<DirichletCategorical>>(m, "DirichletCategorical")
      .def(py::init<int>(), py::arg("symbols"))
      .def(py::init<int, std::vector<double>>(), py::arg("symbols"),
           py::arg("concentration"));

  py::class_<BernoulliBanditSet, HypothesisClass,
             std::shared_ptr<BernoulliBanditSet>>(m, "BernoulliBanditSet")
      .def(py::init<std::vector<std::vector<double>>>(), py::arg("arm_probs"))
      .def(py::init([](const std::vector<std::vector<double>>& arm_probs,
                       const std::vector<double>& prior) {
             return std::make_shared<BernoulliBanditSet>(arm_probs,
                                                         ProbVector(prior));
           }),
           py::arg("arm_probs"), py::arg("prior"));

  py::class_<Belief>(m, "Belief")
      .def_static(
          "finite",
          [](const std::vector<double>& weights) {
            return Belief::finite(ProbVector(weights));
          },
          py::arg("weights"))
      .def_static("counts", &Belief::counts, py::arg("counts"))
      .def_property_readonly("is_counts", &Belief::is_counts)
      .def_property_readonly(
          "weights", [](const Belief& b) { return to_list(b.weights()); })
      .def_property_readonly("pseudo_counts", [](const Belief& b) {
        auto counts = b.pseudo_counts();
        return std::vector<double>(counts.begin(), counts.end());
      });

  m.def("prior_belief", &prior_belief, py::arg("cls"));
  m.def(
      "mixture_predictive",
      [](const Belief& b, const HypothesisClass& cls,
         const std::vector<int>& history) {
        return to_list(mixture_predictive(b, cls, history));
      },
      py::arg("belief"), py::arg("cls"), py::arg("history"));
  m.def(
      "posterior_update",
      [](const Belief& b, const HypothesisClass& cls,
         const std::vector<int>& history, int symbol) {
        return posterior_update(b, cls, history, symbol);
      },
      py::arg("belief"), py::arg("cls"), py::arg("history"),
      py::arg("symbol"));
  m.def(
      "posterior_update",
      [](const Belief& b, const HypothesisClass& cls, const Interaction& step) {
        return posterior_update(b, cls, step);
      },
      py::arg("belief"), py::arg("cls"), py::arg("step"));
  m.def(
      "observation_predictive",
      [](const Belief& b, const HypothesisClass& cls, int action) {
        return to_list(observation_predictive(b, cls, action));
      },
      py::arg("belief"), py::arg("cls"), py::arg("action"));
  m.def("intervene_action", &intervene_action, py::arg("belief"),
        py::arg("action"));
  m.def(
      "thompson_action_predictive",
      [](const Belief& b, const HypothesisClass& cls,
         const std::vector<Interaction>& history) {
        return to_list(thompson_action_predictive(b, cls, history));
      },
      py::arg("belief"), py::arg("cls"), py::arg("history"));
  m.def("bayes_optimal_q", &bayes_optimal_q, py::arg("belief"),
        py::arg("cls"), py::arg("horizon"),
        py::call_guard<py::gil_scoped_release>());
  m.def("brute_force_marginal", &brute_force_marginal, py::arg("cls"),
        py::arg("length"), py::call_guard<py::gil_scoped_release>());

  py::class_<BayesOptimalPlanner>(m, "BayesOptimalPlanner")
      .def(py::init<const HypothesisClass&>(), py::arg("cls"),
           py::keep_alive<1, 2>())
      .def("q_values", &BayesOptimalPlanner::q_values, py::arg("belief"),
           py::arg("horizon"), py::call_guard<py::gil_scoped_release>())
      .def("value", &BayesOptimalPlanner::value, py::arg("belief"),
           py::arg("horizon"), py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("memo_size", &BayesOptimalPlanner::memo_size);

  py::class_<DominanceReport>(m, "DominanceReport")
      .def_readonly("holds", &DominanceReport::holds)
      .def_readonly("regret", &DominanceReport::regret)
      .def_readonly("slack", &DominanceReport::slack);
  m.def(
      "regret_dominance_check",
      [](const HypothesisClass& cls, int hypothesis_index,
         const std::vector<int>& symbols) {
        return regret_dominance_check(cls, hypothesis_index,
                                      Trajectory(symbols));
      },
      py::arg("cls"), py::arg("hypothesis_index"), py::arg("symbols"));

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_property(
          "algorithm",
          [](const RunConfig& cfg) { return algorithm_name(cfg.algorithm); },
          [](RunConfig& cfg, const std::string& name) {
            cfg.algorithm = parse_algorithm(name);
          })
      .def_readwrite("task", &RunConfig::task)
      .def_readwrite("symbols", &RunConfig::symbols)
      .def_readwrite("concentration", &RunConfig::concentration)
      .def_readwrite("thetas", &RunConfig::thetas)
      .def_readwrite("prior", &RunConfig::prior)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("horizon", &RunConfig::horizon)
      .def_readwrite("batches", &RunConfig::batches)
      .def_readwrite("hidden", &RunConfig::hidden)
      .def_readwrite("learning_rate", &RunConfig::learning_rate)
      .def_readwrite("beta_start", &RunConfig::beta_start)
      .def_readwrite("beta_max", &RunConfig::beta_max)
      .def_readwrite("beta_tau", &RunConfig::beta_tau)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("eval_every", &RunConfig::eval_every)
      .def_readwrite("eval_rollouts", &RunConfig::eval_rollouts)
      .def_readwrite("early_stop_delta", &RunConfig::early_stop_delta)
      .def_readwrite("early_stop_window", &RunConfig::early_stop_window)
      .def_readwrite("checkpoint_every", &RunConfig::checkpoint_every);

  m.def("parse_run_config", &parse_run_config, py::arg("text"));
  m.def("load_run_config", &load_run_config, py::arg("path"));
  m.def("validate_run_config", &validate_run_config, py::arg("config"));
  m.def(
      "make_task",
      [](const RunConfig& cfg) {
        return std::shared_ptr<HypothesisClass>(make_task(cfg));
      },
      py::arg("config"));
  m.def("cooling_schedule", &cooling_schedule, py::arg("batch"),
        py::arg("config"));

  py::class_<Net>(m, "Net")
      .def_static(
          "initialized",
          [](int input, int hidden, int output, const std::string& mode,
             RandomSource& rng) {
            return Net::initialized(NetShape{input, hidden, output},
                                    parse_head_mode(mode), rng);
          },
          py::arg("input"), py::arg("hidden"), py::arg("output"),
          py::arg("mode"), py::arg("rng"))
      .def_property_readonly("shape",
                             [](const Net& net) {
                               return py::make_tuple(net.shape().input,
                                                     net.shape().hidden,
                                                     net.shape().output);
                             })
      .def_property_readonly(
          "mode", [](const Net& net) { return head_mode_name(net.mode()); })
      .def_property_readonly("param_count", [](const Net& net) {
        return net.shape().param_count();
      });

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly(
          "mode",
          [](const Checkpoint& ckpt) { return head_mode_name(ckpt.mode); })
      .def_property_readonly("shape",
                             [](const Checkpoint& ckpt) {
                               return py::make_tuple(ckpt.shape.input,
                                                     ckpt.shape.hidden,
                                                     ckpt.shape.output);
                             })
      .def_readonly("batches_done", &Checkpoint::batches_done)
      .def_readonly("params", &Checkpoint::params)
      .def_readonly("adam_step", &Checkpoint::adam_step);
  m.def("save_checkpoint", &save_checkpoint, py::arg("checkpoint"),
        py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("net_from_checkpoint", &net_from_checkpoint, py::arg("checkpoint"));

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("rollouts", &EvalReport::rollouts)
      .def_readonly("kl_mean", &EvalReport::kl_mean)
      .def_readonly("kl_se", &EvalReport::kl_se)
      .def_readonly("agent_log_loss", &EvalReport::agent_log_loss)
      .def_readonly("oracle_log_loss", &EvalReport::oracle_log_loss)
      .def_readonly("tv_mean", &EvalReport::tv_mean)
      .def_readonly("tv_se", &EvalReport::tv_se)
      .def_readonly("agreement", &EvalReport::agreement)
      .def_readonly("mean_return", &EvalReport::mean_return)
      .def_readonly("oracle_return", &EvalReport::oracle_return)
      .def_readonly("return_gap", &EvalReport::return_gap)
      .def_readonly("primary", &EvalReport::primary);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("checkpoint", &TrainResult::checkpoint)
      .def_readonly("batches_run", &TrainResult::batches_run)
      .def_readonly("early_stopped", &TrainResult::early_stopped)
      .def_readonly("final_train_loss", &TrainResult::final_train_loss)
      .def_readonly("final_eval", &TrainResult::final_eval);

  m.def(
      "train",
      [](const RunConfig& cfg) {
        TrainSinks sinks;
        return train(cfg, sinks);
      },
      py::arg("config"), py::call_guard<py::gil_scoped_release>(),
      "Train quietly and return the result with its final checkpoint.");
  m.def(
      "train_logged",
      [](const RunConfig& cfg) {
        std::ostringstream metrics, eval;
        TrainSinks sinks;
        sinks.metrics = &metrics;
        sinks.eval = &eval;
        TrainResult result = train(cfg, sinks);
        return std::make_tuple(result, metrics.str(), eval.str());
      },
      py::arg("config"), py::call_guard<py::gil_scoped_release>(),
      "Train and also return the metrics and eval CSV logs as strings.");

  m.def("evaluate_against_oracle", &evaluate_against_oracle, py::arg("net"),
        py::arg("config"), py::arg("task"), py::arg("rollouts"),
        py::arg("rng"), py::call_guard<py::gil_scoped_release>());

  py::class_<AgreementReport>(m, "AgreementReport")
      .def_readonly("histories", &AgreementReport::histories)
      .def_readonly("agree", &AgreementReport::agree)
      .def_readonly("fraction", &AgreementReport::fraction);
  m.def("greedy_agreement_enumerated", &greedy_agreement_enumerated,
        py::arg("net"), py::arg("task"), py::arg("horizon"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<MemoryRecord>(m, "MemoryRecord")
      .def_readonly("history", &MemoryRecord::history)
      .def_readonly("memory", &MemoryRecord::memory)
      .def_readonly("prediction", &MemoryRecord::prediction);
  py::class_<MemoryCloud>(m, "MemoryCloud")
      .def_readonly("alphabet", &MemoryCloud::alphabet)
      .def_readonly("depth", &MemoryCloud::depth)
      .def_readonly("records", &MemoryCloud::records)
      .def("child_index", &MemoryCloud::child_index, py::arg("record"),
           py::arg("symbol"));
  m.def("enumerate_memory_cloud", &enumerate_memory_cloud, py::arg("net"),
        py::arg("depth"), py::call_guard<py::gil_scoped_release>());

  py::class_<CloudProjection>(m, "CloudProjection")
      .def_readonly("mean", &CloudProjection::mean)
      .def_readonly("axis1", &CloudProjection::axis1)
      .def_readonly("axis2", &CloudProjection::axis2)
      .def_readonly("var1", &CloudProjection::var1)
      .def_readonly("var2", &CloudProjection::var2)
      .def_readonly("rank_deficient", &CloudProjection::rank_deficient)
      .def_readonly("coords", &CloudProjection::coords);
  m.def("project_cloud", &project_cloud, py::arg("cloud"));

  py::class_<MachineState>(m, "MachineState")
      .def_readonly("id", &MachineState::id)
      .def_readonly("representative", &MachineState::representative)
      .def_readonly("prediction", &MachineState::prediction)
      .def_readonly("next", &MachineState::next)
      .def_readonly("members", &MachineState::members);
  py::class_<StateMachine>(m, "StateMachine")
      .def_readonly("alphabet", &StateMachine::alphabet)
      .def_readonly("depth", &StateMachine::depth)
      .def_readonly("delta", &StateMachine::delta)
      .def_readonly("initial", &StateMachine::initial)
      .def_readonly("states", &StateMachine::states)
      .def_readonly("record_state", &StateMachine::record_state);
  m.def("extract_state_machine", &extract_state_machine, py::arg("net"),
        py::arg("depth"), py::arg("delta"), py::arg("probe_depth") = 3,
        py::call_guard<py::gil_scoped_release>());
  m.def("export_machine", &export_machine, py::arg("machine"));

  py::class_<LatticeState>(m, "LatticeState")
      .def_readonly("id", &LatticeState::id)
      .def_readonly("counts", &LatticeState::counts)
      .def_readonly("prediction", &LatticeState::prediction)
      .def_readonly("next", &LatticeState::next);
  py::class_<LatticeReference>(m, "LatticeReference")
      .def_readonly("alphabet", &LatticeReference::alphabet)
      .def_readonly("depth", &LatticeReference::depth)
      .def_readonly("initial", &LatticeReference::initial)
      .def_readonly("states", &LatticeReference::states)
      .def("state_for", &LatticeReference::state_for, py::arg("counts"));
  m.def("make_laplace_lattice", &make_laplace_lattice, py::arg("alphabet"),
        py::arg("depth"));

  py::class_<LatticeComparison>(m, "LatticeComparison")
      .def_readonly("bisimilar", &LatticeComparison::bisimilar)
      .def_readonly("max_discrepancy", &LatticeComparison::max_discrepancy)
      .def_readonly("machine_states_visited",
                    &LatticeComparison::machine_states_visited)
      .def_readonly("lattice_states_visited",
                    &LatticeComparison::lattice_states_visited)
      .def_readonly("conflicts", &LatticeComparison::conflicts)
      .def_readonly("missing", &LatticeComparison::missing);
  m.def("compare_to_lattice", &compare_to_lattice, py::arg("machine"),
        py::arg("lattice"), py::arg("depth"));

  m.def("quantized_state_trace", &quantized_state_trace, py::arg("machine"),
        py::arg("observations"));
  py::class_<SegmentReport>(m, "SegmentReport")
      .def_readonly("state", &SegmentReport::state)
      .def_readonly("anchors", &SegmentReport::anchors)
      .def_readonly("segments", &SegmentReport::segments)
      .def_readonly("degenerate", &SegmentReport::degenerate);
  m.def("segment_stream", &segment_stream, py::arg("machine"),
        py::arg("observations"));
}
