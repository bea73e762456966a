#pragma once

// Flat key = value run configuration. Unknown and duplicate keys are errors;
// every value is parsed strictly and validation messages name the field.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "metastrat/tasks.hpp"

namespace metastrat {

enum class AlgorithmKind { kPredict, kThompson, kBayesOpt };

std::string algorithm_name(AlgorithmKind algorithm);
AlgorithmKind parse_algorithm(const std::string& name);

struct RunConfig {
  AlgorithmKind algorithm = AlgorithmKind::kPredict;
  std::string task = "dirichlet";  // dirichlet | coins | bandit

  // task parameters
  int symbols = 2;
  std::vector<double> concentration;         // empty: all ones
  std::vector<std::vector<double>> thetas;   // coins: symbol distributions
                                             // (or single-entry biases);
                                             // bandit: arm success probs
  std::vector<double> prior;                 // empty: uniform

  // training
  int batch_size = 100;
  int horizon = 10;
  int batches = 1000;
  int hidden = 20;
  double learning_rate = 1e-3;
  double beta_start = 0.0;
  double beta_max = 20.0;
  double beta_tau = 0.0;  // 0: batches / 5
  std::uint64_t seed = 1;

  // evaluation and stopping
  int eval_every = 25;
  int eval_rollouts = 256;
  double early_stop_delta = 1e-4;
  int early_stop_window = 100;  // batches; 0 disables
  int checkpoint_every = 0;     // batches; 0: final only
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// cross-field checks; throws ValidationError naming the offending field
void validate_run_config(const RunConfig& cfg);

std::unique_ptr<HypothesisClass> make_task(const RunConfig& cfg);

}  // namespace metastrat
