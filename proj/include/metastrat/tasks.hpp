#pragma once

// Task distributions: a prior over generators plus the generators themselves.
// Prediction classes emit symbols; bandit classes map actions to observations,
// rewards, and an expert policy used for distillation targets.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metastrat/core.hpp"

namespace metastrat {

// One generator drawn from a class. Finite-support classes carry the support
// index; continuous classes use index -1 and identify the generator by values.
struct Hypothesis {
  int index = -1;
  std::vector<double> values;
};

class HypothesisClass {
 public:
  enum class Kind { kPrediction, kBandit };

  virtual ~HypothesisClass() = default;

  virtual Kind kind() const = 0;
  virtual std::string name() const = 0;
  virtual Alphabet observation_alphabet() const = 0;
  virtual int action_count() const { return 0; }
  virtual bool finite_support() const = 0;

  // finite-support accessors
  virtual int hypothesis_count() const;
  virtual ProbVector prior() const;
  virtual Hypothesis hypothesis(int index) const;

  // Dirichlet-style classes report their pseudo-count prior here so exact
  // inference can run on counts instead of an enumerated support.
  virtual std::optional<std::vector<double>> conjugate_prior_counts() const {
    return std::nullopt;
  }

  virtual Hypothesis sample_hypothesis(RandomSource& rng) const = 0;

  // prediction kind
  virtual ProbVector symbol_distribution(const Hypothesis& h,
                                         std::span<const int> history) const;
  double symbol_likelihood(const Hypothesis& h, std::span<const int> history,
                           int symbol) const;
  int sample_symbol(const Hypothesis& h, std::span<const int> history,
                    RandomSource& rng) const;

  // bandit kind
  virtual ProbVector observation_distribution(const Hypothesis& h,
                                              int action) const;
  double observation_likelihood(const Hypothesis& h, int action,
                                int observation) const;
  int sample_observation(const Hypothesis& h, int action,
                         RandomSource& rng) const;
  virtual ProbVector expert_policy(const Hypothesis& h,
                                   std::span<const Interaction> history) const;
  virtual double reward(int action, int observation) const;
};

// Finite set of i.i.d. categorical generators over a shared alphabet.
class FiniteCoinSet : public HypothesisClass {
 public:
  FiniteCoinSet(std::vector<ProbVector> thetas, ProbVector prior);
  explicit FiniteCoinSet(std::vector<ProbVector> thetas);
  // biases are P(symbol 1); builds two-symbol generators
  static FiniteCoinSet from_biases(const std::vector<double>& biases);

  Kind kind() const override { return Kind::kPrediction; }
  std::string name() const override { return "coins"; }
  Alphabet observation_alphabet() const override;
  bool finite_support() const override { return true; }
  int hypothesis_count() const override;
  ProbVector prior() const override { return prior_; }
  Hypothesis hypothesis(int index) const override;
  Hypothesis sample_hypothesis(RandomSource& rng) const override;
  ProbVector symbol_distribution(const Hypothesis& h,
                                 std::span<const int> history) const override;

 private:
  std::vector<ProbVector> thetas_;
  ProbVector prior_;
};

// Conjugate family: theta ~ Dirichlet(concentration), symbols i.i.d. given theta.
class DirichletCategorical : public HypothesisClass {
 public:
  DirichletCategorical(int symbols, std::vector<double> concentration);
  explicit DirichletCategorical(int symbols);

  Kind kind() const override { return Kind::kPrediction; }
  std::string name() const override { return "dirichlet"; }
  Alphabet observation_alphabet() const override { return Alphabet(symbols_); }
  bool finite_support() const override { return false; }
  std::optional<std::vector<double>> conjugate_prior_counts() const override {
    return concentration_;
  }
  Hypothesis sample_hypothesis(RandomSource& rng) const override;
  ProbVector symbol_distribution(const Hypothesis& h,
                                 std::span<const int> history) const override;

 private:
  int symbols_;
  std::vector<double> concentration_;
};

// Finite set of Bernoulli bandits. values[a] is the success probability of
// arm a; observation 1 pays reward 1, observation 0 pays 0. The expert plays
// the best arm of its generator, ties resolved to the lowest index.
class BernoulliBanditSet : public HypothesisClass {
 public:
  BernoulliBanditSet(std::vector<std::vector<double>> arm_probs,
                     ProbVector prior);
  explicit BernoulliBanditSet(std::vector<std::vector<double>> arm_probs);

  Kind kind() const override { return Kind::kBandit; }
  std::string name() const override { return "bandit"; }
  Alphabet observation_alphabet() const override { return Alphabet(2); }
  int action_count() const override;
  bool finite_support() const override { return true; }
  int hypothesis_count() const override;
  ProbVector prior() const override { return prior_; }
  Hypothesis hypothesis(int index) const override;
  Hypothesis sample_hypothesis(RandomSource& rng) const override;
  ProbVector observation_distribution(const Hypothesis& h,
                                      int action) const override;
  ProbVector expert_policy(const Hypothesis& h,
                           std::span<const Interaction> history) const override;
  double reward(int action, int observation) const override;

 private:
  std::vector<std::vector<double>> arm_probs_;
  ProbVector prior_;
};

}  // namespace metastrat
