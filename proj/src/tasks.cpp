#include "metastrat/tasks.hpp"

#include <algorithm>
#include <cmath>

namespace metastrat {

int HypothesisClass::hypothesis_count() const {
  throw UnsupportedOperation(name() + ": no finite hypothesis support");
}

ProbVector HypothesisClass::prior() const {
  throw UnsupportedOperation(name() + ": no finite hypothesis support");
}

Hypothesis HypothesisClass::hypothesis(int) const {
  throw UnsupportedOperation(name() + ": no finite hypothesis support");
}

ProbVector HypothesisClass::symbol_distribution(const Hypothesis&,
                                                std::span<const int>) const {
  throw UnsupportedOperation(name() + ": not a prediction class");
}

double HypothesisClass::symbol_likelihood(const Hypothesis& h,
                                          std::span<const int> history,
                                          int symbol) const {
  ProbVector d = symbol_distribution(h, history);
  if (symbol < 0 || symbol >= d.size())
    throw ValidationError("symbol out of range");
  return d[symbol];
}

int HypothesisClass::sample_symbol(const Hypothesis& h,
                                   std::span<const int> history,
                                   RandomSource& rng) const {
  return sample_categorical(symbol_distribution(h, history), rng);
}

ProbVector HypothesisClass::observation_distribution(const Hypothesis&,
                                                     int) const {
  throw UnsupportedOperation(name() + ": not a bandit class");
}

double HypothesisClass::observation_likelihood(const Hypothesis& h, int action,
                                               int observation) const {
  ProbVector d = observation_distribution(h, action);
  if (observation < 0 || observation >= d.size())
    throw ValidationError("observation out of range");
  return d[observation];
}

int HypothesisClass::sample_observation(const Hypothesis& h, int action,
                                        RandomSource& rng) const {
  return sample_categorical(observation_distribution(h, action), rng);
}

ProbVector HypothesisClass::expert_policy(const Hypothesis&,
                                          std::span<const Interaction>) const {
  throw UnsupportedOperation(name() + ": not a bandit class");
}

double HypothesisClass::reward(int, int) const {
  throw UnsupportedOperation(name() + ": not a bandit class");
}

FiniteCoinSet::FiniteCoinSet(std::vector<ProbVector> thetas, ProbVector prior)
    : thetas_(std::move(thetas)), prior_(std::move(prior)) {
  if (thetas_.empty()) throw ValidationError("coins: empty hypothesis set");
  int n = thetas_[0].size();
  if (n < 2) throw ValidationError("coins: alphabet must have >= 2 symbols");
  for (const auto& t : thetas_)
    if (t.size() != n)
      throw ValidationError("coins: inconsistent alphabet sizes");
  if (prior_.size() != static_cast<int>(thetas_.size()))
    throw ValidationError("coins: prior size does not match hypothesis count");
}

FiniteCoinSet::FiniteCoinSet(std::vector<ProbVector> thetas)
    : FiniteCoinSet(std::move(thetas),
                    ProbVector::uniform(static_cast<int>(thetas.size()))) {}

FiniteCoinSet FiniteCoinSet::from_biases(const std::vector<double>& biases) {
  std::vector<ProbVector> thetas;
  for (double b : biases) {
    if (b < 0.0 || b > 1.0) throw ValidationError("coin bias outside [0, 1]");
    thetas.push_back(ProbVector({1.0 - b, b}));
  }
  return FiniteCoinSet(std::move(thetas));
}

Alphabet FiniteCoinSet::observation_alphabet() const {
  return Alphabet(thetas_[0].size());
}

int FiniteCoinSet::hypothesis_count() const {
  return static_cast<int>(thetas_.size());
}

Hypothesis FiniteCoinSet::hypothesis(int index) const {
  if (index < 0 || index >= hypothesis_count())
    throw ValidationError("hypothesis index out of range");
  const auto w = thetas_[index].weights();
  return Hypothesis{index, {w.begin(), w.end()}};
}

Hypothesis FiniteCoinSet::sample_hypothesis(RandomSource& rng) const {
  return hypothesis(sample_categorical(prior_, rng));
}

ProbVector FiniteCoinSet::symbol_distribution(const Hypothesis& h,
                                              std::span<const int>) const {
  return ProbVector(h.values);
}

DirichletCategorical::DirichletCategorical(int symbols,
                                           std::vector<double> concentration)
    : symbols_(symbols), concentration_(std::move(concentration)) {
  if (symbols_ < 2) throw ValidationError("dirichlet: need >= 2 symbols");
  if (static_cast<int>(concentration_.size()) != symbols_)
    throw ValidationError("dirichlet: concentration size != symbol count");
  for (double a : concentration_)
    if (!(a > 0.0)) throw ValidationError("dirichlet: concentration must be > 0");
}

DirichletCategorical::DirichletCategorical(int symbols)
    : DirichletCategorical(symbols, std::vector<double>(symbols, 1.0)) {}

Hypothesis DirichletCategorical::sample_hypothesis(RandomSource& rng) const {
  return Hypothesis{-1, sample_dirichlet(concentration_, rng)};
}

ProbVector DirichletCategorical::symbol_distribution(
    const Hypothesis& h, std::span<const int>) const {
  return ProbVector(h.values);
}

BernoulliBanditSet::BernoulliBanditSet(
    std::vector<std::vector<double>> arm_probs, ProbVector prior)
    : arm_probs_(std::move(arm_probs)), prior_(std::move(prior)) {
  if (arm_probs_.empty()) throw ValidationError("bandit: empty hypothesis set");
  std::size_t arms = arm_probs_[0].size();
  if (arms < 2) throw ValidationError("bandit: need >= 2 arms");
  for (const auto& probs : arm_probs_) {
    if (probs.size() != arms)
      throw ValidationError("bandit: inconsistent arm counts");
    for (double p : probs)
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError("bandit: success probability outside [0, 1]");
  }
  if (prior_.size() != static_cast<int>(arm_probs_.size()))
    throw ValidationError("bandit: prior size does not match hypothesis count");
}

BernoulliBanditSet::BernoulliBanditSet(std::vector<std::vector<double>> arm_probs)
    : BernoulliBanditSet(std::move(arm_probs),
                         ProbVector::uniform(static_cast<int>(arm_probs.size()))) {}

int BernoulliBanditSet::action_count() const {
  return static_cast<int>(arm_probs_[0].size());
}

int BernoulliBanditSet::hypothesis_count() const {
  return static_cast<int>(arm_probs_.size());
}

Hypothesis BernoulliBanditSet::hypothesis(int index) const {
  if (index < 0 || index >= hypothesis_count())
    throw ValidationError("hypothesis index out of range");
  return Hypothesis{index, arm_probs_[index]};
}

Hypothesis BernoulliBanditSet::sample_hypothesis(RandomSource& rng) const {
  return hypothesis(sample_categorical(prior_, rng));
}

ProbVector BernoulliBanditSet::observation_distribution(const Hypothesis& h,
                                                        int action) const {
  if (action < 0 || action >= action_count())
    throw ValidationError("action out of range");
  double p = h.values[action];
  return ProbVector::from_normalized({1.0 - p, p});
}

ProbVector BernoulliBanditSet::expert_policy(
    const Hypothesis& h, std::span<const Interaction>) const {
  int best = 0;
  for (int a = 1; a < action_count(); ++a)
    if (h.values[a] > h.values[best]) best = a;
  return ProbVector::point_mass(action_count(), best);
}

double BernoulliBanditSet::reward(int action, int observation) const {
  if (action < 0 || action >= action_count())
    throw ValidationError("action out of range");
  if (observation != 0 && observation != 1)
    throw ValidationError("observation out of range");
  return observation == 1 ? 1.0 : 0.0;
}

}  // namespace metastrat
