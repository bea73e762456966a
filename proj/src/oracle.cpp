#include "metastrat/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metastrat {

namespace {

double logsumexp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

void require_finite_support(const HypothesisClass& cls) {
  if (!cls.finite_support())
    throw UnsupportedOperation(cls.name() +
                               ": operation needs a finite hypothesis support");
}

std::vector<long long> rounded_weights(const Belief& b) {
  std::vector<long long> key;
  key.reserve(b.weights().size());
  for (double w : b.weights().weights())
    key.push_back(std::llround(w * 1e10));
  return key;
}

}  // namespace

Belief Belief::finite(ProbVector weights) {
  Belief b;
  b.weights_ = std::move(weights);
  return b;
}

Belief Belief::counts(std::vector<double> counts) {
  if (counts.size() < 2) throw ValidationError("belief needs >= 2 counts");
  for (double c : counts)
    if (!(c > 0.0)) throw ValidationError("pseudo-counts must be > 0");
  Belief b;
  b.counts_ = std::move(counts);
  b.counts_rep_ = true;
  return b;
}

const ProbVector& Belief::weights() const {
  if (counts_rep_)
    throw UnsupportedOperation("belief is count-based, has no finite weights");
  return weights_;
}

std::span<const double> Belief::pseudo_counts() const {
  if (!counts_rep_)
    throw UnsupportedOperation("belief is weight-based, has no pseudo-counts");
  return counts_;
}

Belief prior_belief(const HypothesisClass& cls) {
  if (cls.finite_support()) return Belief::finite(cls.prior());
  if (auto counts = cls.conjugate_prior_counts())
    return Belief::counts(std::move(*counts));
  throw UnsupportedOperation(cls.name() + ": no tractable belief representation");
}

ProbVector mixture_predictive(const Belief& b, const HypothesisClass& cls,
                              std::span<const int> history) {
  if (b.is_counts()) {
    auto counts = b.pseudo_counts();
    double total = 0.0;
    for (double c : counts) total += c;
    std::vector<double> pred(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) pred[i] = counts[i] / total;
    return ProbVector(std::move(pred));
  }
  require_finite_support(cls);
  const ProbVector& w = b.weights();
  std::vector<double> mix(cls.observation_alphabet().size, 0.0);
  for (int k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    ProbVector d = cls.symbol_distribution(cls.hypothesis(k), history);
    for (int s = 0; s < d.size(); ++s) mix[s] += w[k] * d[s];
  }
  return ProbVector(std::move(mix));
}

Belief posterior_update(const Belief& b, const HypothesisClass& cls,
                        std::span<const int> history, int symbol) {
  if (!cls.observation_alphabet().contains(symbol))
    throw ValidationError("posterior_update: symbol outside alphabet");
  if (b.is_counts()) {
    auto counts = b.pseudo_counts();
    std::vector<double> next(counts.begin(), counts.end());
    next[symbol] += 1.0;
    return Belief::counts(std::move(next));
  }
  require_finite_support(cls);
  const ProbVector& w = b.weights();
  std::vector<double> post(w.size());
  double total = 0.0;
  for (int k = 0; k < w.size(); ++k) {
    post[k] = w[k] == 0.0
                  ? 0.0
                  : w[k] * cls.symbol_likelihood(cls.hypothesis(k), history, symbol);
    total += post[k];
  }
  if (total <= 0.0)
    throw ValidationError("posterior_update: symbol has zero probability "
                          "under every hypothesis");
  for (double& p : post) p /= total;
  return Belief::finite(ProbVector(std::move(post)));
}

ProbVector observation_predictive(const Belief& b, const HypothesisClass& cls,
                                  int action) {
  require_finite_support(cls);
  const ProbVector& w = b.weights();
  std::vector<double> mix(cls.observation_alphabet().size, 0.0);
  for (int k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    ProbVector d = cls.observation_distribution(cls.hypothesis(k), action);
    for (int o = 0; o < d.size(); ++o) mix[o] += w[k] * d[o];
  }
  return ProbVector(std::move(mix));
}

Belief posterior_update(const Belief& b, const HypothesisClass& cls,
                        const Interaction& step) {
  require_finite_support(cls);
  const ProbVector& w = b.weights();
  std::vector<double> post(w.size());
  double total = 0.0;
  for (int k = 0; k < w.size(); ++k) {
    post[k] = w[k] == 0.0
                  ? 0.0
                  : w[k] * cls.observation_likelihood(cls.hypothesis(k),
                                                      step.action,
                                                      step.observation);
    total += post[k];
  }
  if (total <= 0.0)
    throw ValidationError("posterior_update: observation has zero probability "
                          "under every hypothesis");
  for (double& p : post) p /= total;
  return Belief::finite(ProbVector(std::move(post)));
}

Belief intervene_action(const Belief& b, int action) {
  (void)action;
  return b;
}

ProbVector thompson_action_predictive(const Belief& b,
                                      const HypothesisClass& cls,
                                      std::span<const Interaction> history) {
  require_finite_support(cls);
  if (cls.kind() != HypothesisClass::Kind::kBandit)
    throw UnsupportedOperation(cls.name() + ": no expert policies");
  const ProbVector& w = b.weights();
  std::vector<double> mix(cls.action_count(), 0.0);
  for (int k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    ProbVector e = cls.expert_policy(cls.hypothesis(k), history);
    for (int a = 0; a < e.size(); ++a) mix[a] += w[k] * e[a];
  }
  return ProbVector(std::move(mix));
}

BayesOptimalPlanner::BayesOptimalPlanner(const HypothesisClass& cls) : cls_(cls) {
  require_finite_support(cls);
  if (cls.kind() != HypothesisClass::Kind::kBandit)
    throw UnsupportedOperation(cls.name() + ": planning needs a bandit class");
}

std::vector<double> BayesOptimalPlanner::q_values(const Belief& b, int horizon) {
  if (horizon < 0) throw ValidationError("horizon must be >= 0");
  int actions = cls_.action_count();
  if (horizon == 0) return std::vector<double>(actions, 0.0);

  auto key = std::make_pair(horizon, rounded_weights(b));
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  std::vector<double> q(actions, 0.0);
  for (int a = 0; a < actions; ++a) {
    ProbVector obs = observation_predictive(b, cls_, a);
    for (int o = 0; o < obs.size(); ++o) {
      if (obs[o] == 0.0) continue;
      double future = 0.0;
      if (horizon > 1) {
        std::vector<double> next = q_values(
            posterior_update(b, cls_, Interaction{a, o, 0.0}), horizon - 1);
        future = *std::max_element(next.begin(), next.end());
      }
      q[a] += obs[o] * (cls_.reward(a, o) + future);
    }
  }
  memo_.emplace(std::move(key), q);
  return q;
}

BeliefNode BayesOptimalPlanner::expand(const Belief& b, int horizon) {
  return BeliefNode{b, horizon, q_values(b, horizon)};
}

double BayesOptimalPlanner::value(const Belief& b, int horizon) {
  if (horizon == 0) return 0.0;
  std::vector<double> q = q_values(b, horizon);
  return *std::max_element(q.begin(), q.end());
}

std::vector<double> bayes_optimal_q(const Belief& b, const HypothesisClass& cls,
                                    int horizon) {
  BayesOptimalPlanner planner(cls);
  return planner.q_values(b, horizon);
}

std::vector<double> brute_force_marginal(const HypothesisClass& cls,
                                         int length) {
  if (length < 0) throw ValidationError("length must be >= 0");
  if (length > 8)
    throw ResourceBoundError("brute_force_marginal: length capped at 8");
  if (cls.kind() != HypothesisClass::Kind::kPrediction)
    throw UnsupportedOperation(cls.name() + ": marginals need a prediction class");

  int alphabet = cls.observation_alphabet().size;
  long total = 1;
  for (int t = 0; t < length; ++t) total *= alphabet;

  std::vector<double> marginal(total, 0.0);
  std::vector<int> symbols(length, 0);
  for (long index = 0; index < total; ++index) {
    long rest = index;
    for (int t = length - 1; t >= 0; --t) {
      symbols[t] = static_cast<int>(rest % alphabet);
      rest /= alphabet;
    }
    if (cls.finite_support()) {
      ProbVector prior = cls.prior();
      double p = 0.0;
      for (int k = 0; k < cls.hypothesis_count(); ++k) {
        if (prior[k] == 0.0) continue;
        Hypothesis h = cls.hypothesis(k);
        double lik = 1.0;
        for (int t = 0; t < length; ++t)
          lik *= cls.symbol_likelihood(h, std::span(symbols).first(t), symbols[t]);
        p += prior[k] * lik;
      }
      marginal[index] = p;
    } else if (auto conc = cls.conjugate_prior_counts()) {
      // closed form: prod_i Gamma(a_i + n_i)/Gamma(a_i) * Gamma(A)/Gamma(A + L)
      std::vector<long> counts(alphabet, 0);
      for (int s : symbols) counts[s]++;
      double log_p = 0.0, conc_total = 0.0;
      for (int i = 0; i < alphabet; ++i) {
        log_p += std::lgamma((*conc)[i] + counts[i]) - std::lgamma((*conc)[i]);
        conc_total += (*conc)[i];
      }
      log_p += std::lgamma(conc_total) - std::lgamma(conc_total + length);
      marginal[index] = std::exp(log_p);
    } else {
      throw UnsupportedOperation(cls.name() + ": no tractable marginal");
    }
  }
  return marginal;
}

DominanceReport regret_dominance_check(const HypothesisClass& cls,
                                       int hypothesis_index,
                                       const Trajectory& trajectory) {
  require_finite_support(cls);
  trajectory.validate(cls.observation_alphabet());
  ProbVector prior = cls.prior();
  if (hypothesis_index < 0 || hypothesis_index >= prior.size())
    throw ValidationError("hypothesis index out of range");

  std::vector<double> log_joint(prior.size(),
                                -std::numeric_limits<double>::infinity());
  double log_lik_true = 0.0;
  for (int k = 0; k < prior.size(); ++k) {
    if (prior[k] == 0.0 && k != hypothesis_index) continue;
    Hypothesis h = cls.hypothesis(k);
    double ll = 0.0;
    for (int t = 0; t < trajectory.length(); ++t) {
      double lik = cls.symbol_likelihood(
          h, std::span(trajectory.symbols).first(t), trajectory.symbols[t]);
      ll += std::log(lik);
    }
    if (k == hypothesis_index) log_lik_true = ll;
    if (prior[k] > 0.0) log_joint[k] = std::log(prior[k]) + ll;
  }

  double log_mixture = logsumexp(log_joint);
  double regret = -log_mixture + log_lik_true;
  double slack = -std::log(prior[hypothesis_index]) - regret;
  return DominanceReport{slack >= -1e-9, regret, slack};
}

}  // namespace metastrat
