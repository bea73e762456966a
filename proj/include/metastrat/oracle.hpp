#pragma once

// Exact Bayesian reference strategies. Beliefs are either explicit weights
// over a finite hypothesis support or Dirichlet pseudo-counts for conjugate
// classes; every agent in this project is measured against these.

#include <map>
#include <span>
#include <vector>

#include "metastrat/core.hpp"
#include "metastrat/tasks.hpp"

namespace metastrat {

class Belief {
 public:
  static Belief finite(ProbVector weights);
  // pseudo-counts, all > 0
  static Belief counts(std::vector<double> counts);

  bool is_counts() const { return counts_rep_; }
  const ProbVector& weights() const;
  std::span<const double> pseudo_counts() const;

 private:
  ProbVector weights_;
  std::vector<double> counts_;
  bool counts_rep_ = false;
};

Belief prior_belief(const HypothesisClass& cls);

// P(next symbol | belief), marginalizing the hypothesis. history feeds the
// per-hypothesis conditional for sequence models; counts beliefs already fold
// the data in and ignore it.
ProbVector mixture_predictive(const Belief& b, const HypothesisClass& cls,
                              std::span<const int> history);

// Bayes update on an observed symbol. Zero-likelihood symbols are impossible
// under the class and raise ValidationError.
Belief posterior_update(const Belief& b, const HypothesisClass& cls,
                        std::span<const int> history, int symbol);

// bandit counterparts, conditioning on the intervened action
ProbVector observation_predictive(const Belief& b, const HypothesisClass& cls,
                                  int action);
Belief posterior_update(const Belief& b, const HypothesisClass& cls,
                        const Interaction& step);

// Actions are issued, not observed: they carry no likelihood factor, so the
// update is the identity.
Belief intervene_action(const Belief& b, int action);

// P(expert action | belief): the mixture of expert policies, i.e. the
// probability Thompson sampling plays each action next.
ProbVector thompson_action_predictive(const Belief& b,
                                      const HypothesisClass& cls,
                                      std::span<const Interaction> history);

struct BeliefNode {
  Belief belief;
  int horizon = 0;
  std::vector<double> q;
};

// Undiscounted expectimax over the belief tree:
//   Q(b, a, h) = sum_o P(o|b,a) [r(a,o) + max_a' Q(post(b,a,o), a', h-1)]
// Memoized on (horizon, belief weights rounded to 1e-10); reachable beliefs
// repeat heavily, so the memo carries most of the work.
class BayesOptimalPlanner {
 public:
  explicit BayesOptimalPlanner(const HypothesisClass& cls);

  std::vector<double> q_values(const Belief& b, int horizon);
  BeliefNode expand(const Belief& b, int horizon);
  double value(const Belief& b, int horizon);
  std::size_t memo_size() const { return memo_.size(); }

 private:
  const HypothesisClass& cls_;
  std::map<std::pair<int, std::vector<long long>>, std::vector<double>> memo_;
};

std::vector<double> bayes_optimal_q(const Belief& b, const HypothesisClass& cls,
                                    int horizon);

// Exact trajectory marginals P(tau) for every length-L symbol sequence,
// indexed big-endian (first symbol is the most significant digit). Finite
// classes are summed over the support; conjugate classes use the closed-form
// Dirichlet-categorical sequence probability. L > 8 raises ResourceBoundError.
std::vector<double> brute_force_marginal(const HypothesisClass& cls, int length);

struct DominanceReport {
  bool holds = false;
  // -log pi*(x) + log P(x|theta): excess loss of the mixture over the truth
  double regret = 0.0;
  // -log P(theta) - regret, >= 0 when the bound holds
  double slack = 0.0;
};

// Checks the mixture dominance bound regret <= -log P(theta) on one trajectory.
DominanceReport regret_dominance_check(const HypothesisClass& cls,
                                       int hypothesis_index,
                                       const Trajectory& trajectory);

}  // namespace metastrat
