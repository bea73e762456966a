#pragma once

// Recurrent strategy network: one GRU layer plus a linear head over a flat
// double buffer, with an explicit step tape so the backward pass, the
// finite-difference checker, and checkpointing all see the same graph.

#include <span>
#include <string>
#include <vector>

#include "metastrat/core.hpp"

namespace metastrat {

// What the head's raw outputs mean: symbol logits, action logits for
// distillation, or action values regressed by TD.
enum class HeadMode { kPrediction, kPolicy, kValue };

std::string head_mode_name(HeadMode mode);
HeadMode parse_head_mode(const std::string& name);

struct NetShape {
  int input = 0;
  int hidden = 0;
  int output = 0;

  int param_count() const {
    return 3 * hidden * (input + hidden + 1) + output * (hidden + 1);
  }
};

// offsets into the flat parameter buffer; weights are row-major
struct ParamLayout {
  int wr = 0, ur = 0, br = 0;
  int wz = 0, uz = 0, bz = 0;
  int wn = 0, un = 0, bn = 0;
  int wo = 0, bo = 0;
  explicit ParamLayout(const NetShape& s);
};

// Everything the backward pass needs from one forward step. r/z/n are the
// gate activations, h the new memory, output the raw head values.
struct StepTrace {
  std::vector<double> input;
  std::vector<double> h_prev;
  std::vector<double> r, z, n, h;
  std::vector<double> output;
};

// Forward value used as a constant by the backward pass.
struct Frozen {
  double value = 0.0;
};
inline Frozen stop_gradient(double v) { return Frozen{v}; }

// One loss term, attached to the step whose outputs it scores. kNone marks a
// step that contributes no loss.
struct LossRecord {
  enum class Kind { kNone, kObserved, kDistill, kTd };
  Kind kind = Kind::kNone;
  int symbol = -1;             // kObserved: realized symbol
  std::vector<double> target;  // kDistill: expert action distribution
  int action = -1;             // kTd: action whose value is regressed
  Frozen td_target;            // kTd: Constant(r + q_next) or Constant(r_T)
};

struct Rollout {
  std::vector<StepTrace> steps;
  std::vector<LossRecord> losses;  // one record per step
};

class Net {
 public:
  Net(NetShape shape, HeadMode mode);
  // weights uniform on [-1/sqrt(H), 1/sqrt(H)], biases zero except the keep
  // gate at +1 so fresh nets hold memory across long horizons
  static Net initialized(NetShape shape, HeadMode mode, RandomSource& rng);

  const NetShape& shape() const { return shape_; }
  HeadMode mode() const { return mode_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // h_prev must have hidden elements; zeros for the first step. Throws
  // DivergenceError if the new memory is not finite.
  StepTrace forward_step(std::span<const double> input,
                         std::span<const double> h_prev) const;

 private:
  NetShape shape_;
  HeadMode mode_;
  ParamLayout layout_;
  std::vector<double> params_;
};

// Appends one forward step to the rollout, chaining memory from the previous
// step (zeros at the start). Returns the new trace.
const StepTrace& step_forward(const Net& net, std::span<const double> input,
                              Rollout& rollout);

ProbVector softmax_temperature(std::span<const double> values, double beta);
inline ProbVector softmax(std::span<const double> values) {
  return softmax_temperature(values, 1.0);
}

// Loss of one recorded step. Probabilities are floored at kLogFloor inside
// the log, and a floored term contributes zero gradient.
double step_loss(const StepTrace& step, const LossRecord& record,
                 HeadMode mode);
double rollout_loss(const Rollout& rollout, HeadMode mode);

// Re-runs the forward pass on the recorded inputs with the recorded loss
// terms (TD targets stay frozen). With unchanged parameters this reproduces
// the recorded outputs bitwise.
double replay_loss(const Net& net, const Rollout& rollout);

// Accumulates d(rollout loss)/d(params) into grad (size param_count).
void backward(const Net& net, const Rollout& rollout, std::span<double> grad);

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
};

// Central finite differences on replay_loss against backward, over
// max_params randomly chosen coordinates (all of them if the net is small).
GradCheckReport finite_difference_check(const Net& net, const Rollout& rollout,
                                        int max_params, RandomSource& rng,
                                        double epsilon = 1e-5);

inline constexpr double kGradClipNorm = 10.0;

// Scales grad in place to max_norm if its global L2 norm exceeds it; returns
// the norm before clipping. Throws DivergenceError on non-finite gradients.
double clip_global_norm(std::span<double> grad, double max_norm);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<double> m, v;

  explicit AdamState(int param_count, double lr = 1e-3);
};

void adam_step(std::span<double> params, std::span<const double> grad,
               AdamState& state);

struct Checkpoint {
  HeadMode mode = HeadMode::kPrediction;
  NetShape shape;
  long batches_done = 0;
  std::vector<double> params;
  long adam_step = 0;
  std::vector<double> adam_m, adam_v;
};

// Versioned text format with hexfloat doubles: exact round-trip, no
// endianness concerns.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace metastrat
