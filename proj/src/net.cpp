#include "metastrat/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>

namespace metastrat {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += W x, W row-major rows x cols
void matvec_acc(std::span<const double> w, std::span<const double> x, int rows,
                int cols, std::span<double> y) {
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* row = w.data() + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
}

// y += W^T d
void matvec_transpose_acc(std::span<const double> w, std::span<const double> d,
                          int rows, int cols, std::span<double> y) {
  for (int i = 0; i < rows; ++i) {
    const double* row = w.data() + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) y[j] += row[j] * d[i];
  }
}

// W += d (outer) x
void outer_acc(std::span<double> w, std::span<const double> d,
               std::span<const double> x, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    double* row = w.data() + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) row[j] += d[i] * x[j];
  }
}

// d(loss)/d(raw head outputs) for one recorded step
std::vector<double> output_gradient(const StepTrace& step,
                                    const LossRecord& record, HeadMode mode) {
  int k = static_cast<int>(step.output.size());
  std::vector<double> dout(k, 0.0);
  switch (record.kind) {
    case LossRecord::Kind::kNone:
      break;
    case LossRecord::Kind::kObserved: {
      if (mode == HeadMode::kValue)
        throw UnsupportedOperation("observed-symbol loss on a value head");
      ProbVector pi = softmax(step.output);
      if (pi[record.symbol] <= kLogFloor) break;  // floored: constant loss
      for (int i = 0; i < k; ++i) dout[i] = pi[i];
      dout[record.symbol] -= 1.0;
      break;
    }
    case LossRecord::Kind::kDistill: {
      if (mode == HeadMode::kValue)
        throw UnsupportedOperation("distillation loss on a value head");
      ProbVector pi = softmax(step.output);
      double live_mass = 0.0;
      for (int i = 0; i < k; ++i)
        if (pi[i] > kLogFloor) live_mass += record.target[i];
      for (int i = 0; i < k; ++i) {
        dout[i] = live_mass * pi[i];
        if (pi[i] > kLogFloor) dout[i] -= record.target[i];
      }
      break;
    }
    case LossRecord::Kind::kTd: {
      if (mode != HeadMode::kValue)
        throw UnsupportedOperation("td loss needs a value head");
      dout[record.action] =
          2.0 * (step.output[record.action] - record.td_target.value);
      break;
    }
  }
  return dout;
}

}  // namespace

std::string head_mode_name(HeadMode mode) {
  switch (mode) {
    case HeadMode::kPrediction: return "prediction";
    case HeadMode::kPolicy: return "policy";
    case HeadMode::kValue: return "value";
  }
  throw ValidationError("unknown head mode");
}

HeadMode parse_head_mode(const std::string& name) {
  if (name == "prediction") return HeadMode::kPrediction;
  if (name == "policy") return HeadMode::kPolicy;
  if (name == "value") return HeadMode::kValue;
  throw ValidationError("unknown head mode '" + name + "'");
}

ParamLayout::ParamLayout(const NetShape& s) {
  int off = 0;
  auto take = [&off](int n) {
    int at = off;
    off += n;
    return at;
  };
  wr = take(s.hidden * s.input);
  ur = take(s.hidden * s.hidden);
  br = take(s.hidden);
  wz = take(s.hidden * s.input);
  uz = take(s.hidden * s.hidden);
  bz = take(s.hidden);
  wn = take(s.hidden * s.input);
  un = take(s.hidden * s.hidden);
  bn = take(s.hidden);
  wo = take(s.output * s.hidden);
  bo = take(s.output);
}

Net::Net(NetShape shape, HeadMode mode)
    : shape_(shape), mode_(mode), layout_(shape) {
  if (shape.input < 1 || shape.hidden < 1 || shape.output < 1)
    throw ValidationError("net dimensions must be >= 1");
  params_.assign(shape.param_count(), 0.0);
}

Net Net::initialized(NetShape shape, HeadMode mode, RandomSource& rng) {
  Net net(shape, mode);
  double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  const ParamLayout& l = net.layout_;
  auto fill = [&](int offset, int count) {
    for (int i = 0; i < count; ++i)
      net.params_[offset + i] = (2.0 * rng.next_double() - 1.0) * bound;
  };
  int h = shape.hidden, d = shape.input, k = shape.output;
  fill(l.wr, h * d);
  fill(l.ur, h * h);
  fill(l.wz, h * d);
  fill(l.uz, h * h);
  fill(l.wn, h * d);
  fill(l.un, h * h);
  fill(l.wo, k * h);
  for (int i = 0; i < h; ++i) net.params_[l.bz + i] = 1.0;
  return net;
}

StepTrace Net::forward_step(std::span<const double> input,
                            std::span<const double> h_prev) const {
  int h = shape_.hidden, d = shape_.input, k = shape_.output;
  if (static_cast<int>(input.size()) != d)
    throw ValidationError("input size does not match net shape");
  if (static_cast<int>(h_prev.size()) != h)
    throw ValidationError("memory size does not match net shape");

  StepTrace t;
  t.input.assign(input.begin(), input.end());
  t.h_prev.assign(h_prev.begin(), h_prev.end());
  t.r.assign(h, 0.0);
  t.z.assign(h, 0.0);
  t.n.assign(h, 0.0);
  t.h.assign(h, 0.0);
  t.output.assign(k, 0.0);

  std::span<const double> p = params_;
  std::vector<double> pre(h, 0.0);

  // reset gate
  for (int i = 0; i < h; ++i) pre[i] = p[layout_.br + i];
  matvec_acc(p.subspan(layout_.wr, h * d), input, h, d, pre);
  matvec_acc(p.subspan(layout_.ur, h * h), h_prev, h, h, pre);
  for (int i = 0; i < h; ++i) t.r[i] = sigmoid(pre[i]);

  // keep gate
  for (int i = 0; i < h; ++i) pre[i] = p[layout_.bz + i];
  matvec_acc(p.subspan(layout_.wz, h * d), input, h, d, pre);
  matvec_acc(p.subspan(layout_.uz, h * h), h_prev, h, h, pre);
  for (int i = 0; i < h; ++i) t.z[i] = sigmoid(pre[i]);

  // candidate on the reset memory
  std::vector<double> hr(h);
  for (int i = 0; i < h; ++i) hr[i] = t.r[i] * h_prev[i];
  for (int i = 0; i < h; ++i) pre[i] = p[layout_.bn + i];
  matvec_acc(p.subspan(layout_.wn, h * d), input, h, d, pre);
  matvec_acc(p.subspan(layout_.un, h * h), hr, h, h, pre);
  for (int i = 0; i < h; ++i) t.n[i] = std::tanh(pre[i]);

  for (int i = 0; i < h; ++i) {
    t.h[i] = t.z[i] * h_prev[i] + (1.0 - t.z[i]) * t.n[i];
    if (!std::isfinite(t.h[i]))
      throw DivergenceError("non-finite memory in forward step");
  }

  for (int i = 0; i < k; ++i) t.output[i] = p[layout_.bo + i];
  matvec_acc(p.subspan(layout_.wo, k * h), t.h, k, h, t.output);
  for (int i = 0; i < k; ++i)
    if (!std::isfinite(t.output[i]))
      throw DivergenceError("non-finite output in forward step");
  return t;
}

const StepTrace& step_forward(const Net& net, std::span<const double> input,
                              Rollout& rollout) {
  if (rollout.steps.empty()) {
    std::vector<double> zeros(net.shape().hidden, 0.0);
    rollout.steps.push_back(net.forward_step(input, zeros));
  } else {
    rollout.steps.push_back(net.forward_step(input, rollout.steps.back().h));
  }
  return rollout.steps.back();
}

ProbVector softmax_temperature(std::span<const double> values, double beta) {
  if (values.empty()) throw ValidationError("softmax of empty vector");
  if (!std::isfinite(beta) || beta < 0.0)
    throw ValidationError("softmax temperature must be finite and >= 0");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, beta * v);
  std::vector<double> e(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    e[i] = std::exp(beta * values[i] - m);
    total += e[i];
  }
  for (double& x : e) x /= total;
  return ProbVector::from_normalized(std::move(e));
}

double step_loss(const StepTrace& step, const LossRecord& record,
                 HeadMode mode) {
  switch (record.kind) {
    case LossRecord::Kind::kNone:
      return 0.0;
    case LossRecord::Kind::kObserved: {
      if (mode == HeadMode::kValue)
        throw UnsupportedOperation("observed-symbol loss on a value head");
      ProbVector pi = softmax(step.output);
      return log_loss(pi, record.symbol);
    }
    case LossRecord::Kind::kDistill: {
      if (mode == HeadMode::kValue)
        throw UnsupportedOperation("distillation loss on a value head");
      if (record.target.size() != step.output.size())
        throw ValidationError("distillation target size mismatch");
      ProbVector pi = softmax(step.output);
      double loss = 0.0;
      for (std::size_t a = 0; a < record.target.size(); ++a)
        if (record.target[a] > 0.0)
          loss += record.target[a] * -std::log(std::max(pi[a], kLogFloor));
      return loss;
    }
    case LossRecord::Kind::kTd: {
      if (mode != HeadMode::kValue)
        throw UnsupportedOperation("td loss needs a value head");
      if (record.action < 0 ||
          record.action >= static_cast<int>(step.output.size()))
        throw ValidationError("td action out of range");
      double diff = record.td_target.value - step.output[record.action];
      return diff * diff;
    }
  }
  throw ValidationError("unknown loss record kind");
}

double rollout_loss(const Rollout& rollout, HeadMode mode) {
  if (rollout.losses.size() != rollout.steps.size())
    throw ValidationError("rollout has mismatched steps and losses");
  double total = 0.0;
  for (std::size_t t = 0; t < rollout.steps.size(); ++t)
    total += step_loss(rollout.steps[t], rollout.losses[t], mode);
  return total;
}

double replay_loss(const Net& net, const Rollout& rollout) {
  if (rollout.losses.size() != rollout.steps.size())
    throw ValidationError("rollout has mismatched steps and losses");
  std::vector<double> h(net.shape().hidden, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
    StepTrace trace = net.forward_step(rollout.steps[t].input, h);
    total += step_loss(trace, rollout.losses[t], net.mode());
    h = trace.h;
  }
  return total;
}

void backward(const Net& net, const Rollout& rollout, std::span<double> grad) {
  const NetShape& s = net.shape();
  const ParamLayout& l = net.layout();
  if (static_cast<int>(grad.size()) != s.param_count())
    throw ValidationError("gradient buffer size mismatch");
  if (rollout.losses.size() != rollout.steps.size())
    throw ValidationError("rollout has mismatched steps and losses");

  int h = s.hidden, d = s.input, k = s.output;
  std::span<const double> p = net.params();
  std::vector<double> dh_carry(h, 0.0);
  std::vector<double> dh(h), dz(h), dn(h), dan(h), dhr(h), dr(h), dar(h),
      daz(h), hr(h);

  for (int t = static_cast<int>(rollout.steps.size()) - 1; t >= 0; --t) {
    const StepTrace& st = rollout.steps[t];
    std::vector<double> dout = output_gradient(st, rollout.losses[t],
                                               net.mode());

    // head
    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_transpose_acc(p.subspan(l.wo, k * h), dout, k, h, dh);
    for (int i = 0; i < h; ++i) dh[i] += dh_carry[i];
    outer_acc(grad.subspan(l.wo, k * h), dout, st.h, k, h);
    for (int i = 0; i < k; ++i) grad[l.bo + i] += dout[i];

    // h = z h_prev + (1 - z) n
    for (int i = 0; i < h; ++i) {
      dz[i] = dh[i] * (st.h_prev[i] - st.n[i]);
      dn[i] = dh[i] * (1.0 - st.z[i]);
      dh_carry[i] = dh[i] * st.z[i];
    }

    // candidate
    for (int i = 0; i < h; ++i) {
      dan[i] = dn[i] * (1.0 - st.n[i] * st.n[i]);
      hr[i] = st.r[i] * st.h_prev[i];
    }
    outer_acc(grad.subspan(l.wn, h * d), dan, st.input, h, d);
    outer_acc(grad.subspan(l.un, h * h), dan, hr, h, h);
    for (int i = 0; i < h; ++i) grad[l.bn + i] += dan[i];
    std::fill(dhr.begin(), dhr.end(), 0.0);
    matvec_transpose_acc(p.subspan(l.un, h * h), dan, h, h, dhr);
    for (int i = 0; i < h; ++i) {
      dr[i] = dhr[i] * st.h_prev[i];
      dh_carry[i] += dhr[i] * st.r[i];
    }

    // gates
    for (int i = 0; i < h; ++i) {
      dar[i] = dr[i] * st.r[i] * (1.0 - st.r[i]);
      daz[i] = dz[i] * st.z[i] * (1.0 - st.z[i]);
    }
    outer_acc(grad.subspan(l.wr, h * d), dar, st.input, h, d);
    outer_acc(grad.subspan(l.ur, h * h), dar, st.h_prev, h, h);
    for (int i = 0; i < h; ++i) grad[l.br + i] += dar[i];
    outer_acc(grad.subspan(l.wz, h * d), daz, st.input, h, d);
    outer_acc(grad.subspan(l.uz, h * h), daz, st.h_prev, h, h);
    for (int i = 0; i < h; ++i) grad[l.bz + i] += daz[i];
    matvec_transpose_acc(p.subspan(l.ur, h * h), dar, h, h, dh_carry);
    matvec_transpose_acc(p.subspan(l.uz, h * h), daz, h, h, dh_carry);
  }
}

GradCheckReport finite_difference_check(const Net& net, const Rollout& rollout,
                                        int max_params, RandomSource& rng,
                                        double epsilon) {
  int count = net.shape().param_count();
  std::vector<double> analytic(count, 0.0);
  backward(net, rollout, analytic);

  std::set<int> indices;
  if (max_params >= count) {
    for (int i = 0; i < count; ++i) indices.insert(i);
  } else {
    while (static_cast<int>(indices.size()) < max_params)
      indices.insert(static_cast<int>(rng.next_u64() % count));
  }

  Net probe = net;
  GradCheckReport report;
  for (int idx : indices) {
    double saved = probe.params()[idx];
    probe.params()[idx] = saved + epsilon;
    double up = replay_loss(probe, rollout);
    probe.params()[idx] = saved - epsilon;
    double down = replay_loss(probe, rollout);
    probe.params()[idx] = saved;
    double fd = (up - down) / (2.0 * epsilon);
    double rel = std::abs(fd - analytic[idx]) /
                 std::max({std::abs(fd), std::abs(analytic[idx]), 1e-8});
    report.max_rel_err = std::max(report.max_rel_err, rel);
    report.checked++;
  }
  return report;
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  if (!std::isfinite(sq)) throw DivergenceError("non-finite gradient norm");
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

AdamState::AdamState(int param_count, double lr)
    : lr(lr), m(param_count, 0.0), v(param_count, 0.0) {}

void adam_step(std::span<double> params, std::span<const double> grad,
               AdamState& state) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw ValidationError("adam buffer size mismatch");
  state.step++;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

namespace {

void write_doubles(std::FILE* f, std::span<const double> xs) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    std::fprintf(f, "%a%c", xs[i], (i + 1) % 4 == 0 ? '\n' : ' ');
  if (xs.size() % 4 != 0) std::fprintf(f, "\n");
}

std::vector<double> read_doubles(std::istream& in, std::size_t n,
                                 const char* what) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string token;
    if (!(in >> token))
      throw ValidationError(std::string("checkpoint truncated in ") + what);
    char* end = nullptr;
    xs[i] = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
      throw ValidationError(std::string("checkpoint has a bad number in ") +
                            what);
  }
  return xs;
}

void expect_tag(std::istream& in, const std::string& tag) {
  std::string token;
  if (!(in >> token) || token != tag)
    throw ValidationError("checkpoint missing field '" + tag + "'");
}

long read_long(std::istream& in, const std::string& tag) {
  expect_tag(in, tag);
  long value = 0;
  if (!(in >> value))
    throw ValidationError("checkpoint has a bad value for '" + tag + "'");
  return value;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ValidationError("cannot write checkpoint to " + path);
  std::fprintf(f, "metastrat-checkpoint v1\n");
  std::fprintf(f, "mode %s\n", head_mode_name(ckpt.mode).c_str());
  std::fprintf(f, "input %d\nhidden %d\noutput %d\n", ckpt.shape.input,
               ckpt.shape.hidden, ckpt.shape.output);
  std::fprintf(f, "batches_done %ld\n", ckpt.batches_done);
  std::fprintf(f, "params %zu\n", ckpt.params.size());
  write_doubles(f, ckpt.params);
  std::fprintf(f, "adam_step %ld\n", ckpt.adam_step);
  std::fprintf(f, "adam_m %zu\n", ckpt.adam_m.size());
  write_doubles(f, ckpt.adam_m);
  std::fprintf(f, "adam_v %zu\n", ckpt.adam_v.size());
  write_doubles(f, ckpt.adam_v);
  std::fclose(f);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read checkpoint " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "metastrat-checkpoint")
    throw ValidationError("not a checkpoint file: " + path);
  if (version != "v1")
    throw ValidationError("unsupported checkpoint version '" + version + "'");

  Checkpoint ckpt;
  expect_tag(in, "mode");
  std::string mode;
  in >> mode;
  ckpt.mode = parse_head_mode(mode);
  ckpt.shape.input = static_cast<int>(read_long(in, "input"));
  ckpt.shape.hidden = static_cast<int>(read_long(in, "hidden"));
  ckpt.shape.output = static_cast<int>(read_long(in, "output"));
  ckpt.batches_done = read_long(in, "batches_done");
  long n = read_long(in, "params");
  if (n != ckpt.shape.param_count())
    throw ValidationError("checkpoint parameter count does not match shape");
  ckpt.params = read_doubles(in, n, "params");
  ckpt.adam_step = read_long(in, "adam_step");
  long nm = read_long(in, "adam_m");
  ckpt.adam_m = read_doubles(in, nm, "adam_m");
  long nv = read_long(in, "adam_v");
  ckpt.adam_v = read_doubles(in, nv, "adam_v");
  return ckpt;
}

}  // namespace metastrat
