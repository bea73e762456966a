#include "metastrat/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "metastrat/core.hpp"

namespace metastrat {

namespace {

std::string history_label(const std::vector<int>& history) {
  if (history.empty()) return "<empty>";
  std::string out;
  for (size_t i = 0; i < history.size(); ++i) {
    if (i > 0 && history[i] >= 10) out += '.';
    out += std::to_string(history[i]);
  }
  return out;
}

std::vector<double> softmax_values(std::span<const double> logits) {
  ProbVector p = softmax(logits);
  return std::vector<double>(p.weights().begin(), p.weights().end());
}

double sup_norm_diff(const std::vector<double>& a,
                     const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// sup-norm prediction gap between two memories over every continuation of
// length <= probe_depth, both fed the same symbols
double behavioral_distance(const Net& net, const std::vector<double>& mem_a,
                           const std::vector<double>& pred_a,
                           const std::vector<double>& mem_b,
                           const std::vector<double>& pred_b,
                           int probe_depth) {
  double d = sup_norm_diff(pred_a, pred_b);
  if (probe_depth <= 0) return d;
  int alphabet = net.shape().input;
  for (int s = 0; s < alphabet; ++s) {
    std::vector<double> input(alphabet, 0.0);
    input[s] = 1.0;
    StepTrace ta = net.forward_step(input, mem_a);
    StepTrace tb = net.forward_step(input, mem_b);
    d = std::max(d, behavioral_distance(net, ta.h, softmax_values(ta.output),
                                        tb.h, softmax_values(tb.output),
                                        probe_depth - 1));
  }
  return d;
}

struct EigenPairs {
  std::vector<double> values;               // descending
  std::vector<std::vector<double>> vectors; // vectors[k] pairs with values[k]
};

EigenPairs symmetric_eigen(const std::vector<std::vector<double>>& a) {
  int n = static_cast<int>(a.size());
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = a[i][j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);

  EigenPairs out;
  out.values.reserve(n);
  out.vectors.reserve(n);
  for (int k = n - 1; k >= 0; --k) {  // solver orders ascending
    out.values.push_back(solver.eigenvalues()(k));
    std::vector<double> col(n);
    for (int i = 0; i < n; ++i) col[i] = solver.eigenvectors()(i, k);
    out.vectors.push_back(std::move(col));
  }
  return out;
}

void fix_sign(std::vector<double>& v) {
  int dominant = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (std::abs(v[i]) > std::abs(v[dominant])) dominant = i;
  if (v[dominant] < 0.0)
    for (double& x : v) x = -x;
}

}  // namespace

int MemoryCloud::child_index(int record, int symbol) const {
  if (record < 0 || record >= static_cast<int>(records.size()))
    throw ValidationError("record index out of range");
  if (symbol < 0 || symbol >= alphabet)
    throw ValidationError("symbol out of range");
  int level_start = 0;
  int level_size = 1;
  while (record >= level_start + level_size) {
    level_start += level_size;
    level_size *= alphabet;
  }
  if (static_cast<int>(records[record].history.size()) >= depth) return -1;
  int within = record - level_start;
  return level_start + level_size + within * alphabet + symbol;
}

MemoryCloud enumerate_memory_cloud(const Net& net, int depth) {
  if (net.mode() != HeadMode::kPrediction)
    throw UnsupportedOperation("memory cloud needs a prediction head");
  if (depth < 0) throw ValidationError("depth must be >= 0");
  int alphabet = net.shape().input;
  if (alphabet != net.shape().output)
    throw ValidationError("prediction net must map the alphabet to itself");

  MemoryCloud cloud;
  cloud.alphabet = alphabet;
  cloud.depth = depth;

  std::vector<double> zeros(alphabet, 0.0);
  StepTrace root = net.forward_step(zeros, std::vector<double>(
                                               net.shape().hidden, 0.0));
  cloud.records.push_back(
      MemoryRecord{{}, root.h, softmax_values(root.output)});

  size_t level_begin = 0;
  for (int t = 0; t < depth; ++t) {
    size_t level_end = cloud.records.size();
    for (size_t i = level_begin; i < level_end; ++i) {
      for (int s = 0; s < alphabet; ++s) {
        std::vector<double> input(alphabet, 0.0);
        input[s] = 1.0;
        StepTrace trace = net.forward_step(input, cloud.records[i].memory);
        std::vector<int> history = cloud.records[i].history;
        history.push_back(s);
        cloud.records.push_back(MemoryRecord{std::move(history), trace.h,
                                             softmax_values(trace.output)});
      }
    }
    level_begin = level_end;
  }
  return cloud;
}

CloudProjection project_cloud(const MemoryCloud& cloud) {
  if (cloud.records.empty()) throw ValidationError("empty memory cloud");
  int h = static_cast<int>(cloud.records.front().memory.size());
  int n = static_cast<int>(cloud.records.size());

  CloudProjection proj;
  proj.mean.assign(h, 0.0);
  for (const MemoryRecord& r : cloud.records)
    for (int i = 0; i < h; ++i) proj.mean[i] += r.memory[i];
  for (double& m : proj.mean) m /= n;

  std::vector<std::vector<double>> cov(h, std::vector<double>(h, 0.0));
  for (const MemoryRecord& r : cloud.records)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j)
        cov[i][j] += (r.memory[i] - proj.mean[i]) *
                     (r.memory[j] - proj.mean[j]);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < h; ++j) cov[i][j] /= n;

  EigenPairs eig = symmetric_eigen(cov);
  proj.axis1 = eig.vectors[0];
  proj.var1 = std::max(eig.values[0], 0.0);
  fix_sign(proj.axis1);
  if (h >= 2) {
    proj.axis2 = eig.vectors[1];
    proj.var2 = std::max(eig.values[1], 0.0);
    fix_sign(proj.axis2);
  } else {
    proj.axis2.assign(h, 0.0);
    proj.var2 = 0.0;
  }
  proj.rank_deficient = h < 2 || proj.var2 <= 1e-12;
  if (proj.rank_deficient && h >= 2) proj.axis2.assign(h, 0.0);

  proj.coords.reserve(n);
  for (const MemoryRecord& r : cloud.records) {
    std::array<double, 2> c{0.0, 0.0};
    for (int i = 0; i < h; ++i) {
      double centered = r.memory[i] - proj.mean[i];
      c[0] += centered * proj.axis1[i];
      c[1] += centered * proj.axis2[i];
    }
    proj.coords.push_back(c);
  }
  return proj;
}

StateMachine extract_state_machine(const Net& net, int depth, double delta,
                                   int probe_depth) {
  if (delta < 0.0) throw ValidationError("'delta' must be >= 0");
  if (probe_depth < 0) throw ValidationError("'probe_depth' must be >= 0");
  if (depth > 8)
    throw ResourceBoundError("extraction depth " + std::to_string(depth) +
                             " exceeds the supported bound 8");
  MemoryCloud cloud = enumerate_memory_cloud(net, depth);
  int n = static_cast<int>(cloud.records.size());

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = behavioral_distance(
          net, cloud.records[i].memory, cloud.records[i].prediction,
          cloud.records[j].memory, cloud.records[j].prediction, probe_depth);
      dist[i][j] = dist[j][i] = d;
    }

  // complete-linkage agglomeration: clusters stay pairwise within delta
  std::vector<std::vector<int>> clusters;
  clusters.reserve(n);
  for (int i = 0; i < n; ++i) clusters.push_back({i});
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    size_t best_a = 0, best_b = 0;
    for (size_t a = 0; a < clusters.size(); ++a)
      for (size_t b = a + 1; b < clusters.size(); ++b) {
        double link = 0.0;
        for (int i : clusters[a])
          for (int j : clusters[b]) link = std::max(link, dist[i][j]);
        if (link < best) {
          best = link;
          best_a = a;
          best_b = b;
        }
      }
    if (best > delta) break;
    clusters[best_a].insert(clusters[best_a].end(), clusters[best_b].begin(),
                            clusters[best_b].end());
    clusters.erase(clusters.begin() + best_b);
  }

  // states numbered by first appearance in breadth-first record order
  for (std::vector<int>& c : clusters) std::sort(c.begin(), c.end());
  std::sort(clusters.begin(), clusters.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) {
              return a.front() < b.front();
            });

  StateMachine machine;
  machine.alphabet = cloud.alphabet;
  machine.depth = depth;
  machine.delta = delta;
  machine.record_state.assign(n, -1);
  for (size_t c = 0; c < clusters.size(); ++c)
    for (int i : clusters[c]) machine.record_state[i] = static_cast<int>(c);
  machine.initial = machine.record_state[0];

  for (size_t c = 0; c < clusters.size(); ++c) {
    MachineState state;
    state.id = static_cast<int>(c);
    state.representative = cloud.records[clusters[c].front()].history;
    state.prediction = cloud.records[clusters[c].front()].prediction;
    state.next.assign(cloud.alphabet, -1);
    state.members = static_cast<int>(clusters[c].size());
    std::vector<int> witness(cloud.alphabet, -1);
    for (int i : clusters[c]) {
      if (static_cast<int>(cloud.records[i].history.size()) >= depth) continue;
      for (int s = 0; s < cloud.alphabet; ++s) {
        int child = cloud.child_index(i, s);
        int target = machine.record_state[child];
        if (state.next[s] == -1) {
          state.next[s] = target;
          witness[s] = i;
        } else if (state.next[s] != target) {
          throw ValidationError(
              "quantization is inconsistent: histories '" +
              history_label(cloud.records[witness[s]].history) + "' and '" +
              history_label(cloud.records[i].history) +
              "' share a state but disagree on symbol " + std::to_string(s));
        }
      }
    }
    machine.states.push_back(std::move(state));
  }
  return machine;
}

int LatticeReference::state_for(const std::vector<int>& counts) const {
  for (const LatticeState& s : states)
    if (s.counts == counts) return s.id;
  return -1;
}

LatticeReference make_laplace_lattice(int alphabet, int depth) {
  if (alphabet < 1) throw ValidationError("alphabet must be >= 1");
  if (depth < 0) throw ValidationError("depth must be >= 0");
  LatticeReference ref;
  ref.alphabet = alphabet;
  ref.depth = depth;

  std::map<std::vector<int>, int> index;
  std::vector<std::vector<int>> frontier{std::vector<int>(alphabet, 0)};
  auto add_state = [&](const std::vector<int>& counts) {
    int id = static_cast<int>(ref.states.size());
    index[counts] = id;
    int total = std::accumulate(counts.begin(), counts.end(), 0);
    LatticeState state;
    state.id = id;
    state.counts = counts;
    state.prediction.resize(alphabet);
    for (int s = 0; s < alphabet; ++s)
      state.prediction[s] =
          (counts[s] + 1.0) / (total + static_cast<double>(alphabet));
    state.next.assign(alphabet, -1);
    ref.states.push_back(std::move(state));
    return id;
  };
  ref.initial = add_state(frontier.front());

  for (int t = 0; t < depth; ++t) {
    std::vector<std::vector<int>> next_frontier;
    for (const std::vector<int>& counts : frontier) {
      int from = index.at(counts);
      for (int s = 0; s < alphabet; ++s) {
        std::vector<int> succ = counts;
        succ[s] += 1;
        auto it = index.find(succ);
        int id;
        if (it == index.end()) {
          id = add_state(succ);
          next_frontier.push_back(succ);
        } else {
          id = it->second;
        }
        ref.states[from].next[s] = id;
      }
    }
    frontier = std::move(next_frontier);
  }
  return ref;
}

LatticeComparison compare_to_lattice(const StateMachine& machine,
                                     const LatticeReference& lattice,
                                     int depth) {
  if (machine.alphabet != lattice.alphabet)
    throw ValidationError("alphabet mismatch");
  if (depth > machine.depth || depth > lattice.depth)
    throw ValidationError("comparison depth exceeds an automaton depth");

  LatticeComparison cmp;
  cmp.bisimilar = true;
  std::vector<int> mapped(machine.states.size(), -1);
  std::vector<bool> machine_seen(machine.states.size(), false);
  std::vector<bool> lattice_seen(lattice.states.size(), false);

  struct Node {
    int m, l, remaining;
    std::vector<int> history;
  };
  std::vector<Node> stack{{machine.initial, lattice.initial, depth, {}}};
  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    machine_seen[node.m] = true;
    lattice_seen[node.l] = true;
    const MachineState& ms = machine.states[node.m];
    const LatticeState& ls = lattice.states[node.l];
    cmp.max_discrepancy = std::max(
        cmp.max_discrepancy, sup_norm_diff(ms.prediction, ls.prediction));
    if (mapped[node.m] == -1) {
      mapped[node.m] = node.l;
    } else if (mapped[node.m] != node.l) {
      cmp.bisimilar = false;
      std::array<int, 3> conflict{node.m, mapped[node.m], node.l};
      if (std::find(cmp.conflicts.begin(), cmp.conflicts.end(), conflict) ==
          cmp.conflicts.end())
        cmp.conflicts.push_back(conflict);
    }
    if (node.remaining == 0) continue;
    for (int s = machine.alphabet - 1; s >= 0; --s) {
      std::vector<int> history = node.history;
      history.push_back(s);
      if (ms.next[s] == -1) {
        cmp.bisimilar = false;
        cmp.missing.push_back(std::move(history));
        continue;
      }
      stack.push_back(Node{ms.next[s], ls.next[s], node.remaining - 1,
                           std::move(history)});
    }
  }
  cmp.machine_states_visited = static_cast<int>(
      std::count(machine_seen.begin(), machine_seen.end(), true));
  cmp.lattice_states_visited = static_cast<int>(
      std::count(lattice_seen.begin(), lattice_seen.end(), true));
  return cmp;
}

std::string export_machine(const StateMachine& machine) {
  std::string out = "digraph memory_machine {\n  rankdir=LR;\n"
                    "  node [shape=circle, fontsize=10];\n";
  char buf[64];
  for (const MachineState& s : machine.states) {
    std::string label = "s" + std::to_string(s.id) + "\\n[";
    for (size_t i = 0; i < s.prediction.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.3f", s.prediction[i]);
      if (i > 0) label += " ";
      label += buf;
    }
    label += "]";
    out += "  s" + std::to_string(s.id) + " [label=\"" + label + "\"";
    if (s.id == machine.initial) out += ", penwidth=2";
    out += "];\n";
  }
  for (const MachineState& s : machine.states)
    for (int sym = 0; sym < machine.alphabet; ++sym)
      if (s.next[sym] != -1)
        out += "  s" + std::to_string(s.id) + " -> s" +
               std::to_string(s.next[sym]) + " [label=\"" +
               std::to_string(sym) + "\"];\n";
  out += "}\n";
  return out;
}

std::vector<int> quantized_state_trace(const StateMachine& machine,
                                       const std::vector<int>& observations) {
  if (machine.states.empty()) throw ValidationError("machine has no states");
  std::vector<int> trace;
  trace.reserve(observations.size() + 1);
  int state = machine.initial;
  trace.push_back(state);
  for (size_t i = 0; i < observations.size(); ++i) {
    int symbol = observations[i];
    if (symbol < 0 || symbol >= machine.alphabet)
      throw ValidationError("observation " + std::to_string(symbol) +
                            " outside the alphabet");
    int next = machine.states[state].next[symbol];
    if (next == -1)
      throw ValidationError("no transition from state " +
                            std::to_string(state) + " on symbol " +
                            std::to_string(symbol));
    state = next;
    trace.push_back(state);
  }
  return trace;
}

SegmentReport segment_stream(const StateMachine& machine,
                             const std::vector<int>& observations) {
  std::vector<int> trace = quantized_state_trace(machine, observations);

  std::vector<int> freq(machine.states.size(), 0);
  for (int s : trace) freq[s] += 1;
  SegmentReport report;
  report.state = static_cast<int>(
      std::max_element(freq.begin(), freq.end()) - freq.begin());

  for (size_t p = 0; p < trace.size(); ++p)
    if (trace[p] == report.state)
      report.anchors.push_back(static_cast<int>(p));
  if (report.anchors.size() < 2) {
    report.degenerate = true;
    return report;
  }
  for (size_t k = 0; k + 1 < report.anchors.size(); ++k) {
    int from = report.anchors[k];
    int to = report.anchors[k + 1];
    report.segments.emplace_back(observations.begin() + from,
                                 observations.begin() + to);
  }
  return report;
}

}  // namespace metastrat
