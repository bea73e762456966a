#pragma once

// Post-training inspection of a predictor's recurrent memory: enumerate the
// states it reaches, project them, quantize them into a finite machine, and
// compare that machine against the exact sufficient-statistic lattice.

#include <array>
#include <string>
#include <vector>

#include "metastrat/net.hpp"

namespace metastrat {

struct MemoryRecord {
  std::vector<int> history;
  std::vector<double> memory;     // hidden state after consuming the history
  std::vector<double> prediction; // next-symbol distribution at that point
};

struct MemoryCloud {
  int alphabet = 0;
  int depth = 0;
  // breadth-first, lexicographic within each depth; children of record i on
  // symbol s sit at child_index(i, s)
  std::vector<MemoryRecord> records;

  int child_index(int record, int symbol) const;
};

// Runs the net over every history of length <= depth, zeros input first.
// Prediction-head nets only.
MemoryCloud enumerate_memory_cloud(const Net& net, int depth);

struct CloudProjection {
  std::vector<double> mean;
  std::vector<double> axis1, axis2;  // unit vectors, largest entry positive
  double var1 = 0.0, var2 = 0.0;     // covariance eigenvalues along the axes
  bool rank_deficient = false;       // fewer than two spread directions
  std::vector<std::array<double, 2>> coords;  // one row per cloud record
};

// Top-two principal directions of the memory vectors.
CloudProjection project_cloud(const MemoryCloud& cloud);

struct MachineState {
  int id = 0;
  std::vector<int> representative;    // first history assigned to the state
  std::vector<double> prediction;     // representative's next-symbol dist
  std::vector<int> next;              // successor per symbol, -1 when unknown
  int members = 0;                    // cloud records mapped to the state
};

struct StateMachine {
  int alphabet = 0;
  int depth = 0;
  double delta = 0.0;
  int initial = 0;
  std::vector<MachineState> states;
  std::vector<int> record_state;  // cloud record index -> state id
};

// Complete-linkage clustering of the memory cloud: two records join a state
// only if every cross pair stays within delta in sup norm over all probe
// continuations up to probe_depth. Throws when the quantized transitions
// disagree inside a state, naming a witness pair of histories.
StateMachine extract_state_machine(const Net& net, int depth, double delta,
                                   int probe_depth = 3);

struct LatticeState {
  int id = 0;
  std::vector<int> counts;         // symbol counts, the sufficient statistic
  std::vector<double> prediction;  // Laplace rule (n_i + 1) / (t + alphabet)
  std::vector<int> next;           // -1 past the depth bound
};

struct LatticeReference {
  int alphabet = 0;
  int depth = 0;
  int initial = 0;
  std::vector<LatticeState> states;
  int state_for(const std::vector<int>& counts) const;  // -1 when absent
};

LatticeReference make_laplace_lattice(int alphabet, int depth);

struct LatticeComparison {
  bool bisimilar = false;       // machine states map to unique lattice states
  double max_discrepancy = 0.0; // sup norm over all visited prediction pairs
  int machine_states_visited = 0;
  int lattice_states_visited = 0;
  // machine state paired with two lattice states: {machine, first, second}
  std::vector<std::array<int, 3>> conflicts;
  // histories the machine cannot follow within the depth bound
  std::vector<std::vector<int>> missing;
};

// Walks every history up to depth through both automata in lockstep.
LatticeComparison compare_to_lattice(const StateMachine& machine,
                                     const LatticeReference& lattice,
                                     int depth);

// Graphviz rendering, deterministic ordering by state id then symbol.
std::string export_machine(const StateMachine& machine);

// State sequence the machine passes through while consuming the stream,
// starting at the initial state; length is observations + 1.
std::vector<int> quantized_state_trace(const StateMachine& machine,
                                       const std::vector<int>& observations);

struct SegmentReport {
  int state = -1;             // the most frequent state, ties to smallest id
  std::vector<int> anchors;   // trace positions holding that state
  std::vector<std::vector<int>> segments;  // slices between anchor pairs
  bool degenerate = false;    // fewer than two anchors
};

// Cuts the stream at revisits of its most frequent quantized state; the
// segment for anchors (p, q) is observations[p .. q-1] zero-based, the
// symbols consumed between the two visits.
SegmentReport segment_stream(const StateMachine& machine,
                             const std::vector<int>& observations);

}  // namespace metastrat
