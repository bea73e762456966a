#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastrat/analysis.hpp"
#include "metastrat/train.hpp"

using namespace metastrat;

namespace {

Net seeded_net(int hidden, std::uint64_t seed) {
  RandomSource rng(seed);
  return Net::initialized(NetShape{2, hidden, 2}, HeadMode::kPrediction, rng);
}

MemoryCloud cloud_from_memories(
    const std::vector<std::vector<double>>& memories) {
  MemoryCloud cloud;
  cloud.alphabet = 2;
  cloud.depth = 0;
  for (const auto& m : memories)
    cloud.records.push_back(MemoryRecord{{}, m, {0.5, 0.5}});
  return cloud;
}

// tracks the last two observations; state 0 is a distinct start state
StateMachine last_two_machine() {
  StateMachine m;
  m.alphabet = 2;
  m.depth = 2;
  m.initial = 0;
  auto add = [&](std::vector<int> next) {
    MachineState s;
    s.id = static_cast<int>(m.states.size());
    s.prediction = {0.5, 0.5};
    s.next = std::move(next);
    m.states.push_back(std::move(s));
  };
  add({1, 2});  // start
  add({1, 2});  // ..00
  add({3, 4});  // ..01
  add({1, 2});  // ..10
  add({3, 4});  // ..11
  return m;
}

}  // namespace

TEST_CASE("memory cloud enumerates histories breadth first") {
  Net net = seeded_net(5, 21);
  MemoryCloud cloud = enumerate_memory_cloud(net, 2);
  REQUIRE(cloud.records.size() == 7);
  CHECK(cloud.records[0].history.empty());
  CHECK(cloud.records[1].history == std::vector<int>{0});
  CHECK(cloud.records[2].history == std::vector<int>{1});
  CHECK(cloud.records[3].history == std::vector<int>{0, 0});
  CHECK(cloud.records[4].history == std::vector<int>{0, 1});
  CHECK(cloud.records[5].history == std::vector<int>{1, 0});
  CHECK(cloud.records[6].history == std::vector<int>{1, 1});

  CHECK(cloud.child_index(0, 0) == 1);
  CHECK(cloud.child_index(0, 1) == 2);
  CHECK(cloud.child_index(1, 1) == 4);
  CHECK(cloud.child_index(2, 0) == 5);
  CHECK(cloud.child_index(3, 0) == -1);  // at the depth bound

  // records chain exactly like manual forward steps
  std::vector<double> blank{0.0, 0.0};
  std::vector<double> one_hot1{0.0, 1.0};
  StepTrace root = net.forward_step(blank, std::vector<double>(5, 0.0));
  CHECK(cloud.records[0].memory == root.h);
  StepTrace after1 = net.forward_step(one_hot1, root.h);
  CHECK(cloud.records[2].memory == after1.h);
  ProbVector pred = softmax(after1.output);
  for (int s = 0; s < 2; ++s)
    CHECK(cloud.records[2].prediction[s] == pred[s]);

  MemoryCloud tiny = enumerate_memory_cloud(net, 0);
  CHECK(tiny.records.size() == 1);
  MemoryCloud one = enumerate_memory_cloud(net, 1);
  CHECK(one.records.size() == 3);
}

TEST_CASE("memory cloud rejects non-prediction heads") {
  RandomSource rng(4);
  Net net = Net::initialized(NetShape{5, 4, 2}, HeadMode::kValue, rng);
  CHECK_THROWS_AS(enumerate_memory_cloud(net, 2), UnsupportedOperation);
}

TEST_CASE("projection recovers planted principal directions") {
  std::vector<std::vector<double>> memories;
  const double as[5] = {2.0, -2.0, 2.0, -2.0, 0.0};
  const double bs[5] = {1.0, 1.0, -1.0, -1.0, 0.0};
  for (int i = 0; i < 5; ++i)
    memories.push_back({as[i], 0.0, bs[i], 0.0});
  CloudProjection proj = project_cloud(cloud_from_memories(memories));

  CHECK(proj.var1 == doctest::Approx(3.2));
  CHECK(proj.var2 == doctest::Approx(0.8));
  CHECK(!proj.rank_deficient);
  CHECK(proj.axis1[0] == doctest::Approx(1.0));
  CHECK(std::abs(proj.axis1[2]) < 1e-9);
  CHECK(proj.axis2[2] == doctest::Approx(1.0));
  CHECK(std::abs(proj.axis2[0]) < 1e-9);
  REQUIRE(proj.coords.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(proj.coords[i][0] == doctest::Approx(as[i]));
    CHECK(proj.coords[i][1] == doctest::Approx(bs[i]));
  }
}

TEST_CASE("one-dimensional clouds are flagged rank deficient") {
  std::vector<std::vector<double>> memories;
  for (double k : {-1.0, 0.0, 1.0}) memories.push_back({0.6 * k, 0.8 * k});
  CloudProjection proj = project_cloud(cloud_from_memories(memories));
  CHECK(proj.rank_deficient);
  CHECK(proj.var2 == doctest::Approx(0.0));
  CHECK(proj.axis1[0] == doctest::Approx(0.6));
  CHECK(proj.axis1[1] == doctest::Approx(0.8));
  CHECK(proj.axis2 == std::vector<double>{0.0, 0.0});
  for (const auto& c : proj.coords) CHECK(c[1] == 0.0);

  CloudProjection scalar =
      project_cloud(cloud_from_memories({{1.0}, {3.0}}));
  CHECK(scalar.rank_deficient);
  CHECK(scalar.axis2 == std::vector<double>{0.0});
  CHECK(scalar.var1 == doctest::Approx(1.0));
}

TEST_CASE("laplace lattice has one state per count vector") {
  LatticeReference ref = make_laplace_lattice(2, 2);
  REQUIRE(ref.states.size() == 6);
  CHECK(ref.initial == 0);
  int edges = 0;
  for (const LatticeState& s : ref.states)
    for (int id : s.next)
      if (id != -1) edges++;
  CHECK(edges == 6);

  int root = ref.state_for({0, 0});
  REQUIRE(root == 0);
  CHECK(ref.states[root].prediction[0] == doctest::Approx(0.5));
  int heads = ref.states[root].next[1];
  CHECK(ref.states[heads].counts == std::vector<int>{0, 1});
  CHECK(ref.states[heads].prediction[1] == doctest::Approx(2.0 / 3.0));
  int both = ref.states[heads].next[0];
  CHECK(ref.states[both].counts == std::vector<int>{1, 1});
  CHECK(ref.states[both].prediction[0] == doctest::Approx(0.5));
  CHECK(ref.states[ref.state_for({2, 0})].prediction[0] ==
        doctest::Approx(0.75));
  CHECK(ref.states[ref.state_for({2, 0})].next ==
        std::vector<int>{-1, -1});
  CHECK(ref.state_for({3, 0}) == -1);

  LatticeReference three = make_laplace_lattice(3, 1);
  CHECK(three.states.size() == 4);
}

TEST_CASE("zero tolerance extraction yields the history trie") {
  Net net = seeded_net(6, 33);
  StateMachine machine = extract_state_machine(net, 3, 0.0, 2);
  REQUIRE(machine.states.size() == 15);
  for (int i = 0; i < 15; ++i) {
    CHECK(machine.record_state[i] == i);
    CHECK(machine.states[i].members == 1);
  }
  CHECK(machine.initial == 0);
  // trie transitions mirror the cloud layout
  MemoryCloud cloud = enumerate_memory_cloud(net, 3);
  for (int i = 0; i < 7; ++i)
    for (int s = 0; s < 2; ++s)
      CHECK(machine.states[i].next[s] == cloud.child_index(i, s));

  LatticeComparison cmp =
      compare_to_lattice(machine, make_laplace_lattice(2, 3), 3);
  CHECK(cmp.bisimilar);  // a trie maps each history to its count vector
  CHECK(cmp.conflicts.empty());
  CHECK(cmp.missing.empty());
  CHECK(cmp.machine_states_visited == 15);
  CHECK(cmp.lattice_states_visited == 10);
  CHECK(cmp.max_discrepancy >= 0.0);
}

namespace {

Net trained_predictor(int batches) {
  RunConfig cfg;
  cfg.algorithm = AlgorithmKind::kPredict;
  cfg.task = "dirichlet";
  cfg.symbols = 2;
  cfg.batch_size = 20;
  cfg.horizon = 6;
  cfg.batches = batches;
  cfg.hidden = 12;
  cfg.learning_rate = 3e-3;
  cfg.eval_every = batches;
  cfg.eval_rollouts = 16;
  cfg.early_stop_window = 0;
  cfg.seed = 5;
  TrainSinks sinks;
  return net_from_checkpoint(train(cfg, sinks).checkpoint);
}

}  // namespace

TEST_CASE("a trained predictor compresses to the count lattice") {
  Net net = trained_predictor(1500);
  StateMachine machine = extract_state_machine(net, 3, 0.03, 3);
  // permutation-equivalent histories fold together, count splits survive
  CHECK(machine.states.size() == 10);
  CHECK(machine.record_state[4] == machine.record_state[5]);  // 01 and 10

  LatticeComparison cmp =
      compare_to_lattice(machine, make_laplace_lattice(2, 3), 3);
  CHECK(cmp.bisimilar);
  CHECK(cmp.conflicts.empty());
  CHECK(cmp.max_discrepancy < 0.03);
  CHECK(cmp.machine_states_visited == 10);
  CHECK(cmp.lattice_states_visited == 10);
}

TEST_CASE("inconsistent quantization is rejected with a witness") {
  // a half-trained net still separates permuted histories at tight delta,
  // so their children land in different states and the merge must fail
  Net net = trained_predictor(400);
  CHECK_THROWS_WITH_AS(extract_state_machine(net, 3, 0.02, 3),
                       doctest::Contains("disagree on symbol"),
                       ValidationError);
}

TEST_CASE("extraction depth is bounded") {
  Net net = seeded_net(4, 1);
  CHECK_THROWS_AS(extract_state_machine(net, 9, 0.1), ResourceBoundError);
  CHECK_THROWS_AS(extract_state_machine(net, 3, -0.1), ValidationError);
}

TEST_CASE("dot export is deterministic and marks the initial state") {
  Net net = seeded_net(5, 8);
  StateMachine machine = extract_state_machine(net, 2, 0.0, 1);
  std::string dot = export_machine(machine);
  CHECK(dot.find("digraph memory_machine {") == 0);
  CHECK(dot.find("penwidth=2") != std::string::npos);
  CHECK(dot.find("s0 -> s1 [label=\"0\"]") != std::string::npos);
  CHECK(dot == export_machine(machine));
  StateMachine again = extract_state_machine(net, 2, 0.0, 1);
  CHECK(dot == export_machine(again));
}

TEST_CASE("state trace follows transitions and rejects gaps") {
  StateMachine m = last_two_machine();
  std::vector<int> stream{0, 1, 0, 1, 0, 0, 1, 0, 0, 1};
  std::vector<int> trace = quantized_state_trace(m, stream);
  CHECK(trace == std::vector<int>{0, 1, 2, 3, 2, 3, 1, 2, 3, 1, 2});

  CHECK_THROWS_AS(quantized_state_trace(m, {0, 2}), ValidationError);
  StateMachine gap = last_two_machine();
  gap.states[2].next[0] = -1;
  CHECK_THROWS_AS(quantized_state_trace(gap, stream), ValidationError);
}

TEST_CASE("segmentation cuts at revisits of the modal state") {
  StateMachine m = last_two_machine();
  std::vector<int> stream{0, 1, 0, 1, 0, 0, 1, 0, 0, 1};
  SegmentReport report = segment_stream(m, stream);
  CHECK(report.state == 2);
  CHECK(report.anchors == std::vector<int>{2, 4, 7, 10});
  REQUIRE(report.segments.size() == 3);
  CHECK(report.segments[0] == std::vector<int>{0, 1});
  CHECK(report.segments[1] == std::vector<int>{0, 0, 1});
  CHECK(report.segments[2] == std::vector<int>{0, 0, 1});
  CHECK(!report.degenerate);
}

TEST_CASE("periodic streams give constant segment lengths") {
  StateMachine m;
  m.alphabet = 2;
  m.depth = 1;
  m.initial = 0;
  MachineState s0, s1;
  s0.id = 0;
  s0.prediction = {0.5, 0.5};
  s0.next = {1, 1};
  s1.id = 1;
  s1.prediction = {0.5, 0.5};
  s1.next = {0, 0};
  m.states = {s0, s1};

  std::vector<int> stream{0, 1, 0, 1, 0, 1};
  SegmentReport report = segment_stream(m, stream);
  CHECK(report.state == 0);
  CHECK(report.anchors == std::vector<int>{0, 2, 4, 6});
  REQUIRE(report.segments.size() == 3);
  for (const auto& seg : report.segments)
    CHECK(seg == std::vector<int>{0, 1});
}

TEST_CASE("segmentation degenerates on short streams") {
  StateMachine m = last_two_machine();
  SegmentReport report = segment_stream(m, {});
  CHECK(report.degenerate);
  CHECK(report.anchors == std::vector<int>{0});
  CHECK(report.segments.empty());
}
