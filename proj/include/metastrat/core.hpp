#pragma once

// Shared value types and the deterministic randomness contract. Everything
// downstream (task sampling, rollouts, weight init) draws through RandomSource,
// so a run is reproducible from its seed alone.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace metastrat {

// User-facing input failed validation (config, CLI, file contents).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training or evaluation produced non-finite numbers.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation is not defined for the given task kind or representation.
struct UnsupportedOperation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Enumeration would exceed a hard resource bound.
struct ResourceBoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Alphabet {
  int size = 0;
  explicit Alphabet(int n) : size(n) {
    if (n < 1) throw ValidationError("alphabet size must be >= 1");
  }
  bool contains(int symbol) const { return symbol >= 0 && symbol < size; }
};

// Observation sequence in prediction mode.
struct Trajectory {
  std::vector<int> symbols;

  Trajectory() = default;
  explicit Trajectory(std::vector<int> s) : symbols(std::move(s)) {}
  int length() const { return static_cast<int>(symbols.size()); }

  void validate(const Alphabet& alphabet) const {
    for (int s : symbols)
      if (!alphabet.contains(s))
        throw ValidationError("trajectory symbol " + std::to_string(s) +
                              " outside alphabet of size " +
                              std::to_string(alphabet.size));
  }
};

// One action/observation/reward step in decision mode.
struct Interaction {
  int action = 0;
  int observation = 0;
  double reward = 0.0;
};

inline constexpr double kProbSumTolerance = 1e-9;
inline constexpr double kLogFloor = 1e-12;

// Discrete distribution. Construction rejects negative weights and sums off by
// more than kProbSumTolerance; within tolerance the weights are rescaled to
// sum exactly to 1.
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(std::vector<double> weights);

  static ProbVector uniform(int n);
  static ProbVector point_mass(int n, int index);
  // Trusted path for internally normalized results (softmax etc.); skips
  // construction checks. sample_categorical still validates the sum at the
  // point of use.
  static ProbVector from_normalized(std::vector<double> weights);

  int size() const { return static_cast<int>(weights_.size()); }
  double operator[](int i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

// Counter-based splittable generator in the splitmix64 family. Draw i of a
// stream is a pure function of (key, i), so splits give independent streams
// that are reproducible regardless of interleaving.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed);

  std::uint64_t next_u64();
  // uniform on [0, 1), 53-bit resolution
  double next_double();
  // child stream; deterministic in (parent key, stream id), own counter
  RandomSource split(std::uint64_t stream) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RandomSource(std::uint64_t key, std::uint64_t counter)
      : key_(key), counter_(counter) {}
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

int sample_categorical(const ProbVector& p, RandomSource& rng);

// -log p[observed], floored at kLogFloor so impossible events stay finite
double log_loss(const ProbVector& p, int observed);

// Box-Muller pair of standard normals
std::pair<double, double> sample_normal_pair(RandomSource& rng);

// Marsaglia-Tsang, any shape > 0, unit scale
double sample_gamma(double shape, RandomSource& rng);

std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RandomSource& rng);

}  // namespace metastrat
