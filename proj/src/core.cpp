#include "metastrat/core.hpp"

#include <cmath>

namespace metastrat {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitSalt = 0x5851F42D4C957F2DULL;

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

double weight_sum(std::span<const double> w) {
  double s = 0.0;
  for (double x : w) s += x;
  return s;
}

}  // namespace

ProbVector::ProbVector(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw ValidationError("empty probability vector");
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError("probability weights must be finite and >= 0");
  }
  double s = weight_sum(weights_);
  if (std::abs(s - 1.0) > kProbSumTolerance)
    throw ValidationError("probability weights sum to " + std::to_string(s) +
                          ", outside tolerance");
  for (double& w : weights_) w /= s;
}

ProbVector ProbVector::uniform(int n) {
  if (n < 1) throw ValidationError("uniform distribution needs n >= 1");
  ProbVector p;
  p.weights_.assign(n, 1.0 / n);
  return p;
}

ProbVector ProbVector::point_mass(int n, int index) {
  if (n < 1 || index < 0 || index >= n)
    throw ValidationError("point mass index out of range");
  ProbVector p;
  p.weights_.assign(n, 0.0);
  p.weights_[index] = 1.0;
  return p;
}

ProbVector ProbVector::from_normalized(std::vector<double> weights) {
  ProbVector p;
  p.weights_ = std::move(weights);
  return p;
}

RandomSource::RandomSource(std::uint64_t seed) : key_(mix64(seed ^ kGolden)) {}

std::uint64_t RandomSource::next_u64() {
  return mix64(key_ + ++counter_ * kGolden);
}

double RandomSource::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

RandomSource RandomSource::split(std::uint64_t stream) const {
  return RandomSource(mix64(key_ ^ mix64(stream ^ kSplitSalt)), 0);
}

int sample_categorical(const ProbVector& p, RandomSource& rng) {
  double s = weight_sum(p.weights());
  if (std::abs(s - 1.0) > kProbSumTolerance)
    throw ValidationError("sample_categorical: weights not normalized");
  double u = rng.next_double();
  double acc = 0.0;
  int last_support = -1;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last_support = i;
    acc += p[i];
    if (u < acc) return i;
  }
  return last_support;
}

double log_loss(const ProbVector& p, int observed) {
  if (observed < 0 || observed >= p.size())
    throw ValidationError("log_loss: observed symbol out of range");
  return -std::log(std::max(p[observed], kLogFloor));
}

std::pair<double, double> sample_normal_pair(RandomSource& rng) {
  double u1 = 1.0 - rng.next_double();  // (0, 1], keeps log finite
  double u2 = rng.next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

double sample_gamma(double shape, RandomSource& rng) {
  if (!(shape > 0.0)) throw ValidationError("gamma shape must be > 0");
  if (shape < 1.0) {
    double u = 1.0 - rng.next_double();
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    auto [x, x2] = sample_normal_pair(rng);
    for (double n : {x, x2}) {
      double t = 1.0 + c * n;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = 1.0 - rng.next_double();
      if (std::log(u) < 0.5 * n * n + d - d * v + d * std::log(v)) return d * v;
    }
  }
}

std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RandomSource& rng) {
  if (concentration.size() < 2)
    throw ValidationError("dirichlet needs >= 2 components");
  std::vector<double> draw(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    draw[i] = sample_gamma(concentration[i], rng);
    total += draw[i];
  }
  for (double& x : draw) x /= total;
  return draw;
}

}  // namespace metastrat
