#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace fpcm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed; used for per-row / per-dataset RNGs so
// that parallel sampling stays reproducible.
inline std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51ed270b9f6c2d9dULL));
}

// Deterministic RNG with explicit samplers. std::*_distribution is
// implementation-defined, so the transforms are spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniformInt(int n) {
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller without a cached spare: two uniforms per draw, one result.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  double laplace(double loc, double scale) {
    double u = uniform() - 0.5;
    return loc - scale * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
  }

  Eigen::VectorXd normalVector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniformInt(i + 1))]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fpcm
