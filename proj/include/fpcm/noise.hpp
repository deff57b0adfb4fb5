#pragma once

#include <variant>
#include <vector>

#include <Eigen/Core>

#include "fpcm/random.hpp"

namespace fpcm::scm {

// Empirical quantile with the lower-midpoint convention: order statistic k
// sits at probability (k + 0.5) / n, linear interpolation in between, clamped
// to [min, max] outside. `sorted` must be ascending.
double empiricalQuantile(const Eigen::VectorXd& sorted, double u);

struct GaussianNoise {
  double mean = 0.0;
  double sigma = 1.0;
};

struct LaplaceNoise {
  double loc = 0.0;
  double scale = 1.0;
};

struct EmpiricalNoise {
  Eigen::VectorXd sorted;  // ascending
};

using NodeNoise = std::variant<GaussianNoise, LaplaceNoise, EmpiricalNoise>;

// Jointly independent product noise over d nodes.
class NoiseModel {
 public:
  explicit NoiseModel(std::vector<NodeNoise> nodes);

  static NoiseModel iidGaussian(int d, double mean = 0.0, double sigma = 1.0);
  static NoiseModel iidLaplace(int d, double loc = 0.0, double scale = 1.0);

  int size() const { return static_cast<int>(nodes_.size()); }
  const NodeNoise& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  double sample(int node, Rng& rng) const;
  Eigen::VectorXd sampleVector(Rng& rng) const;

 private:
  std::vector<NodeNoise> nodes_;
};

}  // namespace fpcm::scm
