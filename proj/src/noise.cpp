#include "fpcm/noise.hpp"

#include <cmath>
#include <string>

#include "fpcm/errors.hpp"

namespace fpcm::scm {

double empiricalQuantile(const Eigen::VectorXd& sorted, double u) {
  const Eigen::Index n = sorted.size();
  if (n == 0) throw ArgumentError("empirical quantile of empty sample");
  if (n == 1) return sorted[0];
  // Position of u on the (k + 0.5)/n grid.
  double t = u * static_cast<double>(n) - 0.5;
  if (t <= 0.0) return sorted[0];
  if (t >= static_cast<double>(n - 1)) return sorted[n - 1];
  auto k = static_cast<Eigen::Index>(std::floor(t));
  double w = t - static_cast<double>(k);
  return (1.0 - w) * sorted[k] + w * sorted[k + 1];
}

NoiseModel::NoiseModel(std::vector<NodeNoise> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ArgumentError("noise model must cover at least one node");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const NodeNoise& nn = nodes_[i];
    if (const auto* g = std::get_if<GaussianNoise>(&nn)) {
      if (!(g->sigma > 0.0))
        throw ArgumentError("gaussian sigma must be positive at node " + std::to_string(i));
    } else if (const auto* l = std::get_if<LaplaceNoise>(&nn)) {
      if (!(l->scale > 0.0))
        throw ArgumentError("laplace scale must be positive at node " + std::to_string(i));
    } else if (const auto* e = std::get_if<EmpiricalNoise>(&nn)) {
      if (e->sorted.size() == 0)
        throw ArgumentError("empirical noise sample is empty at node " + std::to_string(i));
      for (Eigen::Index k = 0; k + 1 < e->sorted.size(); ++k)
        if (e->sorted[k] > e->sorted[k + 1])
          throw ArgumentError("empirical noise sample not sorted at node " + std::to_string(i));
    }
  }
}

NoiseModel NoiseModel::iidGaussian(int d, double mean, double sigma) {
  return NoiseModel(std::vector<NodeNoise>(static_cast<std::size_t>(d),
                                           GaussianNoise{mean, sigma}));
}

NoiseModel NoiseModel::iidLaplace(int d, double loc, double scale) {
  return NoiseModel(std::vector<NodeNoise>(static_cast<std::size_t>(d),
                                           LaplaceNoise{loc, scale}));
}

double NoiseModel::sample(int node, Rng& rng) const {
  const NodeNoise& nn = nodes_[static_cast<std::size_t>(node)];
  if (const auto* g = std::get_if<GaussianNoise>(&nn)) return rng.normal(g->mean, g->sigma);
  if (const auto* l = std::get_if<LaplaceNoise>(&nn)) return rng.laplace(l->loc, l->scale);
  return empiricalQuantile(std::get<EmpiricalNoise>(nn).sorted, rng.uniform());
}

Eigen::VectorXd NoiseModel::sampleVector(Rng& rng) const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i) v[i] = sample(i, rng);
  return v;
}

}  // namespace fpcm::scm
