#pragma once

#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "fpcm/dag.hpp"
#include "fpcm/dataset.hpp"
#include "fpcm/noise.hpp"
#include "fpcm/permutation.hpp"
#include "fpcm/structured_fn.hpp"

namespace fpcm::scm {

// Per-node mechanism: takes the parent values (increasing parent index) and
// the node's exogenous noise.
using Mechanism = std::function<double(const Eigen::VectorXd&, double)>;

struct StandardScm {
  Dag dag;
  std::vector<Mechanism> mechanisms;
  NoiseModel noise;
  bool additiveNoise = false;  // every mechanism is f(parents) + n
};

// do([Px]_orderedIndex = value)
struct DoNode {
  int orderedIndex = 0;
  double value = 0.0;
};

// Arbitrary differentiable map on ordered coordinates with lower-triangular
// Jacobian (diagonal included).
struct TriangularMap {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn;
};

class InterventionMap {
 public:
  InterventionMap(DoNode d) : kind_(d) {}          // NOLINT(google-explicit-constructor)
  InterventionMap(TriangularMap t) : kind_(t) {}   // NOLINT(google-explicit-constructor)

  Eigen::VectorXd apply(const Eigen::VectorXd& ordered) const;
  const DoNode* doNode() const { return std::get_if<DoNode>(&kind_); }
  const TriangularMap* triangular() const { return std::get_if<TriangularMap>(&kind_); }

  // Throws on out-of-range index or a Jacobian probe finding entries above
  // the diagonal.
  void validate(int d, std::uint64_t probeSeed = 0x7be0a91c55d13e27ULL) const;

 private:
  std::variant<DoNode, TriangularMap> kind_;
};

// Triple (P, noise, H): observations solve x = P^T H(Px, Pn). The structured
// function is checked against the triangular/diagonal mask at construction.
class FixedPointScm {
 public:
  FixedPointScm(Permutation perm, StructuredFn h, NoiseModel noise,
                const StructureCheckOptions& check = {});

  int nodeCount() const { return perm_.size(); }
  const Permutation& perm() const { return perm_; }
  const StructuredFn& h() const { return h_; }
  const NoiseModel& noise() const { return noise_; }

 private:
  Permutation perm_;
  StructuredFn h_;
  NoiseModel noise_;
};

// x = P^T H(., Pn)^{od}(0_d). Strict lower triangularity makes exactly d map
// applications sufficient; no convergence loop.
Eigen::VectorXd solveFixedPoint(const FixedPointScm& scm, const Eigen::VectorXd& n);
// Same iteration from an arbitrary ordered start point (start-point
// independence is a testable property).
Eigen::VectorXd solveFixedPointFrom(const FixedPointScm& scm, const Eigen::VectorXd& n,
                                    const Eigen::VectorXd& orderedStart);

// Draws noise, solves per sample; stores both X and N. Row r uses the RNG
// stream deriveSeed(seed, r), so rows are independent of evaluation order.
Dataset sampleObservational(const FixedPointScm& scm, int nSamples, std::uint64_t seed);

// Builds the ordered-space H realizing the standard SCM under perm
// (parents-first). Throws OrderingError naming a violating edge when perm is
// not a topological order of std.dag.
FixedPointScm reparameterizeStandard(const StandardScm& std, const Permutation& perm,
                                     const StructureCheckOptions& check = {});

// Edge (j, i) iff some probe has |[Jac_1 P^T H(Px, Pn)](i, j)| > tol.
Dag causalGraphOf(const FixedPointScm& scm,
                  const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probes,
                  double tol);
// Probes drawn from the SCM itself (observational x with its noise).
Dag causalGraphOf(const FixedPointScm& scm, int nProbes = 32, double tol = 1e-3,
                  std::uint64_t seed = 0x2c8f3d19a4e6b075ULL);

// H_T = T o H; structure is re-checked on the intervened SCM.
FixedPointScm intervene(const FixedPointScm& scm, const InterventionMap& t);

// Abduct ordered noise from x (closed form for additive noise, else the
// function's noiseInverse), then regenerate under the intervened map.
Eigen::VectorXd counterfactual(const FixedPointScm& scm, const InterventionMap& t,
                               const Eigen::VectorXd& xFactual);

// Ordered noise abduction on its own; throws CapabilityError when the
// structured function supports neither route.
Eigen::VectorXd abductOrderedNoise(const FixedPointScm& scm, const Eigen::VectorXd& xFactual);

}  // namespace fpcm::scm
