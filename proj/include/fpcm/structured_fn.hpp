#pragma once

#include <functional>

#include <Eigen/Core>

#include "fpcm/random.hpp"

namespace fpcm::scm {

using VectorFn =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using JacobianFn =
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// A map H(x, n) on ordered coordinates whose Jacobian in x is strictly lower
// triangular and whose Jacobian in n is diagonal. Analytic Jacobians are
// optional; central finite differences are used when absent.
struct StructuredFn {
  int d = 0;
  VectorFn eval;
  JacobianFn jacX;  // optional analytic d/dx
  JacobianFn jacN;  // optional analytic d/dn

  // H(x, n) = eval(x, 0) + n; enables closed-form noise abduction.
  bool additiveNoise = false;
  // Optional per-coordinate inverse: ordered observation -> ordered noise.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> noiseInverse;

  bool hasAnalyticJacobians() const { return jacX && jacN; }
};

// Central differences with step 1e-5 * (1 + |w_i|) in the perturbed entry.
Eigen::MatrixXd fdJacobianX(const StructuredFn& fn, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& n);
Eigen::MatrixXd fdJacobianN(const StructuredFn& fn, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& n);

Eigen::MatrixXd jacobianX(const StructuredFn& fn, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& n);
Eigen::MatrixXd jacobianN(const StructuredFn& fn, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& n);

struct StructureCheckOptions {
  int probes = 8;
  double tolAnalytic = 1e-6;
  double tolFiniteDiff = 1e-4;
  std::uint64_t seed = 0x5c2d1e4a0b7f3391ULL;
};

// Probes random (x, n) points and throws StructureError if any forbidden
// Jacobian entry exceeds tolerance: jacX must vanish for column >= row, jacN
// off the diagonal.
void checkTriangularStructure(const StructuredFn& fn,
                              const StructureCheckOptions& opts = {});

}  // namespace fpcm::scm
