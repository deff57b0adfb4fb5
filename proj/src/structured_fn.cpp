#include "fpcm/structured_fn.hpp"

#include <cmath>
#include <string>

#include "fpcm/errors.hpp"

namespace fpcm::scm {

namespace {

constexpr double kFdStepScale = 1e-5;

Eigen::MatrixXd fdJacobian(const StructuredFn& fn, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& n, bool wrtX) {
  const int d = fn.d;
  Eigen::MatrixXd jac(d, d);
  Eigen::VectorXd w = wrtX ? x : n;
  for (int j = 0; j < d; ++j) {
    const double h = kFdStepScale * (1.0 + std::abs(w[j]));
    Eigen::VectorXd plus = w, minus = w;
    plus[j] += h;
    minus[j] -= h;
    Eigen::VectorXd fplus = wrtX ? fn.eval(plus, n) : fn.eval(x, plus);
    Eigen::VectorXd fminus = wrtX ? fn.eval(minus, n) : fn.eval(x, minus);
    jac.col(j) = (fplus - fminus) / (2.0 * h);
  }
  return jac;
}

}  // namespace

Eigen::MatrixXd fdJacobianX(const StructuredFn& fn, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& n) {
  return fdJacobian(fn, x, n, true);
}

Eigen::MatrixXd fdJacobianN(const StructuredFn& fn, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& n) {
  return fdJacobian(fn, x, n, false);
}

Eigen::MatrixXd jacobianX(const StructuredFn& fn, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& n) {
  return fn.jacX ? fn.jacX(x, n) : fdJacobianX(fn, x, n);
}

Eigen::MatrixXd jacobianN(const StructuredFn& fn, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& n) {
  if (fn.jacN) return fn.jacN(x, n);
  if (fn.additiveNoise)
    return Eigen::MatrixXd::Identity(fn.d, fn.d);
  return fdJacobianN(fn, x, n);
}

void checkTriangularStructure(const StructuredFn& fn,
                              const StructureCheckOptions& opts) {
  if (!fn.eval || fn.d <= 0)
    throw ArgumentError("structured function has no evaluator");
  Rng rng(opts.seed);
  const bool analytic = fn.hasAnalyticJacobians();
  const double tol = analytic ? opts.tolAnalytic : opts.tolFiniteDiff;
  for (int p = 0; p < opts.probes; ++p) {
    Eigen::VectorXd x = rng.normalVector(fn.d);
    Eigen::VectorXd n = rng.normalVector(fn.d);
    Eigen::MatrixXd jx = jacobianX(fn, x, n);
    Eigen::MatrixXd jn = jacobianN(fn, x, n);
    if (!jx.allFinite() || !jn.allFinite())
      throw StructureError("jacobian probe produced NaN/Inf");
    for (int i = 0; i < fn.d; ++i) {
      for (int j = 0; j < fn.d; ++j) {
        if (j >= i && std::abs(jx(i, j)) > tol)
          throw StructureError("jacobian in x is not strictly lower triangular: entry (" +
                               std::to_string(i) + "," + std::to_string(j) + ") = " +
                               std::to_string(jx(i, j)));
        if (i != j && std::abs(jn(i, j)) > tol)
          throw StructureError("jacobian in n is not diagonal: entry (" +
                               std::to_string(i) + "," + std::to_string(j) + ") = " +
                               std::to_string(jn(i, j)));
      }
    }
  }
}

}  // namespace fpcm::scm
