#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fpcm/errors.hpp"
#include "fpcm/metrics.hpp"
#include "fpcm/scm.hpp"
#include "testutil.hpp"

using namespace fpcm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// H(x, n) = A x + n on ordered coordinates, A strictly lower triangular.
scm::StructuredFn linearStructured(const MatrixXd& a) {
  scm::StructuredFn fn;
  fn.d = static_cast<int>(a.rows());
  fn.additiveNoise = true;
  fn.eval = [a](const VectorXd& x, const VectorXd& n) { return VectorXd(a * x + n); };
  fn.jacX = [a](const VectorXd&, const VectorXd&) { return a; };
  fn.jacN = [a](const VectorXd&, const VectorXd&) {
    return MatrixXd(MatrixXd::Identity(a.rows(), a.cols()));
  };
  return fn;
}

scm::FixedPointScm linearFp(const MatrixXd& a) {
  const int d = static_cast<int>(a.rows());
  return scm::FixedPointScm(scm::Permutation::identity(d), linearStructured(a),
                            scm::NoiseModel::iidGaussian(d));
}

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("types: permutation matrix is orthogonal, DAGs reject bad adjacency") {
  scm::Permutation p({2, 0, 3, 1});
  MatrixXd m = p.matrix();
  CHECK((m * m.transpose() - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(scm::Permutation({0, 0, 1}), ArgumentError);

  scm::BoolMatrix self = scm::BoolMatrix::Constant(2, 2, false);
  self(0, 0) = true;
  CHECK_THROWS_AS((void)scm::Dag(std::move(self)), ArgumentError);
  scm::BoolMatrix cyc = scm::BoolMatrix::Constant(2, 2, false);
  cyc(0, 1) = true;
  cyc(1, 0) = true;
  CHECK_THROWS_AS((void)scm::Dag(std::move(cyc)), ArgumentError);
}

TEST_CASE("solve: no-edge SCM returns the noise") {
  scm::FixedPointScm s = linearFp(MatrixXd::Zero(2, 2));
  VectorXd x = scm::solveFixedPoint(s, vec2(3.0, -1.0));
  CHECK(x[0] == 3.0);
  CHECK(x[1] == -1.0);
}

TEST_CASE("solve: two-node chain closed form") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 1.0;
  VectorXd x = scm::solveFixedPoint(linearFp(a), vec2(1.0, 1.0));
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("solve: three-node chain propagates the root") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(1, 0) = 1.0;
  a(2, 1) = 1.0;
  VectorXd n(3);
  n << 1.0, 0.0, 0.0;
  VectorXd x = scm::solveFixedPoint(linearFp(a), n);
  CHECK(x.isApprox(VectorXd::Ones(3), 1e-14));
}

TEST_CASE("solve: dimension and numeric errors") {
  scm::FixedPointScm s = linearFp(MatrixXd::Zero(2, 2));
  CHECK_THROWS_AS(scm::solveFixedPoint(s, VectorXd::Zero(3)), ArgumentError);

  // Always-NaN maps are rejected by the construction probes.
  scm::StructuredFn alwaysBad;
  alwaysBad.d = 2;
  alwaysBad.additiveNoise = true;
  alwaysBad.eval = [](const VectorXd& x, const VectorXd& n) {
    VectorXd out = n;
    out[1] += 0.0 * x[0] + std::nan("");
    return out;
  };
  CHECK_THROWS_AS(scm::FixedPointScm(scm::Permutation::identity(2), alwaysBad,
                                     scm::NoiseModel::iidGaussian(2)),
                  StructureError);

  // A map that only blows up far from the probe region surfaces during the
  // solve, with the iteration index in the message.
  scm::StructuredFn conditional;
  conditional.d = 2;
  conditional.additiveNoise = true;
  conditional.eval = [](const VectorXd& x, const VectorXd& n) {
    VectorXd out = n;
    out[1] += x[0] > 50.0 ? std::nan("") : x[0];
    return out;
  };
  scm::FixedPointScm cond(scm::Permutation::identity(2), conditional,
                          scm::NoiseModel::iidGaussian(2));
  try {
    scm::solveFixedPoint(cond, vec2(1000.0, 0.0));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("solve: fixed-point residual and start-point independence") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 2 + rng.uniformInt(6);
    MatrixXd a = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < i; ++j)
        if (rng.uniform() < 0.5) a(i, j) = rng.uniform(-1.5, 1.5);
    scm::FixedPointScm s = linearFp(a);
    VectorXd n = rng.normalVector(d);
    VectorXd x = scm::solveFixedPoint(s, n);
    VectorXd again = s.h().eval(x, n);  // identity perm: ordered == original
    CHECK((x - again).lpNorm<Eigen::Infinity>() <=
          1e-10 * (1.0 + x.lpNorm<Eigen::Infinity>()));
    VectorXd fromRandom = scm::solveFixedPointFrom(s, n, rng.normalVector(d));
    CHECK((x - fromRandom).lpNorm<Eigen::Infinity>() <=
          1e-8 * (1.0 + x.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("sample: no-edge gaussian columns have near-zero mean") {
  scm::FixedPointScm s = linearFp(MatrixXd::Zero(2, 2));
  const int n = 4096;
  Dataset ds = scm::sampleObservational(s, n, 7);
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(ds.x.col(j).mean()) <= 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sample: chain variance accumulates") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 1.0;
  Dataset ds = scm::sampleObservational(linearFp(a), 20000, 11);
  double mean = ds.x.col(1).mean();
  double var = (ds.x.col(1).array() - mean).square().mean();
  CHECK(var == doctest::Approx(2.0).epsilon(0.06));
}

TEST_CASE("sample: same seed gives identical bytes") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(1, 0) = 0.8;
  a(2, 1) = -0.5;
  Dataset d1 = scm::sampleObservational(linearFp(a), 64, 123);
  Dataset d2 = scm::sampleObservational(linearFp(a), 64, 123);
  CHECK(d1.x == d2.x);
  CHECK(*d1.noise == *d2.noise);
}

TEST_CASE("reparameterize: chain with identity order has the expected jacobian") {
  MatrixXd w = MatrixXd::Zero(2, 2);
  w(0, 1) = 1.0;  // edge 0 -> 1
  scm::StandardScm std_ = testutil::linearScm(w, scm::NoiseModel::iidGaussian(2));
  scm::FixedPointScm fp = scm::reparameterizeStandard(std_, scm::Permutation::identity(2));
  MatrixXd j = scm::jacobianX(fp.h(), VectorXd::Zero(2), VectorXd::Zero(2));
  CHECK(std::abs(j(1, 0) - 1.0) <= 1e-6);
  CHECK(std::abs(j(0, 0)) <= 1e-6);
  CHECK(std::abs(j(0, 1)) <= 1e-6);
  CHECK(std::abs(j(1, 1)) <= 1e-6);
}

TEST_CASE("reparameterize: invalid order names the violating edge") {
  MatrixXd w = MatrixXd::Zero(2, 2);
  w(0, 1) = 1.0;
  scm::StandardScm std_ = testutil::linearScm(w, scm::NoiseModel::iidGaussian(2));
  try {
    scm::reparameterizeStandard(std_, scm::Permutation::reversed(2));
    FAIL("expected OrderingError");
  } catch (const OrderingError& e) {
    CHECK(std::string(e.what()).find("0->1") != std::string::npos);
  }
}

TEST_CASE("reparameterize: matches the standard mechanisms pointwise") {
  MatrixXd w = MatrixXd::Zero(3, 3);
  w(0, 2) = 1.3;
  w(1, 2) = -0.7;  // collider
  scm::StandardScm std_ = testutil::linearScm(w, scm::NoiseModel::iidGaussian(3));
  for (const auto& order : {std::vector<int>{0, 1, 2}, std::vector<int>{1, 0, 2}}) {
    scm::Permutation perm(order);
    scm::FixedPointScm fp = scm::reparameterizeStandard(std_, perm);
    Rng rng(5);
    for (int probe = 0; probe < 100; ++probe) {
      VectorXd x = rng.normalVector(3), n = rng.normalVector(3);
      VectorXd viaFp = perm.toOriginal(fp.h().eval(perm.toOrdered(x), perm.toOrdered(n)));
      VectorXd direct(3);
      direct << n[0], n[1], 1.3 * x[0] - 0.7 * x[1] + n[2];
      CHECK((viaFp - direct).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("reparameterize: both collider orders generate the same distribution") {
  MatrixXd w = MatrixXd::Zero(3, 3);
  w(0, 2) = 1.3;
  w(1, 2) = -0.7;
  scm::StandardScm std_ = testutil::linearScm(w, scm::NoiseModel::iidGaussian(3));
  scm::FixedPointScm fp1 = scm::reparameterizeStandard(std_, scm::Permutation({0, 1, 2}));
  scm::FixedPointScm fp2 = scm::reparameterizeStandard(std_, scm::Permutation({1, 0, 2}));
  const int n = 20000;
  Dataset a = scm::sampleObservational(fp1, n, 99);
  Dataset b = scm::sampleObservational(fp2, n, 17);
  for (int j = 0; j < 3; ++j) {
    double sd = std::sqrt((a.x.col(j).array() - a.x.col(j).mean()).square().mean());
    double se = sd / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(a.x.col(j).mean() - b.x.col(j).mean()) <= 3.0 * se * std::sqrt(2.0) + 1e-3);
  }
}

TEST_CASE("causal graph: empty and chain cases") {
  CHECK(scm::causalGraphOf(linearFp(MatrixXd::Zero(3, 3))).edgeCount() == 0);

  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 1.0;
  scm::Dag g = scm::causalGraphOf(linearFp(a));
  CHECK(g.edgeCount() == 1);
  CHECK(g.edge(0, 1));
}

TEST_CASE("causal graph: needs at least one probe") {
  CHECK_THROWS_AS(scm::causalGraphOf(linearFp(MatrixXd::Zero(2, 2)), {}, 1e-3),
                  ArgumentError);
}

TEST_CASE("intervene: do-node pins the ordered coordinate exactly") {
  scm::FixedPointScm s = linearFp(MatrixXd::Zero(2, 2));
  scm::FixedPointScm done = scm::intervene(s, scm::DoNode{0, 5.0});
  Dataset ds = scm::sampleObservational(done, 32, 3);
  for (int r = 0; r < ds.rows(); ++r) CHECK(ds.x(r, 0) == 5.0);
}

TEST_CASE("intervene: chain under do(x0 = 1)") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 1.0;
  scm::FixedPointScm done = scm::intervene(linearFp(a), scm::DoNode{0, 1.0});
  Dataset ds = scm::sampleObservational(done, 64, 21);
  for (int r = 0; r < ds.rows(); ++r) {
    CHECK(ds.x(r, 0) == 1.0);
    CHECK(ds.x(r, 1) == doctest::Approx(1.0 + (*ds.noise)(r, 1)).epsilon(1e-12));
  }
}

TEST_CASE("intervene: identity triangular map changes nothing") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(1, 0) = 0.5;
  a(2, 0) = -1.0;
  scm::FixedPointScm s = linearFp(a);
  scm::FixedPointScm t =
      scm::intervene(s, scm::TriangularMap{[](const VectorXd& x) { return x; }});
  Dataset d1 = scm::sampleObservational(s, 50, 8);
  Dataset d2 = scm::sampleObservational(t, 50, 8);
  CHECK(d1.x == d2.x);
}

TEST_CASE("intervene: bad inputs") {
  scm::FixedPointScm s = linearFp(MatrixXd::Zero(2, 2));
  CHECK_THROWS_AS(scm::intervene(s, scm::DoNode{5, 0.0}), ArgumentError);
  // A swap is not lower triangular.
  CHECK_THROWS_AS(scm::intervene(s, scm::TriangularMap{[](const VectorXd& x) {
                    VectorXd y(2);
                    y << x[1], x[0];
                    return y;
                  }}),
                  StructureError);
}

TEST_CASE("counterfactual: identity intervention returns the factual") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(1, 0) = 0.7;
  a(2, 1) = -0.4;
  scm::FixedPointScm s = linearFp(a);
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x = scm::solveFixedPoint(s, rng.normalVector(3));
    VectorXd cf =
        scm::counterfactual(s, scm::TriangularMap{[](const VectorXd& z) { return z; }}, x);
    CHECK((cf - x).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("counterfactual: hand-computed chain example") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(1, 0) = 1.0;
  VectorXd cf = scm::counterfactual(linearFp(a), scm::DoNode{0, 0.0}, vec2(1.0, 3.0));
  CHECK(cf[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cf[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("counterfactual: upstream coordinates are untouched") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(1, 0) = 1.0;
  a(2, 1) = 1.0;
  scm::FixedPointScm s = linearFp(a);
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd x = scm::solveFixedPoint(s, rng.normalVector(3));
    VectorXd cf = scm::counterfactual(s, scm::DoNode{1, rng.uniform(-2.0, 2.0)}, x);
    CHECK(cf[0] == doctest::Approx(x[0]).epsilon(1e-12));
  }
}

TEST_CASE("counterfactual: abduction requires a supported head") {
  scm::StructuredFn fn;
  fn.d = 2;
  fn.eval = [](const VectorXd& x, const VectorXd& n) {
    VectorXd y(2);
    y << n[0], 0.5 * x[0] * n[1];
    return y;
  };
  scm::FixedPointScm s(scm::Permutation::identity(2), fn, scm::NoiseModel::iidGaussian(2));
  CHECK_THROWS_AS(scm::counterfactual(s, scm::DoNode{0, 0.0}, vec2(1.0, 1.0)),
                  CapabilityError);
}

TEST_CASE("structure check rejects non-triangular maps") {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(0, 1) = 1.0;  // upper entry
  CHECK_THROWS_AS(linearFp(a), StructureError);

  scm::StructuredFn fn;
  fn.d = 2;
  fn.eval = [](const VectorXd& x, const VectorXd& n) {
    VectorXd y(2);
    y << n[0], x[0] + n[0] + n[1];  // off-diagonal noise dependence
    return y;
  };
  CHECK_THROWS_AS(
      scm::FixedPointScm(scm::Permutation::identity(2), fn, scm::NoiseModel::iidGaussian(2)),
      StructureError);
}

TEST_CASE("linear-gaussian recovery oracle: per-node least squares") {
  // Known order, additive gaussian noise: the conditional expectation is the
  // linear parent combination, so ordered least squares recovers the weights.
  const int d = 5;
  MatrixXd w = MatrixXd::Zero(d, d);
  w(0, 1) = 1.2;
  w(0, 2) = -0.6;
  w(1, 3) = 0.9;
  w(2, 3) = 0.5;
  w(3, 4) = -1.1;
  scm::StandardScm std_ = testutil::linearScm(w, scm::NoiseModel::iidGaussian(d));
  scm::Permutation perm = scm::Permutation::identity(d);
  scm::FixedPointScm fp = scm::reparameterizeStandard(std_, perm);
  Dataset ds = scm::sampleObservational(fp, 100000, 2024);
  MatrixXd coef = testutil::olsOrderedCoefficients(ds.x);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j) CHECK(std::abs(coef(i, j) - w(j, i)) <= 1e-2);
}
