#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fpcm/errors.hpp"
#include "fpcm/metrics.hpp"
#include "fpcm/model.hpp"
#include "fpcm/ordering.hpp"
#include "fpcm/synth.hpp"
#include "testutil.hpp"

using namespace fpcm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

model::ModelConfig smallConfig(int d) {
  model::ModelConfig c;
  c.d = d;
  c.embedDim = 16;
  c.layers = 1;
  c.heads = 2;
  c.headDim = 8;
  c.mlpHidden = 16;
  return c;
}

// Wraps T(x, n) as a structured function to reuse the triangular probes.
scm::StructuredFn asStructured(const model::ModelParams& params) {
  scm::StructuredFn fn;
  fn.d = params.config.d;
  fn.eval = [&params](const VectorXd& x, const VectorXd& n) {
    return model::tForward(params, x, n);
  };
  return fn;
}

Dataset chainDataset(double w, int n, std::uint64_t seed) {
  MatrixXd weights = MatrixXd::Zero(2, 2);
  weights(0, 1) = w;
  scm::StandardScm std_ = testutil::linearScm(weights, scm::NoiseModel::iidGaussian(2));
  scm::FixedPointScm fp = scm::reparameterizeStandard(std_, scm::Permutation::identity(2));
  return scm::sampleObservational(fp, n, seed);
}

}  // namespace

TEST_CASE("embedding: zero input returns the positional table") {
  model::ModelParams p = model::ModelParams::random(smallConfig(3), 1);
  CHECK(model::causalEmbed(p, VectorXd::Zero(3), 1) == p.pos);
  CHECK(model::causalEmbed(p, VectorXd::Zero(3), 2) == p.pos);
}

TEST_CASE("embedding: row j depends only on w_j, linearly") {
  model::ModelParams p = model::ModelParams::random(smallConfig(4), 2);
  Rng rng(3);
  VectorXd w = rng.normalVector(4);
  MatrixXd base = model::causalEmbed(p, w, 1);
  VectorXd w2 = w;
  w2[1] += 0.75;
  MatrixXd bumped = model::causalEmbed(p, w2, 1);
  for (int row = 0; row < 4; ++row) {
    if (row == 1)
      CHECK((bumped.row(row) - base.row(row)).cwiseAbs().maxCoeff() > 0.0);
    else
      CHECK(bumped.row(row) == base.row(row));
  }
  MatrixXd doubled = model::causalEmbed(p, 2.0 * w, 1);
  CHECK(((doubled - p.pos) - 2.0 * (base - p.pos)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("causal attention: fully masked first row is zero") {
  Rng rng(5);
  MatrixXd q(3, 4), k(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      q(i, j) = rng.normal();
      k(i, j) = rng.normal();
    }
  MatrixXd ca = model::causalAttention(q, k, 4.0);
  CHECK(ca.row(0).cwiseAbs().maxCoeff() == 0.0);
  // Strictly upper and diagonal entries are exactly zero.
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) CHECK(ca(i, j) == 0.0);
}

TEST_CASE("causal attention: zero logits give the hand-computed rows") {
  MatrixXd q = MatrixXd::Zero(3, 2), k = MatrixXd::Zero(3, 2);
  MatrixXd ca = model::causalAttention(q, k, std::sqrt(16.0));
  CHECK(ca(1, 0) == 1.0);  // row sum 1 >= 1
  CHECK(ca(2, 0) == doctest::Approx(0.5));
  CHECK(ca(2, 1) == doctest::Approx(0.5));
}

TEST_CASE("causal attention: strongly negative logits leave rows sub-stochastic") {
  const double scale = std::sqrt(16.0);
  MatrixXd q = MatrixXd::Ones(3, 1) * (-20.0 * scale);
  MatrixXd k = MatrixXd::Ones(3, 1);
  MatrixXd ca = model::causalAttention(q, k, scale);
  for (int i = 1; i < 3; ++i) {
    double sum = ca.row(i).sum();
    CHECK(sum > 0.0);
    CHECK(sum < 1e-6);  // raw exp(-20) sums survive, no renormalization to 1
  }
}

TEST_CASE("causal attention: autodiff path matches the closed form") {
  Rng rng(7);
  const int d = 5, dh = 3;
  const double scale = std::sqrt(32.0);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd q(d, dh), k(d, dh);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < dh; ++j) {
        q(i, j) = rng.normal();
        k(i, j) = rng.normal();
      }
    ad::Tape tape;
    MatrixXd maskMat = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < i; ++j) maskMat(i, j) = 1.0;
    ad::Tensor scores = ad::affine(
        ad::matmul(tape.leafMatrix(q), ad::transpose(tape.leafMatrix(k))), 1.0 / scale);
    ad::Tensor masked = ad::mul(ad::exp(scores), tape.leafMatrix(maskMat));
    ad::Tensor denom = ad::maxConst(ad::sumLast(masked), 1.0);
    ad::Tensor ca = ad::mul(masked, ad::expandLast(ad::reciprocal(denom), d));
    CHECK((ca.valueMatrix() - model::causalAttention(q, k, scale)).cwiseAbs().maxCoeff() <=
          1e-12);
  }
}

TEST_CASE("transformer map: triangular in x, diagonal in n") {
  for (int layers : {1, 2}) {  // stacked layers preserve the structure
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      model::ModelConfig cfg = smallConfig(5);
      cfg.layers = layers;
      model::ModelParams p = model::ModelParams::random(cfg, seed);
      scm::StructureCheckOptions opts;
      opts.probes = 4;
      opts.tolFiniteDiff = 1e-6;  // forbidden entries are structural zeros
      CHECK_NOTHROW(scm::checkTriangularStructure(asStructured(p), opts));
    }
  }
}

TEST_CASE("transformer map: first ordered coordinate ignores the observations") {
  model::ModelParams p = model::ModelParams::random(smallConfig(4), 9);
  Rng rng(10);
  VectorXd n = rng.normalVector(4);
  double first = model::tForward(p, rng.normalVector(4), n)[0];
  for (int trial = 0; trial < 5; ++trial)
    CHECK(model::tForward(p, rng.normalVector(4), n)[0] == doctest::Approx(first).epsilon(1e-12));
}

TEST_CASE("transformer map: zero value projection decouples x entirely") {
  model::ModelParams p = model::ModelParams::random(smallConfig(3), 12);
  p.layers[0].wv.setZero();
  Rng rng(13);
  VectorXd n = rng.normalVector(3);
  VectorXd base = model::tForward(p, rng.normalVector(3), n);
  for (int trial = 0; trial < 5; ++trial)
    CHECK((model::tForward(p, rng.normalVector(3), n) - base).lpNorm<Eigen::Infinity>() <=
          1e-12);
}

TEST_CASE("transformer map: wraps as a fixed-point SCM") {
  model::ModelParams p = model::ModelParams::random(smallConfig(4), 15);
  model::TrainedModel m{p, scm::Permutation::identity(4),
                        Standardization{VectorXd::Zero(4), VectorXd::Ones(4)}};
  CHECK_NOTHROW(model::asFixedPointScm(m, scm::NoiseModel::iidGaussian(4)));
}

TEST_CASE("training: no-edge data drives the map to zero") {
  scm::FixedPointScm s(
      scm::Permutation::identity(2),
      [] {
        scm::StructuredFn fn;
        fn.d = 2;
        fn.additiveNoise = true;
        fn.eval = [](const VectorXd&, const VectorXd& n) { return n; };
        return fn;
      }(),
      scm::NoiseModel::iidGaussian(2));
  Dataset ds = scm::sampleObservational(s, 2000, 51);

  model::TrainConfig train;
  train.epochs = 30;
  train.lr = 2e-3;
  train.seed = 4;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);

  // Residual variance per standardized column is ~1, so the loss sits near d.
  CHECK(r.valCurve.back() == doctest::Approx(2.0).epsilon(0.15));
  MatrixXd probe = model::anmOrdered(r.model.params, MatrixXd::Random(32, 2));
  CHECK(probe.cwiseAbs().maxCoeff() <= 0.2);
}

TEST_CASE("training: split ratios, monotone best curve, determinism") {
  Dataset ds = chainDataset(1.0, 1000, 61);
  model::TrainConfig train;
  train.epochs = 8;
  train.lr = 1e-3;
  train.seed = 9;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  CHECK(r.trainRows == 800);
  CHECK(r.valRows == 100);
  CHECK(r.testRows == 100);
  for (std::size_t e = 1; e < r.bestValCurve.size(); ++e)
    CHECK(r.bestValCurve[e] <= r.bestValCurve[e - 1]);

  model::TrainResult r2 =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  CHECK(r.model.params.decoder == r2.model.params.decoder);
  CHECK(r.valCurve == r2.valCurve);
}

TEST_CASE("training: dimension mismatch is an argument error") {
  Dataset ds = chainDataset(1.0, 100, 3);
  CHECK_THROWS_AS(
      model::trainMse(ds, scm::Permutation::identity(3), smallConfig(3), {}),
      ArgumentError);
}

TEST_CASE("training: learned slope matches the standardized regression") {
  // X1 = X0 + N1 with unit noise: standardized slope is 1/sqrt(2).
  Dataset ds = chainDataset(1.0, 6000, 71);
  model::TrainConfig train;
  train.epochs = 60;
  train.lr = 2e-3;
  train.batchCap = 512;
  train.seed = 5;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  MatrixXd jac = model::orderedJacobianMean(r.model, ds.x, 512, 3, false);
  CHECK(jac(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.075));

  // Residual variance per node matches the standardized noise variance:
  // 1.0 at the root, 1/2 at the child.
  MatrixXd xm = r.model.record.apply(ds.x);
  MatrixXd residual = xm - model::anmOrdered(r.model.params, xm);
  for (int j = 0; j < 2; ++j) {
    double var = (residual.col(j).array() - residual.col(j).mean()).square().mean();
    CHECK(var == doctest::Approx(j == 0 ? 1.0 : 0.5).epsilon(0.10));
  }

  // Graph extraction on the same model: exact chain at tau = 0.1, empty at
  // an absurd threshold.
  model::GraphExtraction g = model::extractGraph(r.model, ds.x, 0.1);
  CHECK(g.dag.edgeCount() == 1);
  CHECK(g.dag.edge(0, 1));
  CHECK(metrics::f1Directed(g.dag, scm::Dag::chain(2)) == 1.0);
  CHECK(model::extractGraph(r.model, ds.x, 1e9).dag.edgeCount() == 0);
}

TEST_CASE("quantiles: lower-midpoint empirical convention") {
  VectorXd sorted(3);
  sorted << 1.0, 2.0, 3.0;
  CHECK(scm::empiricalQuantile(sorted, 0.5) == doctest::Approx(2.0));
  CHECK(scm::empiricalQuantile(sorted, 0.0) == 1.0);
  CHECK(scm::empiricalQuantile(sorted, 1.0) == 3.0);
}

TEST_CASE("quantiles: estimated noise model reproduces sorted residuals") {
  Dataset ds = chainDataset(0.8, 400, 81);
  model::TrainConfig train;
  train.epochs = 5;
  train.lr = 1e-3;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  scm::NoiseModel noise = model::estimateNoiseQuantiles(r.model, ds.x);
  const auto& empNoise = std::get<scm::EmpiricalNoise>(noise.node(0));
  for (Eigen::Index i = 0; i + 1 < empNoise.sorted.size(); ++i)
    CHECK(empNoise.sorted[i] <= empNoise.sorted[i + 1]);
  // The quantile of the grid midpoint (k + 0.5)/n recovers order statistic k.
  const Eigen::Index n = empNoise.sorted.size();
  for (Eigen::Index k = 0; k < n; k += 37) {
    double u = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    CHECK(scm::empiricalQuantile(empNoise.sorted, u) == doctest::Approx(empNoise.sorted[k]));
  }
  CHECK_THROWS_AS(model::estimateNoiseQuantiles(r.model, MatrixXd(0, 2)), ArgumentError);
}

TEST_CASE("generation: zero noise collapses to the deterministic fixed point") {
  Dataset ds = chainDataset(1.0, 300, 91);
  model::TrainConfig train;
  train.epochs = 5;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  std::vector<scm::NodeNoise> zero(2, scm::EmpiricalNoise{VectorXd::Zero(1)});
  auto [x, n] = model::generate(r.model, scm::NoiseModel(zero), 8, 1);
  CHECK(n.cwiseAbs().maxCoeff() == 0.0);
  for (int row = 1; row < 8; ++row) CHECK(x.row(row) == x.row(0));

  auto [x2, n2] = model::generate(r.model, scm::NoiseModel(zero), 8, 1);
  CHECK(x2 == x);
}

TEST_CASE("counterfactual: identity intervention reproduces the factual") {
  Dataset ds = chainDataset(1.0, 400, 101);
  model::TrainConfig train;
  train.epochs = 6;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x = ds.x.row(rng.uniformInt(ds.rows())).transpose();
    VectorXd cf = model::predictCounterfactual(
        r.model, x, scm::TriangularMap{[](const VectorXd& z) { return z; }});
    CHECK((cf - x).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("counterfactual: do-node pins the raw coordinate exactly") {
  Dataset ds = chainDataset(1.0, 400, 111);
  model::TrainConfig train;
  train.epochs = 6;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  VectorXd x = ds.x.row(0).transpose();
  VectorXd cf = model::predictCounterfactual(r.model, x, scm::DoNode{0, 2.5});
  CHECK(cf[0] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("counterfactual: abduction/regeneration agrees with the SCM oracle") {
  // Same additive map fed to both routes: the model-side procedure and the
  // SCM-side counterfactual must coincide.
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(1, 0) = 1.0;
  a(2, 1) = -0.6;
  scm::StructuredFn fn;
  fn.d = 3;
  fn.additiveNoise = true;
  fn.eval = [a](const VectorXd& x, const VectorXd& n) { return VectorXd(a * x + n); };
  scm::FixedPointScm s(scm::Permutation::identity(3), fn, scm::NoiseModel::iidGaussian(3));

  model::AnmMap map{3, [a](const VectorXd& x) { return VectorXd(a * x); }};
  Rng rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    VectorXd x = scm::solveFixedPoint(s, rng.normalVector(3));
    scm::InterventionMap t(scm::DoNode{1, rng.uniform(-2.0, 2.0)});
    VectorXd viaModelRoute = model::anmCounterfactualOrdered(map, x, t);
    VectorXd viaScm = scm::counterfactual(s, t, x);
    CHECK((viaModelRoute - viaScm).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("checkpoint: reload reproduces outputs bitwise") {
  testutil::TempDir tmp("fipckpt");
  Dataset ds = chainDataset(0.9, 300, 121);
  model::TrainConfig train;
  train.epochs = 4;
  model::TrainResult r =
      model::trainMse(ds, scm::Permutation::identity(2), smallConfig(2), train);
  model::saveTrainedModel(tmp.path() / "m.ckpt", r.model);
  model::TrainedModel back = model::loadTrainedModel(tmp.path() / "m.ckpt");

  MatrixXd probe = MatrixXd::Random(16, 2);
  CHECK(model::anmOrdered(back.params, probe) == model::anmOrdered(r.model.params, probe));
  CHECK(back.perm == r.model.perm);
  CHECK(back.record.mean == r.model.record.mean);
  CHECK(back.record.std == r.model.record.std);

  // Wrong magic is a format error.
  CHECK_THROWS_AS(order::loadEncoder(tmp.path() / "m.ckpt"), FormatError);
}
