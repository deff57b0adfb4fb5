#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fpcm/errors.hpp"
#include "fpcm/metrics.hpp"
#include "testutil.hpp"

using namespace fpcm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("tos: chain orderings") {
  scm::Dag chain3 = scm::Dag::chain(3);
  CHECK(metrics::tos(scm::Permutation({0, 1, 2}), chain3) == 1.0);

  scm::Dag chain2 = scm::Dag::chain(2);
  CHECK(metrics::tos(scm::Permutation({0, 1}), chain2) == 1.0);
  CHECK(metrics::tos(scm::Permutation({1, 0}), chain2) == 0.0);
}

TEST_CASE("tos: empty graph scores 1 for every ordering") {
  scm::Dag empty(4);
  for (const auto& perm : testutil::allPermutations(4))
    CHECK(metrics::tos(perm, empty) == 1.0);
}

TEST_CASE("tos: single node is defined as 1") {
  CHECK(metrics::tos(scm::Permutation({0}), scm::Dag(1)) == 1.0);
}

TEST_CASE("tos: matches brute force on every DAG and permutation up to d=3") {
  for (int d = 2; d <= 3; ++d) {
    auto perms = testutil::allPermutations(d);
    for (const scm::Dag& g : testutil::allDags(d))
      for (const auto& perm : perms)
        CHECK(metrics::tos(perm, g) == doctest::Approx(testutil::bruteForceTos(perm, g)));
  }
}

TEST_CASE("f1: identical graphs score 1") {
  scm::Dag g = scm::Dag::chain(4);
  CHECK(metrics::f1Directed(g, g) == 1.0);
}

TEST_CASE("f1: empty prediction against a non-empty truth scores 0") {
  CHECK(metrics::f1Directed(scm::Dag(3), scm::Dag::chain(3)) == 0.0);
}

TEST_CASE("f1: both graphs empty scores 1 by convention") {
  CHECK(metrics::f1Directed(scm::Dag(3), scm::Dag(3)) == 1.0);
}

TEST_CASE("f1: partial recall") {
  scm::Dag truth = scm::Dag::chain(3);  // 0->1, 1->2
  scm::Dag pred = scm::Dag::fromEdges(3, {{0, 1}});
  CHECK(metrics::f1Directed(pred, truth) == doctest::Approx(2.0 / 3.0));
  // Direction matters.
  scm::Dag swapped = scm::Dag::fromEdges(3, {{1, 0}});
  CHECK(metrics::f1Directed(swapped, truth) == 0.0);
}

TEST_CASE("rescaled l2: closed-form cases") {
  VectorXd x1(1), y1(1), s1(1);
  x1 << 2.0;
  y1 << 0.0;
  s1 << 2.0;
  CHECK(metrics::rescaledL2(x1, y1, s1) == doctest::Approx(1.0));

  VectorXd x4 = VectorXd::Ones(4), y4 = VectorXd::Zero(4), s4 = VectorXd::Ones(4);
  CHECK(metrics::rescaledL2(x4, y4, s4) == doctest::Approx(1.0));
  CHECK(metrics::rescaledL2(x4, x4, s4) == 0.0);

  // Scale equivariance: doubling errors and sigmas changes nothing.
  CHECK(metrics::rescaledL2(2.0 * x4, 2.0 * y4, 2.0 * s4) ==
        doctest::Approx(metrics::rescaledL2(x4, y4, s4)));
}

TEST_CASE("rescaled l2: rejects non-positive sigmas") {
  VectorXd x = VectorXd::Ones(2), s = VectorXd::Ones(2);
  s[1] = 0.0;
  CHECK_THROWS_AS(metrics::rescaledL2(x, x, s), ArgumentError);
}

TEST_CASE("rescaled l2: triangle inequality fuzz") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    int d = 1 + rng.uniformInt(6);
    VectorXd a = rng.normalVector(d), b = rng.normalVector(d), c = rng.normalVector(d);
    VectorXd s(d);
    for (int i = 0; i < d; ++i) s[i] = rng.uniform(0.1, 3.0);
    CHECK(metrics::rescaledL2(a, c, s) <=
          metrics::rescaledL2(a, b, s) + metrics::rescaledL2(b, c, s) + 1e-12);
  }
}

TEST_CASE("score report: aggregates and formats") {
  metrics::ScoreReport r;
  r.entries = {{"a", 1.0}, {"b", 3.0}, {"c", 2.0}};
  CHECK(r.mean() == doctest::Approx(2.0));
  CHECK(r.median() == doctest::Approx(2.0));
  nlohmann::json j = r.toJson();
  CHECK(j.at("entries").size() == 3);
  CHECK(j.at("median").get<double>() == doctest::Approx(2.0));
  CHECK(r.toCsv().find("a,1") != std::string::npos);
  CHECK(r.summary().find("(") != std::string::npos);
}

namespace {

scm::FixedPointScm chainScm() {
  MatrixXd w = MatrixXd::Zero(3, 3);
  w(0, 1) = 1.0;
  w(1, 2) = -0.8;
  scm::StandardScm std_ = testutil::linearScm(w, scm::NoiseModel::iidGaussian(3));
  return scm::reparameterizeStandard(std_, scm::Permutation::identity(3));
}

}  // namespace

TEST_CASE("cf eval: the true model scores ~0") {
  scm::FixedPointScm truth = chainScm();
  metrics::CounterfactualPredictor oracle = [&truth](const VectorXd& x, int node,
                                                     double value) {
    return scm::counterfactual(truth, scm::DoNode{truth.perm().positionOf(node), value}, x);
  };
  metrics::ScoreReport r = metrics::cfEval(truth, oracle, 4, 16, 3);
  CHECK(r.entries.size() == 4);
  CHECK(r.mean() <= 1e-8);
}

TEST_CASE("cf eval: the identity predictor scores > 0") {
  scm::FixedPointScm truth = chainScm();
  metrics::CounterfactualPredictor identity = [](const VectorXd& x, int, double) {
    return x;
  };
  metrics::ScoreReport r = metrics::cfEval(truth, identity, 4, 16, 3);
  CHECK(r.mean() > 0.05);
}
