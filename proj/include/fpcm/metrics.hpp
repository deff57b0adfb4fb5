#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fpcm/scm.hpp"

namespace fpcm::metrics {

// Topological ordering score in [0, 1]: 1 - (#nodes with a parent placed
// after them) / (d - 1). Equals 1 exactly when perm is a valid topological
// order of g. d = 1 is defined as 1.0.
double tos(const scm::Permutation& perm, const scm::Dag& g);

// F1 over directed edges. Both graphs empty counts as 1.0; no true positive
// with a non-trivial union counts as 0.0.
double f1Directed(const scm::Dag& predicted, const scm::Dag& truth);

// sqrt( mean_i ((x_i - xhat_i) / sigma_i)^2 ); sigmas must be positive.
double rescaledL2(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                  const Eigen::VectorXd& sigmas);

struct ScoreReport {
  struct Entry {
    std::string id;
    double score = 0.0;
  };
  std::vector<Entry> entries;

  double mean() const;
  double median() const;
  double stddev() const;
  // Table convention "median/mean (std)".
  std::string summary() const;
  nlohmann::json toJson() const;
  std::string toCsv() const;
};

// Counterfactual prediction under do(X_node = value), original units.
using CounterfactualPredictor =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& xFactual, int node, double value)>;

// For each intervention: pick a node uniformly, draw the value uniformly from
// the observed range of that node, generate factual samples from the true
// SCM, and score the predictor's counterfactuals against ground truth (same
// exogenous noise) with the re-scaled l2 distance.
ScoreReport cfEval(const scm::FixedPointScm& truth, const CounterfactualPredictor& predictor,
                   int nInterventions, int samplesPerIntervention, std::uint64_t seed);

}  // namespace fpcm::metrics
