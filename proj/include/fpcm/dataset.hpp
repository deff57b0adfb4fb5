#pragma once

#include <optional>

#include <Eigen/Core>
#include <json.hpp>

#include "fpcm/dag.hpp"
#include "fpcm/permutation.hpp"

namespace fpcm {

// Per-column affine record: stored = (raw - mean) / std.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& stored) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& stored) const;
};

// Observation matrix with optional ground truth attached by generators.
struct Dataset {
  Eigen::MatrixXd x;  // n x d
  std::optional<Eigen::MatrixXd> noise;
  std::optional<scm::Dag> dag;
  std::optional<scm::Permutation> order;  // a valid topological order of dag
  std::optional<Standardization> standardization;
  nlohmann::json meta;  // family tags, realized mechanism parameters, seed

  int rows() const { return static_cast<int>(x.rows()); }
  int cols() const { return static_cast<int>(x.cols()); }

  // Throws if x has NaN/Inf or the ground-truth order violates the graph.
  void validate() const;
};

}  // namespace fpcm
