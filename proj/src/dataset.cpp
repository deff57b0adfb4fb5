#include "fpcm/dataset.hpp"

#include <string>

#include "fpcm/errors.hpp"

namespace fpcm {

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& raw) const {
  return (raw.rowwise() - mean.transpose()).array().rowwise() /
         std.transpose().array();
}

Eigen::MatrixXd Standardization::invert(const Eigen::MatrixXd& stored) const {
  return (stored.array().rowwise() * std.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

Eigen::VectorXd Standardization::apply(const Eigen::VectorXd& raw) const {
  return (raw - mean).cwiseQuotient(std);
}

Eigen::VectorXd Standardization::invert(const Eigen::VectorXd& stored) const {
  return stored.cwiseProduct(std) + mean;
}

void Dataset::validate() const {
  if (!x.allFinite()) throw DataError("dataset contains NaN or Inf");
  if (noise && (noise->rows() != x.rows() || noise->cols() != x.cols()))
    throw DataError("noise matrix shape does not match observations");
  if (dag && order) {
    if (auto v = scm::orderingViolation(*dag, *order)) {
      throw DataError("stored order violates graph edge " +
                      std::to_string(v->first) + "->" + std::to_string(v->second));
    }
  }
}

}  // namespace fpcm
