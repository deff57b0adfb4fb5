#include "fpcm/permutation.hpp"

#include <numeric>
#include <string>

#include "fpcm/errors.hpp"

namespace fpcm::scm {

Permutation::Permutation(std::vector<int> map) : map_(std::move(map)) {
  const int d = static_cast<int>(map_.size());
  if (d == 0) throw ArgumentError("permutation must be non-empty");
  pos_.assign(static_cast<std::size_t>(d), -1);
  for (int k = 0; k < d; ++k) {
    int node = map_[static_cast<std::size_t>(k)];
    if (node < 0 || node >= d)
      throw ArgumentError("permutation entry out of range: " + std::to_string(node));
    if (pos_[static_cast<std::size_t>(node)] != -1)
      throw ArgumentError("permutation repeats node " + std::to_string(node));
    pos_[static_cast<std::size_t>(node)] = k;
  }
}

Permutation Permutation::identity(int d) {
  std::vector<int> m(static_cast<std::size_t>(d));
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::reversed(int d) {
  std::vector<int> m(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) m[static_cast<std::size_t>(k)] = d - 1 - k;
  return Permutation(std::move(m));
}

Eigen::MatrixXd Permutation::matrix() const {
  const int d = size();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) p(k, nodeAt(k)) = 1.0;
  return p;
}

Eigen::VectorXd Permutation::toOrdered(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw ArgumentError("vector length does not match permutation size");
  Eigen::VectorXd y(size());
  for (int k = 0; k < size(); ++k) y[k] = x[nodeAt(k)];
  return y;
}

Eigen::VectorXd Permutation::toOriginal(const Eigen::VectorXd& y) const {
  if (y.size() != size()) throw ArgumentError("vector length does not match permutation size");
  Eigen::VectorXd x(size());
  for (int k = 0; k < size(); ++k) x[nodeAt(k)] = y[k];
  return x;
}

Eigen::MatrixXd Permutation::rowsToOrdered(const Eigen::MatrixXd& x) const {
  if (x.cols() != size()) throw ArgumentError("column count does not match permutation size");
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (int k = 0; k < size(); ++k) y.col(k) = x.col(nodeAt(k));
  return y;
}

Eigen::MatrixXd Permutation::rowsToOriginal(const Eigen::MatrixXd& y) const {
  if (y.cols() != size()) throw ArgumentError("column count does not match permutation size");
  Eigen::MatrixXd x(y.rows(), y.cols());
  for (int k = 0; k < size(); ++k) x.col(nodeAt(k)) = y.col(k);
  return x;
}

std::optional<std::pair<int, int>> orderingViolation(const Dag& dag,
                                                     const Permutation& perm) {
  const int d = dag.nodeCount();
  if (perm.size() != d)
    throw ArgumentError("permutation size does not match node count");
  for (int parent = 0; parent < d; ++parent) {
    for (int child : dag.children(parent)) {
      if (perm.positionOf(parent) > perm.positionOf(child))
        return std::make_pair(parent, child);
    }
  }
  return std::nullopt;
}

Permutation topologicalOrder(const Dag& dag) {
  return Permutation(dag.topologicalNodeOrder());
}

Permutation topologicalOrder(const Dag& dag, Rng& rng) {
  return Permutation(dag.topologicalNodeOrder(rng));
}

}  // namespace fpcm::scm
