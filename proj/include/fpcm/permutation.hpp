#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fpcm/dag.hpp"

namespace fpcm::scm {

// Permutation encoding a node ordering. map()[k] is the original node placed
// at ordered position k; the matrix view P has P(k, map()[k]) = 1, so
// (P x)_k = x_{map[k]}. Throughout the library, ordered space is
// parents-first: a valid topological order places every parent at a smaller
// position than its children.
class Permutation {
 public:
  explicit Permutation(std::vector<int> map);  // validates bijection

  static Permutation identity(int d);
  static Permutation reversed(int d);

  int size() const { return static_cast<int>(map_.size()); }
  int nodeAt(int position) const { return map_[static_cast<std::size_t>(position)]; }
  int positionOf(int node) const { return pos_[static_cast<std::size_t>(node)]; }
  const std::vector<int>& map() const { return map_; }

  Eigen::MatrixXd matrix() const;  // P

  Eigen::VectorXd toOrdered(const Eigen::VectorXd& x) const;      // P x
  Eigen::VectorXd toOriginal(const Eigen::VectorXd& y) const;     // P^T y
  Eigen::MatrixXd rowsToOrdered(const Eigen::MatrixXd& x) const;  // X P^T
  Eigen::MatrixXd rowsToOriginal(const Eigen::MatrixXd& y) const;

  bool operator==(const Permutation& other) const { return map_ == other.map_; }

 private:
  std::vector<int> map_;
  std::vector<int> pos_;
};

// Returns a violating edge (parent, child) if perm is not a valid topological
// order of dag, std::nullopt otherwise.
std::optional<std::pair<int, int>> orderingViolation(const Dag& dag,
                                                     const Permutation& perm);

// Some valid topological order of dag; seeded variant randomizes tie-breaks.
Permutation topologicalOrder(const Dag& dag);
Permutation topologicalOrder(const Dag& dag, Rng& rng);

}  // namespace fpcm::scm
