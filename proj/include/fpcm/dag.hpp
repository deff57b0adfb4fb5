#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fpcm/random.hpp"

namespace fpcm::scm {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Directed acyclic graph over d nodes. adj(i, j) = true means edge i -> j,
// i.e. i is a parent of j. Immutable; acyclicity is verified at construction
// by Kahn peeling.
class Dag {
 public:
  explicit Dag(int d);                 // empty graph
  explicit Dag(BoolMatrix adjacency);  // throws ArgumentError on cycle/self-loop

  static Dag fromEdges(int d, const std::vector<std::pair<int, int>>& edges);
  static Dag chain(int d);  // 0 -> 1 -> ... -> d-1

  int nodeCount() const { return static_cast<int>(adj_.rows()); }
  bool edge(int from, int to) const { return adj_(from, to); }
  const BoolMatrix& adjacency() const { return adj_; }
  int edgeCount() const;

  std::vector<int> parents(int node) const;   // increasing order
  std::vector<int> children(int node) const;  // increasing order

  // Some valid topological order (parents-first node list). With an rng,
  // ties between simultaneously available nodes are broken randomly.
  std::vector<int> topologicalNodeOrder() const;
  std::vector<int> topologicalNodeOrder(Rng& rng) const;

 private:
  BoolMatrix adj_;
};

}  // namespace fpcm::scm
