#include "fpcm/dag.hpp"

#include <algorithm>
#include <string>

#include "fpcm/errors.hpp"

namespace fpcm::scm {

namespace {

// Kahn peeling; throws if a cycle prevents all d nodes from being removed.
std::vector<int> kahnOrder(const BoolMatrix& adj, Rng* rng) {
  const int d = static_cast<int>(adj.rows());
  std::vector<int> indegree(d, 0);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      if (adj(i, j)) ++indegree[j];

  std::vector<int> ready;
  for (int i = 0; i < d; ++i)
    if (indegree[i] == 0) ready.push_back(i);

  std::vector<int> order;
  order.reserve(d);
  while (!ready.empty()) {
    int pick = 0;
    if (rng != nullptr) pick = rng->uniformInt(static_cast<int>(ready.size()));
    int node = ready[static_cast<std::size_t>(pick)];
    ready.erase(ready.begin() + pick);
    order.push_back(node);
    for (int j = 0; j < d; ++j) {
      if (adj(node, j) && --indegree[j] == 0) ready.push_back(j);
    }
  }
  if (static_cast<int>(order.size()) != d)
    throw ArgumentError("adjacency matrix contains a directed cycle");
  return order;
}

}  // namespace

Dag::Dag(int d) : adj_(BoolMatrix::Constant(d, d, false)) {
  if (d <= 0) throw ArgumentError("node count must be positive");
}

Dag::Dag(BoolMatrix adjacency) : adj_(std::move(adjacency)) {
  if (adj_.rows() == 0 || adj_.rows() != adj_.cols())
    throw ArgumentError("adjacency matrix must be square and non-empty");
  for (int i = 0; i < adj_.rows(); ++i)
    if (adj_(i, i))
      throw ArgumentError("self-loop at node " + std::to_string(i));
  kahnOrder(adj_, nullptr);
}

Dag Dag::fromEdges(int d, const std::vector<std::pair<int, int>>& edges) {
  BoolMatrix adj = BoolMatrix::Constant(d, d, false);
  for (auto [from, to] : edges) {
    if (from < 0 || from >= d || to < 0 || to >= d)
      throw ArgumentError("edge endpoint out of range");
    adj(from, to) = true;
  }
  return Dag(std::move(adj));
}

Dag Dag::chain(int d) {
  BoolMatrix adj = BoolMatrix::Constant(d, d, false);
  for (int i = 0; i + 1 < d; ++i) adj(i, i + 1) = true;
  return Dag(std::move(adj));
}

int Dag::edgeCount() const { return static_cast<int>(adj_.count()); }

std::vector<int> Dag::parents(int node) const {
  std::vector<int> out;
  for (int i = 0; i < adj_.rows(); ++i)
    if (adj_(i, node)) out.push_back(i);
  return out;
}

std::vector<int> Dag::children(int node) const {
  std::vector<int> out;
  for (int j = 0; j < adj_.cols(); ++j)
    if (adj_(node, j)) out.push_back(j);
  return out;
}

std::vector<int> Dag::topologicalNodeOrder() const {
  return kahnOrder(adj_, nullptr);
}

std::vector<int> Dag::topologicalNodeOrder(Rng& rng) const {
  return kahnOrder(adj_, &rng);
}

}  // namespace fpcm::scm
