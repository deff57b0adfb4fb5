#include "fpcm/scm.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "fpcm/errors.hpp"

namespace fpcm::scm {

Eigen::VectorXd InterventionMap::apply(const Eigen::VectorXd& ordered) const {
  if (const DoNode* d = doNode()) {
    Eigen::VectorXd out = ordered;
    out[d->orderedIndex] = d->value;
    return out;
  }
  return triangular()->fn(ordered);
}

void InterventionMap::validate(int d, std::uint64_t probeSeed) const {
  if (const DoNode* n = doNode()) {
    if (n->orderedIndex < 0 || n->orderedIndex >= d)
      throw ArgumentError("intervention index " + std::to_string(n->orderedIndex) +
                          " out of range for d=" + std::to_string(d));
    return;
  }
  const TriangularMap* t = triangular();
  if (!t->fn) throw ArgumentError("triangular intervention has no function");
  // Probe the Jacobian above the diagonal.
  Rng rng(probeSeed);
  constexpr double kTol = 1e-4;
  for (int probe = 0; probe < 4; ++probe) {
    Eigen::VectorXd x = rng.normalVector(d);
    for (int j = 0; j < d; ++j) {
      const double h = 1e-5 * (1.0 + std::abs(x[j]));
      Eigen::VectorXd plus = x, minus = x;
      plus[j] += h;
      minus[j] -= h;
      Eigen::VectorXd col = (t->fn(plus) - t->fn(minus)) / (2.0 * h);
      for (int i = 0; i < j; ++i) {
        if (std::abs(col[i]) > kTol)
          throw StructureError("intervention map is not lower triangular: entry (" +
                               std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

FixedPointScm::FixedPointScm(Permutation perm, StructuredFn h, NoiseModel noise,
                             const StructureCheckOptions& check)
    : perm_(std::move(perm)), h_(std::move(h)), noise_(std::move(noise)) {
  if (h_.d != perm_.size())
    throw ArgumentError("structured function dimension does not match permutation");
  if (noise_.size() != perm_.size())
    throw ArgumentError("noise model dimension does not match permutation");
  checkTriangularStructure(h_, check);
}

namespace {

Eigen::VectorXd iterateOrdered(const StructuredFn& h, const Eigen::VectorXd& orderedNoise,
                               Eigen::VectorXd z) {
  for (int k = 0; k < h.d; ++k) {
    z = h.eval(z, orderedNoise);
    if (!z.allFinite())
      throw NumericError("structured function produced NaN/Inf at iteration " +
                         std::to_string(k));
  }
  return z;
}

}  // namespace

Eigen::VectorXd solveFixedPoint(const FixedPointScm& scm, const Eigen::VectorXd& n) {
  return solveFixedPointFrom(scm, n, Eigen::VectorXd::Zero(scm.nodeCount()));
}

Eigen::VectorXd solveFixedPointFrom(const FixedPointScm& scm, const Eigen::VectorXd& n,
                                    const Eigen::VectorXd& orderedStart) {
  if (n.size() != scm.nodeCount())
    throw ArgumentError("noise vector has length " + std::to_string(n.size()) +
                        ", expected " + std::to_string(scm.nodeCount()));
  Eigen::VectorXd z = iterateOrdered(scm.h(), scm.perm().toOrdered(n), orderedStart);
  return scm.perm().toOriginal(z);
}

Dataset sampleObservational(const FixedPointScm& scm, int nSamples, std::uint64_t seed) {
  if (nSamples < 1) throw ArgumentError("need at least one sample");
  const int d = scm.nodeCount();
  Dataset out;
  out.x.resize(nSamples, d);
  Eigen::MatrixXd noise(nSamples, d);
  for (int r = 0; r < nSamples; ++r) {
    Rng rng(deriveSeed(seed, static_cast<std::uint64_t>(r)));
    Eigen::VectorXd n = scm.noise().sampleVector(rng);
    try {
      out.x.row(r) = solveFixedPoint(scm, n).transpose();
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (sample row " + std::to_string(r) + ")");
    }
    noise.row(r) = n.transpose();
  }
  out.noise = std::move(noise);
  return out;
}

FixedPointScm reparameterizeStandard(const StandardScm& std_, const Permutation& perm,
                                     const StructureCheckOptions& check) {
  const int d = std_.dag.nodeCount();
  if (static_cast<int>(std_.mechanisms.size()) != d)
    throw ArgumentError("mechanism count does not match node count");
  if (auto v = orderingViolation(std_.dag, perm))
    throw OrderingError("permutation violates edge " + std::to_string(v->first) + "->" +
                        std::to_string(v->second));

  // Per ordered position: source node and its parent list.
  std::vector<int> nodeAt(static_cast<std::size_t>(d));
  std::vector<std::vector<int>> parentIdx(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    nodeAt[static_cast<std::size_t>(k)] = perm.nodeAt(k);
    parentIdx[static_cast<std::size_t>(k)] = std_.dag.parents(perm.nodeAt(k));
  }

  StructuredFn h;
  h.d = d;
  h.additiveNoise = std_.additiveNoise;
  h.eval = [perm, mech = std_.mechanisms, nodeAt, parentIdx, d](
               const Eigen::VectorXd& x, const Eigen::VectorXd& n) {
    Eigen::VectorXd xOrig = perm.toOriginal(x);
    Eigen::VectorXd nOrig = perm.toOriginal(n);
    Eigen::VectorXd out(d);
    for (int k = 0; k < d; ++k) {
      const auto& pa = parentIdx[static_cast<std::size_t>(k)];
      Eigen::VectorXd pav(static_cast<Eigen::Index>(pa.size()));
      for (std::size_t q = 0; q < pa.size(); ++q)
        pav[static_cast<Eigen::Index>(q)] = xOrig[pa[q]];
      int node = nodeAt[static_cast<std::size_t>(k)];
      out[k] = mech[static_cast<std::size_t>(node)](pav, nOrig[node]);
    }
    return out;
  };
  return FixedPointScm(perm, std::move(h), std_.noise, check);
}

Dag causalGraphOf(const FixedPointScm& scm,
                  const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probes,
                  double tol) {
  if (probes.empty()) throw ArgumentError("need at least one probe point");
  const int d = scm.nodeCount();
  const Permutation& perm = scm.perm();
  Eigen::MatrixXd maxAbs = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [x, n] : probes) {
    Eigen::MatrixXd j = jacobianX(scm.h(), perm.toOrdered(x), perm.toOrdered(n));
    maxAbs = maxAbs.cwiseMax(j.cwiseAbs());
  }
  BoolMatrix adj = BoolMatrix::Constant(d, d, false);
  // Only ordered entries below the diagonal can be edges; the rest are
  // structurally zero, so the result is a DAG by construction.
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j)
      if (maxAbs(i, j) > tol) adj(perm.nodeAt(j), perm.nodeAt(i)) = true;
  return Dag(std::move(adj));
}

Dag causalGraphOf(const FixedPointScm& scm, int nProbes, double tol, std::uint64_t seed) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> probes;
  probes.reserve(static_cast<std::size_t>(nProbes));
  for (int p = 0; p < nProbes; ++p) {
    Rng rng(deriveSeed(seed, static_cast<std::uint64_t>(p)));
    Eigen::VectorXd n = scm.noise().sampleVector(rng);
    probes.emplace_back(solveFixedPoint(scm, n), n);
  }
  return causalGraphOf(scm, probes, tol);
}

namespace {

StructuredFn composeIntervention(const StructuredFn& h, const InterventionMap& t) {
  StructuredFn out;
  out.d = h.d;
  out.eval = [h, t](const Eigen::VectorXd& x, const Eigen::VectorXd& n) {
    return t.apply(h.eval(x, n));
  };
  if (const DoNode* dn = t.doNode(); dn != nullptr && h.hasAnalyticJacobians()) {
    const int idx = dn->orderedIndex;
    out.jacX = [h, idx](const Eigen::VectorXd& x, const Eigen::VectorXd& n) {
      Eigen::MatrixXd j = h.jacX(x, n);
      j.row(idx).setZero();
      return j;
    };
    out.jacN = [h, idx](const Eigen::VectorXd& x, const Eigen::VectorXd& n) {
      Eigen::MatrixXd j = h.jacN(x, n);
      j.row(idx).setZero();
      return j;
    };
  }
  return out;
}

}  // namespace

FixedPointScm intervene(const FixedPointScm& scm, const InterventionMap& t) {
  t.validate(scm.nodeCount());
  return FixedPointScm(scm.perm(), composeIntervention(scm.h(), t), scm.noise());
}

Eigen::VectorXd abductOrderedNoise(const FixedPointScm& scm, const Eigen::VectorXd& xFactual) {
  if (xFactual.size() != scm.nodeCount())
    throw ArgumentError("factual vector length does not match SCM dimension");
  Eigen::VectorXd xOrd = scm.perm().toOrdered(xFactual);
  const StructuredFn& h = scm.h();
  if (h.additiveNoise)
    return xOrd - h.eval(xOrd, Eigen::VectorXd::Zero(scm.nodeCount()));
  if (h.noiseInverse) return h.noiseInverse(xOrd);
  throw CapabilityError("structured function supports no noise abduction");
}

Eigen::VectorXd counterfactual(const FixedPointScm& scm, const InterventionMap& t,
                               const Eigen::VectorXd& xFactual) {
  t.validate(scm.nodeCount());
  Eigen::VectorXd orderedNoise = abductOrderedNoise(scm, xFactual);
  StructuredFn ht = composeIntervention(scm.h(), t);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(scm.nodeCount());
  for (int k = 0; k < ht.d; ++k) {
    z = ht.eval(z, orderedNoise);
    if (!z.allFinite())
      throw NumericError("counterfactual regeneration produced NaN/Inf at iteration " +
                         std::to_string(k));
  }
  return scm.perm().toOriginal(z);
}

}  // namespace fpcm::scm
