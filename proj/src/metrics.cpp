#include "fpcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fpcm/errors.hpp"

namespace fpcm::metrics {

double tos(const scm::Permutation& perm, const scm::Dag& g) {
  const int d = g.nodeCount();
  if (perm.size() != d)
    throw ArgumentError("permutation size does not match graph");
  if (d == 1) return 1.0;

  // Matrix form: reverse the parents-first ordering, fold the adjacency into
  // ordered space, and count rows with mass below the diagonal. Row a of the
  // masked product is nonzero iff the node at reversed position a has a
  // parent placed after it in the original ordering.
  std::vector<int> rev(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) rev[static_cast<std::size_t>(k)] = perm.nodeAt(d - 1 - k);
  Eigen::MatrixXd p = scm::Permutation(rev).matrix();
  Eigen::MatrixXd gd = g.adjacency().cast<double>();
  Eigen::MatrixXd folded = p * gd.transpose() * p.transpose();

  int violated = 0;
  for (int i = 0; i < d; ++i) {
    double rowMass = 0.0;
    for (int j = 0; j < i; ++j) rowMass += folded(i, j);
    if (rowMass >= 1.0) ++violated;
  }
  return 1.0 - static_cast<double>(violated) / static_cast<double>(d - 1);
}

double f1Directed(const scm::Dag& predicted, const scm::Dag& truth) {
  const int d = truth.nodeCount();
  if (predicted.nodeCount() != d)
    throw ArgumentError("graphs have different node counts");
  int tp = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (predicted.edge(i, j) && truth.edge(i, j)) ++tp;
  const int npred = predicted.edgeCount();
  const int ntrue = truth.edgeCount();
  if (npred == 0 && ntrue == 0) return 1.0;
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / npred;
  double recall = static_cast<double>(tp) / ntrue;
  return 2.0 * precision * recall / (precision + recall);
}

double rescaledL2(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                  const Eigen::VectorXd& sigmas) {
  const Eigen::Index d = x.size();
  if (xhat.size() != d || sigmas.size() != d)
    throw ArgumentError("rescaled l2 inputs have mismatched lengths");
  if ((sigmas.array() <= 0.0).any())
    throw ArgumentError("rescaled l2 requires positive sigmas");
  return std::sqrt(((x - xhat).array() / sigmas.array()).square().mean());
}

double ScoreReport::mean() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const Entry& e : entries) s += e.score;
  return s / static_cast<double>(entries.size());
}

double ScoreReport::median() const {
  if (entries.empty()) return 0.0;
  std::vector<double> v;
  v.reserve(entries.size());
  for (const Entry& e : entries) v.push_back(e.score);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ScoreReport::stddev() const {
  if (entries.size() < 2) return 0.0;
  double m = mean(), s = 0.0;
  for (const Entry& e : entries) s += (e.score - m) * (e.score - m);
  return std::sqrt(s / static_cast<double>(entries.size()));
}

std::string ScoreReport::summary() const {
  std::ostringstream os;
  os << median() << "/" << mean() << " (" << stddev() << ")";
  return os.str();
}

nlohmann::json ScoreReport::toJson() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const Entry& e : entries) rows.push_back({{"id", e.id}, {"score", e.score}});
  return {{"entries", rows},
          {"median", median()},
          {"mean", mean()},
          {"std", stddev()}};
}

std::string ScoreReport::toCsv() const {
  std::ostringstream os;
  os << "id,score\n";
  for (const Entry& e : entries) os << e.id << "," << e.score << "\n";
  return os.str();
}

ScoreReport cfEval(const scm::FixedPointScm& truth, const CounterfactualPredictor& predictor,
                   int nInterventions, int samplesPerIntervention, std::uint64_t seed) {
  if (nInterventions < 1 || samplesPerIntervention < 1)
    throw ArgumentError("cfEval needs at least one intervention and one sample");
  const int d = truth.nodeCount();

  // Reference draw for per-node ranges and scales.
  constexpr int kReferenceSamples = 1000;
  Dataset ref = sampleObservational(truth, kReferenceSamples, deriveSeed(seed, 0));
  Eigen::VectorXd lo = ref.x.colwise().minCoeff();
  Eigen::VectorXd hi = ref.x.colwise().maxCoeff();
  Eigen::VectorXd mu = ref.x.colwise().mean();
  Eigen::VectorXd sigma(d);
  for (int j = 0; j < d; ++j) {
    double v = (ref.x.col(j).array() - mu[j]).square().sum() /
               static_cast<double>(kReferenceSamples - 1);
    sigma[j] = std::max(std::sqrt(v), 1e-12);
  }

  ScoreReport report;
  for (int iv = 0; iv < nInterventions; ++iv) {
    Rng rng(deriveSeed(seed, 1000 + static_cast<std::uint64_t>(iv)));
    const int node = rng.uniformInt(d);
    const double value = rng.uniform(lo[node], hi[node]);
    scm::InterventionMap t(scm::DoNode{truth.perm().positionOf(node), value});
    scm::FixedPointScm intervened = scm::intervene(truth, t);

    double total = 0.0;
    for (int s = 0; s < samplesPerIntervention; ++s) {
      Rng draw(deriveSeed(seed, 7'000'003ULL * static_cast<std::uint64_t>(iv) +
                                    static_cast<std::uint64_t>(s) + 13));
      Eigen::VectorXd n = truth.noise().sampleVector(draw);
      Eigen::VectorXd factual = scm::solveFixedPoint(truth, n);
      Eigen::VectorXd cfTrue = scm::solveFixedPoint(intervened, n);
      Eigen::VectorXd cfHat = predictor(factual, node, value);
      total += rescaledL2(cfTrue, cfHat, sigma);
    }
    report.entries.push_back({"do(x" + std::to_string(node) + "=" + std::to_string(value) + ")",
                              total / samplesPerIntervention});
  }
  return report;
}

}  // namespace fpcm::metrics
