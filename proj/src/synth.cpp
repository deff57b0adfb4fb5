#include "fpcm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "fpcm/errors.hpp"

namespace fpcm::synth {

namespace {

using Edge = std::pair<int, int>;

double softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

std::vector<Edge> sampleErdosRenyi(const ErdosRenyi& er, int d, Rng& rng) {
  if (er.edgeProb.has_value() == er.expectedEdges.has_value())
    throw ConfigError("erdos-renyi needs exactly one of edge-prob / expected-edges");
  double p;
  if (er.edgeProb) {
    p = *er.edgeProb;
    if (p < 0.0 || p > 1.0) throw ConfigError("erdos-renyi edge probability outside [0,1]");
  } else {
    if (*er.expectedEdges < 0.0) throw ConfigError("erdos-renyi expected edges negative");
    double pairs = 0.5 * d * (d - 1);
    p = std::min(1.0, *er.expectedEdges / pairs);
  }
  std::vector<Edge> edges;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return edges;
}

// Preferential attachment with +1 degree smoothing; m = 1 yields a tree.
std::vector<Edge> sampleScaleFree(const ScaleFree& sf, int d, Rng& rng) {
  if (sf.attachment < 1) throw ConfigError("scale-free attachment must be >= 1");
  std::vector<Edge> edges;
  std::vector<int> degree(static_cast<std::size_t>(d), 0);
  for (int t = 1; t < d; ++t) {
    int m = std::min(sf.attachment, t);
    std::set<int> targets;
    while (static_cast<int>(targets.size()) < m) {
      double total = 0.0;
      for (int v = 0; v < t; ++v)
        if (!targets.count(v)) total += degree[static_cast<std::size_t>(v)] + 1.0;
      double r = rng.uniform() * total;
      int pick = -1;
      for (int v = 0; v < t; ++v) {
        if (targets.count(v)) continue;
        r -= degree[static_cast<std::size_t>(v)] + 1.0;
        if (r <= 0.0) {
          pick = v;
          break;
        }
      }
      if (pick < 0) pick = t - 1;
      targets.insert(pick);
    }
    for (int v : targets) {
      edges.emplace_back(std::min(v, t), std::max(v, t));
      ++degree[static_cast<std::size_t>(v)];
      ++degree[static_cast<std::size_t>(t)];
    }
  }
  return edges;
}

std::vector<Edge> sampleWattsStrogatz(const WattsStrogatz& ws, int d, Rng& rng) {
  if (ws.neighbors < 2) throw ConfigError("watts-strogatz ring degree must be >= 2");
  if (ws.rewireProb < 0.0 || ws.rewireProb > 1.0)
    throw ConfigError("watts-strogatz rewire probability outside [0,1]");
  int perSide = std::max(1, std::min(ws.neighbors, d - 1) / 2);
  std::set<Edge> edges;
  for (int i = 0; i < d; ++i) {
    for (int off = 1; off <= perSide; ++off) {
      int j = (i + off) % d;
      edges.insert({std::min(i, j), std::max(i, j)});
    }
  }
  std::vector<Edge> out(edges.begin(), edges.end());
  for (Edge& e : out) {
    if (rng.uniform() >= ws.rewireProb) continue;
    for (int attempt = 0; attempt < 8; ++attempt) {
      int v = rng.uniformInt(d);
      Edge cand{std::min(e.first, v), std::max(e.first, v)};
      if (v != e.first && !edges.count(cand)) {
        edges.erase(e);
        edges.insert(cand);
        e = cand;
        break;
      }
    }
  }
  return {edges.begin(), edges.end()};
}

std::vector<Edge> sampleStochasticBlock(const StochasticBlock& sbm, int d, Rng& rng) {
  if (sbm.blocks < 1) throw ConfigError("stochastic block model needs >= 1 block");
  if (sbm.intraProb < 0.0 || sbm.intraProb > 1.0 || sbm.interProb < 0.0 ||
      sbm.interProb > 1.0)
    throw ConfigError("stochastic block probabilities outside [0,1]");
  std::vector<int> block(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) block[static_cast<std::size_t>(i)] = rng.uniformInt(sbm.blocks);
  std::vector<Edge> edges;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      double p = block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)]
                     ? sbm.intraProb
                     : sbm.interProb;
      if (rng.uniform() < p) edges.emplace_back(i, j);
    }
  }
  return edges;
}

scm::BoolMatrix dagify(const std::vector<Edge>& undirected, int d, Rng& rng) {
  std::vector<int> relabel(static_cast<std::size_t>(d));
  std::iota(relabel.begin(), relabel.end(), 0);
  rng.shuffle(relabel);
  scm::BoolMatrix adj = scm::BoolMatrix::Constant(d, d, false);
  for (const Edge& e : undirected) {
    int a = relabel[static_cast<std::size_t>(e.first)];
    int b = relabel[static_cast<std::size_t>(e.second)];
    adj(std::min(a, b), std::max(a, b)) = true;
  }
  return adj;
}

std::vector<Edge> sampleUndirected(const ErdosRenyi& f, int d, Rng& rng) {
  return sampleErdosRenyi(f, d, rng);
}
std::vector<Edge> sampleUndirected(const ScaleFree& f, int d, Rng& rng) {
  return sampleScaleFree(f, d, rng);
}
std::vector<Edge> sampleUndirected(const WattsStrogatz& f, int d, Rng& rng) {
  return sampleWattsStrogatz(f, d, rng);
}
std::vector<Edge> sampleUndirected(const StochasticBlock& f, int d, Rng& rng) {
  return sampleStochasticBlock(f, d, rng);
}

scm::BoolMatrix sampleGraph(const GraphFamily& family, int d, Rng& rng) {
  std::vector<Edge> undirected =
      std::visit([&](const auto& f) { return sampleUndirected(f, d, rng); }, family);
  return dagify(undirected, d, rng);
}

// ---- mechanism construction from realized parameters ----------------------

Eigen::VectorXd jsonToVector(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

// Deterministic part f(parents) of one node's mechanism.
std::function<double(const Eigen::VectorXd&)> buildDeterministic(const nlohmann::json& node,
                                                                 const std::string& family) {
  if (family == "linear") {
    Eigen::VectorXd w = jsonToVector(node.at("weights"));
    return [w](const Eigen::VectorXd& pa) { return w.size() == 0 ? 0.0 : w.dot(pa); };
  }
  if (family == "rff") {
    const auto& om = node.at("omega");
    Eigen::VectorXd phase = jsonToVector(node.at("phase"));
    Eigen::VectorXd amp = jsonToVector(node.at("amp"));
    Eigen::MatrixXd omega(0, 0);
    if (!om.empty()) {
      omega.resize(static_cast<Eigen::Index>(om.size()),
                   static_cast<Eigen::Index>(om[0].size()));
      for (std::size_t k = 0; k < om.size(); ++k)
        for (std::size_t j = 0; j < om[k].size(); ++j)
          omega(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
              om[k][j].get<double>();
    }
    return [omega, phase, amp](const Eigen::VectorXd& pa) {
      if (omega.rows() == 0) return 0.0;
      Eigen::VectorXd arg = omega * pa + phase;
      return amp.dot(arg.array().cos().matrix());
    };
  }
  throw ConfigError("unknown mechanism family: " + family);
}

scm::Mechanism buildMechanism(const nlohmann::json& node, const std::string& family) {
  auto det = buildDeterministic(node, family);
  const auto& noise = node.at("noise");
  const std::string kind = noise.at("kind").get<std::string>();
  if (kind == "gaussian") {
    return [det](const Eigen::VectorXd& pa, double n) { return det(pa) + n; };
  }
  if (kind == "laplace_hetero") {
    Eigen::VectorXd w = jsonToVector(noise.at("weights"));
    double bias = noise.at("bias").get<double>();
    double lo = noise.at("floor").get<double>();
    double hi = noise.at("ceil").get<double>();
    return [det, w, bias, lo, hi](const Eigen::VectorXd& pa, double n) {
      double scale = std::clamp(softplus(bias + (w.size() ? w.dot(pa) : 0.0)), lo, hi);
      return det(pa) + scale * n;
    };
  }
  throw ConfigError("unknown noise kind: " + kind);
}

scm::NodeNoise buildNodeNoise(const nlohmann::json& noise) {
  const std::string kind = noise.at("kind").get<std::string>();
  if (kind == "gaussian")
    return scm::GaussianNoise{noise.at("mean").get<double>(), noise.at("sigma").get<double>()};
  if (kind == "laplace_hetero") return scm::LaplaceNoise{0.0, 1.0};
  throw ConfigError("unknown noise kind: " + kind);
}

// Realizes the random parameters of one node; returns the JSON node record.
nlohmann::json realizeNodeParams(const MechanismFamily& mech, const NoiseFamily& noise,
                                 const std::vector<int>& parents, Rng& rng) {
  nlohmann::json node;
  node["parents"] = parents;
  const auto c = static_cast<Eigen::Index>(parents.size());
  if (const auto* lin = std::get_if<LinearMech>(&mech)) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index j = 0; j < c; ++j) {
      double mag = rng.uniform(lin->weightLo, lin->weightHi);
      if (rng.uniform() < lin->signFlipProb) mag = -mag;
      w.push_back(mag);
    }
    node["weights"] = w;
  } else {
    const auto& rff = std::get<RffMech>(mech);
    if (rff.numFeatures < 1) throw ConfigError("rff feature count must be >= 1");
    double ls = rng.uniform(rff.lengthScaleLo, rff.lengthScaleHi);
    double os = rng.uniform(rff.outputScaleLo, rff.outputScaleHi);
    int m = c > 0 ? rff.numFeatures : 0;
    nlohmann::json omega = nlohmann::json::array(), phase = nlohmann::json::array(),
                   amp = nlohmann::json::array();
    for (int k = 0; k < m; ++k) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < c; ++j) row.push_back(rng.normal() / ls);
      omega.push_back(row);
      phase.push_back(rng.uniform(0.0, 2.0 * M_PI));
      amp.push_back(os * std::sqrt(2.0 / m) * rng.normal());
    }
    node["omega"] = omega;
    node["phase"] = phase;
    node["amp"] = amp;
  }
  if (const auto* g = std::get_if<GaussianHomoNoise>(&noise)) {
    node["noise"] = {{"kind", "gaussian"},
                     {"mean", 0.0},
                     {"sigma", rng.uniform(g->sigmaLo, g->sigmaHi)}};
  } else {
    const auto& h = std::get<LaplaceHeteroNoise>(noise);
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index j = 0; j < c; ++j) w.push_back(rng.uniform(-1.0, 1.0));
    node["noise"] = {{"kind", "laplace_hetero"},
                     {"weights", w},
                     {"bias", h.bias},
                     {"floor", h.floor},
                     {"ceil", h.ceil}};
  }
  return node;
}

// Max |df/dpa_j| over a few standard-normal probe points.
double probeSensitivity(const std::function<double(const Eigen::VectorXd&)>& f,
                        Eigen::Index c, Eigen::Index j, Rng& rng) {
  double best = 0.0;
  for (int p = 0; p < 8; ++p) {
    Eigen::VectorXd pa = rng.normalVector(c);
    const double h = 1e-5 * (1.0 + std::abs(pa[j]));
    Eigen::VectorXd plus = pa, minus = pa;
    plus[j] += h;
    minus[j] -= h;
    best = std::max(best, std::abs(f(plus) - f(minus)) / (2.0 * h));
  }
  return best;
}

std::string mechanismFamilyName(const MechanismFamily& m) {
  return std::holds_alternative<LinearMech>(m) ? "linear" : "rff";
}

std::string noiseFamilyName(const NoiseFamily& n) {
  return std::holds_alternative<GaussianHomoNoise>(n) ? "gaussian" : "laplace_hetero";
}

std::string graphFamilyName(const GraphFamily& g) {
  if (std::holds_alternative<ErdosRenyi>(g)) return "erdos_renyi";
  if (std::holds_alternative<ScaleFree>(g)) return "scale_free";
  if (std::holds_alternative<WattsStrogatz>(g)) return "watts_strogatz";
  return "stochastic_block";
}

}  // namespace

Preset presetFromString(const std::string& name) {
  if (name == "lin-in") return Preset::LinIn;
  if (name == "rff-in") return Preset::RffIn;
  if (name == "lin-out") return Preset::LinOut;
  if (name == "rff-out") return Preset::RffOut;
  throw UsageError("unknown preset: " + name +
                   " (expected lin-in, rff-in, lin-out, rff-out)");
}

std::string presetName(Preset preset) {
  switch (preset) {
    case Preset::LinIn: return "lin-in";
    case Preset::RffIn: return "rff-in";
    case Preset::LinOut: return "lin-out";
    case Preset::RffOut: return "rff-out";
  }
  return "?";
}

std::vector<ScmDistributionSpec> presetSpecs(Preset preset, int d) {
  const bool out = preset == Preset::LinOut || preset == Preset::RffOut;
  const bool rff = preset == Preset::RffIn || preset == Preset::RffOut;

  MechanismFamily mech;
  if (rff) {
    RffMech m;
    if (out) {
      m.lengthScaleLo = 0.5;
      m.lengthScaleHi = 1.0;
      m.outputScaleLo = 2.0;
      m.outputScaleHi = 4.0;
    }
    mech = m;
  } else {
    LinearMech m;
    if (out) {
      m.weightLo = 2.0;
      m.weightHi = 4.0;
    }
    mech = m;
  }
  NoiseFamily noise;
  if (out)
    noise = LaplaceHeteroNoise{};
  else
    noise = GaussianHomoNoise{};

  std::vector<ScmDistributionSpec> specs;
  if (out) {
    specs.push_back({d, WattsStrogatz{}, mech, noise});
    specs.push_back({d, StochasticBlock{}, mech, noise});
  } else {
    specs.push_back({d, ErdosRenyi{std::nullopt, static_cast<double>(d)}, mech, noise});
    specs.push_back({d, ScaleFree{std::min(2, d - 1)}, mech, noise});
  }
  return specs;
}

SampledScm sampleScm(const ScmDistributionSpec& spec, std::uint64_t seed) {
  if (spec.d < 2) throw ConfigError("SCM distribution needs d >= 2");
  Rng rng(seed);
  scm::Dag dag(sampleGraph(spec.graph, spec.d, rng));
  scm::Permutation order = scm::topologicalOrder(dag, rng);

  const std::string family = mechanismFamilyName(spec.mech);
  nlohmann::json nodes = nlohmann::json::array();
  std::vector<scm::Mechanism> mechanisms;
  std::vector<scm::NodeNoise> noiseNodes;
  for (int i = 0; i < spec.d; ++i) {
    std::vector<int> parents = dag.parents(i);
    nlohmann::json node;
    // Redraw until every incoming edge is detectable.
    for (int attempt = 0;; ++attempt) {
      node = realizeNodeParams(spec.mech, spec.noise, parents, rng);
      auto det = buildDeterministic(node, family);
      bool ok = true;
      for (std::size_t j = 0; j < parents.size() && ok; ++j)
        ok = probeSensitivity(det, static_cast<Eigen::Index>(parents.size()),
                              static_cast<Eigen::Index>(j), rng) >= 0.1;
      if (ok) break;
      if (attempt >= 64)
        throw ConfigError("could not realize a mechanism with detectable edges at node " +
                          std::to_string(i));
    }
    nodes.push_back(node);
    mechanisms.push_back(buildMechanism(node, family));
    noiseNodes.push_back(buildNodeNoise(node.at("noise")));
  }

  nlohmann::json meta;
  meta["d"] = spec.d;
  meta["mechanism_family"] = family;
  meta["noise_family"] = noiseFamilyName(spec.noise);
  meta["graph_family"] = graphFamilyName(spec.graph);
  meta["nodes"] = nodes;

  scm::StandardScm std_{dag, std::move(mechanisms), scm::NoiseModel(std::move(noiseNodes)),
                        /*additiveNoise=*/noiseFamilyName(spec.noise) == "gaussian"};
  return SampledScm{std::move(std_), std::move(dag), std::move(order), std::move(meta)};
}

Dataset generateDataset(const ScmDistributionSpec& spec, int nSamples, std::uint64_t seed,
                        bool standardize) {
  if (nSamples < 1) throw ArgumentError("need at least one sample");
  if (standardize && nSamples < 2)
    throw ArgumentError("standardization needs at least two samples");

  SampledScm sampled = sampleScm(spec, deriveSeed(seed, 1));
  scm::FixedPointScm fp = scm::reparameterizeStandard(sampled.scm, sampled.order);
  Dataset ds = scm::sampleObservational(fp, nSamples, deriveSeed(seed, 2));
  ds.dag = sampled.dag;
  ds.order = sampled.order;
  ds.meta = sampled.meta;
  ds.meta["seed"] = seed;
  ds.meta["n"] = nSamples;

  if (standardize) {
    const auto n = static_cast<double>(nSamples);
    Eigen::VectorXd mean = ds.x.colwise().mean();
    Eigen::VectorXd std_(ds.cols());
    for (int j = 0; j < ds.cols(); ++j) {
      double var = (ds.x.col(j).array() - mean[j]).square().sum() / n;
      std_[j] = std::max(std::sqrt(var), 1e-12);
    }
    Standardization record{mean, std_};
    ds.x = record.apply(ds.x);
    ds.standardization = record;
  }
  ds.validate();
  return ds;
}

std::vector<Dataset> makeMetadataset(Preset preset, const std::vector<int>& dims, int perDim,
                                     std::uint64_t seed, int nSamples, bool standardize) {
  if (dims.empty()) throw ArgumentError("dims must be non-empty");
  if (perDim < 1) throw ArgumentError("per-dim count must be >= 1");
  std::vector<Dataset> out;
  std::uint64_t idx = 0;
  for (int d : dims) {
    for (const ScmDistributionSpec& spec : presetSpecs(preset, d)) {
      for (int i = 0; i < perDim; ++i) {
        Dataset ds = generateDataset(spec, nSamples, deriveSeed(seed, idx++), standardize);
        ds.meta["preset"] = presetName(preset);
        out.push_back(std::move(ds));
      }
    }
  }
  return out;
}

scm::StandardScm rebuildScm(const nlohmann::json& meta) {
  const int d = meta.at("d").get<int>();
  const std::string family = meta.at("mechanism_family").get<std::string>();
  const auto& nodes = meta.at("nodes");
  if (static_cast<int>(nodes.size()) != d)
    throw DataError("mechanism metadata has wrong node count");

  scm::BoolMatrix adj = scm::BoolMatrix::Constant(d, d, false);
  std::vector<scm::Mechanism> mechanisms;
  std::vector<scm::NodeNoise> noiseNodes;
  for (int i = 0; i < d; ++i) {
    const auto& node = nodes[static_cast<std::size_t>(i)];
    for (const auto& p : node.at("parents")) adj(p.get<int>(), i) = true;
    mechanisms.push_back(buildMechanism(node, family));
    noiseNodes.push_back(buildNodeNoise(node.at("noise")));
  }
  return scm::StandardScm{scm::Dag(std::move(adj)), std::move(mechanisms),
                          scm::NoiseModel(std::move(noiseNodes)),
                          meta.at("noise_family").get<std::string>() == "gaussian"};
}

}  // namespace fpcm::synth
