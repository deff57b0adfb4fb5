#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fpcm/dataset.hpp"
#include "fpcm/scm.hpp"

namespace fpcm::synth {

// Undirected family samples are oriented by a uniformly random node
// relabeling followed by the low-index -> high-index rule, so every sampled
// graph is a DAG with identity as one valid order; the recorded order uses
// randomized Kahn tie-breaks.
struct ErdosRenyi {
  std::optional<double> edgeProb;
  std::optional<double> expectedEdges;
};

struct ScaleFree {
  int attachment = 2;  // edges added per new node
};

struct WattsStrogatz {
  int neighbors = 4;  // ring degree (even), clamped to d - 1
  double rewireProb = 0.2;
};

struct StochasticBlock {
  int blocks = 2;
  double intraProb = 0.6;
  double interProb = 0.1;
};

using GraphFamily = std::variant<ErdosRenyi, ScaleFree, WattsStrogatz, StochasticBlock>;

struct LinearMech {
  double weightLo = 0.5;
  double weightHi = 2.0;
  double signFlipProb = 0.5;
};

struct RffMech {
  int numFeatures = 64;
  double lengthScaleLo = 1.0;
  double lengthScaleHi = 2.0;
  double outputScaleLo = 0.5;
  double outputScaleHi = 2.0;
};

using MechanismFamily = std::variant<LinearMech, RffMech>;

struct GaussianHomoNoise {
  double sigmaLo = 0.5;
  double sigmaHi = 1.5;
};

// Unit Laplace noise scaled per sample by
// clamp(softplus(bias + <w, parents>), floor, ceil).
struct LaplaceHeteroNoise {
  double bias = 0.5;
  double floor = 0.2;
  double ceil = 3.0;
};

using NoiseFamily = std::variant<GaussianHomoNoise, LaplaceHeteroNoise>;

struct ScmDistributionSpec {
  int d = 2;
  GraphFamily graph;
  MechanismFamily mech;
  NoiseFamily noise;
};

enum class Preset { LinIn, RffIn, LinOut, RffOut };

Preset presetFromString(const std::string& name);  // throws UsageError
std::string presetName(Preset preset);

// One spec per graph-family choice of the preset (two each). IN presets pair
// Erdos-Renyi and scale-free graphs with homoscedastic Gaussian noise; OUT
// presets pair Watts-Strogatz and stochastic block graphs with
// heteroscedastic Laplace noise and mechanism parameter ranges disjoint from
// the IN ranges.
std::vector<ScmDistributionSpec> presetSpecs(Preset preset, int d);

struct SampledScm {
  scm::StandardScm scm;
  scm::Dag dag;
  scm::Permutation order;
  nlohmann::json meta;  // realized mechanism/noise parameters
};

// Random SCM with full ground truth. Every recorded edge is re-drawn until
// its probe sensitivity reaches 0.1, so structural minimality holds at the
// scale the discovery thresholds assume.
SampledScm sampleScm(const ScmDistributionSpec& spec, std::uint64_t seed);

Dataset generateDataset(const ScmDistributionSpec& spec, int nSamples, std::uint64_t seed,
                        bool standardize);

// count x |dims| x (graph family choices) datasets.
std::vector<Dataset> makeMetadataset(Preset preset, const std::vector<int>& dims,
                                     int perDim, std::uint64_t seed, int nSamples = 1000,
                                     bool standardize = true);

// Rebuilds the generating SCM from the realized parameters stored in a
// dataset's meta block (enables counterfactual ground truth after reload).
scm::StandardScm rebuildScm(const nlohmann::json& meta);

}  // namespace fpcm::synth
