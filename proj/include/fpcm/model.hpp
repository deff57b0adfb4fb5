#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fpcm/autodiff.hpp"
#include "fpcm/dataset.hpp"
#include "fpcm/noise.hpp"
#include "fpcm/scm.hpp"

namespace fpcm::model {

struct ModelConfig {
  int d = 2;
  int embedDim = 128;  // D
  int layers = 2;      // L
  int heads = 8;
  int headDim = 32;
  int mlpHidden = 128;
  double graphThreshold = 0.1;  // tau

  void validate() const;  // positive dims
};

struct LayerParams {
  Eigen::MatrixXd wq, wk, wv;  // D x heads*headDim
  Eigen::MatrixXd wo;          // heads*headDim x D
  Eigen::VectorXd ln1Gamma, ln1Beta;
  Eigen::MatrixXd mlpW1;  // D x hidden
  Eigen::VectorXd mlpB1;
  Eigen::MatrixXd mlpW2;  // hidden x D
  Eigen::VectorXd mlpB2;
  Eigen::VectorXd ln2Gamma, ln2Beta;
};

// Node embeddings theta1/theta2 with a shared learnable positional matrix,
// encoder layers, and per-node decoder vectors.
struct ModelParams {
  ModelConfig config;
  Eigen::MatrixXd theta1, theta2, pos;  // d x D
  std::vector<LayerParams> layers;
  Eigen::MatrixXd decoder;  // d x D

  // Training init: zero decoder so the map starts at the origin.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  // Fully random weights (structure tests).
  static ModelParams random(const ModelConfig& config, std::uint64_t seed);
};

using ParamView = ad::ParamView;
std::vector<ParamView> paramViews(ModelParams& params);

// Closed-form causal attention on one head: exp((Q K^T - M)/scale) with the
// strictly-lower-triangular mask, rows divided by max(rowsum, 1).
Eigen::MatrixXd causalAttention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                double scale);

// Row j of the embedding depends on w_j alone: w_j * theta[j] + pos[j].
// which selects the observation (1) or noise (2) table.
Eigen::MatrixXd causalEmbed(const ModelParams& params, const Eigen::VectorXd& w, int which);

// Autodiff forward on ordered model-space coordinates; x and n are B x d.
// Leaves for parameters must be provided via `leaves` keyed by ParamView
// names (trainable) -- buildParamLeaves fills it.
std::map<std::string, ad::Tensor> buildParamLeaves(ad::Tape& tape, ModelParams& params,
                                                   bool requiresGrad);
ad::Tensor buildForward(ad::Tape& tape, const std::map<std::string, ad::Tensor>& leaves,
                        const ModelConfig& config, const Eigen::MatrixXd& xOrdered,
                        const Eigen::MatrixXd& nOrdered);

// Plain forward (no gradient tracking), chunked over rows.
Eigen::MatrixXd forwardOrdered(const ModelParams& params, const Eigen::MatrixXd& xOrdered,
                               const Eigen::MatrixXd& nOrdered);
Eigen::MatrixXd anmOrdered(const ModelParams& params, const Eigen::MatrixXd& xOrdered);
Eigen::VectorXd tForward(const ModelParams& params, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& n);

// Trained map plus the coordinates it lives in: the topological order used
// for training and the standardization back to original units.
struct TrainedModel {
  ModelParams params;
  scm::Permutation perm;
  Standardization record;
};

struct TrainConfig {
  int epochs = 40;
  double lr = 1e-4;
  double weightDecay = 5e-9;
  int batchCap = 1024;  // batch = min(batchCap, 0.8 n)
  std::uint64_t seed = 1;
  double trainFraction = 0.8;
  double valFraction = 0.1;
  // Continue from these parameters instead of a fresh initialization.
  std::shared_ptr<const ModelParams> warmStart;
};

struct TrainResult {
  TrainedModel model;
  std::vector<double> trainCurve;    // per-epoch mean batch loss
  std::vector<double> valCurve;      // per-epoch validation loss
  std::vector<double> bestValCurve;  // running minimum, non-increasing
  double testLoss = 0.0;
  int trainRows = 0, valRows = 0, testRows = 0;
};

// Minimizes E || X - P^T T(PX, 0) ||^2 on internally standardized data.
TrainResult trainMse(const Dataset& dataset, const scm::Permutation& perm,
                     ModelConfig config, const TrainConfig& train);

// Mean (absolute or signed) Jacobian of the ANM map over samples, in ordered
// coordinates; raw-unit observations are standardized internally.
Eigen::MatrixXd orderedJacobianMean(const TrainedModel& model, const Eigen::MatrixXd& xRaw,
                                    int maxSamples, std::uint64_t seed, bool absolute);

struct GraphExtraction {
  scm::Dag dag;
  Eigen::MatrixXd scores;  // original indexing, scores(i, j) backs edge i -> j
};
GraphExtraction extractGraph(const TrainedModel& model, const Eigen::MatrixXd& xRaw,
                             double tau, int maxSamples = 1024,
                             std::uint64_t seed = 0x6f2a91d34b8c507eULL);

// Empirical quantile model of the per-node residuals X - P^T T(PX, 0) in
// model space.
scm::NoiseModel estimateNoiseQuantiles(const TrainedModel& model,
                                       const Eigen::MatrixXd& xRaw);

// Quantile-noise sampling followed by d applications of the map; returns
// observations in original units plus the model-space noise draws.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> generate(const TrainedModel& model,
                                                     const scm::NoiseModel& noise,
                                                     int nSamples, std::uint64_t seed);

// Additive-noise map on ordered coordinates; the counterfactual routine is
// shared between the trained model and closed-form oracles.
struct AnmMap {
  int d = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> t;  // x_ord -> t(x_ord)
};
Eigen::VectorXd anmCounterfactualOrdered(const AnmMap& map, const Eigen::VectorXd& xOrdered,
                                         const scm::InterventionMap& t);

// Abduct noise from the factual sample, regenerate under the intervened map.
// DoNode values are original units of the intervened node; triangular maps
// act on ordered original-unit coordinates.
Eigen::VectorXd predictCounterfactual(const TrainedModel& model,
                                      const Eigen::VectorXd& xFactual,
                                      const scm::InterventionMap& t);

// Wraps the ANM head as a fixed-point SCM on model-space coordinates.
scm::FixedPointScm asFixedPointScm(const TrainedModel& model, scm::NoiseModel noise);

// Counterfactual adapter against a simulator working in raw units: the
// factual sample, the returned sample and the do-value are raw; dataRecord
// maps raw units to the units the model was trained on (nullopt: identity).
std::function<Eigen::VectorXd(const Eigen::VectorXd&, int, double)>
counterfactualPredictor(const TrainedModel& model, std::optional<Standardization> dataRecord);

inline constexpr const char* kCheckpointMagic = "FIPCKPT1";
void saveTrainedModel(const std::filesystem::path& file, const TrainedModel& model);
TrainedModel loadTrainedModel(const std::filesystem::path& file);

}  // namespace fpcm::model
