#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fpcm/autodiff.hpp"
#include "fpcm/dataset.hpp"
#include "fpcm/scm.hpp"

namespace fpcm::order {

// Dataset encoder: axial attention over the sample/node grid (across samples
// for each node, then across nodes within each sample), mean pooling over
// samples, then a linear leaf classifier. No positional information on either
// axis, so logits are sample-exchangeable and node-equivariant. Inputs are
// de-meaned per column and scaled by one global factor.
struct EncoderConfig {
  int width = 32;  // D_enc
  int heads = 4;
  int mlpHidden = 64;

  void validate() const;
};

struct BlockParams {
  Eigen::MatrixXd wq, wk, wv, wo;  // width x width
  Eigen::VectorXd ln1Gamma, ln1Beta;
  Eigen::MatrixXd mlpW1;
  Eigen::VectorXd mlpB1;
  Eigen::MatrixXd mlpW2;
  Eigen::VectorXd mlpB2;
  Eigen::VectorXd ln2Gamma, ln2Beta;
};

struct EncoderParams {
  EncoderConfig config;
  Eigen::VectorXd embedW, embedB;  // scalar entry -> width
  BlockParams sampleBlock, nodeBlock;
  Eigen::MatrixXd clsW;  // width x 1
  Eigen::VectorXd clsB;  // 1

  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  static EncoderParams random(const EncoderConfig& config, std::uint64_t seed);
};

std::vector<ad::ParamView> paramViews(EncoderParams& params);

// Per-node leaf logits for a dataset (any column count). Columns are
// standardized internally.
ad::Tensor scoreLogits(ad::Tape& tape, const std::map<std::string, ad::Tensor>& leaves,
                       const EncoderConfig& config, const Eigen::MatrixXd& x);
Eigen::VectorXd scoreLogitsValue(const EncoderParams& params, const Eigen::MatrixXd& x);

// ---- graph operators --------------------------------------------------------
Eigen::VectorXd leafIndicator(const scm::Dag& g);  // 1.0 where the node has no children
Eigen::MatrixXd reduceDataset(const Eigen::MatrixXd& x, int col);
scm::Dag reduceGraph(const scm::Dag& g, int node);
// qhat when it is a true leaf, otherwise uniform over the true leaves.
int pickTarget(const Eigen::VectorXd& leafMask, int qhat, Rng& rng);

// Stable binary cross-entropy against logits; = d ln2 at zero logits.
ad::Tensor bnLoss(ad::Tensor logits, const Eigen::VectorXd& target);
double bnLossValue(const Eigen::VectorXd& logits, const Eigen::VectorXd& target);

// Sequential leaf prediction loss: peel the predicted (teacher-corrected)
// leaf d times, accumulating the classification loss on a random subset of
// dMax steps. The peeled indices are gradient-free.
using LeafScorer =
    std::function<ad::Tensor(ad::Tape&, const Eigen::MatrixXd&, const scm::Dag&)>;
ad::Tensor dToe(ad::Tape& tape, const LeafScorer& scorer, Eigen::MatrixXd data, scm::Dag g,
                int dMax, std::uint64_t seed);
ad::Tensor dToe(ad::Tape& tape, EncoderParams& params, Eigen::MatrixXd data, scm::Dag g,
                int dMax, std::uint64_t seed);
// Variant sharing caller-created parameter leaves (training and grad checks).
ad::Tensor dToeWithLeaves(ad::Tape& tape, const std::map<std::string, ad::Tensor>& leaves,
                          const EncoderParams& params, Eigen::MatrixXd data, scm::Dag g,
                          int dMax, std::uint64_t seed);

struct ToTrainConfig {
  int dMax = -1;  // <= 0: half the node count, at least 1
  int batchDatasets = 8;
  int epochs = 10;
  double lr = 1e-3;
  double weightDecay = 5e-9;
  std::uint64_t seed = 1;
  int threads = 1;
  int initialStepCount = 0;
};

struct ToTrainResult {
  EncoderParams params;
  std::vector<double> epochLoss;
  std::vector<double> bestLoss;  // running minimum
  int stepCount = 0;
};

// Minimizes the summed sequential leaf loss over the training datasets; every
// dataset must carry its ground-truth graph.
ToTrainResult trainTo(EncoderParams init, const std::vector<Dataset>& datasets,
                      const ToTrainConfig& config);

// Greedy repeated leaf removal; always returns a bijection. The returned
// permutation is parents-first (the first peeled leaf sits last).
scm::Permutation inferTo(const EncoderParams& params, const Eigen::MatrixXd& x);

// Majority vote across row chunks of n_train rows; ties resolve to the
// smallest node index.
scm::Permutation inferToVoting(const EncoderParams& params, const Eigen::MatrixXd& x,
                               int chunkRows);

// Generic variants used for oracle scorers: the callable sees the current
// columns and their original node ids.
using ValueScorer =
    std::function<Eigen::VectorXd(const Eigen::MatrixXd&, const std::vector<int>&)>;
scm::Permutation inferToWith(const ValueScorer& scorer, const Eigen::MatrixXd& x);
scm::Permutation inferToVotingWith(const ValueScorer& scorer, const Eigen::MatrixXd& x,
                                   int chunkRows);

inline constexpr const char* kCheckpointMagic = "TOCKPT1";
void saveEncoder(const std::filesystem::path& file, const EncoderParams& params,
                 int stepCount);
std::pair<EncoderParams, int> loadEncoder(const std::filesystem::path& file);

}  // namespace fpcm::order
