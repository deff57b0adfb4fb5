#include "fpcm/ordering.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "fpcm/checkpoint.hpp"
#include "fpcm/errors.hpp"

namespace fpcm::order {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using LeafMap = std::map<std::string, ad::Tensor>;

MatrixXd xavier(int rows, int cols, Rng& rng) {
  const double s = std::sqrt(2.0 / (rows + cols));
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = s * rng.normal();
  return m;
}

BlockParams initBlock(const EncoderConfig& c, Rng& rng) {
  BlockParams b;
  b.wq = xavier(c.width, c.width, rng);
  b.wk = xavier(c.width, c.width, rng);
  b.wv = xavier(c.width, c.width, rng);
  b.wo = xavier(c.width, c.width, rng);
  b.ln1Gamma = VectorXd::Ones(c.width);
  b.ln1Beta = VectorXd::Zero(c.width);
  b.mlpW1 = xavier(c.width, c.mlpHidden, rng);
  b.mlpB1 = VectorXd::Zero(c.mlpHidden);
  b.mlpW2 = xavier(c.mlpHidden, c.width, rng);
  b.mlpB2 = VectorXd::Zero(c.width);
  b.ln2Gamma = VectorXd::Ones(c.width);
  b.ln2Beta = VectorXd::Zero(c.width);
  return b;
}

// Model preprocessing: per-column de-meaning with one global scale, so the
// relative column magnitudes survive (they carry ordering signal) while the
// overall unit does not.
MatrixXd preprocess(const MatrixXd& x) {
  MatrixXd out = x.rowwise() - x.colwise().mean();
  double rms = std::sqrt(out.array().square().mean());
  out /= std::max(rms, 1e-8);
  return out;
}

// Self-attention block over the last-but-one axis; works for (B, t, W) and
// (t, W) inputs alike.
ad::Tensor attentionBlock(const LeafMap& L, const std::string& pre,
                          const EncoderConfig& cfg, ad::Tensor x) {
  const int hd = cfg.width / cfg.heads;
  const double scale = std::sqrt(static_cast<double>(hd));
  ad::Tensor q = ad::matmul(x, L.at(pre + "wq"));
  ad::Tensor k = ad::matmul(x, L.at(pre + "wk"));
  ad::Tensor v = ad::matmul(x, L.at(pre + "wv"));
  std::vector<ad::Tensor> heads;
  for (int h = 0; h < cfg.heads; ++h) {
    ad::Tensor qh = ad::slice(q, h * hd, hd);
    ad::Tensor kh = ad::slice(k, h * hd, hd);
    ad::Tensor vh = ad::slice(v, h * hd, hd);
    ad::Tensor w = ad::softmaxLast(ad::affine(ad::matmul(qh, ad::transpose(kh)), 1.0 / scale));
    heads.push_back(ad::matmul(w, vh));
  }
  ad::Tensor attn = ad::matmul(ad::concat(heads), L.at(pre + "wo"));
  ad::Tensor res = ad::add(attn, x);
  ad::Tensor y1 = ad::add(ad::mul(ad::layerNorm(res), L.at(pre + "ln1_gamma")),
                          L.at(pre + "ln1_beta"));
  ad::Tensor hidden =
      ad::relu(ad::add(ad::matmul(y1, L.at(pre + "mlp_w1")), L.at(pre + "mlp_b1")));
  ad::Tensor mlp = ad::add(ad::matmul(hidden, L.at(pre + "mlp_w2")), L.at(pre + "mlp_b2"));
  ad::Tensor y2 = ad::add(y1, mlp);
  return ad::add(ad::mul(ad::layerNorm(y2), L.at(pre + "ln2_gamma")),
                 L.at(pre + "ln2_beta"));
}

nlohmann::json configToJson(const EncoderConfig& c) {
  return {{"width", c.width}, {"heads", c.heads}, {"mlp_hidden", c.mlpHidden}};
}

EncoderConfig configFromJson(const nlohmann::json& j) {
  EncoderConfig c;
  c.width = j.at("width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlpHidden = j.at("mlp_hidden").get<int>();
  c.validate();
  return c;
}

}  // namespace

void EncoderConfig::validate() const {
  if (width < 1 || heads < 1 || mlpHidden < 1)
    throw ArgumentError("encoder config dimensions must be positive");
  if (width % heads != 0)
    throw ArgumentError("encoder width must be divisible by the head count");
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  EncoderParams p;
  p.config = config;
  p.embedW = 0.5 * rng.normalVector(config.width);
  p.embedB = VectorXd::Zero(config.width);
  p.sampleBlock = initBlock(config, rng);
  p.nodeBlock = initBlock(config, rng);
  p.clsW = MatrixXd::Zero(config.width, 1);
  p.clsB = VectorXd::Zero(1);
  return p;
}

EncoderParams EncoderParams::random(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams p = init(config, seed);
  Rng rng(deriveSeed(seed, 0xc15));
  p.clsW = xavier(config.width, 1, rng);
  p.clsB = 0.1 * rng.normalVector(1);
  return p;
}

std::vector<ad::ParamView> paramViews(EncoderParams& p) {
  std::vector<ad::ParamView> views;
  auto mat = [&views](const std::string& name, MatrixXd& m) {
    views.push_back({name, m.data(), m.size(),
                     {static_cast<int>(m.rows()), static_cast<int>(m.cols())}, true});
  };
  auto vec = [&views](const std::string& name, VectorXd& v) {
    views.push_back({name, v.data(), v.size(), {static_cast<int>(v.size())}, false});
  };
  vec("embed_w", p.embedW);
  vec("embed_b", p.embedB);
  auto addBlock = [&](const std::string& pre, BlockParams& b) {
    mat(pre + "wq", b.wq);
    mat(pre + "wk", b.wk);
    mat(pre + "wv", b.wv);
    mat(pre + "wo", b.wo);
    vec(pre + "ln1_gamma", b.ln1Gamma);
    vec(pre + "ln1_beta", b.ln1Beta);
    mat(pre + "mlp_w1", b.mlpW1);
    vec(pre + "mlp_b1", b.mlpB1);
    mat(pre + "mlp_w2", b.mlpW2);
    vec(pre + "mlp_b2", b.mlpB2);
    vec(pre + "ln2_gamma", b.ln2Gamma);
    vec(pre + "ln2_beta", b.ln2Beta);
  };
  addBlock("sample.", p.sampleBlock);
  addBlock("node.", p.nodeBlock);
  mat("cls_w", p.clsW);
  vec("cls_b", p.clsB);
  return views;
}

ad::Tensor scoreLogits(ad::Tape& tape, const LeafMap& leaves, const EncoderConfig& config,
                       const MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (n < 1 || d < 1) throw ArgumentError("dataset must be non-empty");

  MatrixXd xs = preprocess(x).transpose();  // d x n
  ad::Tensor tokens = tape.leafMatrix(xs);
  // (d, n, width) entry embeddings over the sample/node grid.
  ad::Tensor emb = ad::add(ad::mul(ad::expandLast(tokens, config.width),
                                   leaves.at("embed_w")),
                           leaves.at("embed_b"));
  // Axial attention: across samples for each node, then across nodes within
  // each sample; only then pool the samples away.
  ad::Tensor perNode = attentionBlock(leaves, "sample.", config, emb);
  ad::Tensor perSample =
      attentionBlock(leaves, "node.", config, ad::transposeLeading(perNode));  // (n, d, W)
  ad::Tensor grid = ad::transposeLeading(perSample);  // (d, n, W)
  ad::Tensor pooled = ad::affine(ad::sumLast(ad::transpose(grid)), 1.0 / n);  // (d, W)
  ad::Tensor logits = ad::add(ad::matmul(pooled, leaves.at("cls_w")), leaves.at("cls_b"));
  return ad::reshape(logits, {d});
}

VectorXd scoreLogitsValue(const EncoderParams& params, const MatrixXd& x) {
  auto& p = const_cast<EncoderParams&>(params);
  ad::Tape tape;
  LeafMap leaves = ad::leavesFromViews(tape, paramViews(p), false);
  ad::Tensor logits = scoreLogits(tape, leaves, params.config, x);
  return logits.value().matrix();
}

VectorXd leafIndicator(const scm::Dag& g) {
  VectorXd y = VectorXd::Zero(g.nodeCount());
  for (int i = 0; i < g.nodeCount(); ++i)
    if (g.children(i).empty()) y[i] = 1.0;
  return y;
}

MatrixXd reduceDataset(const MatrixXd& x, int col) {
  if (col < 0 || col >= x.cols()) throw ArgumentError("column index out of range");
  MatrixXd out(x.rows(), x.cols() - 1);
  out.leftCols(col) = x.leftCols(col);
  out.rightCols(x.cols() - 1 - col) = x.rightCols(x.cols() - 1 - col);
  return out;
}

scm::Dag reduceGraph(const scm::Dag& g, int node) {
  const int d = g.nodeCount();
  if (node < 0 || node >= d) throw ArgumentError("node index out of range");
  scm::BoolMatrix adj = scm::BoolMatrix::Constant(d - 1, d - 1, false);
  for (int i = 0; i < d; ++i) {
    if (i == node) continue;
    for (int j = 0; j < d; ++j) {
      if (j == node || !g.edge(i, j)) continue;
      adj(i - (i > node ? 1 : 0), j - (j > node ? 1 : 0)) = true;
    }
  }
  return scm::Dag(std::move(adj));
}

int pickTarget(const VectorXd& leafMask, int qhat, Rng& rng) {
  if (qhat < 0 || qhat >= leafMask.size()) throw ArgumentError("target index out of range");
  if (leafMask[qhat] != 0.0) return qhat;
  std::vector<int> leaves;
  for (int i = 0; i < leafMask.size(); ++i)
    if (leafMask[i] != 0.0) leaves.push_back(i);
  if (leaves.empty()) throw StructureError("graph has no leaf");
  return leaves[static_cast<std::size_t>(rng.uniformInt(static_cast<int>(leaves.size())))];
}

ad::Tensor bnLoss(ad::Tensor logits, const VectorXd& target) {
  if (logits.size() != target.size())
    throw ArgumentError("logits and targets have different lengths");
  ad::Tape* tape = logits.tape();
  ad::Tensor y = tape->leafVector(target);
  ad::Tensor oneMinusY = tape->leafVector(VectorXd::Ones(target.size()) - target);
  ad::Tensor posTerm = ad::mul(ad::softplus(ad::affine(logits, -1.0)), y);
  ad::Tensor negTerm = ad::mul(ad::softplus(logits), oneMinusY);
  return ad::sumAll(ad::add(posTerm, negTerm));
}

double bnLossValue(const VectorXd& logits, const VectorXd& target) {
  ad::Tape tape;
  return bnLoss(tape.leafVector(logits), target).scalar();
}

namespace {

int argmax(const VectorXd& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

// Core loop shared by both dToe overloads. `gradScorer` runs on the main
// tape for steps inside the sampled set; `valueScorer` is the cheap path for
// the other steps.
ad::Tensor dToeImpl(
    const std::function<ad::Tensor(const MatrixXd&, const scm::Dag&)>& gradScorer,
    const std::function<VectorXd(const MatrixXd&, const scm::Dag&)>& valueScorer,
    MatrixXd data, scm::Dag g, int dMax, std::uint64_t seed) {
  const int d = static_cast<int>(data.cols());
  if (g.nodeCount() != d)
    throw ArgumentError("dataset columns do not match graph nodes");
  if (dMax < 1 || dMax > d) throw ArgumentError("dMax must be in [1, d]");

  // Sampled loss steps, drawn once per invocation.
  Rng rng(seed);
  std::vector<int> steps(static_cast<std::size_t>(d));
  std::iota(steps.begin(), steps.end(), 0);
  rng.shuffle(steps);
  std::vector<bool> sampled(static_cast<std::size_t>(d), false);
  for (int i = 0; i < dMax; ++i) sampled[static_cast<std::size_t>(steps[i])] = true;

  ad::Tensor total;
  for (int q = 0; q < d; ++q) {
    VectorXd y = leafIndicator(g);
    VectorXd logitsValue;
    if (sampled[static_cast<std::size_t>(q)]) {
      ad::Tensor logits = gradScorer(data, g);
      ad::Tensor term = bnLoss(logits, y);
      total = total.valid() ? ad::add(total, term) : term;
      logitsValue = logits.value().matrix();
    } else {
      logitsValue = valueScorer(data, g);
    }
    int predicted = argmax(logitsValue);
    int target = pickTarget(y, predicted, rng);
    if (q + 1 < d) {
      data = reduceDataset(data, target);
      g = reduceGraph(g, target);
    }
  }
  return total;
}

}  // namespace

ad::Tensor dToeWithLeaves(ad::Tape& tape, const LeafMap& leaves, const EncoderParams& params,
                          MatrixXd data, scm::Dag g, int dMax, std::uint64_t seed) {
  return dToeImpl(
      [&tape, &leaves, &params](const MatrixXd& x, const scm::Dag&) {
        return scoreLogits(tape, leaves, params.config, x);
      },
      [&params](const MatrixXd& x, const scm::Dag&) { return scoreLogitsValue(params, x); },
      std::move(data), std::move(g), dMax, seed);
}

ad::Tensor dToe(ad::Tape& tape, const LeafScorer& scorer, MatrixXd data, scm::Dag g,
                int dMax, std::uint64_t seed) {
  return dToeImpl(
      [&tape, &scorer](const MatrixXd& x, const scm::Dag& gg) { return scorer(tape, x, gg); },
      [&tape, &scorer](const MatrixXd& x, const scm::Dag& gg) {
        return VectorXd(scorer(tape, x, gg).value().matrix());
      },
      std::move(data), std::move(g), dMax, seed);
}

ad::Tensor dToe(ad::Tape& tape, EncoderParams& params, MatrixXd data, scm::Dag g, int dMax,
                std::uint64_t seed) {
  auto leaves = std::make_shared<LeafMap>(ad::leavesFromViews(tape, paramViews(params), true));
  return dToeImpl(
      [&tape, leaves, &params](const MatrixXd& x, const scm::Dag&) {
        return scoreLogits(tape, *leaves, params.config, x);
      },
      [&params](const MatrixXd& x, const scm::Dag&) { return scoreLogitsValue(params, x); },
      std::move(data), std::move(g), dMax, seed);
}

ToTrainResult trainTo(EncoderParams init, const std::vector<Dataset>& datasets,
                      const ToTrainConfig& config) {
  for (std::size_t k = 0; k < datasets.size(); ++k)
    if (!datasets[k].dag)
      throw DataError("training dataset " + std::to_string(k) + " has no ground-truth graph");
  if (datasets.empty()) throw ArgumentError("no training datasets");

  EncoderParams params = std::move(init);
  std::vector<ad::ParamView> views = paramViews(params);
  std::vector<Eigen::Index> sizes;
  for (const auto& v : views) sizes.push_back(v.size);
  ad::AdamConfig adamCfg;
  adamCfg.lr = config.lr;
  adamCfg.weightDecay = config.weightDecay;
  ad::AdamState adam(sizes, adamCfg);
  adam.setStepCount(config.initialStepCount);

  ToTrainResult result;
  const int K = static_cast<int>(datasets.size());
  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng erng(deriveSeed(config.seed, 0xe000 + static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);
    double epochLoss = 0.0;

    for (int from = 0; from < K; from += config.batchDatasets) {
      const int count = std::min(config.batchDatasets, K - from);
      std::vector<std::vector<Eigen::ArrayXd>> grads(static_cast<std::size_t>(count));
      std::vector<double> batchLoss(static_cast<std::size_t>(count), 0.0);
      std::vector<std::string> failures(static_cast<std::size_t>(count));

      // One tape per dataset; a private parameter copy keeps threads apart.
      auto runOne = [&](int slot) {
        const int dsIdx = order[static_cast<std::size_t>(from + slot)];
        const Dataset& ds = datasets[static_cast<std::size_t>(dsIdx)];
        try {
          EncoderParams local = params;
          ad::Tape tape;
          std::vector<ad::ParamView> localViews = paramViews(local);
          LeafMap leaves = ad::leavesFromViews(tape, localViews, true);
          const int d = ds.cols();
          const int dMax =
              config.dMax > 0 ? std::min(config.dMax, d) : std::max(1, d / 2);
          std::uint64_t dseed = deriveSeed(
              config.seed, 0xd70e + static_cast<std::uint64_t>(epoch) * 1000003ULL +
                               static_cast<std::uint64_t>(dsIdx));
          ad::Tensor loss = dToeWithLeaves(tape, leaves, local, ds.x, *ds.dag, dMax, dseed);
          if (!std::isfinite(loss.scalar()))
            throw NumericError("non-finite loss on dataset " + std::to_string(dsIdx));
          tape.backward(loss);
          batchLoss[static_cast<std::size_t>(slot)] = loss.scalar();
          grads[static_cast<std::size_t>(slot)] = ad::collectGrads(localViews, leaves);
        } catch (const Error& e) {
          failures[static_cast<std::size_t>(slot)] = e.what();
        }
      };

      const int threads = std::max(1, std::min(config.threads, count));
      if (threads == 1) {
        for (int s = 0; s < count; ++s) runOne(s);
      } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t)
          pool.emplace_back([&]() {
            for (int s = next.fetch_add(1); s < count; s = next.fetch_add(1)) runOne(s);
          });
        for (auto& t : pool) t.join();
      }
      for (int s = 0; s < count; ++s)
        if (!failures[static_cast<std::size_t>(s)].empty())
          throw NumericError(failures[static_cast<std::size_t>(s)]);

      // Mean gradient over the batch, reduced in slot order.
      std::vector<Eigen::ArrayXd> sum = grads[0];
      for (int s = 1; s < count; ++s)
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += grads[static_cast<std::size_t>(s)][k];
      for (auto& g : sum) g /= static_cast<double>(count);

      std::vector<double*> ps;
      std::vector<const double*> gs;
      for (std::size_t i = 0; i < views.size(); ++i) {
        ps.push_back(views[i].data);
        gs.push_back(sum[i].data());
      }
      adam.step(ps, gs);
      for (int s = 0; s < count; ++s) epochLoss += batchLoss[static_cast<std::size_t>(s)];
    }

    epochLoss /= K;
    result.epochLoss.push_back(epochLoss);
    best = std::min(best, epochLoss);
    result.bestLoss.push_back(best);
  }

  result.params = std::move(params);
  result.stepCount = adam.stepCount();
  return result;
}

scm::Permutation inferToWith(const ValueScorer& scorer, const MatrixXd& x) {
  const int d = static_cast<int>(x.cols());
  if (d < 1) throw ArgumentError("dataset has no columns");
  std::vector<int> live(static_cast<std::size_t>(d));
  std::iota(live.begin(), live.end(), 0);
  MatrixXd cur = x;
  std::vector<int> peeled;
  for (int q = 0; q < d; ++q) {
    int idx = argmax(scorer(cur, live));
    peeled.push_back(live[static_cast<std::size_t>(idx)]);
    live.erase(live.begin() + idx);
    if (q + 1 < d) cur = reduceDataset(cur, idx);
  }
  std::reverse(peeled.begin(), peeled.end());
  return scm::Permutation(std::move(peeled));
}

scm::Permutation inferTo(const EncoderParams& params, const MatrixXd& x) {
  return inferToWith(
      [&params](const MatrixXd& cur, const std::vector<int>&) {
        return scoreLogitsValue(params, cur);
      },
      x);
}

scm::Permutation inferToVotingWith(const ValueScorer& scorer, const MatrixXd& x,
                                   int chunkRows) {
  const int d = static_cast<int>(x.cols());
  if (chunkRows < 1) throw ArgumentError("chunk size must be positive");
  if (x.rows() < chunkRows)
    throw ArgumentError("dataset has fewer rows than the voting chunk size");
  const int chunks = static_cast<int>(x.rows()) / chunkRows;

  std::vector<MatrixXd> parts;
  for (int b = 0; b < chunks; ++b) parts.push_back(x.middleRows(b * chunkRows, chunkRows));

  std::vector<int> live(static_cast<std::size_t>(d));
  std::iota(live.begin(), live.end(), 0);
  std::vector<int> peeled;
  for (int q = 0; q < d; ++q) {
    std::map<int, int> votes;  // original node id -> count
    for (const MatrixXd& part : parts) {
      int idx = argmax(scorer(part, live));
      ++votes[live[static_cast<std::size_t>(idx)]];
    }
    int bestNode = -1, bestCount = -1;
    for (const auto& [node, count] : votes) {
      if (count > bestCount) {  // map iterates ascending: ties keep the smallest id
        bestNode = node;
        bestCount = count;
      }
    }
    int idx = static_cast<int>(std::find(live.begin(), live.end(), bestNode) - live.begin());
    peeled.push_back(bestNode);
    live.erase(live.begin() + idx);
    if (q + 1 < d)
      for (MatrixXd& part : parts) part = reduceDataset(part, idx);
  }
  std::reverse(peeled.begin(), peeled.end());
  return scm::Permutation(std::move(peeled));
}

scm::Permutation inferToVoting(const EncoderParams& params, const MatrixXd& x,
                               int chunkRows) {
  return inferToVotingWith(
      [&params](const MatrixXd& cur, const std::vector<int>&) {
        return scoreLogitsValue(params, cur);
      },
      x, chunkRows);
}

void saveEncoder(const std::filesystem::path& file, const EncoderParams& params,
                 int stepCount) {
  auto& p = const_cast<EncoderParams&>(params);
  nlohmann::json header;
  header["kind"] = "to";
  header["config"] = configToJson(params.config);
  header["step_count"] = stepCount;
  io::writeCheckpoint(file, kCheckpointMagic, header, io::buffersFromViews(paramViews(p)));
}

std::pair<EncoderParams, int> loadEncoder(const std::filesystem::path& file) {
  io::Checkpoint ckpt = io::readCheckpoint(file, kCheckpointMagic);
  EncoderConfig config = configFromJson(ckpt.header.at("config"));
  EncoderParams params = EncoderParams::init(config, 0);
  io::loadViewsFromBuffers(paramViews(params), ckpt);
  return {std::move(params), ckpt.header.at("step_count").get<int>()};
}

}  // namespace fpcm::order
