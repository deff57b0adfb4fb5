#include "fpcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpcm/checkpoint.hpp"
#include "fpcm/errors.hpp"
#include "fpcm/random.hpp"

namespace fpcm::model {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kEvalChunk = 2048;

MatrixXd xavier(int rows, int cols, Rng& rng) {
  const double s = std::sqrt(2.0 / (rows + cols));
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = s * rng.normal();
  return m;
}

MatrixXd gaussian(int rows, int cols, double sigma, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = sigma * rng.normal();
  return m;
}

ModelParams makeParams(const ModelConfig& config, std::uint64_t seed, double decoderScale) {
  config.validate();
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  const int d = config.d, D = config.embedDim, hd = config.heads * config.headDim;
  p.theta1 = gaussian(d, D, 0.5, rng);
  p.theta2 = gaussian(d, D, 0.5, rng);
  p.pos = gaussian(d, D, 0.5, rng);
  for (int l = 0; l < config.layers; ++l) {
    LayerParams lp;
    lp.wq = xavier(D, hd, rng);
    lp.wk = xavier(D, hd, rng);
    lp.wv = xavier(D, hd, rng);
    lp.wo = xavier(hd, D, rng);
    lp.ln1Gamma = VectorXd::Ones(D);
    lp.ln1Beta = VectorXd::Zero(D);
    lp.mlpW1 = xavier(D, config.mlpHidden, rng);
    lp.mlpB1 = VectorXd::Zero(config.mlpHidden);
    lp.mlpW2 = xavier(config.mlpHidden, D, rng);
    lp.mlpB2 = VectorXd::Zero(D);
    lp.ln2Gamma = VectorXd::Ones(D);
    lp.ln2Beta = VectorXd::Zero(D);
    p.layers.push_back(std::move(lp));
  }
  p.decoder = decoderScale == 0.0 ? MatrixXd::Zero(d, D)
                                  : gaussian(d, D, decoderScale, rng);
  return p;
}

nlohmann::json configToJson(const ModelConfig& c) {
  return {{"d", c.d},
          {"embed_dim", c.embedDim},
          {"layers", c.layers},
          {"heads", c.heads},
          {"head_dim", c.headDim},
          {"mlp_hidden", c.mlpHidden},
          {"graph_threshold", c.graphThreshold}};
}

ModelConfig configFromJson(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.at("d").get<int>();
  c.embedDim = j.at("embed_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.headDim = j.at("head_dim").get<int>();
  c.mlpHidden = j.at("mlp_hidden").get<int>();
  c.graphThreshold = j.at("graph_threshold").get<double>();
  c.validate();
  return c;
}

}  // namespace

void ModelConfig::validate() const {
  if (d < 1 || embedDim < 1 || layers < 1 || heads < 1 || headDim < 1 || mlpHidden < 1)
    throw ArgumentError("model config dimensions must be positive");
  if (graphThreshold < 0.0)
    throw ArgumentError("graph threshold must be non-negative");
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  return makeParams(config, seed, 0.0);
}

ModelParams ModelParams::random(const ModelConfig& config, std::uint64_t seed) {
  return makeParams(config, seed, 1.0 / std::sqrt(config.embedDim));
}

std::vector<ParamView> paramViews(ModelParams& p) {
  std::vector<ParamView> views;
  auto mat = [&views](const std::string& name, MatrixXd& m) {
    views.push_back({name, m.data(), m.size(),
                     {static_cast<int>(m.rows()), static_cast<int>(m.cols())}, true});
  };
  auto vec = [&views](const std::string& name, VectorXd& v) {
    views.push_back({name, v.data(), v.size(), {static_cast<int>(v.size())}, false});
  };
  mat("theta1", p.theta1);
  mat("theta2", p.theta2);
  mat("pos", p.pos);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerParams& lp = p.layers[l];
    mat(pre + "wq", lp.wq);
    mat(pre + "wk", lp.wk);
    mat(pre + "wv", lp.wv);
    mat(pre + "wo", lp.wo);
    vec(pre + "ln1_gamma", lp.ln1Gamma);
    vec(pre + "ln1_beta", lp.ln1Beta);
    mat(pre + "mlp_w1", lp.mlpW1);
    vec(pre + "mlp_b1", lp.mlpB1);
    mat(pre + "mlp_w2", lp.mlpW2);
    vec(pre + "mlp_b2", lp.mlpB2);
    vec(pre + "ln2_gamma", lp.ln2Gamma);
    vec(pre + "ln2_beta", lp.ln2Beta);
  }
  mat("decoder", p.decoder);
  return views;
}

Eigen::MatrixXd causalAttention(const MatrixXd& q, const MatrixXd& k, double scale) {
  if (q.cols() != k.cols() || q.rows() != k.rows())
    throw ArgumentError("causal attention expects same-shape query and key");
  const Eigen::Index d = q.rows();
  MatrixXd scores = (q * k.transpose()) / scale;
  MatrixXd e = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < i; ++j) e(i, j) = std::exp(scores(i, j));
  for (Eigen::Index i = 0; i < d; ++i) {
    double denom = std::max(e.row(i).sum(), 1.0);
    e.row(i) /= denom;
  }
  return e;
}

Eigen::MatrixXd causalEmbed(const ModelParams& params, const VectorXd& w, int which) {
  if (which != 1 && which != 2) throw ArgumentError("which must be 1 or 2");
  if (w.size() != params.config.d) throw ArgumentError("embedding input length mismatch");
  const MatrixXd& theta = which == 1 ? params.theta1 : params.theta2;
  return w.asDiagonal() * theta + params.pos;
}

std::map<std::string, ad::Tensor> buildParamLeaves(ad::Tape& tape, ModelParams& params,
                                                   bool requiresGrad) {
  return ad::leavesFromViews(tape, paramViews(params), requiresGrad);
}

namespace {

using LeafMap = std::map<std::string, ad::Tensor>;

ad::Tensor layerNormAffine(ad::Tensor x, ad::Tensor gamma, ad::Tensor beta) {
  return ad::add(ad::mul(ad::layerNorm(x), gamma), beta);
}

ad::Tensor encoderLayerForward(const LeafMap& L, const std::string& pre,
                               const ModelConfig& cfg, ad::Tensor xEmb, ad::Tensor nEmb,
                               ad::Tensor mask) {
  const double scale = std::sqrt(static_cast<double>(cfg.embedDim));
  ad::Tensor q = ad::matmul(nEmb, L.at(pre + "wq"));
  ad::Tensor k = ad::matmul(xEmb, L.at(pre + "wk"));
  ad::Tensor v = ad::matmul(xEmb, L.at(pre + "wv"));

  std::vector<ad::Tensor> heads;
  heads.reserve(static_cast<std::size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    const int off = h * cfg.headDim;
    ad::Tensor qh = ad::slice(q, off, cfg.headDim);
    ad::Tensor kh = ad::slice(k, off, cfg.headDim);
    ad::Tensor vh = ad::slice(v, off, cfg.headDim);
    ad::Tensor scores = ad::affine(ad::matmul(qh, ad::transpose(kh)), 1.0 / scale);
    ad::Tensor masked = ad::mul(ad::exp(scores), mask);
    ad::Tensor denom = ad::maxConst(ad::sumLast(masked), 1.0);
    ad::Tensor ca = ad::mul(masked, ad::expandLast(ad::reciprocal(denom),
                                                   static_cast<int>(cfg.d)));
    heads.push_back(ad::matmul(ca, vh));
  }
  ad::Tensor attn = ad::matmul(ad::concat(heads), L.at(pre + "wo"));
  ad::Tensor res = ad::add(attn, nEmb);

  // h = LN o (I + MLP) o LN
  ad::Tensor y1 = layerNormAffine(res, L.at(pre + "ln1_gamma"), L.at(pre + "ln1_beta"));
  ad::Tensor hidden = ad::relu(ad::add(ad::matmul(y1, L.at(pre + "mlp_w1")),
                                       L.at(pre + "mlp_b1")));
  ad::Tensor mlp = ad::add(ad::matmul(hidden, L.at(pre + "mlp_w2")), L.at(pre + "mlp_b2"));
  ad::Tensor y2 = ad::add(y1, mlp);
  return layerNormAffine(y2, L.at(pre + "ln2_gamma"), L.at(pre + "ln2_beta"));
}

}  // namespace

ad::Tensor buildForward(ad::Tape& tape, const LeafMap& leaves, const ModelConfig& config,
                        const MatrixXd& xOrdered, const MatrixXd& nOrdered) {
  if (xOrdered.cols() != config.d || nOrdered.cols() != config.d ||
      xOrdered.rows() != nOrdered.rows())
    throw ArgumentError("forward inputs must be B x d");

  ad::Tensor x = tape.leafMatrix(xOrdered);
  ad::Tensor n = tape.leafMatrix(nOrdered);
  ad::Tensor xEmb = ad::add(ad::mul(ad::expandLast(x, config.embedDim), leaves.at("theta1")),
                            leaves.at("pos"));
  ad::Tensor nEmb = ad::add(ad::mul(ad::expandLast(n, config.embedDim), leaves.at("theta2")),
                            leaves.at("pos"));

  // Strictly lower-triangular binary mask (diagonal excluded).
  MatrixXd maskMat = MatrixXd::Zero(config.d, config.d);
  for (int i = 0; i < config.d; ++i)
    for (int j = 0; j < i; ++j) maskMat(i, j) = 1.0;
  ad::Tensor mask = tape.leafMatrix(maskMat);

  ad::Tensor state = nEmb;
  for (int l = 0; l < config.layers; ++l)
    state = encoderLayerForward(leaves, "layer" + std::to_string(l) + ".", config, xEmb,
                                state, mask);

  return ad::sumLast(ad::mul(state, leaves.at("decoder")));
}

MatrixXd forwardOrdered(const ModelParams& params, const MatrixXd& xOrdered,
                        const MatrixXd& nOrdered) {
  auto& mutableParams = const_cast<ModelParams&>(params);  // leaves copy the data
  MatrixXd out(xOrdered.rows(), xOrdered.cols());
  for (Eigen::Index from = 0; from < xOrdered.rows(); from += kEvalChunk) {
    Eigen::Index len = std::min<Eigen::Index>(kEvalChunk, xOrdered.rows() - from);
    ad::Tape tape;
    LeafMap leaves = buildParamLeaves(tape, mutableParams, false);
    ad::Tensor y = buildForward(tape, leaves, params.config, xOrdered.middleRows(from, len),
                                nOrdered.middleRows(from, len));
    out.middleRows(from, len) = y.valueMatrix();
  }
  return out;
}

MatrixXd anmOrdered(const ModelParams& params, const MatrixXd& xOrdered) {
  return forwardOrdered(params, xOrdered,
                        MatrixXd::Zero(xOrdered.rows(), xOrdered.cols()));
}

VectorXd tForward(const ModelParams& params, const VectorXd& x, const VectorXd& n) {
  return forwardOrdered(params, x.transpose(), n.transpose()).row(0).transpose();
}

namespace {

double evalLoss(ModelParams& params, const MatrixXd& xOrdered) {
  MatrixXd t = anmOrdered(params, xOrdered);
  return (xOrdered - t).array().square().rowwise().sum().mean();
}

}  // namespace

TrainResult trainMse(const Dataset& dataset, const scm::Permutation& perm,
                     ModelConfig config, const TrainConfig& train) {
  const int n = dataset.rows();
  const int d = dataset.cols();
  if (perm.size() != d)
    throw ArgumentError("permutation size " + std::to_string(perm.size()) +
                        " does not match dataset dimension " + std::to_string(d));
  config.d = d;
  config.validate();
  if (n < 3) throw ArgumentError("training needs at least 3 samples");

  // Standardize in model space and keep the composed record back to raw units.
  VectorXd mean = dataset.x.colwise().mean();
  VectorXd std_(d);
  for (int j = 0; j < d; ++j) {
    double var = (dataset.x.col(j).array() - mean[j]).square().sum() / n;
    std_[j] = std::max(std::sqrt(var), 1e-12);
  }
  Standardization internal{mean, std_};
  MatrixXd xModel = internal.apply(dataset.x);
  MatrixXd xOrd = perm.rowsToOrdered(xModel);

  Rng rng(deriveSeed(train.seed, 0x5eed));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  const int nTrain = std::max(1, static_cast<int>(train.trainFraction * n));
  const int nVal =
      std::min(n - nTrain, std::max(1, static_cast<int>(train.valFraction * n)));
  const int nTest = n - nTrain - nVal;

  auto gather = [&](int from, int count) {
    MatrixXd m(count, d);
    for (int r = 0; r < count; ++r)
      m.row(r) = xOrd.row(idx[static_cast<std::size_t>(from + r)]);
    return m;
  };
  MatrixXd xTrain = gather(0, nTrain);
  MatrixXd xVal = gather(nTrain, nVal);
  MatrixXd xTest = nTest > 0 ? gather(nTrain + nVal, nTest) : MatrixXd(0, d);

  ModelParams params = train.warmStart ? *train.warmStart
                                       : ModelParams::init(config, deriveSeed(train.seed, 0x1417));
  if (train.warmStart && params.config.d != d)
    throw ArgumentError("warm-start parameters have a different dimension");
  if (train.warmStart) config = params.config;
  ModelParams best = params;
  double bestVal = std::numeric_limits<double>::infinity();

  std::vector<ParamView> views = paramViews(params);
  std::vector<Eigen::Index> sizes;
  for (const ParamView& v : views) sizes.push_back(v.size);
  ad::AdamConfig adamCfg;
  adamCfg.lr = train.lr;
  adamCfg.weightDecay = train.weightDecay;
  ad::AdamState adam(sizes, adamCfg);

  const int batch = std::max(1, std::min(train.batchCap, nTrain));
  TrainResult result{TrainedModel{params, perm, internal}, {}, {}, {}, 0.0,
                     nTrain, nVal, nTest};

  std::vector<int> order(static_cast<std::size_t>(nTrain));
  std::iota(order.begin(), order.end(), 0);
  int step = 0;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    Rng erng(deriveSeed(train.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);
    double epochLoss = 0.0;
    int batches = 0;
    for (int from = 0; from + batch <= nTrain || from == 0; from += batch) {
      int count = std::min(batch, nTrain - from);
      if (count <= 0) break;
      MatrixXd xb(count, d);
      for (int r = 0; r < count; ++r)
        xb.row(r) = xTrain.row(order[static_cast<std::size_t>(from + r)]);

      ad::Tape tape;
      LeafMap leaves = buildParamLeaves(tape, params, true);
      ad::Tensor out = buildForward(tape, leaves, config, xb, MatrixXd::Zero(count, d));
      ad::Tensor diff = ad::sub(tape.leafMatrix(xb), out);
      ad::Tensor loss = ad::affine(ad::sumAll(ad::mul(diff, diff)), 1.0 / count);
      if (!std::isfinite(loss.scalar()))
        throw NumericError("training loss is not finite at step " + std::to_string(step));
      tape.backward(loss);
      epochLoss += loss.scalar();
      ++batches;

      std::vector<Eigen::ArrayXd> grads = ad::collectGrads(views, leaves);
      std::vector<double*> ps;
      std::vector<const double*> gs;
      for (std::size_t i = 0; i < views.size(); ++i) {
        ps.push_back(views[i].data);
        gs.push_back(grads[i].data());
      }
      try {
        adam.step(ps, gs);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
      }
      ++step;
    }
    result.trainCurve.push_back(epochLoss / std::max(1, batches));
    double val = evalLoss(params, xVal);
    result.valCurve.push_back(val);
    if (val < bestVal) {
      bestVal = val;
      best = params;
    }
    result.bestValCurve.push_back(bestVal);
  }

  result.model.params = std::move(best);
  result.testLoss = nTest > 0 ? evalLoss(result.model.params, xTest) : 0.0;
  return result;
}

namespace {

std::vector<int> sampleSubset(int n, int maxSamples, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (n > maxSamples) {
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(maxSamples));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

MatrixXd orderedJacobianMean(const TrainedModel& model, const MatrixXd& xRaw,
                             int maxSamples, std::uint64_t seed, bool absolute) {
  const int d = model.perm.size();
  if (xRaw.cols() != d) throw ArgumentError("observation width does not match model");
  MatrixXd xModel = model.record.apply(xRaw);
  std::vector<int> idx = sampleSubset(static_cast<int>(xModel.rows()), maxSamples, seed);
  MatrixXd xOrd(static_cast<Eigen::Index>(idx.size()), d);
  for (std::size_t r = 0; r < idx.size(); ++r)
    xOrd.row(static_cast<Eigen::Index>(r)) =
        model.perm.toOrdered(xModel.row(idx[r]).transpose()).transpose();

  const auto rows = static_cast<double>(xOrd.rows());
  MatrixXd mean = MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    VectorXd h = (1e-5 * (1.0 + xOrd.col(j).array().abs())).matrix();
    MatrixXd xp = xOrd, xm = xOrd;
    xp.col(j) += h;
    xm.col(j) -= h;
    MatrixXd diff = anmOrdered(model.params, xp) - anmOrdered(model.params, xm);
    for (int i = 0; i < d; ++i) {
      Eigen::ArrayXd deriv = diff.col(i).array() / (2.0 * h.array());
      mean(i, j) = (absolute ? deriv.abs().sum() : deriv.sum()) / rows;
    }
  }
  return mean;
}

GraphExtraction extractGraph(const TrainedModel& model, const MatrixXd& xRaw, double tau,
                             int maxSamples, std::uint64_t seed) {
  const int d = model.perm.size();
  MatrixXd ordered = orderedJacobianMean(model, xRaw, maxSamples, seed, true);
  MatrixXd scores = MatrixXd::Zero(d, d);
  scm::BoolMatrix adj = scm::BoolMatrix::Constant(d, d, false);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      int parent = model.perm.nodeAt(j), child = model.perm.nodeAt(i);
      scores(parent, child) = ordered(i, j);
      if (ordered(i, j) > tau) adj(parent, child) = true;
    }
  }
  return {scm::Dag(std::move(adj)), std::move(scores)};
}

scm::NoiseModel estimateNoiseQuantiles(const TrainedModel& model, const MatrixXd& xRaw) {
  if (xRaw.rows() < 1) throw ArgumentError("empty residuals");
  MatrixXd xModel = model.record.apply(xRaw);
  MatrixXd t = anmOrdered(model.params, model.perm.rowsToOrdered(xModel));
  MatrixXd residual = xModel - model.perm.rowsToOriginal(t);
  std::vector<scm::NodeNoise> nodes;
  for (int k = 0; k < residual.cols(); ++k) {
    VectorXd col = residual.col(k);
    std::sort(col.data(), col.data() + col.size());
    nodes.push_back(scm::EmpiricalNoise{col});
  }
  return scm::NoiseModel(std::move(nodes));
}

std::pair<MatrixXd, MatrixXd> generate(const TrainedModel& model,
                                       const scm::NoiseModel& noise, int nSamples,
                                       std::uint64_t seed) {
  const int d = model.perm.size();
  if (noise.size() != d) throw ArgumentError("noise model dimension mismatch");
  if (nSamples < 1) throw ArgumentError("need at least one sample");
  MatrixXd noiseDraws(nSamples, d);
  for (int r = 0; r < nSamples; ++r) {
    Rng rng(deriveSeed(seed, static_cast<std::uint64_t>(r)));
    noiseDraws.row(r) = noise.sampleVector(rng).transpose();
  }
  MatrixXd nu = model.perm.rowsToOrdered(noiseDraws);
  MatrixXd z = MatrixXd::Zero(nSamples, d);
  for (int k = 0; k < d; ++k) z = anmOrdered(model.params, z) + nu;
  MatrixXd xModel = model.perm.rowsToOriginal(z);
  return {model.record.invert(xModel), noiseDraws};
}

Eigen::VectorXd anmCounterfactualOrdered(const AnmMap& map, const VectorXd& xOrdered,
                                         const scm::InterventionMap& t) {
  if (xOrdered.size() != map.d) throw ArgumentError("factual length mismatch");
  t.validate(map.d);
  VectorXd noise = xOrdered - map.t(xOrdered);
  VectorXd z = VectorXd::Zero(map.d);
  for (int k = 0; k < map.d; ++k) z = t.apply(map.t(z) + noise);
  return z;
}

Eigen::VectorXd predictCounterfactual(const TrainedModel& model, const VectorXd& xFactual,
                                      const scm::InterventionMap& t) {
  const int d = model.perm.size();
  if (xFactual.size() != d) throw ArgumentError("factual length mismatch");
  t.validate(d);

  // Express the intervention in ordered, standardized coordinates.
  scm::InterventionMap tm = t;
  if (const scm::DoNode* dn = t.doNode()) {
    int node = model.perm.nodeAt(dn->orderedIndex);
    double v = (dn->value - model.record.mean[node]) / model.record.std[node];
    tm = scm::InterventionMap(scm::DoNode{dn->orderedIndex, v});
  } else {
    auto raw = t.triangular()->fn;
    auto perm = model.perm;
    auto record = model.record;
    tm = scm::InterventionMap(scm::TriangularMap{[raw, perm, record](const VectorXd& z) {
      VectorXd rawOrd(z.size());
      for (int k = 0; k < z.size(); ++k) {
        int node = perm.nodeAt(k);
        rawOrd[k] = z[k] * record.std[node] + record.mean[node];
      }
      VectorXd y = raw(rawOrd);
      VectorXd out(z.size());
      for (int k = 0; k < z.size(); ++k) {
        int node = perm.nodeAt(k);
        out[k] = (y[k] - record.mean[node]) / record.std[node];
      }
      return out;
    }});
  }

  AnmMap map{d, [&model](const VectorXd& xo) {
               return tForward(model.params, xo, VectorXd::Zero(xo.size()));
             }};
  VectorXd xOrd = model.perm.toOrdered(model.record.apply(xFactual));
  VectorXd cfOrd = anmCounterfactualOrdered(map, xOrd, tm);
  return model.record.invert(model.perm.toOriginal(cfOrd));
}

scm::FixedPointScm asFixedPointScm(const TrainedModel& model, scm::NoiseModel noise) {
  scm::StructuredFn fn;
  fn.d = model.perm.size();
  fn.additiveNoise = true;
  fn.eval = [params = model.params](const VectorXd& x, const VectorXd& n) {
    return VectorXd(tForward(params, x, VectorXd::Zero(x.size())) + n);
  };
  return scm::FixedPointScm(model.perm, std::move(fn), std::move(noise));
}

std::function<Eigen::VectorXd(const Eigen::VectorXd&, int, double)>
counterfactualPredictor(const TrainedModel& model, std::optional<Standardization> dataRecord) {
  return [model, dataRecord](const VectorXd& xRaw, int node, double value) {
    VectorXd x = dataRecord ? dataRecord->apply(xRaw) : xRaw;
    double v = dataRecord ? (value - dataRecord->mean[node]) / dataRecord->std[node] : value;
    scm::InterventionMap t(scm::DoNode{model.perm.positionOf(node), v});
    VectorXd cf = predictCounterfactual(model, x, t);
    return dataRecord ? VectorXd(dataRecord->invert(cf)) : cf;
  };
}

void saveTrainedModel(const std::filesystem::path& file, const TrainedModel& model) {
  auto& mutableParams = const_cast<ModelParams&>(model.params);
  std::vector<io::CheckpointBuffer> buffers = io::buffersFromViews(paramViews(mutableParams));
  nlohmann::json header;
  header["kind"] = "fip";
  header["config"] = configToJson(model.params.config);
  header["perm"] = model.perm.map();
  nlohmann::json mean = nlohmann::json::array(), std_ = nlohmann::json::array();
  for (int j = 0; j < model.record.mean.size(); ++j) {
    mean.push_back(model.record.mean[j]);
    std_.push_back(model.record.std[j]);
  }
  header["standardization"] = {{"mean", mean}, {"std", std_}};
  io::writeCheckpoint(file, kCheckpointMagic, header, buffers);
}

TrainedModel loadTrainedModel(const std::filesystem::path& file) {
  io::Checkpoint ckpt = io::readCheckpoint(file, kCheckpointMagic);
  ModelConfig config = configFromJson(ckpt.header.at("config"));
  ModelParams params = ModelParams::init(config, 0);
  io::loadViewsFromBuffers(paramViews(params), ckpt);
  scm::Permutation perm(ckpt.header.at("perm").get<std::vector<int>>());
  const auto& s = ckpt.header.at("standardization");
  const int d = config.d;
  VectorXd mean(d), std_(d);
  for (int j = 0; j < d; ++j) {
    mean[j] = s.at("mean")[static_cast<std::size_t>(j)].get<double>();
    std_[j] = s.at("std")[static_cast<std::size_t>(j)].get<double>();
  }
  return TrainedModel{std::move(params), std::move(perm), Standardization{mean, std_}};
}

}  // namespace fpcm::model
