#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fpcm::ad {

class Tape;

// Handle to a tape node. Values are flat row-major buffers with an explicit
// dims list (rank 0..3); rank-3 tensors treat the leading dimension as batch.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const std::vector<int>& dims() const;
  Eigen::Index size() const;
  const Eigen::ArrayXd& value() const;
  const Eigen::ArrayXd& grad() const;  // throws if no grad was tracked
  bool hasGrad() const;

  double scalar() const;  // requires numel == 1
  Eigen::MatrixXd valueMatrix() const;  // rank <= 2
  Eigen::MatrixXd gradMatrix() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

struct TapeNode {
  std::vector<int> dims;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;
  bool requiresGrad = false;  // leaf marked as trainable
  bool wantsGrad = false;     // on some path from a trainable leaf
  std::function<void()> backward;
};

// Records one forward computation; rebuilt every step. Not thread-safe:
// one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(const std::vector<int>& dims, const Eigen::ArrayXd& value, bool requiresGrad);
  Tensor leafMatrix(const Eigen::MatrixXd& m, bool requiresGrad = false);
  Tensor leafVector(const Eigen::VectorXd& v, bool requiresGrad = false);
  Tensor scalarConstant(double v);

  // Reverse sweep from a scalar loss; fills grads of trainable ancestors.
  void backward(const Tensor& loss);

  TapeNode& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const TapeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int nodeCount() const { return static_cast<int>(nodes_.size()); }

  int addNode(std::vector<int> dims, Eigen::ArrayXd value, bool wantsGrad);

 private:
  std::deque<TapeNode> nodes_;
};

std::string shapeString(const std::vector<int>& dims);
Eigen::Index numel(const std::vector<int>& dims);

// ---- recorded operations ---------------------------------------------------
// Binary elementwise ops broadcast the right operand when its dims form a
// suffix of the left operand's dims.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor affine(Tensor a, double scale, double shift = 0.0);

Tensor matmul(Tensor a, Tensor b);  // batched when rank 3
Tensor transpose(Tensor a);         // swaps the last two dims
Tensor transposeLeading(Tensor a);  // rank 3: swaps the first two dims

Tensor sumAll(Tensor a);
Tensor meanAll(Tensor a);
Tensor sumLast(Tensor a);

Tensor exp(Tensor a);
Tensor log(Tensor a);
Tensor reciprocal(Tensor a);
Tensor relu(Tensor a);
Tensor maxConst(Tensor a, double c);
Tensor softplus(Tensor a);

Tensor layerNorm(Tensor a, double eps = 1e-5);  // last axis, no affine
Tensor softmaxLast(Tensor a);
Tensor expandLast(Tensor a, int n);  // appends an axis of size n by repetition
Tensor slice(Tensor a, int from, int len);  // last axis
Tensor concat(const std::vector<Tensor>& parts);  // last axis
Tensor reshape(Tensor a, const std::vector<int>& dims);
Tensor detach(Tensor a);

// ---- parameter plumbing ------------------------------------------------------
// Stable view over a model's parameter fields, shared by the optimizer, the
// checkpoint writer and the forward builders. Matrices are column-major in
// memory (Eigen default) and serialized/taped row-major.
struct ParamView {
  std::string name;
  double* data;
  Eigen::Index size;
  std::vector<int> dims;
  bool isMatrix;
};

std::map<std::string, Tensor> leavesFromViews(Tape& tape,
                                              const std::vector<ParamView>& views,
                                              bool requiresGrad);
// Per-view gradients re-laid out to match the parameter memory order.
std::vector<Eigen::ArrayXd> collectGrads(const std::vector<ParamView>& views,
                                         const std::map<std::string, Tensor>& leaves);

// ---- optimizer --------------------------------------------------------------
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weightDecay = 5e-9;  // L2 folded into the gradient
};

class AdamState {
 public:
  AdamState(std::vector<Eigen::Index> sizes, AdamConfig config);

  // params[i] and grads[i] point at sizes[i] doubles. Throws NumericError on
  // a non-finite gradient.
  void step(const std::vector<double*>& params, const std::vector<const double*>& grads);

  int stepCount() const { return stepCount_; }
  void setStepCount(int t) { stepCount_ = t; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
  std::vector<Eigen::Index> sizes_;
  int stepCount_ = 0;
};

}  // namespace fpcm::ad
