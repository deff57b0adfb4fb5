#include "fpcm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "fpcm/errors.hpp"

namespace fpcm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

int lastDim(const std::vector<int>& dims) { return dims.empty() ? 1 : dims.back(); }

Eigen::Index outerSize(const std::vector<int>& dims) {
  return numel(dims) / lastDim(dims);
}

bool isSuffix(const std::vector<int>& small, const std::vector<int>& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void requireSameTape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape()) throw ArgumentError("tensors belong to different tapes");
}

[[noreturn]] void shapeError(const char* op, const std::vector<int>& a,
                             const std::vector<int>& b) {
  throw ArgumentError(std::string(op) + ": incompatible shapes " + shapeString(a) +
                      " and " + shapeString(b));
}

}  // namespace

std::string shapeString(const std::vector<int>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

Eigen::Index numel(const std::vector<int>& dims) {
  Eigen::Index n = 1;
  for (int d : dims) n *= d;
  return n;
}

const std::vector<int>& Tensor::dims() const { return tape_->node(id_).dims; }
Eigen::Index Tensor::size() const { return tape_->node(id_).value.size(); }
const Eigen::ArrayXd& Tensor::value() const { return tape_->node(id_).value; }
bool Tensor::hasGrad() const { return tape_->node(id_).grad.size() > 0; }

const Eigen::ArrayXd& Tensor::grad() const {
  const TapeNode& n = tape_->node(id_);
  if (n.grad.size() == 0) throw ArgumentError("tensor has no tracked gradient");
  return n.grad;
}

double Tensor::scalar() const {
  if (size() != 1) throw ArgumentError("tensor is not a scalar");
  return value()[0];
}

Eigen::MatrixXd Tensor::valueMatrix() const {
  const auto& d = dims();
  if (d.size() > 2) throw ArgumentError("tensor rank exceeds 2");
  Eigen::Index r = d.empty() ? 1 : d[0];
  Eigen::Index c = d.size() == 2 ? d[1] : 1;
  return ConstRowMap(value().data(), r, c);
}

Eigen::MatrixXd Tensor::gradMatrix() const {
  const auto& d = dims();
  if (d.size() > 2) throw ArgumentError("tensor rank exceeds 2");
  Eigen::Index r = d.empty() ? 1 : d[0];
  Eigen::Index c = d.size() == 2 ? d[1] : 1;
  return ConstRowMap(grad().data(), r, c);
}

int Tape::addNode(std::vector<int> dims, Eigen::ArrayXd value, bool wantsGrad) {
  TapeNode n;
  n.dims = std::move(dims);
  n.value = std::move(value);
  n.wantsGrad = wantsGrad;
  if (wantsGrad) n.grad = Eigen::ArrayXd::Zero(n.value.size());
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const std::vector<int>& dims, const Eigen::ArrayXd& value,
                  bool requiresGrad) {
  if (value.size() != numel(dims))
    throw ArgumentError("leaf data size does not match shape " + shapeString(dims));
  int id = addNode(dims, value, requiresGrad);
  node(id).requiresGrad = requiresGrad;
  return Tensor(this, id);
}

Tensor Tape::leafMatrix(const Eigen::MatrixXd& m, bool requiresGrad) {
  Eigen::ArrayXd flat(m.size());
  RowMap(flat.data(), m.rows(), m.cols()) = m;
  return leaf({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, flat, requiresGrad);
}

Tensor Tape::leafVector(const Eigen::VectorXd& v, bool requiresGrad) {
  return leaf({static_cast<int>(v.size())}, v.array(), requiresGrad);
}

Tensor Tape::scalarConstant(double v) {
  return leaf({}, Eigen::ArrayXd::Constant(1, v), false);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw ArgumentError("loss tensor is not on this tape");
  if (loss.size() != 1) throw ArgumentError("backward requires a scalar loss");
  TapeNode& top = node(loss.id());
  if (!top.wantsGrad) return;  // nothing trainable feeds the loss
  top.grad[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    TapeNode& n = node(id);
    if (n.wantsGrad && n.backward) n.backward();
  }
}

namespace {

Eigen::ArrayXd tileSuffix(const Eigen::ArrayXd& b, Eigen::Index repeats) {
  Eigen::ArrayXd out(b.size() * repeats);
  for (Eigen::Index r = 0; r < repeats; ++r) out.segment(r * b.size(), b.size()) = b;
  return out;
}

Eigen::ArrayXd reduceToSuffix(const Eigen::ArrayXd& g, Eigen::Index suffixSize) {
  Eigen::Index repeats = g.size() / suffixSize;
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(suffixSize);
  for (Eigen::Index r = 0; r < repeats; ++r) out += g.segment(r * suffixSize, suffixSize);
  return out;
}

// Ops wire their backward closure after the output node exists.
void setBackward(Tensor out, std::function<void()> fn) {
  TapeNode& n = out.tape()->node(out.id());
  if (n.wantsGrad) n.backward = std::move(fn);
}

Tensor makeOut(Tape* tape, std::vector<int> dims, Eigen::ArrayXd value,
               std::initializer_list<Tensor> inputs) {
  bool wants = false;
  for (const Tensor& t : inputs) wants = wants || tape->node(t.id()).wantsGrad;
  int id = tape->addNode(std::move(dims), std::move(value), wants);
  return Tensor(tape, id);
}

// Accumulate into an input's grad if it is tracked.
void accum(Tape* tape, int id, const Eigen::ArrayXd& g) {
  TapeNode& n = tape->node(id);
  if (n.wantsGrad) n.grad += g;
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
  requireSameTape(a, b);
  Tape* tape = a.tape();
  if (!isSuffix(b.dims(), a.dims())) shapeError("add", a.dims(), b.dims());
  Eigen::ArrayXd bv =
      b.size() == a.size() ? b.value() : tileSuffix(b.value(), a.size() / b.size());
  Tensor out = makeOut(tape, a.dims(), a.value() + bv, {a, b});
  setBackward(out, [tape, aid = a.id(), bid = b.id(), oid = out.id(), bs = b.size()]() {
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    accum(tape, aid, g);
    if (tape->node(bid).wantsGrad)
      tape->node(bid).grad += (g.size() == bs ? g : reduceToSuffix(g, bs));
  });
  return out;
}

Tensor sub(Tensor a, Tensor b) {
  requireSameTape(a, b);
  Tape* tape = a.tape();
  if (!isSuffix(b.dims(), a.dims())) shapeError("sub", a.dims(), b.dims());
  Eigen::ArrayXd bv =
      b.size() == a.size() ? b.value() : tileSuffix(b.value(), a.size() / b.size());
  Tensor out = makeOut(tape, a.dims(), a.value() - bv, {a, b});
  setBackward(out, [tape, aid = a.id(), bid = b.id(), oid = out.id(), bs = b.size()]() {
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    accum(tape, aid, g);
    if (tape->node(bid).wantsGrad)
      tape->node(bid).grad -= (g.size() == bs ? g : reduceToSuffix(g, bs));
  });
  return out;
}

Tensor mul(Tensor a, Tensor b) {
  requireSameTape(a, b);
  Tape* tape = a.tape();
  if (!isSuffix(b.dims(), a.dims())) shapeError("mul", a.dims(), b.dims());
  Eigen::ArrayXd bv =
      b.size() == a.size() ? b.value() : tileSuffix(b.value(), a.size() / b.size());
  Tensor out = makeOut(tape, a.dims(), a.value() * bv, {a, b});
  setBackward(out, [tape, aid = a.id(), bid = b.id(), oid = out.id(),
                    bs = b.size(), bv]() {
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    if (tape->node(aid).wantsGrad) tape->node(aid).grad += g * bv;
    if (tape->node(bid).wantsGrad) {
      Eigen::ArrayXd ga = g * tape->node(aid).value;
      tape->node(bid).grad += (ga.size() == bs ? ga : reduceToSuffix(ga, bs));
    }
  });
  return out;
}

Tensor affine(Tensor a, double scale, double shift) {
  Tape* tape = a.tape();
  Tensor out = makeOut(tape, a.dims(), a.value() * scale + shift, {a});
  setBackward(out, [tape, aid = a.id(), oid = out.id(), scale]() {
    accum(tape, aid, tape->node(oid).grad * scale);
  });
  return out;
}

namespace {

struct MatShape {
  Eigen::Index batch, rows, cols;
};

MatShape matShape(const std::vector<int>& dims, const char* op) {
  if (dims.size() < 2)
    throw ArgumentError(std::string(op) + ": rank-" + std::to_string(dims.size()) +
                        " tensor " + shapeString(dims) + " is not a matrix");
  Eigen::Index rows = dims[dims.size() - 2];
  Eigen::Index cols = dims[dims.size() - 1];
  return {numel(dims) / (rows * cols), rows, cols};
}

}  // namespace

Tensor matmul(Tensor a, Tensor b) {
  requireSameTape(a, b);
  Tape* tape = a.tape();
  MatShape sa = matShape(a.dims(), "matmul");
  MatShape sb = matShape(b.dims(), "matmul");
  if (sa.cols != sb.rows || (sa.batch != sb.batch && sa.batch != 1 && sb.batch != 1))
    shapeError("matmul", a.dims(), b.dims());
  Eigen::Index batch = std::max(sa.batch, sb.batch);

  std::vector<int> odims;
  const auto& src = sa.batch >= sb.batch ? a.dims() : b.dims();
  odims.assign(src.begin(), src.end() - 2);
  odims.push_back(static_cast<int>(sa.rows));
  odims.push_back(static_cast<int>(sb.cols));

  Eigen::ArrayXd out(batch * sa.rows * sb.cols);
  for (Eigen::Index t = 0; t < batch; ++t) {
    ConstRowMap ma(a.value().data() + (sa.batch == 1 ? 0 : t * sa.rows * sa.cols),
                   sa.rows, sa.cols);
    ConstRowMap mb(b.value().data() + (sb.batch == 1 ? 0 : t * sb.rows * sb.cols),
                   sb.rows, sb.cols);
    RowMap(out.data() + t * sa.rows * sb.cols, sa.rows, sb.cols).noalias() = ma * mb;
  }

  Tensor o = makeOut(tape, odims, std::move(out), {a, b});
  setBackward(o, [tape, aid = a.id(), bid = b.id(), oid = o.id(), sa, sb, batch]() {
    TapeNode& na = tape->node(aid);
    TapeNode& nb = tape->node(bid);
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    for (Eigen::Index t = 0; t < batch; ++t) {
      ConstRowMap mg(g.data() + t * sa.rows * sb.cols, sa.rows, sb.cols);
      ConstRowMap ma(na.value.data() + (sa.batch == 1 ? 0 : t * sa.rows * sa.cols),
                     sa.rows, sa.cols);
      ConstRowMap mb(nb.value.data() + (sb.batch == 1 ? 0 : t * sb.rows * sb.cols),
                     sb.rows, sb.cols);
      if (na.wantsGrad) {
        RowMap ga(na.grad.data() + (sa.batch == 1 ? 0 : t * sa.rows * sa.cols),
                  sa.rows, sa.cols);
        ga.noalias() += mg * mb.transpose();
      }
      if (nb.wantsGrad) {
        RowMap gb(nb.grad.data() + (sb.batch == 1 ? 0 : t * sb.rows * sb.cols),
                  sb.rows, sb.cols);
        gb.noalias() += ma.transpose() * mg;
      }
    }
  });
  return o;
}

Tensor transpose(Tensor a) {
  Tape* tape = a.tape();
  MatShape s = matShape(a.dims(), "transpose");
  std::vector<int> odims = a.dims();
  std::swap(odims[odims.size() - 1], odims[odims.size() - 2]);
  Eigen::ArrayXd out(a.size());
  for (Eigen::Index t = 0; t < s.batch; ++t) {
    ConstRowMap m(a.value().data() + t * s.rows * s.cols, s.rows, s.cols);
    RowMap(out.data() + t * s.rows * s.cols, s.cols, s.rows) = m.transpose();
  }
  Tensor o = makeOut(tape, odims, std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), s]() {
    TapeNode& na = tape->node(aid);
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    for (Eigen::Index t = 0; t < s.batch; ++t) {
      ConstRowMap mg(g.data() + t * s.rows * s.cols, s.cols, s.rows);
      RowMap(na.grad.data() + t * s.rows * s.cols, s.rows, s.cols) += mg.transpose();
    }
  });
  return o;
}

Tensor transposeLeading(Tensor a) {
  Tape* tape = a.tape();
  const auto& d = a.dims();
  if (d.size() != 3) throw ArgumentError("transposeLeading needs a rank-3 tensor");
  const Eigen::Index b0 = d[0], b1 = d[1], k = d[2];
  Eigen::ArrayXd out(a.size());
  for (Eigen::Index i = 0; i < b0; ++i)
    for (Eigen::Index j = 0; j < b1; ++j)
      out.segment((j * b0 + i) * k, k) = a.value().segment((i * b1 + j) * k, k);
  Tensor o = makeOut(tape, {static_cast<int>(b1), static_cast<int>(b0), static_cast<int>(k)},
                     std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), b0, b1, k]() {
    TapeNode& na = tape->node(aid);
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    for (Eigen::Index i = 0; i < b0; ++i)
      for (Eigen::Index j = 0; j < b1; ++j)
        na.grad.segment((i * b1 + j) * k, k) += g.segment((j * b0 + i) * k, k);
  });
  return o;
}

Tensor sumAll(Tensor a) {
  Tape* tape = a.tape();
  Tensor out = makeOut(tape, {}, Eigen::ArrayXd::Constant(1, a.value().sum()), {a});
  setBackward(out, [tape, aid = a.id(), oid = out.id()]() {
    accum(tape, aid,
          Eigen::ArrayXd::Constant(tape->node(aid).value.size(), tape->node(oid).grad[0]));
  });
  return out;
}

Tensor meanAll(Tensor a) { return affine(sumAll(a), 1.0 / static_cast<double>(a.size())); }

Tensor sumLast(Tensor a) {
  Tape* tape = a.tape();
  if (a.dims().empty()) throw ArgumentError("sumLast needs rank >= 1");
  Eigen::Index last = lastDim(a.dims());
  Eigen::Index outer = outerSize(a.dims());
  Eigen::ArrayXd out(outer);
  for (Eigen::Index r = 0; r < outer; ++r) out[r] = a.value().segment(r * last, last).sum();
  std::vector<int> odims(a.dims().begin(), a.dims().end() - 1);
  Tensor o = makeOut(tape, odims, std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), last, outer]() {
    TapeNode& na = tape->node(aid);
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    for (Eigen::Index r = 0; r < outer; ++r) na.grad.segment(r * last, last) += g[r];
  });
  return o;
}

namespace {

template <typename FwdFn, typename BwdFn>
Tensor unaryOp(Tensor a, FwdFn fwd, BwdFn bwd) {
  Tape* tape = a.tape();
  Tensor out = makeOut(tape, a.dims(), fwd(a.value()), {a});
  setBackward(out, [tape, aid = a.id(), oid = out.id(), bwd]() {
    TapeNode& na = tape->node(aid);
    const TapeNode& no = tape->node(oid);
    na.grad += bwd(na.value, no.value, no.grad);
  });
  return out;
}

}  // namespace

Tensor exp(Tensor a) {
  return unaryOp(
      a, [](const Eigen::ArrayXd& x) { return x.exp().eval(); },
      [](const Eigen::ArrayXd&, const Eigen::ArrayXd& y, const Eigen::ArrayXd& g) {
        return (g * y).eval();
      });
}

Tensor log(Tensor a) {
  return unaryOp(
      a, [](const Eigen::ArrayXd& x) { return x.log().eval(); },
      [](const Eigen::ArrayXd& x, const Eigen::ArrayXd&, const Eigen::ArrayXd& g) {
        return (g / x).eval();
      });
}

Tensor reciprocal(Tensor a) {
  return unaryOp(
      a, [](const Eigen::ArrayXd& x) { return x.inverse().eval(); },
      [](const Eigen::ArrayXd&, const Eigen::ArrayXd& y, const Eigen::ArrayXd& g) {
        return (-g * y * y).eval();
      });
}

Tensor relu(Tensor a) {
  return unaryOp(
      a, [](const Eigen::ArrayXd& x) { return x.max(0.0).eval(); },
      [](const Eigen::ArrayXd& x, const Eigen::ArrayXd&, const Eigen::ArrayXd& g) {
        return (g * (x > 0.0).cast<double>()).eval();
      });
}

Tensor maxConst(Tensor a, double c) {
  return unaryOp(
      a, [c](const Eigen::ArrayXd& x) { return x.max(c).eval(); },
      [c](const Eigen::ArrayXd& x, const Eigen::ArrayXd&, const Eigen::ArrayXd& g) {
        return (g * (x > c).cast<double>()).eval();
      });
}

Tensor softplus(Tensor a) {
  return unaryOp(
      a,
      [](const Eigen::ArrayXd& x) {
        return ((-x.abs()).exp().log1p() + x.max(0.0)).eval();
      },
      [](const Eigen::ArrayXd& x, const Eigen::ArrayXd&, const Eigen::ArrayXd& g) {
        return (g / (1.0 + (-x).exp())).eval();
      });
}

Tensor layerNorm(Tensor a, double eps) {
  Tape* tape = a.tape();
  if (a.dims().empty()) throw ArgumentError("layerNorm needs rank >= 1");
  const Eigen::Index last = lastDim(a.dims());
  const Eigen::Index outer = outerSize(a.dims());
  Eigen::ArrayXd out(a.size());
  Eigen::ArrayXd invStd(outer);
  for (Eigen::Index r = 0; r < outer; ++r) {
    auto seg = a.value().segment(r * last, last);
    double mu = seg.mean();
    double var = (seg - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    invStd[r] = is;
    out.segment(r * last, last) = (seg - mu) * is;
  }
  Tensor o = makeOut(tape, a.dims(), std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), last, outer, invStd]() {
    TapeNode& na = tape->node(aid);
    const TapeNode& no = tape->node(oid);
    for (Eigen::Index r = 0; r < outer; ++r) {
      auto y = no.value.segment(r * last, last);
      auto g = no.grad.segment(r * last, last);
      double gm = g.mean();
      double gym = (g * y).mean();
      na.grad.segment(r * last, last) += invStd[r] * (g - gm - y * gym);
    }
  });
  return o;
}

Tensor softmaxLast(Tensor a) {
  Tape* tape = a.tape();
  if (a.dims().empty()) throw ArgumentError("softmax needs rank >= 1");
  const Eigen::Index last = lastDim(a.dims());
  const Eigen::Index outer = outerSize(a.dims());
  Eigen::ArrayXd out(a.size());
  for (Eigen::Index r = 0; r < outer; ++r) {
    auto seg = a.value().segment(r * last, last);
    Eigen::ArrayXd e = (seg - seg.maxCoeff()).exp();
    out.segment(r * last, last) = e / e.sum();
  }
  Tensor o = makeOut(tape, a.dims(), std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), last, outer]() {
    TapeNode& na = tape->node(aid);
    const TapeNode& no = tape->node(oid);
    for (Eigen::Index r = 0; r < outer; ++r) {
      auto y = no.value.segment(r * last, last);
      auto g = no.grad.segment(r * last, last);
      double dot = (g * y).sum();
      na.grad.segment(r * last, last) += y * (g - dot);
    }
  });
  return o;
}

Tensor expandLast(Tensor a, int n) {
  Tape* tape = a.tape();
  if (n < 1) throw ArgumentError("expandLast needs n >= 1");
  Eigen::ArrayXd out(a.size() * n);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out.segment(i * n, n).setConstant(a.value()[i]);
  std::vector<int> odims = a.dims();
  odims.push_back(n);
  Tensor o = makeOut(tape, odims, std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), n]() {
    TapeNode& na = tape->node(aid);
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    for (Eigen::Index i = 0; i < na.value.size(); ++i)
      na.grad[i] += g.segment(i * n, n).sum();
  });
  return o;
}

Tensor slice(Tensor a, int from, int len) {
  Tape* tape = a.tape();
  const Eigen::Index last = lastDim(a.dims());
  if (a.dims().empty() || from < 0 || len < 1 || from + len > last)
    throw ArgumentError("slice [" + std::to_string(from) + "," +
                        std::to_string(from + len) + ") out of range for " +
                        shapeString(a.dims()));
  const Eigen::Index outer = outerSize(a.dims());
  Eigen::ArrayXd out(outer * len);
  for (Eigen::Index r = 0; r < outer; ++r)
    out.segment(r * len, len) = a.value().segment(r * last + from, len);
  std::vector<int> odims = a.dims();
  odims.back() = len;
  Tensor o = makeOut(tape, odims, std::move(out), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id(), last, outer, from, len]() {
    TapeNode& na = tape->node(aid);
    const Eigen::ArrayXd& g = tape->node(oid).grad;
    for (Eigen::Index r = 0; r < outer; ++r)
      na.grad.segment(r * last + from, len) += g.segment(r * len, len);
  });
  return o;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat of nothing");
  Tape* tape = parts[0].tape();
  std::vector<int> base(parts[0].dims().begin(), parts[0].dims().end() - 1);
  Eigen::Index total = 0;
  std::vector<Eigen::Index> widths;
  for (const Tensor& p : parts) {
    requireSameTape(parts[0], p);
    if (p.dims().empty() ||
        !std::equal(base.begin(), base.end(), p.dims().begin()))
      shapeError("concat", parts[0].dims(), p.dims());
    widths.push_back(lastDim(p.dims()));
    total += widths.back();
  }
  const Eigen::Index outer = outerSize(parts[0].dims());
  Eigen::ArrayXd out(outer * total);
  Eigen::Index off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    Eigen::Index w = widths[k];
    for (Eigen::Index r = 0; r < outer; ++r)
      out.segment(r * total + off, w) = parts[k].value().segment(r * w, w);
    off += w;
  }
  std::vector<int> odims = base;
  odims.push_back(static_cast<int>(total));

  bool wants = false;
  for (const Tensor& p : parts) wants = wants || tape->node(p.id()).wantsGrad;
  int id = tape->addNode(odims, std::move(out), wants);
  Tensor o(tape, id);
  if (wants) {
    std::vector<int> ids;
    for (const Tensor& p : parts) ids.push_back(p.id());
    tape->node(id).backward = [tape, ids, oid = id, widths, outer, total]() {
      const Eigen::ArrayXd& g = tape->node(oid).grad;
      Eigen::Index off2 = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        TapeNode& n = tape->node(ids[k]);
        Eigen::Index w = widths[k];
        if (n.wantsGrad)
          for (Eigen::Index r = 0; r < outer; ++r)
            n.grad.segment(r * w, w) += g.segment(r * total + off2, w);
        off2 += w;
      }
    };
  }
  return o;
}

Tensor reshape(Tensor a, const std::vector<int>& dims) {
  Tape* tape = a.tape();
  if (numel(dims) != a.size()) shapeError("reshape", a.dims(), dims);
  Tensor o = makeOut(tape, dims, a.value(), {a});
  setBackward(o, [tape, aid = a.id(), oid = o.id()]() {
    accum(tape, aid, tape->node(oid).grad);
  });
  return o;
}

Tensor detach(Tensor a) {
  return a.tape()->leaf(a.dims(), a.value(), false);
}

std::map<std::string, Tensor> leavesFromViews(Tape& tape,
                                              const std::vector<ParamView>& views,
                                              bool requiresGrad) {
  std::map<std::string, Tensor> leaves;
  for (const ParamView& v : views) {
    if (v.isMatrix) {
      Eigen::Map<const Eigen::MatrixXd> m(v.data, v.dims[0], v.dims[1]);
      leaves[v.name] = tape.leafMatrix(m, requiresGrad);
    } else {
      Eigen::Map<const Eigen::VectorXd> vec(v.data, v.dims[0]);
      leaves[v.name] = tape.leafVector(vec, requiresGrad);
    }
  }
  return leaves;
}

std::vector<Eigen::ArrayXd> collectGrads(const std::vector<ParamView>& views,
                                         const std::map<std::string, Tensor>& leaves) {
  std::vector<Eigen::ArrayXd> grads;
  grads.reserve(views.size());
  for (const ParamView& v : views) {
    const Tensor& leaf = leaves.at(v.name);
    if (v.isMatrix) {
      ConstRowMap g(leaf.grad().data(), v.dims[0], v.dims[1]);
      Eigen::MatrixXd gm = g;
      grads.emplace_back(Eigen::Map<const Eigen::ArrayXd>(gm.data(), gm.size()));
    } else {
      grads.emplace_back(leaf.grad());
    }
  }
  return grads;
}

AdamState::AdamState(std::vector<Eigen::Index> sizes, AdamConfig config)
    : config_(config), sizes_(std::move(sizes)) {
  for (Eigen::Index s : sizes_) {
    m_.push_back(Eigen::ArrayXd::Zero(s));
    v_.push_back(Eigen::ArrayXd::Zero(s));
  }
}

void AdamState::step(const std::vector<double*>& params,
                     const std::vector<const double*>& grads) {
  if (params.size() != sizes_.size() || grads.size() != sizes_.size())
    throw ArgumentError("adam: buffer count mismatch");
  ++stepCount_;
  const double bc1 = 1.0 - std::pow(config_.beta1, stepCount_);
  const double bc2 = 1.0 - std::pow(config_.beta2, stepCount_);
  for (std::size_t k = 0; k < sizes_.size(); ++k) {
    Eigen::Map<Eigen::ArrayXd> w(params[k], sizes_[k]);
    Eigen::Map<const Eigen::ArrayXd> g0(grads[k], sizes_[k]);
    if (!g0.allFinite())
      throw NumericError("non-finite gradient in parameter buffer " + std::to_string(k));
    Eigen::ArrayXd g = g0 + config_.weightDecay * w;
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.square();
    w -= config_.lr * (m_[k] / bc1) / ((v_[k] / bc2).sqrt() + config_.eps);
  }
}

}  // namespace fpcm::ad
