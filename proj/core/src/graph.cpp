#include "ptlab/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ptlab/common.hpp"

namespace ptlab {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EMat<T>>;

template <typename T>
CMap<T> cmap(const TensorT<T>& t) {
  return CMap<T>(t.data.data(), t.rows(), t.cols());
}

template <typename T>
Map<T> map(TensorT<T>& t) {
  return Map<T>(t.data.data(), t.rows(), t.cols());
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

[[noreturn]] void shape_error(const char* primitive, const std::string& detail) {
  throw std::invalid_argument(std::string(primitive) + ": " + detail);
}

}  // namespace

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "multiply";
    case OpKind::Scale: return "scale";
    case OpKind::RowSoftmax: return "row-softmax";
    case OpKind::LayerNorm: return "layer-norm";
    case OpKind::Gelu: return "gelu";
    case OpKind::EmbeddingGather: return "embedding-gather";
    case OpKind::CrossEntropyLogits: return "cross-entropy-with-logits";
    case OpKind::SliceCols: return "slice";
    case OpKind::ConcatCols: return "concat";
    case OpKind::ReduceSum: return "reduce-sum";
    case OpKind::ReduceMean: return "reduce-mean";
  }
  return "?";
}

template <typename T>
typename GraphT<T>::Node& GraphT<T>::node(Id id) {
  return nodes_[static_cast<size_t>(id)];
}

template <typename T>
const typename GraphT<T>::Node& GraphT<T>::node(Id id) const {
  return nodes_[static_cast<size_t>(id)];
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::push(Node n) {
  for (Id a : n.args) {
    if (a < 0 || a >= static_cast<Id>(nodes_.size()))
      throw std::invalid_argument(std::string(op_kind_name(n.kind)) + ": argument id out of range");
    n.requires_grad = n.requires_grad || node(a).requires_grad;
  }
  if (n.kind != OpKind::Input && n.kind != OpKind::Constant) eval(n);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::input(TensorT<T> t, bool requires_grad) {
  Node n;
  n.kind = OpKind::Input;
  n.value = std::move(t);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::constant(TensorT<T> t) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(t);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::matmul(Id a, Id b, bool trans_a, bool trans_b) {
  const auto& ta = node(a).value;
  const auto& tb = node(b).value;
  if (ta.shape.size() != 2 || tb.shape.size() != 2)
    shape_error("matmul", "expects rank-2 tensors, got " + ta.shape_str() + " and " + tb.shape_str());
  Node n;
  n.kind = OpKind::Matmul;
  n.args = {a, b};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  const int64_t m = trans_a ? ta.cols() : ta.rows();
  const int64_t k = trans_a ? ta.rows() : ta.cols();
  const int64_t k2 = trans_b ? tb.cols() : tb.rows();
  const int64_t p = trans_b ? tb.rows() : tb.cols();
  if (k != k2)
    shape_error("matmul", "inner dimensions differ: " + ta.shape_str() + (trans_a ? "^T" : "") + " x " +
                              tb.shape_str() + (trans_b ? "^T" : "") + " (" + std::to_string(k) + " vs " +
                              std::to_string(k2) + ")");
  n.value = TensorT<T>({m, p});
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::add(Id a, Id b) {
  const auto& ta = node(a).value;
  const auto& tb = node(b).value;
  const bool bias = !ta.same_shape(tb);
  if (bias) {
    const bool row_vec = (tb.shape.size() == 1 && tb.shape[0] == ta.cols()) ||
                         (tb.shape.size() == 2 && tb.rows() == 1 && tb.cols() == ta.cols());
    if (ta.shape.size() != 2 || !row_vec)
      shape_error("add", "shapes " + ta.shape_str() + " and " + tb.shape_str() +
                             " are neither equal nor (rows,cols)+(cols)");
  }
  Node n;
  n.kind = OpKind::Add;
  n.args = {a, b};
  n.value = TensorT<T>(ta.shape);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::mul(Id a, Id b) {
  const auto& ta = node(a).value;
  const auto& tb = node(b).value;
  if (!ta.same_shape(tb))
    shape_error("multiply", "shapes differ: " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.kind = OpKind::Mul;
  n.args = {a, b};
  n.value = TensorT<T>(ta.shape);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::scale(Id a, T factor) {
  Node n;
  n.kind = OpKind::Scale;
  n.args = {a};
  n.scalar = factor;
  n.value = TensorT<T>(node(a).value.shape);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::row_softmax(Id a) {
  const auto& ta = node(a).value;
  if (ta.shape.size() != 2) shape_error("row-softmax", "expects rank-2 tensor, got " + ta.shape_str());
  Node n;
  n.kind = OpKind::RowSoftmax;
  n.args = {a};
  n.value = TensorT<T>(ta.shape);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::layer_norm(Id x, Id gain, Id bias, T eps) {
  const auto& tx = node(x).value;
  const auto& tg = node(gain).value;
  const auto& tb = node(bias).value;
  if (tx.shape.size() != 2) shape_error("layer-norm", "expects rank-2 input, got " + tx.shape_str());
  if (tg.numel() != tx.cols() || tb.numel() != tx.cols())
    shape_error("layer-norm", "gain/bias length must equal cols: input " + tx.shape_str() + ", gain " +
                                  tg.shape_str() + ", bias " + tb.shape_str());
  Node n;
  n.kind = OpKind::LayerNorm;
  n.args = {x, gain, bias};
  n.scalar = eps;
  n.value = TensorT<T>(tx.shape);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::gelu(Id a) {
  Node n;
  n.kind = OpKind::Gelu;
  n.args = {a};
  n.value = TensorT<T>(node(a).value.shape);
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::embedding_gather(Id table, std::vector<int32_t> ids) {
  const auto& tt = node(table).value;
  if (tt.shape.size() != 2) shape_error("embedding-gather", "table must be rank-2, got " + tt.shape_str());
  for (int32_t id : ids)
    if (id < 0 || id >= tt.rows())
      shape_error("embedding-gather", "id " + std::to_string(id) + " outside table rows " + std::to_string(tt.rows()));
  Node n;
  n.kind = OpKind::EmbeddingGather;
  n.args = {table};
  n.indices = std::move(ids);
  n.value = TensorT<T>({static_cast<int64_t>(n.indices.size()), tt.cols()});
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::cross_entropy_with_logits(Id logits, std::vector<int32_t> targets) {
  const auto& tl = node(logits).value;
  if (tl.shape.size() != 2) shape_error("cross-entropy-with-logits", "logits must be rank-2, got " + tl.shape_str());
  if (static_cast<int64_t>(targets.size()) != tl.rows())
    shape_error("cross-entropy-with-logits", "targets length " + std::to_string(targets.size()) +
                                                 " != logits rows " + std::to_string(tl.rows()));
  for (int32_t t : targets)
    if (t < 0 || t >= tl.cols())
      shape_error("cross-entropy-with-logits", "target " + std::to_string(t) + " outside vocab " + std::to_string(tl.cols()));
  Node n;
  n.kind = OpKind::CrossEntropyLogits;
  n.args = {logits};
  n.indices = std::move(targets);
  n.value = TensorT<T>({tl.rows()});
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::slice_cols(Id a, int64_t lo, int64_t hi) {
  const auto& ta = node(a).value;
  if (ta.shape.size() != 2) shape_error("slice", "expects rank-2 tensor, got " + ta.shape_str());
  if (lo < 0 || hi > ta.cols() || lo >= hi)
    shape_error("slice", "bad column range [" + std::to_string(lo) + "," + std::to_string(hi) + ") for " + ta.shape_str());
  Node n;
  n.kind = OpKind::SliceCols;
  n.args = {a};
  n.lo = lo;
  n.hi = hi;
  n.value = TensorT<T>({ta.rows(), hi - lo});
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  int64_t rows = node(parts[0]).value.rows();
  int64_t cols = 0;
  for (Id p : parts) {
    const auto& tp = node(p).value;
    if (tp.shape.size() != 2 || tp.rows() != rows)
      shape_error("concat", "inputs must be rank-2 with equal rows; got " + tp.shape_str());
    cols += tp.cols();
  }
  Node n;
  n.kind = OpKind::ConcatCols;
  n.args = parts;
  n.value = TensorT<T>({rows, cols});
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::reduce_sum(Id a) {
  Node n;
  n.kind = OpKind::ReduceSum;
  n.args = {a};
  n.value = TensorT<T>({1});
  return push(std::move(n));
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::reduce_mean(Id a) {
  if (node(a).value.numel() == 0) shape_error("reduce-mean", "empty tensor");
  Node n;
  n.kind = OpKind::ReduceMean;
  n.args = {a};
  n.value = TensorT<T>({1});
  return push(std::move(n));
}

template <typename T>
void GraphT<T>::eval(Node& n) const {
  switch (n.kind) {
    case OpKind::Input:
    case OpKind::Constant:
      return;
    case OpKind::Matmul: {
      const auto& a = node(n.args[0]).value;
      const auto& b = node(n.args[1]).value;
      auto out = Map<T>(n.value.data.data(), n.value.rows(), n.value.cols());
      if (!n.trans_a && !n.trans_b)
        out.noalias() = cmap(a) * cmap(b);
      else if (!n.trans_a && n.trans_b)
        out.noalias() = cmap(a) * cmap(b).transpose();
      else if (n.trans_a && !n.trans_b)
        out.noalias() = cmap(a).transpose() * cmap(b);
      else
        out.noalias() = cmap(a).transpose() * cmap(b).transpose();
      return;
    }
    case OpKind::Add: {
      const auto& a = node(n.args[0]).value;
      const auto& b = node(n.args[1]).value;
      if (a.same_shape(b)) {
        for (size_t i = 0; i < a.data.size(); ++i) n.value.data[i] = a.data[i] + b.data[i];
      } else {
        const int64_t r = a.rows(), c = a.cols();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j)
            n.value.data[static_cast<size_t>(i * c + j)] =
                a.data[static_cast<size_t>(i * c + j)] + b.data[static_cast<size_t>(j)];
      }
      return;
    }
    case OpKind::Mul: {
      const auto& a = node(n.args[0]).value;
      const auto& b = node(n.args[1]).value;
      for (size_t i = 0; i < a.data.size(); ++i) n.value.data[i] = a.data[i] * b.data[i];
      return;
    }
    case OpKind::Scale: {
      const auto& a = node(n.args[0]).value;
      for (size_t i = 0; i < a.data.size(); ++i) n.value.data[i] = n.scalar * a.data[i];
      return;
    }
    case OpKind::RowSoftmax: {
      const auto& a = node(n.args[0]).value;
      const int64_t r = a.rows(), c = a.cols();
      for (int64_t i = 0; i < r; ++i) {
        const T* row = a.data.data() + i * c;
        T* out = n.value.data.data() + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int64_t j = 0; j < c; ++j) {
          out[j] = std::exp(row[j] - mx);
          sum += out[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < c; ++j) out[j] *= inv;
      }
      return;
    }
    case OpKind::LayerNorm: {
      const auto& x = node(n.args[0]).value;
      const auto& g = node(n.args[1]).value;
      const auto& b = node(n.args[2]).value;
      const int64_t r = x.rows(), c = x.cols();
      n.aux.resize(static_cast<size_t>(r * c + r));  // xhat rows then inv_std per row
      T* xhat = n.aux.data();
      T* inv_std = n.aux.data() + r * c;
      for (int64_t i = 0; i < r; ++i) {
        const T* row = x.data.data() + i * c;
        T mean = T(0);
        for (int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<T>(c);
        T var = T(0);
        for (int64_t j = 0; j < c; ++j) {
          const T d = row[j] - mean;
          var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + n.scalar);
        inv_std[i] = inv;
        T* out = n.value.data.data() + i * c;
        for (int64_t j = 0; j < c; ++j) {
          const T xh = (row[j] - mean) * inv;
          xhat[i * c + j] = xh;
          out[j] = g.data[static_cast<size_t>(j)] * xh + b.data[static_cast<size_t>(j)];
        }
      }
      return;
    }
    case OpKind::Gelu: {
      const auto& a = node(n.args[0]).value;
      for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = static_cast<double>(a.data[i]);
        n.value.data[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
      }
      return;
    }
    case OpKind::EmbeddingGather: {
      const auto& t = node(n.args[0]).value;
      const int64_t c = t.cols();
      for (size_t i = 0; i < n.indices.size(); ++i) {
        const T* src = t.data.data() + static_cast<int64_t>(n.indices[i]) * c;
        std::copy(src, src + c, n.value.data.data() + static_cast<int64_t>(i) * c);
      }
      return;
    }
    case OpKind::CrossEntropyLogits: {
      const auto& z = node(n.args[0]).value;
      const int64_t r = z.rows(), c = z.cols();
      n.aux.resize(static_cast<size_t>(r * c));  // softmax probabilities
      for (int64_t i = 0; i < r; ++i) {
        const T* row = z.data.data() + i * c;
        T* p = n.aux.data() + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int64_t j = 0; j < c; ++j) {
          p[j] = std::exp(row[j] - mx);
          sum += p[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < c; ++j) p[j] *= inv;
        const T lse = mx + std::log(sum);
        n.value.data[static_cast<size_t>(i)] = lse - row[n.indices[static_cast<size_t>(i)]];
      }
      return;
    }
    case OpKind::SliceCols: {
      const auto& a = node(n.args[0]).value;
      const int64_t r = a.rows(), c = a.cols(), w = n.hi - n.lo;
      for (int64_t i = 0; i < r; ++i)
        std::copy(a.data.data() + i * c + n.lo, a.data.data() + i * c + n.hi, n.value.data.data() + i * w);
      return;
    }
    case OpKind::ConcatCols: {
      const int64_t r = n.value.rows(), c = n.value.cols();
      int64_t off = 0;
      for (Id p : n.args) {
        const auto& a = node(p).value;
        const int64_t pc = a.cols();
        for (int64_t i = 0; i < r; ++i)
          std::copy(a.data.data() + i * pc, a.data.data() + (i + 1) * pc, n.value.data.data() + i * c + off);
        off += pc;
      }
      return;
    }
    case OpKind::ReduceSum: {
      const auto& a = node(n.args[0]).value;
      T s = T(0);
      for (T v : a.data) s += v;
      n.value.data[0] = s;
      return;
    }
    case OpKind::ReduceMean: {
      const auto& a = node(n.args[0]).value;
      T s = T(0);
      for (T v : a.data) s += v;
      n.value.data[0] = s / static_cast<T>(a.numel());
      return;
    }
  }
}

template <typename T>
const TensorT<T>& GraphT<T>::value(Id id) const {
  return node(id).value;
}

template <typename T>
TensorT<T>& GraphT<T>::mutable_leaf(Id id) {
  Node& n = node(id);
  if (n.kind != OpKind::Input && n.kind != OpKind::Constant)
    throw std::logic_error("mutable_leaf: node is not an input or constant");
  return n.value;
}

template <typename T>
void GraphT<T>::recompute() {
  for (Node& n : nodes_) {
    eval(n);
    if (!n.grad.data.empty()) n.grad = TensorT<T>();
  }
  backward_done_ = false;
}

template <typename T>
TensorT<T>& GraphT<T>::grad_buffer(Id id) {
  Node& n = node(id);
  if (n.grad.data.empty()) n.grad = TensorT<T>(n.value.shape);
  return n.grad;
}

template <typename T>
void GraphT<T>::accumulate(Id target, const TensorT<T>& contribution) {
  TensorT<T>& g = grad_buffer(target);
  for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += contribution.data[i];
}

template <typename T>
void GraphT<T>::backward(Id loss) {
  if (nodes_.empty()) throw std::logic_error("backward: empty graph, run a forward first");
  if (backward_done_) throw std::logic_error("backward: one backward pass per forward record; recompute() first");
  const Node& ln = node(loss);
  if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + ln.value.shape_str());
  backward_done_ = true;
  grad_buffer(loss).data[0] = T(1);
  for (size_t i = static_cast<size_t>(loss) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (n.kind == OpKind::Input || n.kind == OpKind::Constant) continue;
    backprop(i);
  }
}

template <typename T>
void GraphT<T>::backprop(size_t idx) {
  Node& n = nodes_[idx];
  const TensorT<T>& dy = n.grad;
  auto need = [&](int argpos) { return node(n.args[static_cast<size_t>(argpos)]).requires_grad; };
  switch (n.kind) {
    case OpKind::Input:
    case OpKind::Constant:
      return;
    case OpKind::Matmul: {
      const auto& a = node(n.args[0]).value;
      const auto& b = node(n.args[1]).value;
      auto mdy = cmap(dy);
      if (need(0)) {
        auto da = map(grad_buffer(n.args[0]));
        if (!n.trans_a && !n.trans_b)
          da.noalias() += mdy * cmap(b).transpose();
        else if (!n.trans_a && n.trans_b)
          da.noalias() += mdy * cmap(b);
        else if (n.trans_a && !n.trans_b)
          da.noalias() += cmap(b) * mdy.transpose();
        else
          da.noalias() += cmap(b).transpose() * mdy.transpose();
      }
      if (need(1)) {
        auto db = map(grad_buffer(n.args[1]));
        if (!n.trans_a && !n.trans_b)
          db.noalias() += cmap(a).transpose() * mdy;
        else if (n.trans_a && !n.trans_b)
          db.noalias() += cmap(a) * mdy;
        else if (!n.trans_a && n.trans_b)
          db.noalias() += mdy.transpose() * cmap(a);
        else
          db.noalias() += mdy.transpose() * cmap(a).transpose();
      }
      return;
    }
    case OpKind::Add: {
      const auto& a = node(n.args[0]).value;
      const auto& b = node(n.args[1]).value;
      if (need(0)) accumulate(n.args[0], dy);
      if (need(1)) {
        if (a.same_shape(b)) {
          accumulate(n.args[1], dy);
        } else {
          TensorT<T>& gb = grad_buffer(n.args[1]);
          const int64_t r = a.rows(), c = a.cols();
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) gb.data[static_cast<size_t>(j)] += dy.data[static_cast<size_t>(i * c + j)];
        }
      }
      return;
    }
    case OpKind::Mul: {
      const auto& a = node(n.args[0]).value;
      const auto& b = node(n.args[1]).value;
      if (need(0)) {
        TensorT<T>& ga = grad_buffer(n.args[0]);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += dy.data[i] * b.data[i];
      }
      if (need(1)) {
        TensorT<T>& gb = grad_buffer(n.args[1]);
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += dy.data[i] * a.data[i];
      }
      return;
    }
    case OpKind::Scale: {
      if (need(0)) {
        TensorT<T>& ga = grad_buffer(n.args[0]);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += n.scalar * dy.data[i];
      }
      return;
    }
    case OpKind::RowSoftmax: {
      if (!need(0)) return;
      TensorT<T>& gx = grad_buffer(n.args[0]);
      const int64_t r = n.value.rows(), c = n.value.cols();
      for (int64_t i = 0; i < r; ++i) {
        const T* y = n.value.data.data() + i * c;
        const T* g = dy.data.data() + i * c;
        T dot = T(0);
        for (int64_t j = 0; j < c; ++j) dot += y[j] * g[j];
        T* out = gx.data.data() + i * c;
        for (int64_t j = 0; j < c; ++j) out[j] += y[j] * (g[j] - dot);
      }
      return;
    }
    case OpKind::LayerNorm: {
      const auto& x = node(n.args[0]).value;
      const auto& g = node(n.args[1]).value;
      const int64_t r = x.rows(), c = x.cols();
      const T* xhat = n.aux.data();
      const T* inv_std = n.aux.data() + r * c;
      TensorT<T>* gx = need(0) ? &grad_buffer(n.args[0]) : nullptr;
      TensorT<T>* gg = need(1) ? &grad_buffer(n.args[1]) : nullptr;
      TensorT<T>* gb = need(2) ? &grad_buffer(n.args[2]) : nullptr;
      for (int64_t i = 0; i < r; ++i) {
        const T* dyr = dy.data.data() + i * c;
        const T* xh = xhat + i * c;
        if (gg)
          for (int64_t j = 0; j < c; ++j) gg->data[static_cast<size_t>(j)] += dyr[j] * xh[j];
        if (gb)
          for (int64_t j = 0; j < c; ++j) gb->data[static_cast<size_t>(j)] += dyr[j];
        if (gx) {
          T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
          for (int64_t j = 0; j < c; ++j) {
            const T dxh = dyr[j] * g.data[static_cast<size_t>(j)];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<T>(c);
          mean_dxhat_xhat /= static_cast<T>(c);
          T* out = gx->data.data() + i * c;
          for (int64_t j = 0; j < c; ++j) {
            const T dxh = dyr[j] * g.data[static_cast<size_t>(j)];
            out[j] += inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
      return;
    }
    case OpKind::Gelu: {
      if (!need(0)) return;
      const auto& a = node(n.args[0]).value;
      TensorT<T>& ga = grad_buffer(n.args[0]);
      const T fault = gelu_fault_ ? *gelu_fault_ : T(1);
      for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = static_cast<double>(a.data[i]);
        const double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga.data[i] += fault * dy.data[i] * static_cast<T>(d);
      }
      return;
    }
    case OpKind::EmbeddingGather: {
      if (!need(0)) return;
      TensorT<T>& gt = grad_buffer(n.args[0]);
      const int64_t c = gt.cols();
      for (size_t i = 0; i < n.indices.size(); ++i) {
        T* dst = gt.data.data() + static_cast<int64_t>(n.indices[i]) * c;
        const T* src = dy.data.data() + static_cast<int64_t>(i) * c;
        for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
      }
      return;
    }
    case OpKind::CrossEntropyLogits: {
      if (!need(0)) return;
      TensorT<T>& gz = grad_buffer(n.args[0]);
      const int64_t r = gz.rows(), c = gz.cols();
      const T* probs = n.aux.data();
      for (int64_t i = 0; i < r; ++i) {
        const T gi = dy.data[static_cast<size_t>(i)];
        if (gi == T(0)) continue;
        T* out = gz.data.data() + i * c;
        const T* p = probs + i * c;
        for (int64_t j = 0; j < c; ++j) out[j] += gi * p[j];
        out[n.indices[static_cast<size_t>(i)]] -= gi;
      }
      return;
    }
    case OpKind::SliceCols: {
      if (!need(0)) return;
      TensorT<T>& ga = grad_buffer(n.args[0]);
      const int64_t r = ga.rows(), c = ga.cols(), w = n.hi - n.lo;
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < w; ++j) ga.data[static_cast<size_t>(i * c + n.lo + j)] += dy.data[static_cast<size_t>(i * w + j)];
      return;
    }
    case OpKind::ConcatCols: {
      const int64_t r = n.value.rows(), c = n.value.cols();
      int64_t off = 0;
      for (size_t k = 0; k < n.args.size(); ++k) {
        const int64_t pc = node(n.args[k]).value.cols();
        if (node(n.args[k]).requires_grad) {
          TensorT<T>& gp = grad_buffer(n.args[k]);
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < pc; ++j)
              gp.data[static_cast<size_t>(i * pc + j)] += dy.data[static_cast<size_t>(i * c + off + j)];
        }
        off += pc;
      }
      return;
    }
    case OpKind::ReduceSum: {
      if (!need(0)) return;
      TensorT<T>& ga = grad_buffer(n.args[0]);
      const T gi = dy.data[0];
      for (T& v : ga.data) v += gi;
      return;
    }
    case OpKind::ReduceMean: {
      if (!need(0)) return;
      TensorT<T>& ga = grad_buffer(n.args[0]);
      const T gi = dy.data[0] / static_cast<T>(ga.numel());
      for (T& v : ga.data) v += gi;
      return;
    }
  }
}

template <typename T>
bool GraphT<T>::has_grad(Id id) const {
  return !node(id).grad.data.empty();
}

template <typename T>
const TensorT<T>& GraphT<T>::grad(Id id) const {
  const Node& n = node(id);
  if (n.grad.data.empty()) throw std::logic_error("grad: no gradient recorded for this node; run backward first");
  return n.grad;
}

template class GraphT<float>;
template class GraphT<double>;

}  // namespace ptlab
