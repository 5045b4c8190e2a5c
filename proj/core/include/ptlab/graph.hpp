#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ptlab/tensor.hpp"

namespace ptlab {

enum class OpKind {
  Input,
  Constant,
  Matmul,
  Add,
  Mul,
  Scale,
  RowSoftmax,
  LayerNorm,
  Gelu,
  EmbeddingGather,
  CrossEntropyLogits,
  SliceCols,
  ConcatCols,
  ReduceSum,
  ReduceMean,
};

const char* op_kind_name(OpKind k);

// Reverse-mode tape over dense tensors. Ops evaluate eagerly when recorded;
// recompute() replays the tape from the current leaf values, which is what
// finite-difference probing uses. One backward pass per forward record.
//
// A graph is single-owner during forward/backward. Distinct graphs may run
// concurrently on different threads.
template <typename T>
class GraphT {
 public:
  using Id = int32_t;

  Id input(TensorT<T> t, bool requires_grad = true);
  Id constant(TensorT<T> t);

  Id matmul(Id a, Id b, bool trans_a = false, bool trans_b = false);
  Id add(Id a, Id b);  // same shape, or (r,c)+(c) bias broadcast over rows
  Id mul(Id a, Id b);  // elementwise, same shape
  Id scale(Id a, T factor);
  Id row_softmax(Id a);
  Id layer_norm(Id x, Id gain, Id bias, T eps = static_cast<T>(1e-5));
  Id gelu(Id a);
  Id embedding_gather(Id table, std::vector<int32_t> ids);
  // per-row loss vector (n): logsumexp(row) - logit[target]
  Id cross_entropy_with_logits(Id logits, std::vector<int32_t> targets);
  Id slice_cols(Id a, int64_t lo, int64_t hi);
  Id concat_cols(const std::vector<Id>& parts);
  Id reduce_sum(Id a);
  Id reduce_mean(Id a);

  const TensorT<T>& value(Id id) const;
  // Leaf (input/constant) values may be mutated between recomputes.
  TensorT<T>& mutable_leaf(Id id);
  void recompute();
  void backward(Id loss);
  bool has_grad(Id id) const;
  const TensorT<T>& grad(Id id) const;

  size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  // Fault-injection hook for validating the gradient checker: corrupts the
  // gelu backward rule by the given factor.
  void debug_scale_gelu_backward(T factor) { gelu_fault_ = factor; }

 private:
  struct Node {
    OpKind kind;
    std::vector<Id> args;
    TensorT<T> value;
    TensorT<T> grad;  // empty until backward touches it
    bool requires_grad = false;
    bool trans_a = false, trans_b = false;
    T scalar = T(0);                // Scale factor / LayerNorm eps
    std::vector<int32_t> indices;   // gather ids or CE targets
    int64_t lo = 0, hi = 0;         // slice bounds
    std::vector<T> aux;             // softmax probs (CE) or xhat+inv_std (LayerNorm)
  };

  Id push(Node n);
  void eval(Node& n) const;
  void backprop(size_t idx);
  Node& node(Id id);
  const Node& node(Id id) const;
  void accumulate(Id target, const TensorT<T>& contribution);
  TensorT<T>& grad_buffer(Id id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::optional<T> gelu_fault_;
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

}  // namespace ptlab
