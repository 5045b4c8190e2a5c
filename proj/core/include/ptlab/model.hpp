#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ptlab/common.hpp"
#include "ptlab/graph.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

// Decoder-only transformer, GPT2-style pre-norm blocks, learned positional
// embeddings, tied input/output embedding.
struct ModelConfig {
  int64_t vocab_size = 50257;
  int64_t context_size = 1024;
  int64_t d_embed = 768;
  int64_t d_ffn = 3072;
  int n_layer = 2;
  int n_head = 8;
  std::string activation = "gelu";

  void validate() const;
  int64_t head_dim() const { return d_embed / n_head; }
};

// Per-layer, per-head attention matrices for one forward pass. Rows are
// stochastic and causally masked; empty when n_layer == 0.
struct AttentionTrace {
  int n_layer = 0;
  int n_head = 0;
  int64_t seq = 0;
  std::vector<DMat> alpha;  // index = layer * n_head + head

  const DMat& at(int layer, int head) const { return alpha[static_cast<size_t>(layer * n_head + head)]; }
  DMat& at(int layer, int head) { return alpha[static_cast<size_t>(layer * n_head + head)]; }
  bool empty() const { return alpha.empty(); }
};

enum class AblationMode { full, pattern_preserving };

struct AblationSpec {
  std::vector<std::pair<int, int>> targets;  // (layer, head)
  AblationMode mode = AblationMode::pattern_preserving;

  bool targeted(int layer, int head) const;
};

struct NoiseSpec {
  double sigma = 0.0;
  uint64_t seed = 0;
};

template <typename T>
struct ModelParamsT {
  ModelConfig config;
  std::vector<std::pair<std::string, TensorT<T>>> named;

  TensorT<T>& find(const std::string& name);
  const TensorT<T>& find(const std::string& name) const;
  int64_t total_elements() const;

  // normal(0, 0.02) projections and embeddings, zero biases, unit gains
  static ModelParamsT init(const ModelConfig& config, uint64_t seed);

  template <typename U>
  ModelParamsT<U> cast() const;
};

using ModelParams = ModelParamsT<float>;
using ModelParamsD = ModelParamsT<double>;

// Graph handles produced while recording a forward pass; the trainer reads
// attention nodes to attach regularizer terms.
template <typename T>
struct ForwardBuildT {
  typename GraphT<T>::Id logits = -1;
  std::vector<typename GraphT<T>::Id> alpha;      // layer * n_head + head; empty for n_layer == 0
  std::vector<typename GraphT<T>::Id> param_ids;  // aligned with params.named
};

template <typename T>
struct ForwardOptionsT {
  bool params_require_grad = false;
  double noise_sigma = 0.0;   // Gaussian noise added to FFN hidden activations
  Rng* noise_rng = nullptr;   // fresh draw per forward when sigma > 0
  const AblationSpec* ablation = nullptr;
  const AttentionTrace* recorded = nullptr;  // run-1 weights for pattern-preserving runs
};

template <typename T>
ForwardBuildT<T> build_forward(GraphT<T>& g, const ModelParamsT<T>& params, std::span<const int32_t> tokens,
                               const ForwardOptionsT<T>& opt = {});

AttentionTrace extract_trace(const Graph& g, const ForwardBuildT<float>& fb, const ModelConfig& config);
AttentionTrace extract_trace(const GraphD& g, const ForwardBuildT<double>& fb, const ModelConfig& config);

// logits over the whole sequence plus the attention trace
std::pair<TensorF, AttentionTrace> forward_with_trace(const ModelParams& params, std::span<const int32_t> tokens,
                                                      const std::optional<NoiseSpec>& noise = std::nullopt);

// -ln P(token_i | tokens_<i) in nats for i >= 1; index 0 is NaN (a first
// token has no conditional probability).
std::vector<double> compute_surprisals(const ModelParams& params, std::span<const int32_t> tokens);

std::pair<TensorF, AttentionTrace> ablated_forward(const ModelParams& params, std::span<const int32_t> tokens,
                                                   const AblationSpec& spec);

}  // namespace ptlab
