#include "ptlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ptlab {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("model config: vocab_size must be >= 2");
  if (context_size < 2) throw std::invalid_argument("model config: context_size must be >= 2");
  if (n_layer < 0) throw std::invalid_argument("model config: n_layer must be >= 0");
  if (n_head < 1) throw std::invalid_argument("model config: n_head must be >= 1");
  if (d_embed <= 0 || d_ffn <= 0) throw std::invalid_argument("model config: dims must be positive");
  if (d_embed % n_head != 0)
    throw std::invalid_argument("model config: d_embed " + std::to_string(d_embed) +
                                " not divisible by n_head " + std::to_string(n_head));
  if (activation != "gelu") throw std::invalid_argument("model config: unsupported activation " + activation);
}

bool AblationSpec::targeted(int layer, int head) const {
  for (const auto& [l, h] : targets)
    if (l == layer && h == head) return true;
  return false;
}

template <typename T>
TensorT<T>& ModelParamsT<T>::find(const std::string& name) {
  for (auto& [n, t] : named)
    if (n == name) return t;
  throw std::invalid_argument("model params: no parameter named " + name);
}

template <typename T>
const TensorT<T>& ModelParamsT<T>::find(const std::string& name) const {
  for (const auto& [n, t] : named)
    if (n == name) return t;
  throw std::invalid_argument("model params: no parameter named " + name);
}

template <typename T>
int64_t ModelParamsT<T>::total_elements() const {
  int64_t n = 0;
  for (const auto& [name, t] : named) n += t.numel();
  return n;
}

template <typename T>
ModelParamsT<T> ModelParamsT<T>::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ModelParamsT<T> p;
  p.config = config;
  Rng rng(derive_seed(seed, "param-init"));
  const T std02 = static_cast<T>(0.02);
  const int64_t d = config.d_embed;

  auto randn = [&](const std::string& name, std::vector<int64_t> shape) {
    p.named.emplace_back(name, TensorT<T>::randn(std::move(shape), rng, std02));
  };
  auto fill = [&](const std::string& name, std::vector<int64_t> shape, T v) {
    p.named.emplace_back(name, TensorT<T>::full(std::move(shape), v));
  };

  randn("wte", {config.vocab_size, d});
  randn("wpe", {config.context_size, d});
  for (int l = 0; l < config.n_layer; ++l) {
    const std::string h = "h" + std::to_string(l) + ".";
    fill(h + "ln1.g", {d}, T(1));
    fill(h + "ln1.b", {d}, T(0));
    randn(h + "attn.wq", {d, d});
    fill(h + "attn.bq", {d}, T(0));
    randn(h + "attn.wk", {d, d});
    fill(h + "attn.bk", {d}, T(0));
    randn(h + "attn.wv", {d, d});
    fill(h + "attn.bv", {d}, T(0));
    randn(h + "attn.wo", {d, d});
    fill(h + "attn.bo", {d}, T(0));
    fill(h + "ln2.g", {d}, T(1));
    fill(h + "ln2.b", {d}, T(0));
    randn(h + "mlp.w1", {d, config.d_ffn});
    fill(h + "mlp.b1", {config.d_ffn}, T(0));
    randn(h + "mlp.w2", {config.d_ffn, d});
    fill(h + "mlp.b2", {d}, T(0));
  }
  fill("lnf.g", {d}, T(1));
  fill("lnf.b", {d}, T(0));
  return p;
}

template <typename T>
template <typename U>
ModelParamsT<U> ModelParamsT<T>::cast() const {
  ModelParamsT<U> out;
  out.config = config;
  out.named.reserve(named.size());
  for (const auto& [name, t] : named) {
    TensorT<U> c(t.shape);
    for (size_t i = 0; i < t.data.size(); ++i) c.data[i] = static_cast<U>(t.data[i]);
    out.named.emplace_back(name, std::move(c));
  }
  return out;
}

namespace {

// Causal mask added to attention scores before row-softmax. A large finite
// negative keeps intermediate tensors finite; exp underflows to exactly 0.
template <typename T>
TensorT<T> causal_mask(int64_t n) {
  TensorT<T> m({n, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) m.at(i, j) = static_cast<T>(-1e9);
  return m;
}

}  // namespace

template <typename T>
ForwardBuildT<T> build_forward(GraphT<T>& g, const ModelParamsT<T>& params, std::span<const int32_t> tokens,
                               const ForwardOptionsT<T>& opt) {
  const ModelConfig& cfg = params.config;
  cfg.validate();
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n < 1) throw std::invalid_argument("forward: empty token sequence");
  if (n > cfg.context_size)
    throw std::invalid_argument("forward: over-length input (" + std::to_string(n) + " tokens, context " +
                                std::to_string(cfg.context_size) + ")");
  for (int32_t t : tokens)
    if (t < 0 || t >= cfg.vocab_size)
      throw std::invalid_argument("forward: out-of-range token id " + std::to_string(t) + " (vocab " +
                                  std::to_string(cfg.vocab_size) + ")");
  const bool pattern_preserving =
      opt.ablation && opt.ablation->mode == AblationMode::pattern_preserving && opt.recorded;
  if (opt.ablation) {
    for (const auto& [l, h] : opt.ablation->targets)
      if (l < 0 || l >= cfg.n_layer || h < 0 || h >= cfg.n_head)
        throw std::invalid_argument("ablation: target (" + std::to_string(l) + "," + std::to_string(h) +
                                    ") outside model with " + std::to_string(cfg.n_layer) + " layers, " +
                                    std::to_string(cfg.n_head) + " heads");
  }

  ForwardBuildT<T> fb;
  using Id = typename GraphT<T>::Id;
  fb.param_ids.reserve(params.named.size());
  for (const auto& [name, t] : params.named) fb.param_ids.push_back(g.input(t, opt.params_require_grad));
  auto pid = [&](const std::string& name) -> Id {
    for (size_t i = 0; i < params.named.size(); ++i)
      if (params.named[i].first == name) return fb.param_ids[i];
    throw std::logic_error("forward: missing parameter " + name);
  };

  std::vector<int32_t> tok_vec(tokens.begin(), tokens.end());
  std::vector<int32_t> pos_vec(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) pos_vec[static_cast<size_t>(i)] = static_cast<int32_t>(i);

  Id x = g.add(g.embedding_gather(pid("wte"), tok_vec), g.embedding_gather(pid("wpe"), pos_vec));

  Id mask = -1;
  if (cfg.n_layer > 0 && !pattern_preserving) mask = g.constant(causal_mask<T>(n));

  const int64_t dh = cfg.head_dim();
  const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  for (int l = 0; l < cfg.n_layer; ++l) {
    const std::string hp = "h" + std::to_string(l) + ".";
    Id a = g.layer_norm(x, pid(hp + "ln1.g"), pid(hp + "ln1.b"));
    Id v = g.add(g.matmul(a, pid(hp + "attn.wv")), pid(hp + "attn.bv"));
    Id q = -1, k = -1;
    if (!pattern_preserving) {
      q = g.add(g.matmul(a, pid(hp + "attn.wq")), pid(hp + "attn.bq"));
      k = g.add(g.matmul(a, pid(hp + "attn.wk")), pid(hp + "attn.bk"));
    }
    std::vector<Id> head_ctx;
    head_ctx.reserve(static_cast<size_t>(cfg.n_head));
    for (int h = 0; h < cfg.n_head; ++h) {
      const int64_t lo = h * dh, hi = (h + 1) * dh;
      Id vh = g.slice_cols(v, lo, hi);
      Id alpha;
      if (pattern_preserving) {
        const DMat& rec = opt.recorded->at(l, h);
        TensorT<T> w({n, n});
        for (int64_t i = 0; i < n * n; ++i) w.data[static_cast<size_t>(i)] = static_cast<T>(rec.v[static_cast<size_t>(i)]);
        alpha = g.constant(std::move(w));
      } else {
        Id scores = g.scale(g.matmul(g.slice_cols(q, lo, hi), g.slice_cols(k, lo, hi), false, true), inv_sqrt_dh);
        alpha = g.row_softmax(g.add(scores, mask));
      }
      fb.alpha.push_back(alpha);
      Id ctx = g.matmul(alpha, vh);
      if (opt.ablation && opt.ablation->targeted(l, h)) ctx = g.scale(ctx, T(0));
      head_ctx.push_back(ctx);
    }
    Id ctx = cfg.n_head == 1 ? head_ctx[0] : g.concat_cols(head_ctx);
    Id proj = g.add(g.matmul(ctx, pid(hp + "attn.wo")), pid(hp + "attn.bo"));
    x = g.add(x, proj);

    Id m = g.layer_norm(x, pid(hp + "ln2.g"), pid(hp + "ln2.b"));
    Id hidden = g.gelu(g.add(g.matmul(m, pid(hp + "mlp.w1")), pid(hp + "mlp.b1")));
    if (opt.noise_sigma > 0.0 && opt.noise_rng) {
      TensorT<T> noise({n, cfg.d_ffn});
      for (T& e : noise.data) e = static_cast<T>(opt.noise_rng->next_gauss(0.0, opt.noise_sigma));
      hidden = g.add(hidden, g.constant(std::move(noise)));
    }
    Id ff = g.add(g.matmul(hidden, pid(hp + "mlp.w2")), pid(hp + "mlp.b2"));
    x = g.add(x, ff);
  }

  x = g.layer_norm(x, pid("lnf.g"), pid("lnf.b"));
  fb.logits = g.matmul(x, pid("wte"), false, true);
  return fb;
}

namespace {

template <typename T>
AttentionTrace extract_trace_impl(const GraphT<T>& g, const ForwardBuildT<T>& fb, const ModelConfig& cfg) {
  AttentionTrace tr;
  tr.n_layer = cfg.n_layer;
  tr.n_head = cfg.n_head;
  tr.alpha.reserve(fb.alpha.size());
  for (auto id : fb.alpha) {
    const TensorT<T>& a = g.value(id);
    tr.seq = a.rows();
    DMat m(a.rows(), a.cols());
    for (size_t i = 0; i < a.data.size(); ++i) m.v[i] = static_cast<double>(a.data[i]);
    tr.alpha.push_back(std::move(m));
  }
  return tr;
}

}  // namespace

AttentionTrace extract_trace(const Graph& g, const ForwardBuildT<float>& fb, const ModelConfig& config) {
  return extract_trace_impl(g, fb, config);
}
AttentionTrace extract_trace(const GraphD& g, const ForwardBuildT<double>& fb, const ModelConfig& config) {
  return extract_trace_impl(g, fb, config);
}

std::pair<TensorF, AttentionTrace> forward_with_trace(const ModelParams& params, std::span<const int32_t> tokens,
                                                      const std::optional<NoiseSpec>& noise) {
  Graph g;
  ForwardOptionsT<float> opt;
  Rng noise_rng(0);
  if (noise && noise->sigma != 0.0) {
    if (!std::isfinite(noise->sigma) || noise->sigma < 0.0)
      throw std::invalid_argument("noise: sigma must be finite and >= 0");
    noise_rng = Rng(derive_seed(noise->seed, "gni"));
    opt.noise_sigma = noise->sigma;
    opt.noise_rng = &noise_rng;
  }
  ForwardBuildT<float> fb = build_forward(g, params, tokens, opt);
  return {g.value(fb.logits), extract_trace(g, fb, params.config)};
}

std::vector<double> compute_surprisals(const ModelParams& params, std::span<const int32_t> tokens) {
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n < 2) throw std::invalid_argument("surprisal: need at least 2 tokens");
  Graph g;
  ForwardBuildT<float> fb = build_forward(g, params, tokens);
  // per-row CE over all n rows; row i scores tokens[i+1], the last row's
  // target is a dummy and its loss is dropped
  std::vector<int32_t> targets(tokens.begin() + 1, tokens.end());
  targets.push_back(tokens[0]);
  auto ce = g.cross_entropy_with_logits(fb.logits, std::move(targets));
  std::vector<double> out(static_cast<size_t>(n), std::numeric_limits<double>::quiet_NaN());
  const TensorF& rows = g.value(ce);
  for (int64_t i = 1; i < n; ++i) out[static_cast<size_t>(i)] = static_cast<double>(rows.data[static_cast<size_t>(i - 1)]);
  return out;
}

std::pair<TensorF, AttentionTrace> ablated_forward(const ModelParams& params, std::span<const int32_t> tokens,
                                                   const AblationSpec& spec) {
  if (spec.targets.empty()) return forward_with_trace(params, tokens);
  if (spec.mode == AblationMode::full) {
    Graph g;
    ForwardOptionsT<float> opt;
    opt.ablation = &spec;
    ForwardBuildT<float> fb = build_forward(g, params, tokens, opt);
    return {g.value(fb.logits), extract_trace(g, fb, params.config)};
  }
  // pattern-preserving: run 1 records weights, run 2 replays them as constants
  Graph g1;
  ForwardBuildT<float> fb1 = build_forward(g1, params, tokens);
  AttentionTrace recorded = extract_trace(g1, fb1, params.config);
  Graph g2;
  ForwardOptionsT<float> opt;
  opt.ablation = &spec;
  opt.recorded = &recorded;
  ForwardBuildT<float> fb2 = build_forward(g2, params, tokens, opt);
  return {g2.value(fb2.logits), extract_trace(g2, fb2, params.config)};
}

template struct ModelParamsT<float>;
template struct ModelParamsT<double>;
template ModelParamsT<double> ModelParamsT<float>::cast<double>() const;
template ModelParamsT<float> ModelParamsT<double>::cast<float>() const;
template ForwardBuildT<float> build_forward<float>(GraphT<float>&, const ModelParamsT<float>&,
                                                   std::span<const int32_t>, const ForwardOptionsT<float>&);
template ForwardBuildT<double> build_forward<double>(GraphT<double>&, const ModelParamsT<double>&,
                                                     std::span<const int32_t>, const ForwardOptionsT<double>&);

}  // namespace ptlab
