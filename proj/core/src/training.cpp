#include "ptlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ptlab/checkpoint.hpp"
#include "ptlab/metrics.hpp"

namespace ptlab {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1 || grad_accumulation < 1) throw std::invalid_argument("train config: batch sizes must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    throw std::invalid_argument("train config: warmup_fraction must be in [0,1]");
  if (total_tokens == 0) throw std::invalid_argument("train config: total_tokens must be > 0");
  if (schedule != "cosine") throw std::invalid_argument("train config: unsupported schedule " + schedule);
  if (precision != "f32" && precision != "f64")
    throw std::invalid_argument("train config: precision must be f32 or f64");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw std::invalid_argument("train config: bad peak_lr");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw std::invalid_argument("train config: bad weight_decay");
}

void RegularizerSpec::validate() const {
  if (!std::isfinite(lambda)) throw std::invalid_argument("regularizer: lambda must be finite");
  if (!std::isfinite(sigma) || sigma < 0.0) throw std::invalid_argument("regularizer: sigma must be finite and >= 0");
  if (kind == RegKind::copy) synthetic.validate();
}

const char* reg_kind_name(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::sas: return "sas";
    case RegKind::copy: return "copy";
    case RegKind::gni: return "gni";
  }
  return "?";
}

RegKind reg_kind_from_name(const std::string& name) {
  if (name == "none") return RegKind::none;
  if (name == "sas") return RegKind::sas;
  if (name == "copy") return RegKind::copy;
  if (name == "gni") return RegKind::gni;
  throw std::invalid_argument("regularizer: unknown kind " + name);
}

std::string train_job_to_json(const TrainConfig& c, const std::vector<RegularizerSpec>& regularizers) {
  json j;
  j["train"] = {{"batch_size", c.batch_size},
                {"grad_accumulation", c.grad_accumulation},
                {"weight_decay", c.weight_decay},
                {"peak_lr", c.peak_lr},
                {"warmup_fraction", c.warmup_fraction},
                {"schedule", c.schedule},
                {"total_tokens", c.total_tokens},
                {"seed", c.seed},
                {"precision", c.precision}};
  json regs = json::array();
  for (const auto& r : regularizers) {
    json rj{{"kind", reg_kind_name(r.kind)}};
    if (r.kind == RegKind::sas || r.kind == RegKind::copy) rj["lambda"] = r.lambda;
    if (r.kind == RegKind::gni) rj["sigma"] = r.sigma;
    if (r.kind == RegKind::copy)
      rj["synthetic"] = {{"l_min", r.synthetic.l_min},
                         {"l_max", r.synthetic.l_max},
                         {"context", r.synthetic.context},
                         {"seed", r.synthetic.seed}};
    regs.push_back(std::move(rj));
  }
  j["regularizers"] = std::move(regs);
  return j.dump(2);
}

void train_job_from_json(const std::string& text, TrainConfig& config, std::vector<RegularizerSpec>& regularizers) {
  const json j = json::parse(text);
  const json& t = j.at("train");
  config.batch_size = t.value("batch_size", config.batch_size);
  config.grad_accumulation = t.value("grad_accumulation", config.grad_accumulation);
  config.weight_decay = t.value("weight_decay", config.weight_decay);
  config.peak_lr = t.value("peak_lr", config.peak_lr);
  config.warmup_fraction = t.value("warmup_fraction", config.warmup_fraction);
  config.schedule = t.value("schedule", config.schedule);
  config.total_tokens = t.value("total_tokens", config.total_tokens);
  config.seed = t.value("seed", config.seed);
  config.precision = t.value("precision", config.precision);
  config.validate();
  regularizers.clear();
  for (const auto& rj : j.value("regularizers", json::array())) {
    RegularizerSpec r;
    r.kind = reg_kind_from_name(rj.at("kind").get<std::string>());
    r.lambda = rj.value("lambda", 0.0);
    r.sigma = rj.value("sigma", 0.0);
    if (rj.contains("synthetic")) {
      const json& s = rj["synthetic"];
      r.synthetic.l_min = s.value("l_min", r.synthetic.l_min);
      r.synthetic.l_max = s.value("l_max", r.synthetic.l_max);
      r.synthetic.context = s.value("context", r.synthetic.context);
      r.synthetic.seed = s.value("seed", r.synthetic.seed);
    }
    r.validate();
    regularizers.push_back(std::move(r));
  }
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& config) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_at: step outside [0, total_steps]");
  if (total_steps == 0) return config.peak_lr;
  const double warmup = config.warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warmup) return config.peak_lr * s / warmup;
  const double span = static_cast<double>(total_steps) - warmup;
  if (span <= 0.0) return config.peak_lr;
  const double progress = (s - warmup) / span;
  return config.peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

std::vector<uint64_t> checkpoint_schedule(uint64_t total_tokens, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("schedule: scale must be > 0");
  std::vector<uint64_t> base;
  for (int k = 0; k < 10; ++k) base.push_back(500'000ull << k);  // 500K .. 256M
  for (uint64_t m = 1; m <= 20; ++m) base.push_back(500'000'000ull * m);  // 0.5B .. 10B
  std::set<uint64_t> pts;
  for (uint64_t p : base) {
    const uint64_t scaled = static_cast<uint64_t>(std::llround(static_cast<double>(p) * scale));
    if (scaled >= 1 && scaled <= total_tokens) pts.insert(scaled);
  }
  if (pts.empty())
    throw std::invalid_argument("schedule: total_tokens below the scaled 500K-equivalent first point");
  return {pts.begin(), pts.end()};
}

double sas_regularizer_term(const AttentionTrace& trace, const DepSentence& sentence,
                            std::span<const WordSpan> spans) {
  if (trace.empty()) return 0.0;
  if (spans.size() != sentence.words.size())
    throw std::invalid_argument("sas term: " + std::to_string(spans.size()) + " spans vs " +
                                std::to_string(sentence.words.size()) + " parsed words");
  const std::vector<DMat> word_alpha = word_level_attention(trace, spans);
  double acc = 0.0;
  for (const auto& m : word_alpha)
    for (const auto& e : sentence.deps) acc += m.at(e.child, e.parent);
  return acc / static_cast<double>(word_alpha.size());
}

double copy_regularizer_term(const AttentionTrace& trace, const DMat& pm) {
  if (trace.empty()) return 0.0;
  if (pm.rows != trace.seq || pm.cols != trace.seq)
    throw std::invalid_argument("copy term: pm map is " + std::to_string(pm.rows) + "x" + std::to_string(pm.cols) +
                                ", trace is " + std::to_string(trace.seq));
  for (int64_t i = 0; i < pm.rows; ++i)
    for (int64_t j = i + 1; j < pm.cols; ++j)
      if (pm.at(i, j) != 0.0)
        throw std::invalid_argument("copy term: pm target index out of causal range at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
  double acc = 0.0;
  for (const auto& a : trace.alpha)
    for (size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * pm.v[i];
  return acc / static_cast<double>(trace.alpha.size());
}

template <typename T>
typename GraphT<T>::Id attach_sas_term(GraphT<T>& g, const ForwardBuildT<T>& fb,
                                       const std::vector<AnnotatedSegment>& segments, int64_t seq_len) {
  using Id = typename GraphT<T>::Id;
  if (fb.alpha.empty() || segments.empty()) return g.constant(TensorT<T>({1}));

  // per-segment constants shared across heads
  struct SegIds {
    Id src_proj, dst_proj, dep_mask;
  };
  std::vector<SegIds> seg_ids;
  seg_ids.reserve(segments.size());
  for (const auto& seg : segments) {
    if (!seg.sentence || seg.spans.size() != seg.sentence->words.size())
      throw std::invalid_argument("sas term: segment spans do not match its parsed words");
    const int64_t w = static_cast<int64_t>(seg.spans.size());
    TensorT<T> src({w, seq_len});
    TensorT<T> dst({w, seq_len});
    for (int64_t wi = 0; wi < w; ++wi) {
      const WordSpan& s = seg.spans[static_cast<size_t>(wi)];
      if (s.lo < 0 || s.hi > seq_len || s.lo >= s.hi)
        throw std::invalid_argument("sas term: span outside sequence");
      const T inv = T(1) / static_cast<T>(s.hi - s.lo);
      for (int32_t t = s.lo; t < s.hi; ++t) {
        src.at(wi, t) = inv;
        dst.at(wi, t) = T(1);
      }
    }
    TensorT<T> mask({w, w});
    for (const auto& e : seg.sentence->deps) mask.at(e.child, e.parent) = T(1);
    seg_ids.push_back({g.constant(std::move(src)), g.constant(std::move(dst)), g.constant(std::move(mask))});
  }

  Id total = -1;
  for (Id alpha : fb.alpha) {
    for (const auto& ids : seg_ids) {
      Id word_alpha = g.matmul(g.matmul(ids.src_proj, alpha), ids.dst_proj, false, true);
      Id term = g.reduce_sum(g.mul(word_alpha, ids.dep_mask));
      total = total < 0 ? term : g.add(total, term);
    }
  }
  return g.scale(total, T(1) / static_cast<T>(fb.alpha.size()));
}

template <typename T>
typename GraphT<T>::Id attach_copy_term(GraphT<T>& g, const ForwardBuildT<T>& fb, const DMat& pm) {
  using Id = typename GraphT<T>::Id;
  if (fb.alpha.empty()) return g.constant(TensorT<T>({1}));
  TensorT<T> mask({pm.rows, pm.cols});
  for (size_t i = 0; i < pm.v.size(); ++i) mask.data[i] = static_cast<T>(pm.v[i]);
  const Id mask_id = g.constant(std::move(mask));
  Id total = -1;
  for (Id alpha : fb.alpha) {
    Id term = g.reduce_sum(g.mul(alpha, mask_id));
    total = total < 0 ? term : g.add(total, term);
  }
  return g.scale(total, T(1) / static_cast<T>(fb.alpha.size()));
}

template GraphT<float>::Id attach_sas_term<float>(GraphT<float>&, const ForwardBuildT<float>&,
                                                  const std::vector<AnnotatedSegment>&, int64_t);
template GraphT<double>::Id attach_sas_term<double>(GraphT<double>&, const ForwardBuildT<double>&,
                                                    const std::vector<AnnotatedSegment>&, int64_t);
template GraphT<float>::Id attach_copy_term<float>(GraphT<float>&, const ForwardBuildT<float>&, const DMat&);
template GraphT<double>::Id attach_copy_term<double>(GraphT<double>&, const ForwardBuildT<double>&, const DMat&);

namespace {

ModelParams to_f32(const ModelParamsT<float>& p) { return p; }
ModelParams to_f32(const ModelParamsT<double>& p) { return p.template cast<float>(); }

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  int64_t t = 0;
};

template <typename T>
void adamw_update(ModelParamsT<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state,
                  double lr, double weight_decay) {
  constexpr double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t pi = 0; pi < params.named.size(); ++pi) {
    auto& tensor = params.named[pi].second;
    // decoupled decay on weight matrices only; biases and gains are exempt
    const double wd = tensor.shape.size() >= 2 ? weight_decay : 0.0;
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    const auto& g = grads[pi];
    for (size_t i = 0; i < tensor.data.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps) + wd * static_cast<double>(tensor.data[i]);
      tensor.data[i] = static_cast<T>(static_cast<double>(tensor.data[i]) - lr * update);
    }
  }
}

template <typename T>
struct SlotResult {
  std::vector<std::vector<T>> grads;  // aligned with params.named
  double ce = 0.0;
  double reg = 0.0;
  int64_t tokens = 0;
  bool has_ce = false;
};

template <typename T>
double eval_mean_ce(const ModelParamsT<T>& params, const std::vector<TrainSequence>& seqs, int jobs) {
  if (seqs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> ce(seqs.size(), 0.0);
  std::vector<int64_t> counts(seqs.size(), 0);
  parallel_for(static_cast<int64_t>(seqs.size()), jobs, [&](int64_t i) {
    const auto& tokens = seqs[static_cast<size_t>(i)].tokens;
    if (tokens.size() < 2) return;
    GraphT<T> g;
    ForwardBuildT<T> fb = build_forward(g, params, tokens);
    std::vector<int32_t> targets(tokens.begin() + 1, tokens.end());
    targets.push_back(tokens[0]);
    auto rows = g.cross_entropy_with_logits(fb.logits, std::move(targets));
    const auto& v = g.value(rows);
    double acc = 0.0;
    for (size_t r = 0; r + 1 < v.data.size(); ++r) acc += static_cast<double>(v.data[r]);
    ce[static_cast<size_t>(i)] = acc;
    counts[static_cast<size_t>(i)] = static_cast<int64_t>(v.data.size()) - 1;
  });
  double total = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < ce.size(); ++i) {
    total += ce[i];
    n += counts[i];
  }
  return n > 0 ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

template <typename T>
TrainResult train_impl(const ModelConfig& mc, const TrainDataset& data, const TrainConfig& config,
                       const RegularizerSpec* sas, const RegularizerSpec* copy, const RegularizerSpec* gni,
                       const std::filesystem::path& ckpt_root, double schedule_scale, int jobs) {
  ModelParamsT<T> params = ModelParamsT<T>::init(mc, config.seed);
  AdamState<T> adam;
  adam.m.resize(params.named.size());
  adam.v.resize(params.named.size());
  for (size_t i = 0; i < params.named.size(); ++i) {
    adam.m[i].assign(params.named[i].second.data.size(), T(0));
    adam.v[i].assign(params.named[i].second.data.size(), T(0));
  }

  const bool sas_on = sas && sas->lambda != 0.0;
  const bool copy_on = copy && copy->lambda != 0.0;
  const bool gni_on = gni && gni->sigma != 0.0;
  if (copy_on && copy->synthetic.context > mc.context_size)
    throw std::invalid_argument("train: synthetic context exceeds model context");

  const int64_t clm_slots = config.batch_size * config.grad_accumulation;
  const int64_t syn_slots = copy_on ? config.batch_size : 0;
  const uint64_t nominal_step_tokens = static_cast<uint64_t>(clm_slots) * static_cast<uint64_t>(mc.context_size);
  const int64_t total_steps =
      std::max<int64_t>(1, static_cast<int64_t>((config.total_tokens + nominal_step_tokens - 1) / nominal_step_tokens));

  std::vector<uint64_t> schedule = checkpoint_schedule(config.total_tokens, schedule_scale);
  if (schedule.back() < config.total_tokens) schedule.push_back(config.total_tokens);

  if (data.train.empty()) throw std::invalid_argument("train: empty corpus");
  std::vector<size_t> order(data.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = 0;
  int64_t epoch = 0;
  auto reshuffle = [&]() {
    Rng r(derive_seed(config.seed, "data-order") + static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.next_below(i)]);
    cursor = 0;
  };
  reshuffle();

  Rng syn_rng(derive_seed(config.seed, "copy-batches"));
  const uint64_t gni_base = derive_seed(config.seed, "gni");

  TrainResult result;
  uint64_t tokens_seen = 0;
  size_t sched_idx = 0;

  auto save_at = [&](uint64_t nominal_tokens, int64_t step) {
    const std::filesystem::path dir = ckpt_root / ("ckpt_" + std::to_string(nominal_tokens));
    save_checkpoint(dir, to_f32(params), CheckpointMeta{nominal_tokens, step, config.seed});
    result.checkpoints.emplace_back(nominal_tokens, dir);
  };

  for (int64_t step = 0; step < total_steps; ++step) {
    // assemble the step's CLM sequences and, for copy runs, a fresh synthetic batch
    std::vector<const TrainSequence*> clm(static_cast<size_t>(clm_slots));
    for (auto& slot : clm) {
      if (cursor >= order.size()) {
        ++epoch;
        reshuffle();
      }
      slot = &data.train[order[cursor++]];
    }
    RepeatedBatch syn;
    if (copy_on) syn = generate_repeated_sequences(copy->synthetic, syn_slots, data.vocab_size, syn_rng);

    const int64_t n_slots = clm_slots + syn_slots;
    std::vector<SlotResult<T>> slots(static_cast<size_t>(n_slots));

    parallel_for(n_slots, jobs, [&](int64_t si) {
      SlotResult<T>& out = slots[static_cast<size_t>(si)];
      out.grads.resize(params.named.size());
      GraphT<T> g;
      ForwardBuildT<T> fb;
      typename GraphT<T>::Id loss = -1;
      if (si < clm_slots) {
        const TrainSequence& seq = *clm[static_cast<size_t>(si)];
        const int64_t n = static_cast<int64_t>(seq.tokens.size());
        if (n < 2) throw std::invalid_argument("train: sequence shorter than 2 tokens");
        ForwardOptionsT<T> opt;
        opt.params_require_grad = true;
        Rng noise_rng(gni_base + static_cast<uint64_t>(step) * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(si));
        if (gni_on) {
          opt.noise_sigma = gni->sigma;
          opt.noise_rng = &noise_rng;
        }
        fb = build_forward(g, params, seq.tokens, opt);
        std::vector<int32_t> targets(seq.tokens.begin() + 1, seq.tokens.end());
        targets.push_back(seq.tokens[0]);
        auto ce_rows = g.cross_entropy_with_logits(fb.logits, std::move(targets));
        TensorT<T> mask({n});
        for (int64_t i = 0; i + 1 < n; ++i) mask.data[static_cast<size_t>(i)] = T(1);
        auto ce_mean = g.scale(g.reduce_sum(g.mul(ce_rows, g.constant(std::move(mask)))), T(1) / static_cast<T>(n - 1));
        out.ce = static_cast<double>(g.value(ce_mean).data[0]);
        out.has_ce = true;
        out.tokens = n;
        loss = ce_mean;
        if (sas_on && !seq.segments.empty()) {
          auto term = attach_sas_term(g, fb, seq.segments, n);
          out.reg = sas->lambda * static_cast<double>(g.value(term).data[0]);
          loss = g.add(loss, g.scale(term, static_cast<T>(sas->lambda)));
        }
        loss = g.scale(loss, T(1) / static_cast<T>(clm_slots));
      } else {
        const size_t k = static_cast<size_t>(si - clm_slots);
        ForwardOptionsT<T> opt;
        opt.params_require_grad = true;
        fb = build_forward(g, params, syn.sequences[k], opt);
        auto term = attach_copy_term(g, fb, pm_mask(copy->synthetic.context, syn.periods[k]));
        out.reg = copy->lambda * static_cast<double>(g.value(term).data[0]);
        loss = g.scale(term, static_cast<T>(copy->lambda) / static_cast<T>(syn_slots));
      }
      g.backward(loss);
      for (size_t pi = 0; pi < params.named.size(); ++pi) {
        const auto id = fb.param_ids[pi];
        if (g.has_grad(id)) out.grads[pi] = g.grad(id).data;
      }
    });

    // grads summed in slot order; identical result for any jobs setting
    std::vector<std::vector<T>> grads(params.named.size());
    for (size_t pi = 0; pi < params.named.size(); ++pi) grads[pi].assign(params.named[pi].second.data.size(), T(0));
    for (const auto& slot : slots)
      for (size_t pi = 0; pi < grads.size(); ++pi) {
        if (slot.grads[pi].empty()) continue;
        auto& dst = grads[pi];
        const auto& src = slot.grads[pi];
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }

    double clm_loss = 0.0, reg_loss = 0.0;
    int64_t ce_count = 0;
    for (const auto& slot : slots) {
      if (slot.has_ce) {
        clm_loss += slot.ce;
        ++ce_count;
      }
      reg_loss += slot.reg;
      tokens_seen += static_cast<uint64_t>(slot.tokens);
    }
    clm_loss /= static_cast<double>(std::max<int64_t>(ce_count, 1));
    reg_loss /= static_cast<double>(std::max<int64_t>(clm_slots, 1));

    if (!std::isfinite(clm_loss) || !std::isfinite(reg_loss)) {
      const auto dir = ckpt_root / "diverged";
      save_checkpoint(dir, to_f32(params), CheckpointMeta{tokens_seen, step, config.seed});
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               "; diagnostic snapshot in " + dir.string());
    }

    adamw_update(params, grads, adam, lr_at(step, total_steps, config), config.weight_decay);
    result.curve.push_back({step, tokens_seen, clm_loss, reg_loss, std::nullopt});

    while (sched_idx < schedule.size() && tokens_seen >= schedule[sched_idx]) {
      if (!data.val.empty()) result.curve.back().val_loss = eval_mean_ce(params, data.val, jobs);
      save_at(schedule[sched_idx], step);
      ++sched_idx;
    }
  }

  if (result.checkpoints.empty()) {
    if (!data.val.empty()) result.curve.back().val_loss = eval_mean_ce(params, data.val, jobs);
    save_at(tokens_seen, total_steps - 1);
  }
  result.final_params = to_f32(params);
  return result;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainDataset& data, const TrainConfig& config,
                  const std::vector<RegularizerSpec>& regularizers, const std::filesystem::path& checkpoint_root,
                  double schedule_scale, int jobs) {
  model_config.validate();
  config.validate();
  const RegularizerSpec *sas = nullptr, *copy = nullptr, *gni = nullptr;
  for (const auto& r : regularizers) {
    r.validate();
    switch (r.kind) {
      case RegKind::none: break;
      case RegKind::sas:
        if (sas) throw std::invalid_argument("train: duplicate sas regularizer");
        sas = &r;
        break;
      case RegKind::copy:
        if (copy) throw std::invalid_argument("train: duplicate copy regularizer");
        copy = &r;
        break;
      case RegKind::gni:
        if (gni) throw std::invalid_argument("train: duplicate gni regularizer");
        gni = &r;
        break;
    }
  }
  std::filesystem::create_directories(checkpoint_root);
  if (config.precision == "f64")
    return train_impl<double>(model_config, data, config, sas, copy, gni, checkpoint_root, schedule_scale, jobs);
  return train_impl<float>(model_config, data, config, sas, copy, gni, checkpoint_root, schedule_scale, jobs);
}

void write_loss_curve_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("loss curve: cannot write " + path.string());
  out << "step,tokens_seen,clm_loss,reg_loss,val_loss\n";
  char buf[64];
  for (const auto& p : curve) {
    out << p.step << "," << p.tokens_seen << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", p.clm_loss);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", p.reg_loss);
    out << buf << ",";
    if (p.val_loss) {
      std::snprintf(buf, sizeof(buf), "%.17g", *p.val_loss);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace ptlab
