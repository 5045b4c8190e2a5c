#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ptlab/conllu.hpp"
#include "ptlab/model.hpp"
#include "ptlab/synthetic.hpp"
#include "ptlab/tokenizer.hpp"

namespace ptlab {

struct TrainConfig {
  int64_t batch_size = 4;
  int64_t grad_accumulation = 1;
  double weight_decay = 0.1;
  double peak_lr = 5e-4;
  double warmup_fraction = 0.01;
  std::string schedule = "cosine";
  uint64_t total_tokens = 0;
  uint64_t seed = 0;
  std::string precision = "f32";  // f32 | f64

  void validate() const;
};

enum class RegKind { none, sas, copy, gni };

struct RegularizerSpec {
  RegKind kind = RegKind::none;
  double lambda = 0.0;       // sas / copy weight; negative promotes
  double sigma = 0.0;        // gni noise stddev
  SyntheticSpec synthetic;   // copy batches

  void validate() const;
};

const char* reg_kind_name(RegKind k);
RegKind reg_kind_from_name(const std::string& name);

// External interface: one JSON document carrying the train config and the
// active regularizer specs.
std::string train_job_to_json(const TrainConfig& config, const std::vector<RegularizerSpec>& regularizers);
void train_job_from_json(const std::string& text, TrainConfig& config, std::vector<RegularizerSpec>& regularizers);

// linear warmup to peak over warmup_fraction of total steps, cosine decay to 0
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& config);

// log-spaced {500K, 1M, ..., 256M} then even {0.5B, 1B, ..., 10B}, each
// multiplied by scale and truncated to total_tokens
std::vector<uint64_t> checkpoint_schedule(uint64_t total_tokens, double scale = 1.0);

// ---- regularizer terms measured on a recorded trace ----

// Eq-style dependency attention mass: word-level attention summed over
// child->parent pairs, averaged over heads and layers.
double sas_regularizer_term(const AttentionTrace& trace, const DepSentence& sentence,
                            std::span<const WordSpan> spans);

// attention mass on prefix-matching positions, averaged over heads and layers
double copy_regularizer_term(const AttentionTrace& trace, const DMat& pm);

// ---- differentiable versions recorded onto a forward graph ----

struct AnnotatedSegment {
  std::vector<WordSpan> spans;  // absolute token positions within the sequence
  const DepSentence* sentence = nullptr;
};

template <typename T>
typename GraphT<T>::Id attach_sas_term(GraphT<T>& g, const ForwardBuildT<T>& fb,
                                       const std::vector<AnnotatedSegment>& segments, int64_t seq_len);

template <typename T>
typename GraphT<T>::Id attach_copy_term(GraphT<T>& g, const ForwardBuildT<T>& fb, const DMat& pm);

// ---- training loop ----

struct TrainSequence {
  std::vector<int32_t> tokens;
  std::vector<AnnotatedSegment> segments;  // parses for the sas term; may be empty
};

struct TrainDataset {
  std::vector<TrainSequence> train;
  std::vector<TrainSequence> val;
  int64_t vocab_size = 0;
};

struct LossPoint {
  int64_t step = 0;
  uint64_t tokens_seen = 0;
  double clm_loss = 0.0;
  double reg_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  std::vector<std::pair<uint64_t, std::filesystem::path>> checkpoints;  // nominal schedule tokens -> dir
  std::vector<LossPoint> curve;
  ModelParams final_params;
};

// Deterministic for a fixed seed regardless of the jobs setting: gradients
// accumulate into per-sequence buffers that are summed in sequence order.
TrainResult train(const ModelConfig& model_config, const TrainDataset& data, const TrainConfig& config,
                  const std::vector<RegularizerSpec>& regularizers, const std::filesystem::path& checkpoint_root,
                  double schedule_scale = 1.0, int jobs = 1);

void write_loss_curve_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

}  // namespace ptlab
