#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptlab/common.hpp"
#include "ptlab/conllu.hpp"
#include "ptlab/model.hpp"
#include "ptlab/tokenizer.hpp"

namespace ptlab {

struct MetricPoint {
  uint64_t tokens_seen = 0;
  double value = 0.0;
};

struct MetricSeries {
  std::string name;
  std::string model_id;
  std::vector<MetricPoint> points;  // tokens_seen strictly increasing

  void validate() const;
};

struct ICLConfig {
  // inclusive 0-based positions into the per-token loss sequence
  int64_t early_lo = 40, early_hi = 60;
  int64_t late_lo = 450, late_hi = 550;

  void validate() const;
};

struct BreakthroughConfig {
  double threshold = 0.1;
};

// Token-level to word-level attention: sum over destination tokens of a
// word, mean over its source tokens. Rows stay stochastic.
DMat word_level_attention(const DMat& token_alpha, std::span<const WordSpan> spans);
std::vector<DMat> word_level_attention(const AttentionTrace& trace, std::span<const WordSpan> spans);

// Eq-2 summation bounds. The literal bounds keep |x| terms over the 1/(|x|-1)
// normalizer, so a perfect copier scores |x|/(|x|-1); the normalized bounds
// drop the first second-repetition position so the maximum is exactly 1.
enum class PsBounds { normalized, literal };

// tokens must be a length-2|x| sequence with token_i == token_{i-|x|}
std::vector<double> prefix_matching_score(const AttentionTrace& trace, std::span<const int32_t> tokens,
                                          PsBounds bounds = PsBounds::normalized);

// mean early-window loss minus mean late-window loss, averaged over sequences
double icl_score(const std::vector<std::vector<double>>& per_position_losses, const ICLConfig& config);

// Proportion of words whose argmax attention edge (ties to the lowest index)
// hits a dependency child-parent pair in either direction. One entry per
// head, layer-major.
std::vector<double> head_sas_score(const std::vector<DMat>& word_alpha_per_head, const DepSentence& sentence);

struct SentenceTraceView {
  const std::vector<DMat>* word_alpha = nullptr;  // per head, layer-major
  const DepSentence* sentence = nullptr;
};

struct SasCorpusResult {
  std::vector<double> per_head;
  int64_t sentences_used = 0;
  int64_t sentences_skipped = 0;  // unparsed
};

SasCorpusResult head_sas_score_corpus(const std::vector<SentenceTraceView>& sentences, int n_heads);

struct UasBestHead {
  std::string relation;
  int layer = 0;
  int head = 0;
  double recall = 0.0;
  int64_t pair_count = 0;
};

struct UasResult {
  double uas = 0.0;
  std::vector<UasBestHead> best_heads;
};

// Head probe: parent(i) = argmax over j != i of the single directed weight
// between i and j (row weight when j < i, column weight from j's row when
// j > i), unscaled by default. The scaled variant multiplies forward edges
// by (i + n) / (2 i) with 1-based i and sentence length n, compensating the
// expected-mass gap between backward and forward edges.
UasResult uas(const std::vector<SentenceTraceView>& sentences, int n_layer, int n_head, bool scaled = false);

// min { c : f(c) > t }
std::optional<MetricPoint> detect_breakthrough(const MetricSeries& series, const BreakthroughConfig& config);

}  // namespace ptlab
