#include "ptlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ptlab {

void MetricSeries::validate() const {
  for (size_t i = 0; i + 1 < points.size(); ++i)
    if (points[i + 1].tokens_seen <= points[i].tokens_seen)
      throw std::invalid_argument("metric series " + name + ": tokens_seen must be strictly increasing");
  for (const auto& p : points)
    if (!std::isfinite(p.value)) throw std::invalid_argument("metric series " + name + ": non-finite value");
}

void ICLConfig::validate() const {
  if (early_lo < 0 || early_lo > early_hi || late_lo > late_hi || early_hi >= late_lo)
    throw std::invalid_argument("icl config: windows must be ordered and disjoint");
}

namespace {

void check_spans(std::span<const WordSpan> spans, int64_t seq) {
  int32_t expect = 0;
  for (const auto& s : spans) {
    if (s.lo != expect || s.hi <= s.lo)
      throw std::invalid_argument("word spans do not partition the token sequence at token " + std::to_string(expect));
    expect = s.hi;
  }
  if (expect != seq)
    throw std::invalid_argument("word spans cover " + std::to_string(expect) + " tokens, trace has " +
                                std::to_string(seq));
}

}  // namespace

DMat word_level_attention(const DMat& token_alpha, std::span<const WordSpan> spans) {
  check_spans(spans, token_alpha.rows);
  const int64_t w = static_cast<int64_t>(spans.size());
  DMat out(w, w);
  for (int64_t wi = 0; wi < w; ++wi) {
    const auto& src = spans[static_cast<size_t>(wi)];
    const double inv = 1.0 / static_cast<double>(src.hi - src.lo);
    for (int64_t wj = 0; wj < w; ++wj) {
      const auto& dst = spans[static_cast<size_t>(wj)];
      double acc = 0.0;
      for (int32_t t = src.lo; t < src.hi; ++t)
        for (int32_t u = dst.lo; u < dst.hi; ++u) acc += token_alpha.at(t, u);
      out.at(wi, wj) = acc * inv;
    }
  }
  return out;
}

std::vector<DMat> word_level_attention(const AttentionTrace& trace, std::span<const WordSpan> spans) {
  std::vector<DMat> out;
  out.reserve(trace.alpha.size());
  for (const auto& a : trace.alpha) out.push_back(word_level_attention(a, spans));
  return out;
}

std::vector<double> prefix_matching_score(const AttentionTrace& trace, std::span<const int32_t> tokens,
                                          PsBounds bounds) {
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n % 2 != 0 || n < 4) throw std::invalid_argument("prefix matching score: need a twice-repeated sequence, |x| >= 2");
  const int64_t L = n / 2;
  for (int64_t i = L; i < n; ++i)
    if (tokens[static_cast<size_t>(i)] != tokens[static_cast<size_t>(i - L)])
      throw std::invalid_argument("prefix matching score: aperiodic input at position " + std::to_string(i));
  if (trace.seq != n) throw std::invalid_argument("prefix matching score: trace length != token length");

  const int64_t first = bounds == PsBounds::normalized ? L + 1 : L;
  std::vector<double> out;
  out.reserve(trace.alpha.size());
  for (const auto& a : trace.alpha) {
    double acc = 0.0;
    for (int64_t p = first; p < n; ++p) acc += a.at(p, p - (L - 1));
    out.push_back(acc / static_cast<double>(L - 1));
  }
  return out;
}

double icl_score(const std::vector<std::vector<double>>& per_position_losses, const ICLConfig& config) {
  config.validate();
  if (per_position_losses.empty()) throw std::invalid_argument("icl score: need at least one sequence");
  double total = 0.0;
  for (const auto& losses : per_position_losses) {
    if (static_cast<int64_t>(losses.size()) <= config.late_hi)
      throw std::invalid_argument("icl score: sequence of length " + std::to_string(losses.size()) +
                                  " shorter than late window end " + std::to_string(config.late_hi));
    double early = 0.0, late = 0.0;
    for (int64_t j = config.early_lo; j <= config.early_hi; ++j) early += losses[static_cast<size_t>(j)];
    for (int64_t k = config.late_lo; k <= config.late_hi; ++k) late += losses[static_cast<size_t>(k)];
    early /= static_cast<double>(config.early_hi - config.early_lo + 1);
    late /= static_cast<double>(config.late_hi - config.late_lo + 1);
    total += early - late;
  }
  return total / static_cast<double>(per_position_losses.size());
}

namespace {

int64_t argmax_row(const DMat& m, int64_t i) {
  int64_t best = 0;
  double best_v = m.at(i, 0);
  for (int64_t j = 1; j < m.cols; ++j)
    if (m.at(i, j) > best_v) {
      best_v = m.at(i, j);
      best = j;
    }
  return best;
}

bool is_dep_pair(const DepSentence& s, int64_t a, int64_t b) {
  for (const auto& e : s.deps)
    if ((e.child == a && e.parent == b) || (e.child == b && e.parent == a)) return true;
  return false;
}

}  // namespace

std::vector<double> head_sas_score(const std::vector<DMat>& word_alpha_per_head, const DepSentence& sentence) {
  if (word_alpha_per_head.empty()) throw std::invalid_argument("sas score: no heads");
  const int64_t w = word_alpha_per_head[0].rows;
  if (w != static_cast<int64_t>(sentence.words.size()))
    throw std::invalid_argument("sas score: trace has " + std::to_string(w) + " words, sentence has " +
                                std::to_string(sentence.words.size()));
  std::vector<double> out;
  out.reserve(word_alpha_per_head.size());
  for (const auto& m : word_alpha_per_head) {
    int64_t hits = 0;
    for (int64_t i = 0; i < w; ++i)
      if (is_dep_pair(sentence, i, argmax_row(m, i))) ++hits;
    out.push_back(static_cast<double>(hits) / static_cast<double>(w));
  }
  return out;
}

SasCorpusResult head_sas_score_corpus(const std::vector<SentenceTraceView>& sentences, int n_heads) {
  SasCorpusResult res;
  std::vector<int64_t> hits(static_cast<size_t>(n_heads), 0);
  int64_t total_words = 0;
  for (const auto& sv : sentences) {
    if (!sv.sentence || sv.sentence->deps.empty()) {
      ++res.sentences_skipped;
      continue;
    }
    ++res.sentences_used;
    const int64_t w = static_cast<int64_t>(sv.sentence->words.size());
    total_words += w;
    for (int h = 0; h < n_heads; ++h) {
      const DMat& m = (*sv.word_alpha)[static_cast<size_t>(h)];
      for (int64_t i = 0; i < w; ++i)
        if (is_dep_pair(*sv.sentence, i, argmax_row(m, i))) ++hits[static_cast<size_t>(h)];
    }
  }
  res.per_head.resize(static_cast<size_t>(n_heads), 0.0);
  if (total_words > 0)
    for (int h = 0; h < n_heads; ++h)
      res.per_head[static_cast<size_t>(h)] = static_cast<double>(hits[static_cast<size_t>(h)]) / static_cast<double>(total_words);
  return res;
}

UasResult uas(const std::vector<SentenceTraceView>& sentences, int n_layer, int n_head, bool scaled) {
  const int heads = n_layer * n_head;
  if (heads <= 0) throw std::invalid_argument("uas: model has no attention heads");

  // directed probe weight between i and j: exactly one attention edge exists
  auto weight = [&](const DMat& m, int64_t i, int64_t j, int64_t n) -> double {
    if (j < i) return m.at(i, j);
    double wgt = m.at(j, i);
    if (scaled) wgt *= static_cast<double>(i + 1 + n) / (2.0 * static_cast<double>(i + 1));
    return wgt;
  };

  // predictions[h][sentence][word]
  std::vector<std::vector<std::vector<int64_t>>> pred(static_cast<size_t>(heads));
  for (auto& p : pred) p.resize(sentences.size());
  std::set<std::string> relations;
  int64_t total_pairs = 0;
  for (size_t s = 0; s < sentences.size(); ++s) {
    const auto& sv = sentences[s];
    if (!sv.sentence || sv.sentence->deps.empty()) continue;
    const int64_t w = static_cast<int64_t>(sv.sentence->words.size());
    total_pairs += static_cast<int64_t>(sv.sentence->deps.size());
    for (const auto& e : sv.sentence->deps) relations.insert(e.relation);
    for (int h = 0; h < heads; ++h) {
      const DMat& m = (*sv.word_alpha)[static_cast<size_t>(h)];
      auto& out = pred[static_cast<size_t>(h)][s];
      out.resize(static_cast<size_t>(w), -1);
      for (int64_t i = 0; i < w; ++i) {
        int64_t best = -1;
        double best_v = 0.0;
        for (int64_t j = 0; j < w; ++j) {
          if (j == i) continue;
          const double v = weight(m, i, j, w);
          if (best < 0 || v > best_v) {
            best = j;
            best_v = v;
          }
        }
        out[static_cast<size_t>(i)] = best;
      }
    }
  }
  if (relations.empty() || total_pairs == 0) throw std::invalid_argument("uas: empty relation set");

  UasResult res;
  double weighted = 0.0;
  for (const auto& rel : relations) {
    int64_t pairs = 0;
    int best_head = 0;
    int64_t best_hits = -1;
    for (int h = 0; h < heads; ++h) {
      int64_t hits = 0;
      int64_t count = 0;
      for (size_t s = 0; s < sentences.size(); ++s) {
        const auto& sv = sentences[s];
        if (!sv.sentence || sv.sentence->deps.empty()) continue;
        for (const auto& e : sv.sentence->deps) {
          if (e.relation != rel) continue;
          ++count;
          if (pred[static_cast<size_t>(h)][s][static_cast<size_t>(e.child)] == e.parent) ++hits;
        }
      }
      pairs = count;
      if (hits > best_hits) {
        best_hits = hits;
        best_head = h;
      }
    }
    const double recall = static_cast<double>(best_hits) / static_cast<double>(pairs);
    res.best_heads.push_back({rel, best_head / n_head, best_head % n_head, recall, pairs});
    weighted += recall * static_cast<double>(pairs);
  }
  res.uas = weighted / static_cast<double>(total_pairs);
  return res;
}

std::optional<MetricPoint> detect_breakthrough(const MetricSeries& series, const BreakthroughConfig& config) {
  if (series.points.empty()) throw std::invalid_argument("breakthrough: empty series");
  if (!(config.threshold > 0)) throw std::invalid_argument("breakthrough: threshold must be > 0");
  series.validate();
  for (const auto& p : series.points)
    if (p.value > config.threshold) return p;
  return std::nullopt;
}

}  // namespace ptlab
