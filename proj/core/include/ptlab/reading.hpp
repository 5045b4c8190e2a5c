#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ptlab {

struct ReadingRow {
  std::string item_id;
  int32_t word_index = 0;
  std::string word;
  double measure_ms = 0.0;
};

// CSV with header: item_id,word_index,word,measure_ms
struct ReadingTable {
  std::vector<ReadingRow> rows;

  // rows grouped by item in word_index order
  std::map<std::string, std::vector<const ReadingRow*>> by_item() const;
};

ReadingTable load_reading_table(const std::filesystem::path& path);
void save_reading_table(const std::filesystem::path& path, const ReadingTable& table);

// TSV: word<TAB>count. Feature value is log(count+1); unseen words count 0.
struct FreqTable {
  std::map<std::string, int64_t> counts;
  double log1p_count(const std::string& word) const;
};

FreqTable load_freq_table(const std::filesystem::path& path);
void save_freq_table(const std::filesystem::path& path, const FreqTable& table);

// spillover depth: previous 2 words for eye-tracking, previous 4 for
// self-paced reading
enum class SpilloverMode { eye_tracking, self_paced };
int spillover_k(SpilloverMode mode);

struct FeatureRow {
  std::string word_key;  // "item_id:word_index"
  double target = 0.0;
  double surprisal = 0.0, freq = 0.0, len = 0.0;
  std::vector<double> prev_surprisal, prev_freq, prev_len;  // 1..k words back
};

struct FeatureTable {
  SpilloverMode mode = SpilloverMode::eye_tracking;
  std::vector<FeatureRow> rows;
  int64_t dropped_rows = 0;  // lacked full spillover context
};

// word_surprisals: item_id -> per-word surprisal in table word order. Every
// table word must have a value; a missing one is an alignment error naming
// the item and index.
FeatureTable align_word_features(const ReadingTable& table,
                                 const std::map<std::string, std::vector<double>>& word_surprisals,
                                 const FreqTable& freqs, SpilloverMode mode);

}  // namespace ptlab
