#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ptlab {

// Whitespace tokenizer with a frequency-capped word vocabulary and byte
// fallback. Layout: <bos>, <doc>, <eow>, 256 byte tokens, then word tokens.
// An out-of-vocabulary word encodes as its UTF-8 bytes followed by <eow>.
struct Vocab {
  static constexpr int32_t kBos = 0;
  static constexpr int32_t kDocSep = 1;
  static constexpr int32_t kEow = 2;
  static constexpr int32_t kByteBase = 3;
  static constexpr int32_t kWordBase = kByteBase + 256;

  std::vector<std::string> words;  // id = kWordBase + index
  std::unordered_map<std::string, int32_t> word_to_id;

  int64_t size() const { return kWordBase + static_cast<int64_t>(words.size()); }
  bool is_word(int32_t id) const { return id >= kWordBase && id < size(); }
  bool is_byte(int32_t id) const { return id >= kByteBase && id < kWordBase; }

  // Most frequent words first (count desc, then lexicographic) up to max_size
  // total ids. Deterministic for a fixed corpus.
  static Vocab build(const std::vector<std::string>& docs, int64_t max_size);

  void save_tsv(const std::filesystem::path& path) const;
  static Vocab load_tsv(const std::filesystem::path& path);
};

struct WordSpan {
  int32_t lo = 0;
  int32_t hi = 0;  // token range [lo, hi)
};

struct TokenizedCorpus {
  std::vector<std::vector<int32_t>> documents;
  std::vector<std::vector<WordSpan>> word_spans;  // per document, per word
  Vocab vocab;
};

// One document per line, UTF-8; empty lines are dropped.
std::vector<std::string> read_text_corpus(const std::filesystem::path& path);

TokenizedCorpus tokenize(const std::vector<std::string>& docs, const Vocab& vocab);

// tokens and spans for one whitespace-split word list
std::pair<std::vector<int32_t>, std::vector<WordSpan>> tokenize_words(const std::vector<std::string>& words,
                                                                      const Vocab& vocab);

// Inverse of tokenize up to whitespace normalization: single spaces between
// words; <bos>/<doc> ignored.
std::string detokenize(const std::vector<int32_t>& tokens, const Vocab& vocab);

// Pre-tokenized corpus interchange: uint32 little-endian ids, documents
// separated by the given separator id.
std::vector<std::vector<int32_t>> load_pretokenized(const std::filesystem::path& path, int32_t doc_sep_id);
void save_pretokenized(const std::filesystem::path& path, const std::vector<std::vector<int32_t>>& docs,
                       int32_t doc_sep_id);

}  // namespace ptlab
