#include "ptlab/tokenizer.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ptlab {

static_assert(std::endian::native == std::endian::little, "pretokenized corpora are little-endian");

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string w;
  while (is >> w) out.push_back(std::move(w));
  return out;
}

}  // namespace

Vocab Vocab::build(const std::vector<std::string>& docs, int64_t max_size) {
  if (docs.empty()) throw std::invalid_argument("vocab: empty corpus");
  if (max_size < kWordBase) max_size = kWordBase;
  std::map<std::string, int64_t> counts;  // ordered map keeps ties deterministic
  for (const auto& d : docs)
    for (auto& w : split_ws(d)) ++counts[w];

  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v;
  const int64_t budget = max_size - kWordBase;
  for (const auto& [w, c] : ranked) {
    if (static_cast<int64_t>(v.words.size()) >= budget) break;
    v.word_to_id.emplace(w, static_cast<int32_t>(kWordBase + v.words.size()));
    v.words.push_back(w);
  }
  return v;
}

void Vocab::save_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("vocab: cannot write " + path.string());
  for (size_t i = 0; i < words.size(); ++i) out << words[i] << "\t" << (kWordBase + i) << "\n";
}

Vocab Vocab::load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot read " + path.string());
  Vocab v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("vocab: " + path.string() + ":" + std::to_string(line_no) + ": missing tab");
    const std::string word = line.substr(0, tab);
    const int32_t id = static_cast<int32_t>(std::stol(line.substr(tab + 1)));
    if (id != static_cast<int32_t>(kWordBase + v.words.size()))
      throw std::runtime_error("vocab: " + path.string() + ":" + std::to_string(line_no) + ": ids must be dense from " +
                               std::to_string(kWordBase));
    v.word_to_id.emplace(word, id);
    v.words.push_back(word);
  }
  return v;
}

std::vector<std::string> read_text_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("corpus: cannot read " + path.string());
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) docs.push_back(line);
  }
  return docs;
}

std::pair<std::vector<int32_t>, std::vector<WordSpan>> tokenize_words(const std::vector<std::string>& words,
                                                                      const Vocab& vocab) {
  std::vector<int32_t> tokens;
  std::vector<WordSpan> spans;
  spans.reserve(words.size());
  for (const auto& w : words) {
    const int32_t lo = static_cast<int32_t>(tokens.size());
    auto it = vocab.word_to_id.find(w);
    if (it != vocab.word_to_id.end()) {
      tokens.push_back(it->second);
    } else {
      for (unsigned char c : w) tokens.push_back(Vocab::kByteBase + static_cast<int32_t>(c));
      tokens.push_back(Vocab::kEow);
    }
    spans.push_back({lo, static_cast<int32_t>(tokens.size())});
  }
  return {std::move(tokens), std::move(spans)};
}

TokenizedCorpus tokenize(const std::vector<std::string>& docs, const Vocab& vocab) {
  if (docs.empty()) throw std::invalid_argument("tokenize: empty corpus");
  TokenizedCorpus out;
  out.vocab = vocab;
  out.documents.reserve(docs.size());
  out.word_spans.reserve(docs.size());
  for (const auto& d : docs) {
    auto [toks, spans] = tokenize_words(split_ws(d), vocab);
    out.documents.push_back(std::move(toks));
    out.word_spans.push_back(std::move(spans));
  }
  return out;
}

std::string detokenize(const std::vector<int32_t>& tokens, const Vocab& vocab) {
  std::string out;
  std::string pending;  // byte-fallback word under construction
  auto flush_word = [&](const std::string& w) {
    if (!out.empty()) out += ' ';
    out += w;
  };
  for (int32_t id : tokens) {
    if (id == Vocab::kBos || id == Vocab::kDocSep) continue;
    if (id == Vocab::kEow) {
      flush_word(pending);
      pending.clear();
    } else if (vocab.is_byte(id)) {
      pending += static_cast<char>(id - Vocab::kByteBase);
    } else if (vocab.is_word(id)) {
      flush_word(vocab.words[static_cast<size_t>(id - Vocab::kWordBase)]);
    } else {
      throw std::invalid_argument("detokenize: id " + std::to_string(id) + " outside vocab of size " +
                                  std::to_string(vocab.size()));
    }
  }
  if (!pending.empty()) flush_word(pending);
  return out;
}

std::vector<std::vector<int32_t>> load_pretokenized(const std::filesystem::path& path, int32_t doc_sep_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pretokenized: cannot read " + path.string());
  std::vector<std::vector<int32_t>> docs;
  std::vector<int32_t> cur;
  uint32_t word = 0;
  while (in.read(reinterpret_cast<char*>(&word), sizeof(word))) {
    if (static_cast<int32_t>(word) == doc_sep_id) {
      if (!cur.empty()) docs.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<int32_t>(word));
    }
  }
  if (!cur.empty()) docs.push_back(std::move(cur));
  return docs;
}

void save_pretokenized(const std::filesystem::path& path, const std::vector<std::vector<int32_t>>& docs,
                       int32_t doc_sep_id) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("pretokenized: cannot write " + path.string());
  auto put = [&](int32_t v) {
    const uint32_t w = static_cast<uint32_t>(v);
    out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  };
  for (size_t i = 0; i < docs.size(); ++i) {
    if (i) put(doc_sep_id);
    for (int32_t t : docs[i]) put(t);
  }
}

}  // namespace ptlab
