#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace ptlab {

struct DepEdge {
  int32_t child = 0;   // 0-based word index within the sentence
  int32_t parent = 0;  // 0-based; root rows (HEAD=0) produce no edge
  std::string relation;
};

struct DepSentence {
  std::string sent_id;  // from "# sent_id = ..." when present
  std::vector<std::string> words;
  std::vector<DepEdge> deps;  // ordered child -> parent pairs

  // D(x_i): parent indices of word i (at most one in a tree)
  std::vector<int32_t> parents_of(int32_t word) const;
};

struct DepAnnotatedText {
  std::vector<DepSentence> sentences;

  // relation label -> total ordered pair count across sentences
  std::map<std::string, int64_t> relation_counts() const;
};

// Multiword token rows (1-2) and empty nodes (1.1) are skipped. Malformed
// lines and cyclic head chains are errors with the offending line number.
DepAnnotatedText parse_conllu(std::istream& in, const std::string& source_name = "<stream>");
DepAnnotatedText load_conllu(const std::filesystem::path& path);

void write_conllu(const std::filesystem::path& path, const DepAnnotatedText& text);

}  // namespace ptlab
