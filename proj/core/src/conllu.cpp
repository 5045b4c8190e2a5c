#include "ptlab/conllu.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ptlab {

std::vector<int32_t> DepSentence::parents_of(int32_t word) const {
  std::vector<int32_t> out;
  for (const auto& e : deps)
    if (e.child == word) out.push_back(e.parent);
  return out;
}

std::map<std::string, int64_t> DepAnnotatedText::relation_counts() const {
  std::map<std::string, int64_t> out;
  for (const auto& s : sentences)
    for (const auto& e : s.deps) ++out[e.relation];
  return out;
}

namespace {

struct RawRow {
  int32_t id;    // 1-based
  std::string form;
  int32_t head;  // 0 = root
  std::string deprel;
};

[[noreturn]] void fail(const std::string& src, int line_no, const std::string& what) {
  throw std::runtime_error("conllu: " + src + ":" + std::to_string(line_no) + ": " + what);
}

void finish_sentence(std::vector<RawRow>& rows, std::string& sent_id, DepAnnotatedText& out,
                     const std::string& src, int line_no) {
  if (rows.empty()) return;
  DepSentence s;
  s.sent_id = std::move(sent_id);
  sent_id.clear();
  const int32_t n = static_cast<int32_t>(rows.size());
  for (int32_t i = 0; i < n; ++i) {
    if (rows[static_cast<size_t>(i)].id != i + 1) fail(src, line_no, "word ids are not dense 1..n");
    s.words.push_back(rows[static_cast<size_t>(i)].form);
  }
  for (const auto& r : rows) {
    if (r.head == 0) continue;  // root: no child-parent pair
    if (r.head < 0 || r.head > n) fail(src, line_no, "head " + std::to_string(r.head) + " out of range");
    if (r.head == r.id) fail(src, line_no, "self-loop at word " + std::to_string(r.id));
    s.deps.push_back({r.id - 1, r.head - 1, r.deprel});
  }
  // cycle check: follow parent chains; a tree terminates at the root
  for (int32_t start = 0; start < n; ++start) {
    int32_t cur = start;
    int32_t hops = 0;
    while (true) {
      const auto ps = s.parents_of(cur);
      if (ps.empty()) break;
      cur = ps[0];
      if (++hops > n) fail(src, line_no, "cyclic heads reachable from word " + std::to_string(start + 1));
    }
  }
  rows.clear();
  out.sentences.push_back(std::move(s));
}

}  // namespace

DepAnnotatedText parse_conllu(std::istream& in, const std::string& source_name) {
  DepAnnotatedText out;
  std::vector<RawRow> rows;
  std::string sent_id;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) {
      finish_sentence(rows, sent_id, out, source_name, line_no);
      continue;
    }
    if (line[0] == '#') {
      const std::string key = "# sent_id = ";
      if (line.rfind(key, 0) == 0) sent_id = line.substr(key.size());
      continue;
    }
    std::vector<std::string> cols;
    {
      std::string col;
      std::istringstream is(line);
      while (std::getline(is, col, '\t')) cols.push_back(col);
    }
    if (cols.size() < 8) fail(source_name, line_no, "expected >= 8 tab-separated columns, got " + std::to_string(cols.size()));
    const std::string& id_str = cols[0];
    if (id_str.find('-') != std::string::npos || id_str.find('.') != std::string::npos) continue;  // MWT / empty node
    RawRow r;
    try {
      r.id = static_cast<int32_t>(std::stol(id_str));
    } catch (const std::exception&) {
      fail(source_name, line_no, "bad word id '" + id_str + "'");
    }
    r.form = cols[1];
    const std::string& head_str = cols[6];
    if (head_str == "_") fail(source_name, line_no, "missing HEAD column");
    try {
      r.head = static_cast<int32_t>(std::stol(head_str));
    } catch (const std::exception&) {
      fail(source_name, line_no, "bad head '" + head_str + "'");
    }
    r.deprel = cols[7];
    rows.push_back(std::move(r));
  }
  finish_sentence(rows, sent_id, out, source_name, line_no);
  return out;
}

DepAnnotatedText load_conllu(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("conllu: cannot read " + path.string());
  return parse_conllu(in, path.string());
}

void write_conllu(const std::filesystem::path& path, const DepAnnotatedText& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("conllu: cannot write " + path.string());
  for (const auto& s : text.sentences) {
    if (!s.sent_id.empty()) out << "# sent_id = " << s.sent_id << "\n";
    for (size_t i = 0; i < s.words.size(); ++i) {
      int32_t head = 0;
      std::string rel = "root";
      for (const auto& e : s.deps) {
        if (e.child == static_cast<int32_t>(i)) {
          head = e.parent + 1;
          rel = e.relation;
          break;
        }
      }
      out << (i + 1) << "\t" << s.words[i] << "\t_\t_\t_\t_\t" << head << "\t" << rel << "\t_\t_\n";
    }
    out << "\n";
  }
}

}  // namespace ptlab
