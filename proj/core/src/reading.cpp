#include "ptlab/reading.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ptlab {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  // measures and indices never contain commas; plain split is enough here
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

std::map<std::string, std::vector<const ReadingRow*>> ReadingTable::by_item() const {
  std::map<std::string, std::vector<const ReadingRow*>> out;
  for (const auto& r : rows) out[r.item_id].push_back(&r);
  for (auto& [item, ptrs] : out)
    std::stable_sort(ptrs.begin(), ptrs.end(),
                     [](const ReadingRow* a, const ReadingRow* b) { return a->word_index < b->word_index; });
  return out;
}

ReadingTable load_reading_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("reading table: cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("reading table: empty file " + path.string());
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != "item_id,word_index,word,measure_ms")
    throw std::runtime_error("reading table: " + path.string() +
                             ": expected header item_id,word_index,word,measure_ms, got '" + line + "'");
  ReadingTable table;
  std::set<std::pair<std::string, int32_t>> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (cols.size() != 4)
      throw std::runtime_error("reading table: " + path.string() + ":" + std::to_string(line_no) +
                               ": expected 4 columns, got " + std::to_string(cols.size()));
    ReadingRow r;
    r.item_id = cols[0];
    try {
      r.word_index = static_cast<int32_t>(std::stol(cols[1]));
      r.measure_ms = std::stod(cols[3]);
    } catch (const std::exception&) {
      throw std::runtime_error("reading table: " + path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    r.word = cols[2];
    if (!(r.measure_ms > 0))
      throw std::runtime_error("reading table: " + path.string() + ":" + std::to_string(line_no) +
                               ": measure must be > 0");
    if (!seen.emplace(r.item_id, r.word_index).second)
      throw std::runtime_error("reading table: " + path.string() + ":" + std::to_string(line_no) + ": duplicate (" +
                               r.item_id + "," + std::to_string(r.word_index) + ")");
    table.rows.push_back(std::move(r));
  }
  return table;
}

void save_reading_table(const std::filesystem::path& path, const ReadingTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("reading table: cannot write " + path.string());
  out << "item_id,word_index,word,measure_ms\n";
  char buf[64];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.measure_ms);
    out << r.item_id << "," << r.word_index << "," << r.word << "," << buf << "\n";
  }
}

double FreqTable::log1p_count(const std::string& word) const {
  auto it = counts.find(word);
  const double c = it == counts.end() ? 0.0 : static_cast<double>(it->second);
  return std::log(c + 1.0);
}

FreqTable load_freq_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("freq table: cannot read " + path.string());
  FreqTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("freq table: " + path.string() + ":" + std::to_string(line_no) + ": missing tab");
    try {
      t.counts[line.substr(0, tab)] = std::stoll(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw std::runtime_error("freq table: " + path.string() + ":" + std::to_string(line_no) + ": bad count");
    }
  }
  return t;
}

void save_freq_table(const std::filesystem::path& path, const FreqTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("freq table: cannot write " + path.string());
  for (const auto& [w, c] : table.counts) out << w << "\t" << c << "\n";
}

int spillover_k(SpilloverMode mode) { return mode == SpilloverMode::eye_tracking ? 2 : 4; }

FeatureTable align_word_features(const ReadingTable& table,
                                 const std::map<std::string, std::vector<double>>& word_surprisals,
                                 const FreqTable& freqs, SpilloverMode mode) {
  FeatureTable out;
  out.mode = mode;
  const int k = spillover_k(mode);
  for (const auto& [item, rows] : table.by_item()) {
    auto sit = word_surprisals.find(item);
    if (sit == word_surprisals.end())
      throw std::invalid_argument("align: item " + item + " has no surprisals (unalignable)");
    const std::vector<double>& surp = sit->second;
    if (surp.size() != rows.size())
      throw std::invalid_argument("align: item " + item + ": " + std::to_string(rows.size()) + " table words vs " +
                                  std::to_string(surp.size()) + " surprisal entries");
    for (size_t i = 0; i < rows.size(); ++i) {
      if (!std::isfinite(surp[i]))
        throw std::invalid_argument("align: item " + item + " word " + std::to_string(rows[i]->word_index) +
                                    ": non-finite surprisal (unalignable)");
      if (i < static_cast<size_t>(k)) {
        ++out.dropped_rows;  // sentence-initial region lacks spillover context
        continue;
      }
      FeatureRow fr;
      fr.word_key = item + ":" + std::to_string(rows[i]->word_index);
      fr.target = rows[i]->measure_ms;
      fr.surprisal = surp[i];
      fr.freq = freqs.log1p_count(rows[i]->word);
      fr.len = static_cast<double>(rows[i]->word.size());
      for (int back = 1; back <= k; ++back) {
        const size_t j = i - static_cast<size_t>(back);
        fr.prev_surprisal.push_back(surp[j]);
        fr.prev_freq.push_back(freqs.log1p_count(rows[j]->word));
        fr.prev_len.push_back(static_cast<double>(rows[j]->word.size()));
      }
      out.rows.push_back(std::move(fr));
    }
  }
  return out;
}

}  // namespace ptlab
