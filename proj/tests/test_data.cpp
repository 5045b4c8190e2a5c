#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ptlab/conllu.hpp"
#include "ptlab/reading.hpp"
#include "ptlab/synthetic.hpp"
#include "ptlab/tokenizer.hpp"

using namespace ptlab;

TEST_CASE("whitespace tokenization of in-vocab words yields one token per word") {
  std::vector<std::string> docs{"a b a b"};
  Vocab v = Vocab::build(docs, 4096);
  auto corpus = tokenize(docs, v);
  REQUIRE(corpus.documents.size() == 1);
  CHECK(corpus.documents[0].size() == 4);
  REQUIRE(corpus.word_spans[0].size() == 4);
  for (const auto& s : corpus.word_spans[0]) CHECK(s.hi - s.lo == 1);
  CHECK(corpus.documents[0][0] == corpus.documents[0][2]);
  CHECK(corpus.documents[0][1] == corpus.documents[0][3]);
}

TEST_CASE("out-of-vocab words fall back to bytes under one multi-token span") {
  std::vector<std::string> docs{"hello hello hello zzz"};
  Vocab v = Vocab::build(docs, Vocab::kWordBase + 1);  // room for "hello" only
  auto corpus = tokenize(docs, v);
  const auto& spans = corpus.word_spans[0];
  REQUIRE(spans.size() == 4);
  CHECK(spans[0].hi - spans[0].lo == 1);
  CHECK(spans[3].hi - spans[3].lo == 4);  // z z z <eow>
  CHECK(corpus.documents[0][spans[3].hi - 1] == Vocab::kEow);
}

TEST_CASE("tokenize then detokenize round-trips whitespace-normalized text") {
  // frequency-capped vocab forces some byte fallback
  std::vector<std::string> docs;
  Rng rng(20240);
  const std::vector<std::string> lexicon{"alpha", "beta",  "gamma", "delta", "epsilon", "zeta12",
                                         "eta",   "theta", "i-ota", "kappa", "лямбда",  "mu"};
  for (int d = 0; d < 1000; ++d) {
    std::string line;
    const int n = 3 + static_cast<int>(rng.next_below(9));
    for (int i = 0; i < n; ++i) {
      if (i) line += ' ';
      line += lexicon[rng.next_below(lexicon.size())];
    }
    docs.push_back(line);
  }
  Vocab v = Vocab::build(docs, Vocab::kWordBase + 5);
  auto corpus = tokenize(docs, v);
  for (size_t d = 0; d < docs.size(); ++d) CHECK(detokenize(corpus.documents[d], v) == docs[d]);
}

TEST_CASE("word spans partition every document") {
  std::vector<std::string> docs{"one two three", "four five", "unknownword two"};
  Vocab v = Vocab::build(docs, Vocab::kWordBase + 4);
  auto corpus = tokenize(docs, v);
  for (size_t d = 0; d < docs.size(); ++d) {
    int32_t expect = 0;
    for (const auto& s : corpus.word_spans[d]) {
      CHECK(s.lo == expect);
      CHECK(s.hi > s.lo);
      expect = s.hi;
    }
    CHECK(expect == static_cast<int32_t>(corpus.documents[d].size()));
  }
}

TEST_CASE("empty corpus is an error") {
  std::vector<std::string> empty;
  CHECK_THROWS_AS(Vocab::build(empty, 1000), std::invalid_argument);
  Vocab v;
  CHECK_THROWS_AS(tokenize(empty, v), std::invalid_argument);
}

TEST_CASE("pretokenized round-trip with document separators") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "ptlab_pretok.bin";
  std::vector<std::vector<int32_t>> docs{{5, 6, 7}, {9}, {10, 11}};
  save_pretokenized(path, docs, Vocab::kDocSep);
  auto loaded = load_pretokenized(path, Vocab::kDocSep);
  CHECK(loaded == docs);
  fs::remove(path);
}

TEST_CASE("conllu parsing builds the child-parent mapping") {
  std::istringstream in(
      "# sent_id = 7\n"
      "1\tdogs\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
      "2\tbark\t_\t_\t_\t_\t0\troot\t_\t_\n"
      "\n");
  auto text = parse_conllu(in);
  REQUIRE(text.sentences.size() == 1);
  const auto& s = text.sentences[0];
  CHECK(s.sent_id == "7");
  CHECK(s.words == std::vector<std::string>{"dogs", "bark"});
  REQUIRE(s.deps.size() == 1);
  CHECK(s.deps[0].child == 0);
  CHECK(s.deps[0].parent == 1);
  CHECK(s.deps[0].relation == "nsubj");
  CHECK(s.parents_of(0) == std::vector<int32_t>{1});
  CHECK(s.parents_of(1).empty());
}

TEST_CASE("punct relations count and multiword tokens are skipped") {
  std::istringstream in(
      "1-2\tcannot\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "1\tcan\t_\t_\t_\t_\t0\troot\t_\t_\n"
      "2\tnot\t_\t_\t_\t_\t1\tadvmod\t_\t_\n"
      "3\t.\t_\t_\t_\t_\t1\tpunct\t_\t_\n"
      "\n");
  auto text = parse_conllu(in);
  REQUIRE(text.sentences.size() == 1);
  CHECK(text.sentences[0].words.size() == 3);
  auto counts = text.relation_counts();
  CHECK(counts.at("punct") == 1);
  CHECK(counts.at("advmod") == 1);
  CHECK(counts.count("root") == 0);
}

TEST_CASE("conllu relation counts match an independent line count on a generated file") {
  // build a 50-sentence file, then count relation labels straight off the text
  std::ostringstream file;
  Rng rng(9);
  std::map<std::string, int64_t> expected;
  for (int s = 0; s < 50; ++s) {
    const int n = 2 + static_cast<int>(rng.next_below(5));
    for (int i = 1; i <= n; ++i) {
      const bool root = i == 1;
      const std::string rel = root ? "root" : (rng.next_below(2) ? "det" : "obj");
      const int head = root ? 0 : 1;
      if (!root) ++expected[rel];
      file << i << "\tw" << i << "\t_\t_\t_\t_\t" << head << "\t" << rel << "\t_\t_\n";
    }
    file << "\n";
  }
  std::istringstream in(file.str());
  auto text = parse_conllu(in);
  CHECK(text.sentences.size() == 50);
  auto counts = text.relation_counts();
  CHECK(counts.size() == expected.size());
  for (const auto& [rel, cnt] : expected) CHECK(counts.at(rel) == cnt);
}

TEST_CASE("conllu error paths carry line numbers") {
  std::istringstream bad_cols("1\tonly\tthree\n\n");
  CHECK_THROWS_WITH_AS(parse_conllu(bad_cols), doctest::Contains(":1:"), std::runtime_error);
  std::istringstream cyclic(
      "1\ta\t_\t_\t_\t_\t2\tdep\t_\t_\n"
      "2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n"
      "\n");
  CHECK_THROWS_WITH_AS(parse_conllu(cyclic), doctest::Contains("cyclic"), std::runtime_error);
  std::istringstream self_loop("1\ta\t_\t_\t_\t_\t1\tdep\t_\t_\n\n");
  CHECK_THROWS_AS(parse_conllu(self_loop), std::runtime_error);
}

TEST_CASE("repeated sequences with a forced period repeat exactly") {
  SyntheticSpec spec;
  spec.l_min = spec.l_max = 50;
  spec.context = 256;
  spec.seed = 5;
  auto batch = generate_repeated_sequences(spec, 8, 64);
  for (const auto& seq : batch.sequences) {
    REQUIRE(seq.size() == 256);
    for (size_t i = 50; i < seq.size(); ++i) CHECK(seq[i] == seq[i - 50]);
  }
}

TEST_CASE("prefix-match positions agree with a brute-force window search") {
  SyntheticSpec spec;
  spec.l_min = 4;
  spec.l_max = 12;
  spec.context = 96;
  spec.seed = 6;
  auto batch = generate_repeated_sequences(spec, 20, 1000);
  for (size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = batch.sequences[s];
    const int64_t l = batch.periods[s];
    // brute force: j is prefix-matching for i when the l-gram ending at j-1
    // equals the l-gram ending at i; checked where both windows exist
    for (int64_t i = 2 * l; i < static_cast<int64_t>(seq.size()); ++i) {
      std::vector<int64_t> brute;
      for (int64_t j = l; j <= i; ++j) {
        bool match = true;
        for (int64_t k = 0; k < l && match; ++k) match = seq[static_cast<size_t>(j - 1 - k)] == seq[static_cast<size_t>(i - k)];
        if (match) brute.push_back(j);
      }
      auto closed = prefix_match_positions(i, l);
      std::sort(closed.begin(), closed.end());
      std::vector<int64_t> closed_in_range;
      for (int64_t j : closed)
        if (j >= l) closed_in_range.push_back(j);
      CHECK(brute == closed_in_range);
    }
  }
}

TEST_CASE("period lengths are uniform by chi-square") {
  SyntheticSpec spec;
  spec.l_min = 10;
  spec.l_max = 19;  // 10 cells
  spec.context = 64;
  spec.seed = 7;
  auto batch = generate_repeated_sequences(spec, 10000, 50);
  std::map<int64_t, int64_t> hist;
  for (int64_t l : batch.periods) ++hist[l];
  CHECK(hist.size() == 10);
  const double expected = 1000.0;
  double chi2 = 0.0;
  for (const auto& [l, c] : hist) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  // chi-square critical value, 9 dof, alpha = 0.01
  CHECK(chi2 < 21.666);
}

TEST_CASE("synthetic validation errors") {
  SyntheticSpec bad;
  bad.l_min = 100;
  bad.l_max = 50;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  SyntheticSpec too_long;
  too_long.l_min = 1;
  too_long.l_max = 600;
  too_long.context = 1024;
  CHECK_THROWS_AS(too_long.validate(), std::invalid_argument);
  SyntheticSpec ok;
  ok.l_min = ok.l_max = 4;
  ok.context = 16;
  CHECK_THROWS_AS(generate_repeated_sequences(ok, 1, 1), std::invalid_argument);  // vocab too small
}

TEST_CASE("reading table and frequency table round-trip and validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ptlab_reading";
  fs::create_directories(dir);

  ReadingTable t;
  t.rows = {{"item1", 0, "the", 210.0}, {"item1", 1, "dog", 250.5}, {"item2", 0, "cats", 300.0}};
  save_reading_table(dir / "rt.csv", t);
  auto loaded = load_reading_table(dir / "rt.csv");
  REQUIRE(loaded.rows.size() == 3);
  CHECK(loaded.rows[1].word == "dog");
  CHECK(loaded.rows[1].measure_ms == doctest::Approx(250.5));

  std::ofstream(dir / "bad.csv") << "item_id,word_index,word,measure_ms\nitem1,0,the,210\nitem1,0,the,211\n";
  CHECK_THROWS_WITH_AS(load_reading_table(dir / "bad.csv"), doctest::Contains("duplicate"), std::runtime_error);
  std::ofstream(dir / "neg.csv") << "item_id,word_index,word,measure_ms\nitem1,0,the,0\n";
  CHECK_THROWS_AS(load_reading_table(dir / "neg.csv"), std::runtime_error);

  FreqTable f;
  f.counts = {{"the", 1000}, {"dog", 10}};
  save_freq_table(dir / "freq.tsv", f);
  auto floaded = load_freq_table(dir / "freq.tsv");
  CHECK(floaded.log1p_count("the") == doctest::Approx(std::log(1001.0)));
  CHECK(floaded.log1p_count("unseen") == 0.0);
  CHECK(floaded.log1p_count("dog") > floaded.log1p_count("unseen"));  // monotone in count
  fs::remove_all(dir);
}

TEST_CASE("feature alignment drops the spillover-less prefix and matches a hand-built sheet") {
  ReadingTable t;
  for (int i = 0; i < 5; ++i)
    t.rows.push_back({"it", i, std::string(static_cast<size_t>(i + 2), 'w'), 100.0 + 10.0 * i});
  std::map<std::string, std::vector<double>> surp{{"it", {1.0, 2.0, 3.0, 4.0, 5.0}}};
  FreqTable freqs;
  freqs.counts["wwww"] = 7;  // word at index 2

  auto feats = align_word_features(t, surp, freqs, SpilloverMode::eye_tracking);
  CHECK(feats.dropped_rows == 2);  // first word has no previous features, second lacks prev2
  REQUIRE(feats.rows.size() == 3);
  const auto& r = feats.rows[0];  // word index 2
  CHECK(r.word_key == "it:2");
  CHECK(r.target == doctest::Approx(120.0));
  CHECK(r.surprisal == doctest::Approx(3.0));
  CHECK(r.len == doctest::Approx(4.0));
  CHECK(r.freq == doctest::Approx(std::log(8.0)));
  REQUIRE(r.prev_surprisal.size() == 2);
  CHECK(r.prev_surprisal[0] == doctest::Approx(2.0));  // one back
  CHECK(r.prev_surprisal[1] == doctest::Approx(1.0));  // two back
  CHECK(r.prev_len[0] == doctest::Approx(3.0));
  CHECK(r.prev_len[1] == doctest::Approx(2.0));
  CHECK(r.prev_freq[0] == doctest::Approx(0.0));

  // self-paced mode uses four previous words
  auto feats4 = align_word_features(t, surp, freqs, SpilloverMode::self_paced);
  CHECK(feats4.dropped_rows == 4);
  REQUIRE(feats4.rows.size() == 1);
  CHECK(feats4.rows[0].prev_surprisal.size() == 4);

  // a word split into two tokens carries the summed surprisal upstream;
  // alignment itself rejects mismatched word counts
  std::map<std::string, std::vector<double>> short_surp{{"it", {1.0, 2.0}}};
  CHECK_THROWS_WITH_AS(align_word_features(t, short_surp, freqs, SpilloverMode::eye_tracking),
                       doctest::Contains("it"), std::invalid_argument);
  std::map<std::string, std::vector<double>> missing;
  CHECK_THROWS_AS(align_word_features(t, missing, freqs, SpilloverMode::eye_tracking), std::invalid_argument);
}
