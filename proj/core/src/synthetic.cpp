#include "ptlab/synthetic.hpp"

#include <stdexcept>

namespace ptlab {

void SyntheticSpec::validate() const {
  if (l_min < 1 || l_min > l_max || l_max > context / 2)
    throw std::invalid_argument("synthetic spec: need 1 <= l_min <= l_max <= context/2, got l_min=" +
                                std::to_string(l_min) + " l_max=" + std::to_string(l_max) + " context=" +
                                std::to_string(context));
}

RepeatedBatch generate_repeated_sequences(const SyntheticSpec& spec, int64_t n, int64_t vocab_size) {
  Rng rng(derive_seed(spec.seed, "repeated-sequences"));
  return generate_repeated_sequences(spec, n, vocab_size, rng);
}

RepeatedBatch generate_repeated_sequences(const SyntheticSpec& spec, int64_t n, int64_t vocab_size, Rng& rng) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("synthetic: n must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("synthetic: vocab must have at least 2 tokens");
  RepeatedBatch batch;
  batch.sequences.reserve(static_cast<size_t>(n));
  batch.periods.reserve(static_cast<size_t>(n));
  for (int64_t s = 0; s < n; ++s) {
    const int64_t l = spec.l_min + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.l_max - spec.l_min + 1)));
    std::vector<int32_t> block(static_cast<size_t>(l));
    for (auto& t : block) t = static_cast<int32_t>(rng.next_below(static_cast<uint64_t>(vocab_size)));
    std::vector<int32_t> seq(static_cast<size_t>(spec.context));
    for (int64_t i = 0; i < spec.context; ++i) seq[static_cast<size_t>(i)] = block[static_cast<size_t>(i % l)];
    batch.sequences.push_back(std::move(seq));
    batch.periods.push_back(l);
  }
  return batch;
}

std::vector<int64_t> prefix_match_positions(int64_t i, int64_t period) {
  std::vector<int64_t> out;
  for (int64_t n = 1; i - n * period >= 0; ++n) out.push_back(i - n * period + 1);
  return out;
}

DMat pm_mask(int64_t seq_len, int64_t period) {
  if (period < 1) throw std::invalid_argument("pm_mask: period must be >= 1");
  DMat m(seq_len, seq_len);
  for (int64_t i = 0; i < seq_len; ++i)
    for (int64_t j : prefix_match_positions(i, period)) {
      if (j > i) throw std::logic_error("pm_mask: target outside causal range");
      m.at(i, j) = 1.0;
    }
  return m;
}

}  // namespace ptlab
