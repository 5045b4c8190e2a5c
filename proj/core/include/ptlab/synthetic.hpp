#pragma once

#include <cstdint>
#include <vector>

#include "ptlab/common.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

// Repeated random sequences: a fresh random block of length l, drawn
// uniformly from [l_min, l_max], tiled until the context is full.
struct SyntheticSpec {
  int64_t l_min = 50;
  int64_t l_max = 512;
  int64_t context = 1024;
  uint64_t seed = 0;

  void validate() const;
};

struct RepeatedBatch {
  std::vector<std::vector<int32_t>> sequences;  // each of length spec.context
  std::vector<int64_t> periods;
};

RepeatedBatch generate_repeated_sequences(const SyntheticSpec& spec, int64_t n, int64_t vocab_size);
RepeatedBatch generate_repeated_sequences(const SyntheticSpec& spec, int64_t n, int64_t vocab_size, Rng& rng);

// PM(x_i) for a sequence of period l, 0-based: { i - n*l + 1 : n >= 1, i - n*l >= 0 }
std::vector<int64_t> prefix_match_positions(int64_t i, int64_t period);

// 0/1 mask with mask(i, j) = 1 iff j is a prefix-matching position of i;
// strictly lower-triangular by construction
DMat pm_mask(int64_t seq_len, int64_t period);

}  // namespace ptlab
