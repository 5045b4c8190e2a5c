#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptlab/common.hpp"
#include "ptlab/metrics.hpp"
#include "ptlab/reading.hpp"

namespace ptlab {

struct RegressionSpec {
  SpilloverMode mode = SpilloverMode::eye_tracking;
  bool include_surprisal = false;
};

struct FitResult {
  std::vector<double> coefficients;  // intercept first, then feature columns
  double residual_variance = 0.0;    // maximum-likelihood estimate, floored at 1e-12
  std::vector<double> row_log_densities;
  double total_ll = 0.0;
  int64_t n_rows = 0;
};

// Ordinary least squares with a Gaussian likelihood at the MLE variance.
// X excludes the intercept; one is always prepended. Rank deficiency is an
// error naming the collinear columns; with drop_aliased the aliased columns
// get zero coefficients instead (fitted values are unchanged either way).
FitResult fit_gaussian_ols(const DMat& features, std::span<const double> target,
                           const std::vector<std::string>* column_names = nullptr, bool drop_aliased = false);

// feature matrix for a spec, in the order: surprisal block (if included),
// frequency block, length block; each block is current word then 1..k back
DMat build_design(const FeatureTable& table, bool include_surprisal, std::vector<std::string>* names = nullptr);

struct DeltaLLResult {
  double delta_ll = 0.0;
  std::vector<std::string> word_keys;
  std::vector<double> per_word;  // row log-density differences; sums to delta_ll
  FitResult base;
  FitResult full;
};

DeltaLLResult delta_ll(const FeatureTable& table);

struct DeltaDeltaLLResult {
  double value = 0.0;
  std::vector<std::string> word_keys;
  std::vector<double> per_word;
};

// ablated minus baseline, paired per word
DeltaDeltaLLResult delta_delta_ll(const DeltaLLResult& baseline, const DeltaLLResult& ablated);

struct PermutationOptions {
  int64_t n_perm = 10000;
  uint64_t seed = 0;
  bool two_sided = false;       // one-sided "greater or equal" by default
  double bonferroni_factor = 1.0;
};

// Within-pair label swaps of (a_i, b_i); statistic is the mean difference.
// Monte-Carlo p with the add-one estimator, so p is in (0, 1].
double permutation_test(std::span<const double> a, std::span<const double> b, const PermutationOptions& opt = {});

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;  // two-sided t-test
  int64_t n = 0;
};

PearsonResult pearson_r(std::span<const double> x, std::span<const double> y);

// tanh of the weight-averaged atanh(r)
double fisher_z_weighted_mean(std::span<const double> rs, std::span<const double> weights);

struct PrePostCorrelation {
  std::optional<PearsonResult> pre;
  std::optional<PearsonResult> post;
};

// Pearson r between loss and delta-LL over checkpoints strictly before vs
// at-or-after the breakthrough. A side with fewer than 3 shared checkpoints
// is reported absent; without a breakthrough everything counts as pre.
PrePostCorrelation pre_post_transition_correlation(const MetricSeries& loss, const MetricSeries& delta_ll_series,
                                                   std::optional<uint64_t> breakthrough_tokens);

// regularized incomplete beta, exposed for the stats tests
double reg_incomplete_beta(double a, double b, double x);

}  // namespace ptlab
