#include "ptlab/ppp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "ptlab/rng.hpp"

namespace ptlab {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kVarianceFloor = 1e-12;
}  // namespace

FitResult fit_gaussian_ols(const DMat& features, std::span<const double> target,
                           const std::vector<std::string>* column_names, bool drop_aliased) {
  const int64_t n = features.rows;
  const int64_t k = features.cols;
  if (n != static_cast<int64_t>(target.size()))
    throw std::invalid_argument("ols: feature rows " + std::to_string(n) + " != target length " +
                                std::to_string(target.size()));
  if (n <= k + 1)
    throw std::invalid_argument("ols: need more rows (" + std::to_string(n) + ") than features incl. intercept (" +
                                std::to_string(k + 1) + ")");

  Eigen::MatrixXd X(n, k + 1);
  X.col(0).setOnes();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j) X(i, j + 1) = features.at(i, j);
  Eigen::Map<const Eigen::VectorXd> y(target.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k + 1 && !drop_aliased) {
    const auto perm = qr.colsPermutation().indices();
    std::string bad;
    for (int64_t j = qr.rank(); j < k + 1; ++j) {
      const int64_t col = perm[j];
      if (!bad.empty()) bad += ", ";
      if (col == 0)
        bad += "intercept";
      else if (column_names && col - 1 < static_cast<int64_t>(column_names->size()))
        bad += (*column_names)[static_cast<size_t>(col - 1)];
      else
        bad += "column " + std::to_string(col - 1);
    }
    throw std::invalid_argument("ols: rank-deficient design; collinear columns: " + bad);
  }

  // with column pivoting the solve zeroes the free (aliased) directions, so
  // the fitted values are the projection onto the independent columns
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - X * beta;

  FitResult fr;
  fr.n_rows = n;
  fr.coefficients.assign(beta.data(), beta.data() + beta.size());
  fr.residual_variance = std::max(resid.squaredNorm() / static_cast<double>(n), kVarianceFloor);
  fr.row_log_densities.resize(static_cast<size_t>(n));
  const double log_norm = -0.5 * std::log(kTwoPi * fr.residual_variance);
  const double inv2v = 0.5 / fr.residual_variance;
  for (int64_t i = 0; i < n; ++i) {
    fr.row_log_densities[static_cast<size_t>(i)] = log_norm - resid[i] * resid[i] * inv2v;
    fr.total_ll += fr.row_log_densities[static_cast<size_t>(i)];
  }
  return fr;
}

DMat build_design(const FeatureTable& table, bool include_surprisal, std::vector<std::string>* names) {
  const int k = spillover_k(table.mode);
  const int64_t n = static_cast<int64_t>(table.rows.size());
  const int64_t base_cols = 2 * (k + 1);
  const int64_t cols = base_cols + (include_surprisal ? (k + 1) : 0);
  DMat X(n, cols);
  if (names) {
    names->clear();
    auto block = [&](const std::string& stem) {
      names->push_back(stem);
      for (int b = 1; b <= k; ++b) names->push_back("prev" + (b == 1 ? "" : std::to_string(b)) + "_" + stem);
    };
    if (include_surprisal) block("surp");
    block("freq");
    block("len");
  }
  for (int64_t i = 0; i < n; ++i) {
    const FeatureRow& r = table.rows[static_cast<size_t>(i)];
    int64_t c = 0;
    if (include_surprisal) {
      X.at(i, c++) = r.surprisal;
      for (int b = 0; b < k; ++b) X.at(i, c++) = r.prev_surprisal[static_cast<size_t>(b)];
    }
    X.at(i, c++) = r.freq;
    for (int b = 0; b < k; ++b) X.at(i, c++) = r.prev_freq[static_cast<size_t>(b)];
    X.at(i, c++) = r.len;
    for (int b = 0; b < k; ++b) X.at(i, c++) = r.prev_len[static_cast<size_t>(b)];
  }
  return X;
}

DeltaLLResult delta_ll(const FeatureTable& table) {
  std::vector<double> y;
  y.reserve(table.rows.size());
  for (const auto& r : table.rows) y.push_back(r.target);

  std::vector<std::string> base_names, full_names;
  const DMat xbase = build_design(table, false, &base_names);
  const DMat xfull = build_design(table, true, &full_names);

  DeltaLLResult res;
  res.base = fit_gaussian_ols(xbase, y, &base_names);
  // the base fit above vouches for the shared columns; surprisal columns with
  // no variance alias the intercept and contribute nothing
  res.full = fit_gaussian_ols(xfull, y, &full_names, true);
  res.delta_ll = res.full.total_ll - res.base.total_ll;
  res.word_keys.reserve(table.rows.size());
  res.per_word.reserve(table.rows.size());
  for (size_t i = 0; i < table.rows.size(); ++i) {
    res.word_keys.push_back(table.rows[i].word_key);
    res.per_word.push_back(res.full.row_log_densities[i] - res.base.row_log_densities[i]);
  }
  return res;
}

DeltaDeltaLLResult delta_delta_ll(const DeltaLLResult& baseline, const DeltaLLResult& ablated) {
  if (baseline.word_keys != ablated.word_keys)
    throw std::invalid_argument("delta-delta-ll: word sets differ between baseline and ablated results");
  DeltaDeltaLLResult res;
  res.value = ablated.delta_ll - baseline.delta_ll;
  res.word_keys = baseline.word_keys;
  res.per_word.reserve(baseline.per_word.size());
  for (size_t i = 0; i < baseline.per_word.size(); ++i)
    res.per_word.push_back(ablated.per_word[i] - baseline.per_word[i]);
  return res;
}

double permutation_test(std::span<const double> a, std::span<const double> b, const PermutationOptions& opt) {
  const size_t n = a.size();
  if (n != b.size()) throw std::invalid_argument("permutation test: value vectors differ in length");
  if (n < 2) throw std::invalid_argument("permutation test: need at least 2 paired words");
  if (opt.n_perm < 1) throw std::invalid_argument("permutation test: n_perm must be >= 1");

  std::vector<double> diff(n);
  double observed = 0.0;
  for (size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
  }
  observed /= static_cast<double>(n);
  const double obs_stat = opt.two_sided ? std::abs(observed) : observed;

  int64_t count = 0;
  for (int64_t p = 0; p < opt.n_perm; ++p) {
    Rng rng(derive_seed(opt.seed, "perm") + static_cast<uint64_t>(p) * 0x9e3779b97f4a7c15ull);
    double stat = 0.0;
    size_t i = 0;
    while (i < n) {
      uint64_t bits = rng.next_u64();
      const size_t run = std::min<size_t>(64, n - i);
      for (size_t k = 0; k < run; ++k, ++i) stat += (bits >> k) & 1u ? diff[i] : -diff[i];
    }
    stat /= static_cast<double>(n);
    if (opt.two_sided) stat = std::abs(stat);
    if (stat >= obs_stat) ++count;
  }
  double p = static_cast<double>(count + 1) / static_cast<double>(opt.n_perm + 1);
  p *= opt.bonferroni_factor;
  return std::min(p, 1.0);
}

namespace {

// Lentz's continued fraction for the incomplete beta function
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * betacf(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * betacf(b, a, 1.0 - x) / b;
}

PearsonResult pearson_r(std::span<const double> x, std::span<const double> y) {
  const size_t n = x.size();
  if (n != y.size()) throw std::invalid_argument("pearson: series differ in length");
  if (n < 3) throw std::invalid_argument("pearson: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");

  PearsonResult res;
  res.n = static_cast<int64_t>(n);
  res.r = sxy / std::sqrt(sxx * syy);
  const double nu = static_cast<double>(n - 2);
  const double one_minus_r2 = 1.0 - res.r * res.r;
  if (one_minus_r2 <= 0.0) {
    res.p = 0.0;
  } else {
    const double t2 = res.r * res.r * nu / one_minus_r2;
    res.p = reg_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t2));
  }
  return res;
}

double fisher_z_weighted_mean(std::span<const double> rs, std::span<const double> weights) {
  if (rs.empty() || rs.size() != weights.size())
    throw std::invalid_argument("fisher-z: need matching non-empty r and weight vectors");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < rs.size(); ++i) {
    if (!(std::abs(rs[i]) < 1.0)) throw std::invalid_argument("fisher-z: |r| must be < 1");
    if (!(weights[i] > 0.0)) throw std::invalid_argument("fisher-z: weights must be > 0");
    num += weights[i] * std::atanh(rs[i]);
    den += weights[i];
  }
  return std::tanh(num / den);
}

PrePostCorrelation pre_post_transition_correlation(const MetricSeries& loss, const MetricSeries& delta_ll_series,
                                                   std::optional<uint64_t> breakthrough_tokens) {
  std::map<uint64_t, double> loss_by_tok;
  for (const auto& p : loss.points) loss_by_tok[p.tokens_seen] = p.value;

  std::vector<double> pre_x, pre_y, post_x, post_y;
  for (const auto& p : delta_ll_series.points) {
    auto it = loss_by_tok.find(p.tokens_seen);
    if (it == loss_by_tok.end()) continue;
    const bool post = breakthrough_tokens && p.tokens_seen >= *breakthrough_tokens;
    (post ? post_x : pre_x).push_back(it->second);
    (post ? post_y : pre_y).push_back(p.value);
  }

  PrePostCorrelation out;
  if (pre_x.size() >= 3) out.pre = pearson_r(pre_x, pre_y);
  if (post_x.size() >= 3) out.post = pearson_r(post_x, post_y);
  return out;
}

}  // namespace ptlab
