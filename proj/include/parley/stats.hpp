#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parley/error.hpp"

namespace parley::stats {

// ─── Special functions ───────────────────────────────────────────────────────

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (a <= 0 || b <= 0) throw ContractError("incomplete_beta: a and b must be positive");
  if (x < 0 || x > 1) throw ContractError("incomplete_beta: x outside [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student's t with df degrees of freedom.
inline double student_t_cdf(double t, double df) {
  if (df <= 0) throw ContractError("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
  return t >= 0 ? 1.0 - tail : tail;
}

inline double two_tailed_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

// ─── Descriptives ────────────────────────────────────────────────────────────

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

// Sample standard deviation (n - 1 denominator).
inline double sd(std::span<const double> xs) {
  if (xs.size() < 2) throw ContractError("sd needs at least two values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(xs.size() - 1));
}

// ─── Effect size and thresholds ──────────────────────────────────────────────

// (m1 - m2) over the root mean square of the two SDs. Undefined when both
// SDs are zero.
inline std::optional<double> cohens_d_pooled(double m1, double sd1, double m2, double sd2) {
  if (sd1 < 0 || sd2 < 0) throw ContractError("cohens_d_pooled: negative standard deviation");
  if (sd1 == 0 && sd2 == 0) return std::nullopt;
  return (m1 - m2) / std::sqrt((sd1 * sd1 + sd2 * sd2) / 2.0);
}

inline double bonferroni(double alpha, int m) {
  if (m < 1) throw ContractError("bonferroni: comparison count must be >= 1");
  if (!(alpha > 0 && alpha < 1)) throw ContractError("bonferroni: alpha must lie in (0,1)");
  return alpha / m;
}

// ─── Paired t-test ───────────────────────────────────────────────────────────

struct StatResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
  std::optional<double> d;  // pooled-SD effect size of a vs b
  double alpha_corrected = 0.05;
  bool significant = false;
  // Nonzero differences with zero spread: t is infinite.
  bool degenerate = false;
};

inline StatResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha_corrected) {
  if (a.size() != b.size()) {
    throw ContractError("paired_t_test: length mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw ContractError("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];

  StatResult r;
  r.df = static_cast<int>(n) - 1;
  r.alpha_corrected = alpha_corrected;
  r.d = cohens_d_pooled(mean(a), sd(a), mean(b), sd(b));

  const double md = mean(diff);
  const double sdd = sd(diff);
  if (sdd == 0.0) {
    if (md == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.degenerate = true;
      r.t = md > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
  } else {
    r.t = md / (sdd / std::sqrt(double(n)));
    r.p = two_tailed_p(r.t, r.df);
  }
  r.significant = r.p < r.alpha_corrected;
  return r;
}

// ─── ICC(2,1) ────────────────────────────────────────────────────────────────

struct RatingMatrix {
  std::vector<std::string> subjects;
  std::vector<std::string> raters;
  std::vector<std::vector<std::optional<double>>> values;  // [subject][rater]
};

inline RatingMatrix make_matrix(const std::vector<std::vector<double>>& rows) {
  RatingMatrix m;
  const std::size_t k = rows.empty() ? 0 : rows.front().size();
  for (std::size_t j = 0; j < k; ++j) m.raters.push_back("r" + std::to_string(j + 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.subjects.push_back("s" + std::to_string(i + 1));
    m.values.emplace_back(rows[i].begin(), rows[i].end());
  }
  return m;
}

// Single-measure, two-way random-effects ICC from the two-way ANOVA mean
// squares. Undefined (nullopt) when the matrix has no variance at all.
inline std::optional<double> icc_2_1(const RatingMatrix& m) {
  const std::size_t n = m.values.size();
  if (n < 2) throw ContractError("icc_2_1: need at least 2 subjects");
  const std::size_t k = m.values.front().size();
  if (k < 2) throw ContractError("icc_2_1: need at least 2 raters");
  for (std::size_t i = 0; i < n; ++i) {
    if (m.values[i].size() != k) throw ContractError("icc_2_1: ragged matrix at subject " + std::to_string(i));
    for (std::size_t j = 0; j < k; ++j) {
      if (!m.values[i][j]) {
        const std::string s = i < m.subjects.size() ? m.subjects[i] : std::to_string(i);
        const std::string r = j < m.raters.size() ? m.raters[j] : std::to_string(j);
        throw ContractError("icc_2_1: missing cell (subject " + s + ", rater " + r + ")");
      }
    }
  }
  double grand = 0.0;
  std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double v = *m.values[i][j];
      grand += v;
      row_mean[i] += v;
      col_mean[j] += v;
    }
  }
  grand /= double(n * k);
  for (auto& r : row_mean) r /= double(k);
  for (auto& c : col_mean) c /= double(n);

  double ss_total = 0.0, ss_rows = 0.0, ss_cols = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) ss_total += (*m.values[i][j] - grand) * (*m.values[i][j] - grand);
  }
  if (ss_total == 0.0) return std::nullopt;
  for (double r : row_mean) ss_rows += double(k) * (r - grand) * (r - grand);
  for (double c : col_mean) ss_cols += double(n) * (c - grand) * (c - grand);
  double ss_error = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double e = *m.values[i][j] - row_mean[i] - col_mean[j] + grand;
      ss_error += e * e;
    }
  }

  const double ms_rows = ss_rows / double(n - 1);
  const double ms_cols = ss_cols / double(k - 1);
  const double ms_error = ss_error / double((n - 1) * (k - 1));
  const double denom = ms_rows + double(k - 1) * ms_error + double(k) * (ms_cols - ms_error) / double(n);
  if (denom == 0.0) return std::nullopt;
  return (ms_rows - ms_error) / denom;
}

}  // namespace parley::stats
