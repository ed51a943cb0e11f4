#pragma once
// Brute-force reference implementations. Deliberately naive: full matrices,
// explicit sorts, textbook formulas. Used by unit tests and the acceptance
// runner to check the library against something written independently.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nftk/embeddings.hpp"

namespace oracle {

inline std::vector<std::vector<double>> product(const nftk::EmbeddingMatrix& a, const nftk::EmbeddingMatrix& b) {
  std::vector<std::vector<double>> s(a.rows, std::vector<double>(b.rows, 0.0));
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j)
      for (std::size_t k = 0; k < a.dim; ++k) s[i][j] += double(a.data[i * a.dim + k]) * double(b.data[j * b.dim + k]);
  return s;
}

inline double population_variance(const std::vector<double>& row) {
  const double mean = std::accumulate(row.begin(), row.end(), 0.0) / double(row.size());
  double ss = 0.0;
  for (double v : row) ss += (v - mean) * (v - mean);
  return ss / double(row.size());
}

inline double sum_row_variance(const std::vector<std::vector<double>>& s) {
  double total = 0.0;
  for (const auto& row : s) total += population_variance(row);
  return total;
}

/// (1/2N)[α Σ var(S_II) + (1-α) Σ var(S_TT) + Σ var(S_TI)], S_TI = T·Iᵀ.
inline double cvi(const nftk::EmbeddingMatrix& images, const nftk::EmbeddingMatrix& texts, double alpha) {
  const double n = double(images.rows);
  const double ii = sum_row_variance(product(images, images));
  const double tt = sum_row_variance(product(texts, texts));
  const double ti = sum_row_variance(product(texts, images));
  return (alpha * ii + (1.0 - alpha) * tt + ti) / (2.0 * n);
}

inline double kl2(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) d += p[i] * std::log2(p[i] / q[i]);
  return d;
}

inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl2(p, m) + 0.5 * kl2(q, m);
}

/// 1-based rank of column truth[i] after sorting row i by (score desc, column asc).
inline std::vector<std::size_t> ranks(const std::vector<float>& s, std::size_t rows, std::size_t cols,
                                      const std::vector<std::size_t>& truth) {
  std::vector<std::size_t> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const float x = s[i * cols + a], y = s[i * cols + b];
      return x != y ? x > y : a < b;
    });
    out[i] = std::size_t(std::find(order.begin(), order.end(), truth[i]) - order.begin()) + 1;
  }
  return out;
}

inline double topk_percent(const std::vector<std::size_t>& r, std::size_t k) {
  const auto hit = std::count_if(r.begin(), r.end(), [&](std::size_t x) { return x <= k; });
  return 100.0 * double(hit) / double(r.size());
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = rank(x), ry = rank(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
