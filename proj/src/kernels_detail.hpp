#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace nftk::kernels::detail {

inline double keys_cubic(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

/// Per-output-coordinate tap list for one axis.
struct Taps {
  std::vector<int> first;       // first source index per output
  std::vector<int> count;       // taps per output
  std::vector<double> weights;  // out_len * stride, normalised
  int stride = 0;
};

inline Taps make_taps(int in_len, int out_len) {
  Taps t;
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  const double filter_scale = scale > 1.0 ? scale : 1.0;
  const double support = 2.0 * filter_scale;
  t.stride = static_cast<int>(std::ceil(support)) * 2 + 1;
  t.first.resize(out_len);
  t.count.resize(out_len);
  t.weights.assign(static_cast<std::size_t>(out_len) * t.stride, 0.0);
  for (int o = 0; o < out_len; ++o) {
    const double center = (o + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support + 0.5));
    int hi = static_cast<int>(std::floor(center + support + 0.5));
    if (lo < 0) lo = 0;
    if (hi > in_len) hi = in_len;
    double* w = &t.weights[static_cast<std::size_t>(o) * t.stride];
    double total = 0.0;
    int n = 0;
    for (int i = lo; i < hi && n < t.stride; ++i, ++n) {
      w[n] = keys_cubic((i + 0.5 - center) / filter_scale);
      total += w[n];
    }
    if (total != 0.0)
      for (int k = 0; k < n; ++k) w[k] /= total;
    t.first[o] = lo;
    t.count[o] = n;
  }
  return t;
}

inline std::uint8_t clamp_round(double v) {
  const double r = std::nearbyint(v);
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

inline double dot_f64(const float* x, const float* y, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t k = 0; k < dim; ++k) acc += static_cast<double>(x[k]) * static_cast<double>(y[k]);
  return acc;
}

template <class T>
double variance_of(const T* row, std::size_t n, bool sample) {
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += static_cast<double>(row[j]);
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = static_cast<double>(row[j]) - mean;
    ss += d * d;
  }
  if (sample) return n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  return ss / static_cast<double>(n);
}

inline std::size_t rank_in_row(const float* row, std::size_t cols, std::size_t truth) {
  const float target = row[truth];
  std::size_t better = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (row[j] > target || (row[j] == target && j < truth)) ++better;
  }
  return better + 1;
}

inline bool pixel_shared(const std::uint8_t* t, const std::uint8_t* o, int tol) {
  for (int c = 0; c < 3; ++c) {
    const int d = static_cast<int>(t[c]) - static_cast<int>(o[c]);
    if (d > tol || d < -tol) return false;
  }
  return true;
}

}  // namespace nftk::kernels::detail
