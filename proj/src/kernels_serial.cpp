#include <algorithm>
#include <vector>

#include "kernels_detail.hpp"
#include "nftk/kernels.hpp"

namespace nftk::kernels::serial {

void shared_mask(const Image& tmpl, std::span<const Image* const> others, int tolerance, Mask& out) {
  const std::size_t n = tmpl.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint8_t* t = tmpl.rgba.data() + p * 4;
    bool shared = t[3] != 0;
    for (std::size_t k = 0; shared && k < others.size(); ++k)
      shared = detail::pixel_shared(t, others[k]->rgba.data() + p * 4, tolerance);
    out.bits[p] = shared ? 1 : 0;
  }
}

void fill_union(Image& img, std::span<const Mask* const> masks, Rgb fill) {
  const std::size_t n = img.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    bool hit = false;
    for (const Mask* m : masks) {
      if (m->bits[p]) {
        hit = true;
        break;
      }
    }
    if (hit) {
      std::uint8_t* q = img.rgba.data() + p * 4;
      q[0] = fill.r;
      q[1] = fill.g;
      q[2] = fill.b;
      q[3] = 255;
    }
  }
}

void resize_bicubic(const Image& src, Image& dst) {
  const detail::Taps tx = detail::make_taps(src.width, dst.width);
  const detail::Taps ty = detail::make_taps(src.height, dst.height);
  std::vector<double> mid(static_cast<std::size_t>(dst.width) * src.height * 4);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < dst.width; ++x) {
      const double* w = &tx.weights[static_cast<std::size_t>(x) * tx.stride];
      double acc[4] = {0, 0, 0, 0};
      for (int k = 0; k < tx.count[x]; ++k) {
        const std::uint8_t* s = src.px(tx.first[x] + k, y);
        for (int c = 0; c < 4; ++c) acc[c] += w[k] * s[c];
      }
      double* m = &mid[(static_cast<std::size_t>(y) * dst.width + x) * 4];
      for (int c = 0; c < 4; ++c) m[c] = acc[c];
    }
  }
  for (int y = 0; y < dst.height; ++y) {
    const double* w = &ty.weights[static_cast<std::size_t>(y) * ty.stride];
    for (int x = 0; x < dst.width; ++x) {
      double acc[4] = {0, 0, 0, 0};
      for (int k = 0; k < ty.count[y]; ++k) {
        const double* m = &mid[(static_cast<std::size_t>(ty.first[y] + k) * dst.width + x) * 4];
        for (int c = 0; c < 4; ++c) acc[c] += w[k] * m[c];
      }
      std::uint8_t* d = dst.px(x, y);
      for (int c = 0; c < 4; ++c) d[c] = detail::clamp_round(acc[c]);
    }
  }
}

void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          float* out) {
  for (std::size_t i = 0; i < rows_a; ++i)
    for (std::size_t j = 0; j < rows_b; ++j)
      out[i * rows_b + j] = static_cast<float>(detail::dot_f64(a + i * dim, b + j * dim, dim));
}

void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          double* out) {
  for (std::size_t i = 0; i < rows_a; ++i)
    for (std::size_t j = 0; j < rows_b; ++j)
      out[i * rows_b + j] = detail::dot_f64(a + i * dim, b + j * dim, dim);
}

void row_variance(const float* s, std::size_t rows, std::size_t cols, bool sample, double* out) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = detail::variance_of(s + i * cols, cols, sample);
}

void gram_row_variance(const float* a, const float* b, std::size_t n, std::size_t dim, bool sample,
                       double* out) {
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = detail::dot_f64(a + i * dim, b + j * dim, dim);
    out[i] = detail::variance_of(row.data(), n, sample);
  }
}

void truth_ranks(const float* s, std::size_t rows, std::size_t cols, const std::size_t* truth,
                 std::size_t* ranks) {
  for (std::size_t i = 0; i < rows; ++i) ranks[i] = detail::rank_in_row(s + i * cols, cols, truth[i]);
}

}  // namespace nftk::kernels::serial
