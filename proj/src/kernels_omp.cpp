#include <omp.h>

#include <cstdint>
#include <vector>

#include "kernels_detail.hpp"
#include "nftk/kernels.hpp"

namespace nftk::kernels {

void set_jobs(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
}

int max_jobs() { return omp_get_max_threads(); }

namespace omp {

void shared_mask(const Image& tmpl, std::span<const Image* const> others, int tolerance, Mask& out) {
  const auto n = static_cast<std::int64_t>(tmpl.pixel_count());
  const std::uint8_t* base = tmpl.rgba.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n; ++p) {
    const std::uint8_t* t = base + p * 4;
    bool shared = t[3] != 0;
    for (std::size_t k = 0; shared && k < others.size(); ++k)
      shared = detail::pixel_shared(t, others[k]->rgba.data() + p * 4, tolerance);
    out.bits[static_cast<std::size_t>(p)] = shared ? 1 : 0;
  }
}

void fill_union(Image& img, std::span<const Mask* const> masks, Rgb fill) {
  const auto n = static_cast<std::int64_t>(img.pixel_count());
  std::uint8_t* base = img.rgba.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n; ++p) {
    bool hit = false;
    for (const Mask* m : masks) {
      if (m->bits[static_cast<std::size_t>(p)]) {
        hit = true;
        break;
      }
    }
    if (hit) {
      std::uint8_t* q = base + p * 4;
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
  const int src_h = src.height, dst_w = dst.width, dst_h = dst.height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < src_h; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      const double* w = &tx.weights[static_cast<std::size_t>(x) * tx.stride];
      double acc[4] = {0, 0, 0, 0};
      for (int k = 0; k < tx.count[x]; ++k) {
        const std::uint8_t* s = src.px(tx.first[x] + k, y);
        for (int c = 0; c < 4; ++c) acc[c] += w[k] * s[c];
      }
      double* m = &mid[(static_cast<std::size_t>(y) * dst_w + x) * 4];
      for (int c = 0; c < 4; ++c) m[c] = acc[c];
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst_h; ++y) {
    const double* w = &ty.weights[static_cast<std::size_t>(y) * ty.stride];
    for (int x = 0; x < dst_w; ++x) {
      double acc[4] = {0, 0, 0, 0};
      for (int k = 0; k < ty.count[y]; ++k) {
        const double* m = &mid[(static_cast<std::size_t>(ty.first[y] + k) * dst_w + x) * 4];
        for (int c = 0; c < 4; ++c) acc[c] += w[k] * m[c];
      }
      std::uint8_t* d = dst.px(x, y);
      for (int c = 0; c < 4; ++c) d[c] = detail::clamp_round(acc[c]);
    }
  }
}

void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          float* out) {
  const auto n = static_cast<std::int64_t>(rows_a);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    const float* ai = a + static_cast<std::size_t>(i) * dim;
    float* oi = out + static_cast<std::size_t>(i) * rows_b;
    for (std::size_t j = 0; j < rows_b; ++j) oi[j] = static_cast<float>(detail::dot_f64(ai, b + j * dim, dim));
  }
}

void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          double* out) {
  const auto n = static_cast<std::int64_t>(rows_a);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    const float* ai = a + static_cast<std::size_t>(i) * dim;
    double* oi = out + static_cast<std::size_t>(i) * rows_b;
    for (std::size_t j = 0; j < rows_b; ++j) oi[j] = detail::dot_f64(ai, b + j * dim, dim);
  }
}

void row_variance(const float* s, std::size_t rows, std::size_t cols, bool sample, double* out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = detail::variance_of(s + static_cast<std::size_t>(i) * cols, cols, sample);
}

void gram_row_variance(const float* a, const float* b, std::size_t n, std::size_t dim, bool sample,
                       double* out) {
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel
  {
    std::vector<double> row(n);
#pragma omp for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < rows; ++i) {
      const float* ai = a + static_cast<std::size_t>(i) * dim;
      for (std::size_t j = 0; j < n; ++j) row[j] = detail::dot_f64(ai, b + j * dim, dim);
      out[i] = detail::variance_of(row.data(), n, sample);
    }
  }
}

void truth_ranks(const float* s, std::size_t rows, std::size_t cols, const std::size_t* truth,
                 std::size_t* ranks) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    ranks[i] = detail::rank_in_row(s + static_cast<std::size_t>(i) * cols, cols, truth[i]);
}

}  // namespace omp
}  // namespace nftk::kernels
