#pragma once

// Data-parallel inner loops. Each kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp` with the same
// signature. The two produce bit-identical results: parallelism is only ever
// across independent output rows/pixels, and every reduction runs in a fixed
// order inside one work item. Tests compare them directly; bench/ times them.

#include <cstddef>
#include <span>

#include "nftk/image.hpp"

namespace nftk::kernels {

namespace serial {

/// out[p] = 1 iff tmpl alpha at p is nonzero and, for every image in
/// `others`, each RGB channel differs from tmpl by at most `tolerance`.
void shared_mask(const Image& tmpl, std::span<const Image* const> others, int tolerance, Mask& out);

/// Paint `fill` (opaque) wherever any mask is true.
void fill_union(Image& img, std::span<const Mask* const> masks, Rgb fill);

/// Separable Keys bicubic (a = -0.5) with support widened on downscale.
/// `dst` must already carry the target width/height.
void resize_bicubic(const Image& src, Image& dst);

/// out[i*rows_b + j] = dot(a_i, b_j) accumulated in double, k ascending.
void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          float* out);
void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          double* out);

/// Two-pass variance of each row of a rows×cols matrix.
void row_variance(const float* s, std::size_t rows, std::size_t cols, bool sample, double* out);

/// Variance of each row of A·Bᵀ (both n×dim) without materialising it.
void gram_row_variance(const float* a, const float* b, std::size_t n, std::size_t dim, bool sample,
                       double* out);

/// 1-based rank of column truth[i] in row i under descending score, ties to
/// the lower column index.
void truth_ranks(const float* s, std::size_t rows, std::size_t cols, const std::size_t* truth,
                 std::size_t* ranks);

}  // namespace serial

namespace omp {

void shared_mask(const Image& tmpl, std::span<const Image* const> others, int tolerance, Mask& out);
void fill_union(Image& img, std::span<const Mask* const> masks, Rgb fill);
void resize_bicubic(const Image& src, Image& dst);
void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          float* out);
void gram(const float* a, std::size_t rows_a, const float* b, std::size_t rows_b, std::size_t dim,
          double* out);
void row_variance(const float* s, std::size_t rows, std::size_t cols, bool sample, double* out);
void gram_row_variance(const float* a, const float* b, std::size_t n, std::size_t dim, bool sample,
                       double* out);
void truth_ranks(const float* s, std::size_t rows, std::size_t cols, const std::size_t* truth,
                 std::size_t* ranks);

}  // namespace omp

/// Set the OpenMP worker count (0 = leave the runtime default).
void set_jobs(int jobs);
int max_jobs();

}  // namespace nftk::kernels
