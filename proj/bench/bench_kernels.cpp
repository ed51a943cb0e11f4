#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "nftk/kernels.hpp"

using namespace nftk;
namespace k = nftk::kernels;

namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Image img(w, h);
  for (auto& v : img.rgba) v = static_cast<std::uint8_t>(gen());
  for (std::size_t p = 0; p < img.pixel_count(); ++p) img.rgba[4 * p + 3] = 255;
  return img;
}

std::vector<float> noise_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> n;
  std::vector<float> m(rows * dim);
  for (auto& v : m) v = n(gen);
  return m;
}

template <auto Fn>
void BM_shared_mask(benchmark::State& st) {
  const Image tmpl = noise_image(512, 512, 1);
  std::vector<Image> others;
  for (int i = 0; i < 3; ++i) others.push_back(tmpl);
  std::vector<const Image*> ptrs;
  for (const auto& o : others) ptrs.push_back(&o);
  Mask out(512, 512);
  for (auto _ : st) {
    Fn(tmpl, ptrs, 2, out);
    benchmark::DoNotOptimize(out.bits.data());
  }
}

template <auto Fn>
void BM_fill_union(benchmark::State& st) {
  Image img = noise_image(512, 512, 2);
  std::mt19937_64 gen(3);
  std::vector<Mask> masks(4, Mask(512, 512));
  for (auto& m : masks)
    for (auto& b : m.bits) b = gen() % 4 == 0;
  std::vector<const Mask*> ptrs;
  for (const auto& m : masks) ptrs.push_back(&m);
  for (auto _ : st) {
    Fn(img, ptrs, Rgb{0, 0, 0});
    benchmark::DoNotOptimize(img.rgba.data());
  }
}

template <auto Fn>
void BM_resize(benchmark::State& st) {
  const Image src = noise_image(1024, 1024, 4);
  Image dst(512, 512);
  for (auto _ : st) {
    Fn(src, dst);
    benchmark::DoNotOptimize(dst.rgba.data());
  }
}

template <auto Fn>
void BM_gram(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = noise_matrix(n, 512, 5), b = noise_matrix(n, 512, 6);
  std::vector<float> out(n * n);
  for (auto _ : st) {
    Fn(a.data(), n, b.data(), n, 512, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_gram_row_variance(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = noise_matrix(n, 512, 7), b = noise_matrix(n, 512, 8);
  std::vector<double> out(n);
  for (auto _ : st) {
    Fn(a.data(), b.data(), n, 512, false, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

using GramF = void (*)(const float*, std::size_t, const float*, std::size_t, std::size_t, float*);

}  // namespace

BENCHMARK(BM_shared_mask<k::serial::shared_mask>)->Name("shared_mask/serial");
BENCHMARK(BM_shared_mask<k::omp::shared_mask>)->Name("shared_mask/omp");
BENCHMARK(BM_fill_union<k::serial::fill_union>)->Name("fill_union/serial");
BENCHMARK(BM_fill_union<k::omp::fill_union>)->Name("fill_union/omp");
BENCHMARK(BM_resize<k::serial::resize_bicubic>)->Name("resize_bicubic/serial");
BENCHMARK(BM_resize<k::omp::resize_bicubic>)->Name("resize_bicubic/omp");
BENCHMARK(BM_gram<static_cast<GramF>(k::serial::gram)>)->Name("gram/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_gram<static_cast<GramF>(k::omp::gram)>)->Name("gram/omp")->Arg(256)->Arg(1024);
BENCHMARK(BM_gram_row_variance<k::serial::gram_row_variance>)->Name("gram_row_variance/serial")->Arg(1024);
BENCHMARK(BM_gram_row_variance<k::omp::gram_row_variance>)->Name("gram_row_variance/omp")->Arg(1024);

BENCHMARK_MAIN();
