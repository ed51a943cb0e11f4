#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "nftk/kernels.hpp"
#include "nftk/rng.hpp"
#include "testkit.hpp"

using namespace nftk;

namespace {

// Four workers even on one core.
const bool kJobsSet = [] {
  kernels::set_jobs(4);
  return true;
}();

Image random_image(int w, int h, std::mt19937_64& gen, int levels = 256) {
  Image img(w, h);
  for (auto& v : img.rgba) v = static_cast<std::uint8_t>((gen() % levels) * (255 / std::max(1, levels - 1)));
  return img;
}

Image perturbed(const Image& src, std::mt19937_64& gen, double rate) {
  Image out = src;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    if (u(gen) < rate) out.rgba[4 * p + gen() % 3] ^= static_cast<std::uint8_t>(1 + gen() % 8);
  return out;
}

double keys(double x) {
  x = std::fabs(x);
  if (x < 1) return 1.5 * x * x * x - 2.5 * x * x + 1;
  if (x < 2) return -0.5 * x * x * x + 2.5 * x * x - 4 * x + 2;
  return 0;
}

// Normalised 1-D weights of output o over all source samples.
std::vector<double> axis_weights(int in_len, int out_len, int o) {
  const double scale = double(in_len) / out_len;
  const double widen = std::max(1.0, scale);
  const double centre = (o + 0.5) * scale;
  std::vector<double> w(in_len, 0.0);
  double total = 0;
  for (int i = 0; i < in_len; ++i) {
    const double d = (i + 0.5 - centre) / widen;
    if (std::fabs(d) < 2.0) w[i] = keys(d);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Direct 2-D evaluation of the separable filter.
Image resize_oracle(const Image& src, int w, int h) {
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const auto wy = axis_weights(src.height, h, y);
    for (int x = 0; x < w; ++x) {
      const auto wx = axis_weights(src.width, w, x);
      for (int c = 0; c < 4; ++c) {
        double acc = 0;
        for (int j = 0; j < src.height; ++j)
          if (wy[j] != 0)
            for (int i = 0; i < src.width; ++i) acc += wy[j] * wx[i] * src.px(i, j)[c];
        out.px(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(acc), 0.0, 255.0));
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("shared_mask: serial and omp agree bit for bit") {
  std::mt19937_64 gen(1);
  for (int round = 0; round < 20; ++round) {
    const int w = 1 + static_cast<int>(gen() % 70), h = 1 + static_cast<int>(gen() % 50);
    Image tmpl = random_image(w, h, gen);
    for (std::size_t p = 0; p < tmpl.pixel_count(); ++p)
      if (gen() % 10 == 0) tmpl.rgba[4 * p + 3] = 0;
    std::vector<Image> others;
    for (int k = 0; k < 3; ++k) others.push_back(perturbed(tmpl, gen, 0.3));
    std::vector<const Image*> ptrs;
    for (auto& o : others) ptrs.push_back(&o);
    const int tol = static_cast<int>(gen() % 6);
    Mask a(w, h), b(w, h);
    kernels::serial::shared_mask(tmpl, ptrs, tol, a);
    kernels::omp::shared_mask(tmpl, ptrs, tol, b);
    CHECK(a == b);
  }
}

TEST_CASE("fill_union: serial and omp agree and fill exactly the union") {
  std::mt19937_64 gen(2);
  const Image src = random_image(33, 21, gen);
  std::vector<Mask> masks(3, Mask(33, 21));
  for (auto& m : masks)
    for (auto& b : m.bits) b = gen() % 4 == 0;
  std::vector<const Mask*> ptrs;
  for (auto& m : masks) ptrs.push_back(&m);
  Image a = src, b = src;
  kernels::serial::fill_union(a, ptrs, {10, 20, 30});
  kernels::omp::fill_union(b, ptrs, {10, 20, 30});
  CHECK(a == b);
  for (std::size_t p = 0; p < src.pixel_count(); ++p) {
    const bool in = std::any_of(masks.begin(), masks.end(), [&](const Mask& m) { return m.at(p); });
    if (in) {
      CHECK(a.rgba[4 * p] == 10);
      CHECK(a.rgba[4 * p + 1] == 20);
      CHECK(a.rgba[4 * p + 2] == 30);
      CHECK(a.rgba[4 * p + 3] == 255);
    } else {
      CHECK(std::equal(a.rgba.begin() + 4 * p, a.rgba.begin() + 4 * p + 4, src.rgba.begin() + 4 * p));
    }
  }
}

TEST_CASE("resize_bicubic: serial, omp and a direct 2-D oracle") {
  std::mt19937_64 gen(3);
  const std::pair<int, int> shapes[][2] = {{{17, 9}, {40, 21}}, {{64, 48}, {23, 17}}, {{30, 30}, {30, 30}}, {{5, 40}, {11, 7}}};
  for (const auto& s : shapes) {
    const Image src = random_image(s[0].first, s[0].second, gen);
    Image a(s[1].first, s[1].second), b(s[1].first, s[1].second);
    kernels::serial::resize_bicubic(src, a);
    kernels::omp::resize_bicubic(src, b);
    CHECK(a == b);
    const Image ref = resize_oracle(src, s[1].first, s[1].second);
    int worst = 0;
    for (std::size_t i = 0; i < a.rgba.size(); ++i) worst = std::max(worst, std::abs(int(a.rgba[i]) - int(ref.rgba[i])));
    CHECK(worst <= 1);
  }
}

TEST_CASE("resize_bicubic: same size is the identity and constants stay constant") {
  std::mt19937_64 gen(4);
  const Image src = random_image(19, 13, gen);
  Image same(19, 13);
  kernels::serial::resize_bicubic(src, same);
  CHECK(same == src);
  Image flat(40, 30);
  for (std::size_t p = 0; p < flat.pixel_count(); ++p) {
    flat.rgba[4 * p] = 200;
    flat.rgba[4 * p + 1] = 3;
    flat.rgba[4 * p + 2] = 77;
    flat.rgba[4 * p + 3] = 255;
  }
  for (auto [w, h] : {std::pair{512, 384}, std::pair{7, 5}}) {
    Image out(w, h);
    kernels::omp::resize_bicubic(flat, out);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
      REQUIRE(out.rgba[4 * p] == 200);
      REQUIRE(out.rgba[4 * p + 1] == 3);
      REQUIRE(out.rgba[4 * p + 2] == 77);
      REQUIRE(out.rgba[4 * p + 3] == 255);
    }
  }
}

TEST_CASE("gram, row_variance, gram_row_variance, truth_ranks: serial == omp") {
  for (std::size_t n : {1u, 7u, 64u}) {
    const auto a = testkit::random_matrix(n, 12, 10 + n);
    const auto b = testkit::random_matrix(n, 12, 20 + n);
    std::vector<float> fs(n * n), fo(n * n);
    std::vector<double> ds(n * n), dd(n * n);
    kernels::serial::gram(a.data.data(), n, b.data.data(), n, 12, fs.data());
    kernels::omp::gram(a.data.data(), n, b.data.data(), n, 12, fo.data());
    CHECK(fs == fo);
    kernels::serial::gram(a.data.data(), n, b.data.data(), n, 12, ds.data());
    kernels::omp::gram(a.data.data(), n, b.data.data(), n, 12, dd.data());
    CHECK(ds == dd);
    for (bool sample : {false, true}) {
      std::vector<double> v1(n), v2(n), v3(n), v4(n);
      kernels::serial::row_variance(fs.data(), n, n, sample, v1.data());
      kernels::omp::row_variance(fs.data(), n, n, sample, v2.data());
      CHECK(v1 == v2);
      kernels::serial::gram_row_variance(a.data.data(), b.data.data(), n, 12, sample, v3.data());
      kernels::omp::gram_row_variance(a.data.data(), b.data.data(), n, 12, sample, v4.data());
      CHECK(v3 == v4);
    }
    std::vector<std::size_t> truth(n), r1(n), r2(n);
    for (std::size_t i = 0; i < n; ++i) truth[i] = (i * 7) % n;
    kernels::serial::truth_ranks(fs.data(), n, n, truth.data(), r1.data());
    kernels::omp::truth_ranks(fs.data(), n, n, truth.data(), r2.data());
    CHECK(r1 == r2);
  }
}

TEST_CASE("set_jobs changes the worker count") {
  const int before = kernels::max_jobs();
  kernels::set_jobs(3);
  CHECK(kernels::max_jobs() == 3);
  kernels::set_jobs(before);
  CHECK(kernels::max_jobs() == before);
}

TEST_CASE("rng helpers are deterministic and bounded") {
  rng::SplitMix g1(42), g2(42);
  for (int i = 0; i < 100; ++i) CHECK(g1() == g2());
  rng::SplitMix g(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng::uniform_below(g, 7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  std::vector<int> items{1, 2, 3, 4, 5, 6};
  rng::SplitMix s(5);
  rng::shuffle(std::span(items), s);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(rng::mix({1, 2}) != rng::mix({2, 1}));
  CHECK(rng::to_unit(~0ULL) < 1.0);
}
