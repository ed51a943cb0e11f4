#include <doctest.h>

#include <random>

#include "nftk/components.hpp"
#include "nftk/error.hpp"
#include "testkit.hpp"

using namespace nftk;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no nftk::Error thrown");
  return Errc::InvalidArgument;
}

ImageLoader loader_for(const testkit::SynthCollection& c) {
  return [&c](TokenId id) { return c.render(c.tokens.at(id)); };
}

ComponentLibrary separate(const testkit::SynthCollection& c, const SeparationConfig& cfg) {
  return separate_collection(c.options.collection, c.index(), loader_for(c), cfg);
}

Image random_image(int w, int h, std::mt19937_64& gen) {
  Image img(w, h);
  for (auto& v : img.rgba) v = static_cast<std::uint8_t>(gen());
  for (std::size_t p = 0; p < img.pixel_count(); ++p) img.rgba[4 * p + 3] = 255;
  return img;
}

Image jitter(const Image& src, std::mt19937_64& gen, int amount) {
  Image out = src;
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) {
      const int d = static_cast<int>(gen() % (2 * amount + 1)) - amount;
      out.rgba[4 * p + c] = static_cast<std::uint8_t>(std::clamp(int(out.rgba[4 * p + c]) + d, 0, 255));
    }
  return out;
}

}  // namespace

TEST_CASE("shared_mask: hand case and error") {
  Image a(2, 2), b(2, 2), c(2, 2);
  for (auto* img : {&a, &b, &c})
    for (std::size_t p = 0; p < 4; ++p) img->rgba[4 * p + 3] = 255;
  b.px(1, 0)[0] = 3;
  c.px(0, 1)[2] = 9;
  a.px(1, 1)[3] = 0;
  const std::vector<Image> others{b, c};
  const Mask m0 = shared_mask(a, others, 0);
  CHECK(m0.bits == std::vector<std::uint8_t>{1, 0, 0, 0});
  CHECK(shared_mask(a, others, 3).bits == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(shared_mask(a, others, 9).bits == std::vector<std::uint8_t>{1, 1, 1, 0});
  const std::vector<Image> bad{Image(3, 2)};
  CHECK(code_of([&] { shared_mask(a, bad, 0); }) == Errc::GeometryMismatch);
}

TEST_CASE("shared_mask: monotone in tolerance, antitone in the image set") {
  std::mt19937_64 gen(5);
  for (int round = 0; round < 10; ++round) {
    const Image t = random_image(31, 17, gen);
    std::vector<Image> others;
    for (int k = 0; k < 4; ++k) others.push_back(jitter(t, gen, 6));
    Mask prev(31, 17);
    for (int tol = 0; tol <= 7; ++tol) {
      const Mask m = shared_mask(t, others, tol);
      CHECK(prev.subset_of(m));
      prev = m;
    }
    CHECK(prev.count() == prev.pixel_count());
    for (std::size_t n = 1; n < others.size(); ++n) {
      const Mask fewer = shared_mask(t, std::span(others).first(n), 3);
      const Mask more = shared_mask(t, std::span(others).first(n + 1), 3);
      CHECK(more.subset_of(fewer));
    }
  }
}

TEST_CASE("config validation") {
  SeparationConfig cfg;
  cfg.validate();
  cfg.k = 1;
  CHECK(code_of([&] { cfg.validate(); }) == Errc::InvalidArgument);
  cfg = {};
  cfg.min_support = 9;
  CHECK(code_of([&] { cfg.validate(); }) == Errc::InvalidArgument);
  cfg = {};
  cfg.tolerance = 256;
  CHECK(code_of([&] { cfg.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("separation recovers every layer of the occluded synthetic") {
  const auto c = testkit::make_collection({});
  const SeparationConfig cfg;  // k=4, R=8
  const auto lib = separate(c, cfg);
  REQUIRE(lib.assets.size() == 20);
  CHECK(lib.skipped.empty());
  CHECK(lib.width == 96);
  CHECK(lib.height == 128);
  double worst = 1.0;
  for (const auto& l : c.layers) {
    const ComponentAsset* a = lib.find(l.trait);
    REQUIRE(a != nullptr);
    CHECK(a->carriers == 50);
    const double score = iou(a->mask, l.region);
    worst = std::min(worst, score);
    CHECK_MESSAGE(score >= 0.95, to_string(l.trait) << " IoU " << score);
    if (l.trait.trait_type == "Hat") CHECK(score == 1.0);
    for (std::size_t p = 0; p < a->mask.pixel_count(); ++p) {
      if (a->mask.at(p)) {
        REQUIRE(a->cutout.rgba[4 * p] == l.colour.r);
        REQUIRE(a->cutout.rgba[4 * p + 3] == 255);
        REQUIRE(a->support[p] >= 1);
      } else {
        REQUIRE(a->cutout.rgba[4 * p + 3] == 0);
      }
    }
  }
  MESSAGE("worst IoU " << worst);
}

TEST_CASE("zero occlusion and zero tolerance recover masks exactly") {
  testkit::SynthOptions o;
  o.tokens = 300;
  o.occlusion = false;
  const auto c = testkit::make_collection(o);
  const auto lib = separate(c, {});
  REQUIRE(lib.assets.size() == 20);
  for (const auto& l : c.layers) CHECK(lib.find(l.trait)->mask == l.region);
}

TEST_CASE("support threshold nests masks") {
  testkit::SynthOptions o;
  o.tokens = 200;
  const auto c = testkit::make_collection(o);
  const auto ix = c.index();
  const TraitKey body{"Body", "Alien"};
  const auto* carriers = ix.find(body);
  REQUIRE(carriers);
  Mask prev;
  for (std::size_t s = 1; s <= 8; ++s) {
    SeparationConfig cfg;
    cfg.min_support = s;
    const auto a = separate_component(body, *carriers, loader_for(c), cfg);
    if (s > 1) CHECK(a.mask.subset_of(prev));
    for (std::size_t p = 0; p < a.mask.pixel_count(); ++p) CHECK(a.mask.at(p) == (a.support[p] >= s));
    prev = a.mask;
  }
}

TEST_CASE("backgrounds: shared leaks, two-tone is filtered by support") {
  testkit::SynthOptions o;
  o.tokens = 200;
  o.occlusion = false;
  o.background = testkit::Background::Shared;
  const auto shared = testkit::make_collection(o);
  SeparationConfig strict;
  strict.min_support = 6;
  const auto leak = separate(shared, strict);
  for (const auto& l : shared.layers) CHECK(iou(leak.find(l.trait)->mask, l.region) < 0.5);

  o.background = testkit::Background::TwoTone;
  const auto two = testkit::make_collection(o);
  const auto loose = separate(two, {});
  const auto filtered = separate(two, strict);
  std::size_t loose_exact = 0;
  for (const auto& l : two.layers) {
    loose_exact += loose.find(l.trait)->mask == l.region;
    CHECK(filtered.find(l.trait)->mask == l.region);
  }
  CHECK(loose_exact < two.layers.size());
}

TEST_CASE("too few carriers are skipped with InsufficientImages") {
  testkit::SynthOptions o;
  o.tokens = 30;  // bodies have 3 carriers, hats 10 / 10 / 10
  const auto c = testkit::make_collection(o);
  const auto lib = separate(c, {});
  CHECK(lib.assets.size() == 3);
  CHECK(lib.skipped.size() == 10);
  for (const auto& s : lib.skipped) {
    CHECK(s.reason == "InsufficientImages");
    CHECK(s.carriers == 3);
  }
  const std::vector<TokenId> three{0, 10, 20};
  CHECK(code_of([&] { separate_component({"Body", "Alien"}, three, loader_for(c), {}); }) == Errc::InsufficientImages);
}

TEST_CASE("separation is deterministic and independent of the worker count") {
  testkit::SynthOptions o;
  o.tokens = 200;
  const auto c = testkit::make_collection(o);
  SeparationConfig cfg;
  cfg.seed = 3;
  const auto a = separate(c, cfg);
  const auto b = separate(c, cfg);
  for (const auto& [t, asset] : a.assets) {
    CHECK(asset.mask == b.find(t)->mask);
    CHECK(asset.support == b.find(t)->support);
    CHECK(asset.cutout == b.find(t)->cutout);
  }
  cfg.seed = 4;
  const auto d = separate(c, cfg);
  bool any_diff = false;
  for (const auto& [t, asset] : a.assets) any_diff |= asset.support != d.find(t)->support;
  CHECK(any_diff);
}

TEST_CASE("trait_hash is stable and distinguishes pairs") {
  const auto h = trait_hash({"Hat", "Beanie"});
  CHECK(h.size() == 16);
  CHECK(h == trait_hash({"Hat", "Beanie"}));
  CHECK(h != trait_hash({"HatB", "eanie"}));
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("library write and read") {
  testkit::SynthOptions o;
  o.tokens = 100;
  const auto c = testkit::make_collection(o);
  const auto lib = separate(c, {});
  testkit::TempDir dir;
  write_library(dir / "lib", lib);
  CHECK(std::filesystem::exists(dir / "lib/index.json"));
  const auto back = read_library(dir / "lib", true);
  CHECK(back.collection == lib.collection);
  CHECK(back.width == 96);
  CHECK(back.config.k == lib.config.k);
  REQUIRE(back.assets.size() == lib.assets.size());
  for (const auto& [t, a] : lib.assets) {
    CHECK(back.find(t)->mask == a.mask);
    CHECK(back.find(t)->cutout == a.cutout);
  }
  CHECK(read_library(dir / "absent").assets.empty());
  const TraitKey first = lib.assets.begin()->first;
  std::filesystem::remove_all(dir / "lib" / trait_hash(first));
  CHECK(code_of([&] { read_library(dir / "lib"); }) == Errc::MissingComponentAsset);
}
