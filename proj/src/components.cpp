#include "nftk/components.hpp"

#include <algorithm>
#include <exception>

#include <json.hpp>

#include "nftk/error.hpp"
#include "nftk/hash.hpp"
#include "nftk/kernels.hpp"
#include "nftk/rng.hpp"

namespace nftk {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void SeparationConfig::validate() const {
  if (k < 2) throw Error(Errc::InvalidArgument, "group size k must be at least 2");
  if (rounds < 1) throw Error(Errc::InvalidArgument, "rounds must be at least 1");
  if (min_support < 1 || min_support > rounds)
    throw Error(Errc::InvalidArgument, "min support must lie in [1, rounds]");
  if (tolerance < 0 || tolerance > 255) throw Error(Errc::InvalidArgument, "tolerance must lie in [0, 255]");
}

Mask shared_mask(const Image& tmpl, std::span<const Image* const> others, int tolerance) {
  for (const Image* o : others)
    if (!o->same_geometry(tmpl))
      throw Error(Errc::GeometryMismatch, "shared_mask: " + std::to_string(o->width) + "x" + std::to_string(o->height) +
                                              " vs template " + std::to_string(tmpl.width) + "x" +
                                              std::to_string(tmpl.height));
  Mask m(tmpl.width, tmpl.height);
  kernels::omp::shared_mask(tmpl, others, tolerance, m);
  return m;
}

Mask shared_mask(const Image& tmpl, std::span<const Image> others, int tolerance) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(others.size());
  for (const auto& o : others) ptrs.push_back(&o);
  return shared_mask(tmpl, ptrs, tolerance);
}

ComponentAsset separate_component(const TraitKey& trait, std::span<const TokenId> carriers, const ImageLoader& load,
                                  const SeparationConfig& cfg) {
  cfg.validate();
  if (carriers.size() < cfg.k)
    throw Error(Errc::InsufficientImages, to_string(trait) + ": " + std::to_string(carriers.size()) +
                                              " carriers, need " + std::to_string(cfg.k));
  std::vector<TokenId> pool(carriers.begin(), carriers.end());
  std::sort(pool.begin(), pool.end());
  rng::SplitMix gen(rng::mix({cfg.seed, rng::fnv1a64(trait.trait_type), rng::fnv1a64(trait.value)}));

  ComponentAsset a;
  a.trait = trait;
  a.carriers = pool.size();
  std::vector<Image> group(cfg.k);
  std::vector<const Image*> others(cfg.k - 1);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    // Partial Fisher-Yates: the first k slots become the round's sample.
    for (std::size_t i = 0; i < cfg.k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng::uniform_below(gen, pool.size() - i));
      std::swap(pool[i], pool[j]);
      group[i] = load(pool[i]);
    }
    const Image& tmpl = group[0];
    for (std::size_t i = 1; i < cfg.k; ++i) others[i - 1] = &group[i];
    const Mask m = shared_mask(tmpl, others, cfg.tolerance);
    if (r == 0) {
      a.support.assign(m.pixel_count(), 0);
      a.cutout = Image(tmpl.width, tmpl.height);
    } else if (!tmpl.same_geometry(a.cutout)) {
      throw Error(Errc::GeometryMismatch, to_string(trait) + ": carriers differ in geometry");
    }
    bool contributed = false;
    for (std::size_t p = 0; p < m.pixel_count(); ++p) {
      if (!m.bits[p]) continue;
      contributed = true;
      ++a.support[p];
      std::copy_n(tmpl.rgba.data() + p * 4, 4, a.cutout.rgba.data() + p * 4);
    }
    a.rounds_used += contributed;
  }
  a.mask = Mask(a.cutout.width, a.cutout.height);
  for (std::size_t p = 0; p < a.support.size(); ++p) {
    a.mask.bits[p] = a.support[p] >= cfg.min_support ? 1 : 0;
    if (!a.mask.bits[p]) std::fill_n(a.cutout.rgba.data() + p * 4, 4, 0);
  }
  return a;
}

const ComponentAsset* ComponentLibrary::find(const TraitKey& t) const {
  const auto it = assets.find(t);
  return it == assets.end() ? nullptr : &it->second;
}

ComponentLibrary separate_collection(const std::string& collection, const TraitIndex& index, const ImageLoader& load,
                                     const SeparationConfig& cfg) {
  cfg.validate();
  ComponentLibrary lib;
  lib.collection = collection;
  lib.config = cfg;
  std::vector<const TraitIndex::Map::value_type*> work;
  for (const auto& e : index.entries()) {
    if (e.second.size() < cfg.k) {
      lib.skipped.push_back({e.first, e.second.size(), "InsufficientImages"});
    } else {
      work.push_back(&e);
    }
  }
  std::vector<ComponentAsset> done(work.size());
  std::vector<std::string> failed(work.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < work.size(); ++i) {
    try {
      done[i] = separate_component(work[i]->first, work[i]->second, load, cfg);
    } catch (const Error& e) {
      failed[i] = std::string(to_string(e.code()));
    } catch (const std::exception&) {
      failed[i] = std::string(to_string(Errc::IoFailure));
    }
  }
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (!failed[i].empty()) {
      lib.skipped.push_back({work[i]->first, work[i]->second.size(), failed[i]});
      continue;
    }
    if (lib.width == 0) {
      lib.width = done[i].mask.width;
      lib.height = done[i].mask.height;
    }
    lib.assets.emplace(work[i]->first, std::move(done[i]));
  }
  std::sort(lib.skipped.begin(), lib.skipped.end(),
            [](const SkippedTrait& a, const SkippedTrait& b) { return a.trait < b.trait; });
  return lib;
}

std::string trait_hash(const TraitKey& t) {
  return sha256_hex(t.trait_type + '\x1f' + t.value).substr(0, 16);
}

namespace {

ojson config_json(const SeparationConfig& c) {
  return ojson{{"k", c.k}, {"rounds", c.rounds}, {"tolerance", c.tolerance}, {"min_support", c.min_support},
               {"seed", c.seed}};
}

SeparationConfig config_from(const nlohmann::json& j) {
  SeparationConfig c;
  c.k = j.value("k", c.k);
  c.rounds = j.value("rounds", c.rounds);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.min_support = j.value("min_support", c.min_support);
  c.seed = j.value("seed", c.seed);
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace

void write_library(const fs::path& dir, const ComponentLibrary& lib) {
  fs::create_directories(dir);
  ojson index;
  index["collection"] = lib.collection;
  index["width"] = lib.width;
  index["height"] = lib.height;
  index["config"] = config_json(lib.config);
  index["assets"] = ojson::array();
  for (const auto& [key, a] : lib.assets) {
    const std::string h = trait_hash(key);
    const fs::path sub = dir / h;
    fs::create_directories(sub);
    write_mask_png(sub / "mask.png", a.mask);
    write_png(sub / "cutout.png", a.cutout);
    std::vector<std::size_t> hist(lib.config.rounds + 1, 0);
    for (auto s : a.support) ++hist[std::min<std::size_t>(s, lib.config.rounds)];
    ojson meta;
    meta["trait_type"] = key.trait_type;
    meta["value"] = key.value;
    meta["trait_hash"] = h;
    meta["carriers"] = a.carriers;
    meta["rounds_used"] = a.rounds_used;
    meta["mask_pixels"] = a.mask.count();
    meta["coverage"] = a.mask.coverage();
    meta["support_histogram"] = hist;
    meta["config"] = config_json(lib.config);
    write_text(sub / "meta.json", meta.dump(2) + "\n");
    index["assets"].push_back(ojson{{"trait_type", key.trait_type}, {"value", key.value}, {"trait_hash", h},
                                    {"coverage", a.mask.coverage()}});
  }
  index["skipped"] = ojson::array();
  for (const auto& s : lib.skipped)
    index["skipped"].push_back(ojson{{"trait_type", s.trait.trait_type}, {"value", s.trait.value},
                                     {"carriers", s.carriers}, {"reason", s.reason}});
  write_text(dir / "index.json", index.dump(2) + "\n");
}

ComponentLibrary read_library(const fs::path& dir, bool with_cutouts) {
  ComponentLibrary lib;
  const fs::path index_path = dir / "index.json";
  if (!fs::exists(index_path)) return lib;
  const auto raw = read_file(index_path);
  const auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(Errc::MissingComponentAsset, "component index is not valid JSON: " + index_path.string());
  try {
    lib.collection = j.value("collection", std::string{});
    lib.width = j.value("width", 0);
    lib.height = j.value("height", 0);
    if (j.contains("config")) lib.config = config_from(j.at("config"));
    for (const auto& e : j.at("assets")) {
      ComponentAsset a;
      a.trait = {e.at("trait_type").get<std::string>(), e.at("value").get<std::string>()};
      const fs::path sub = dir / e.at("trait_hash").get<std::string>();
      if (!fs::exists(sub / "mask.png"))
        throw Error(Errc::MissingComponentAsset, "mask missing for " + to_string(a.trait));
      a.mask = read_mask_png(sub / "mask.png");
      if (with_cutouts) a.cutout = read_png(sub / "cutout.png");
      lib.assets.emplace(a.trait, std::move(a));
    }
    for (const auto& s : j.value("skipped", nlohmann::json::array()))
      lib.skipped.push_back({{s.at("trait_type").get<std::string>(), s.at("value").get<std::string>()},
                             s.value("carriers", std::size_t{0}), s.value("reason", std::string{})});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MissingComponentAsset, std::string("component index malformed: ") + e.what());
  }
  return lib;
}

}  // namespace nftk
