#include "nftk/dynmask.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "nftk/error.hpp"
#include "nftk/kernels.hpp"
#include "nftk/rng.hpp"

namespace nftk {

namespace fs = std::filesystem;

std::string_view to_string(MaskMode m) noexcept {
  return m == MaskMode::Single ? "single" : "independent";
}

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "independent") return MaskMode::Independent;
  if (s == "single") return MaskMode::Single;
  throw Error(Errc::InvalidArgument, "mask mode must be independent or single, got " + std::string(s));
}

void MaskPolicy::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "mask probability must lie in [0, 1]");
}

Rgb parse_fill(std::string_view hex) {
  if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
  if (hex.size() != 6 || !std::all_of(hex.begin(), hex.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); }))
    throw Error(Errc::InvalidArgument, "fill must be six hex digits, got '" + std::string(hex) + "'");
  const auto byte = [&](int i) { return static_cast<std::uint8_t>(std::stoi(std::string(hex.substr(2 * i, 2)), nullptr, 16)); };
  return {byte(0), byte(1), byte(2)};
}

std::string fill_hex(Rgb c) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t v : {c.r, c.g, c.b}) {
    s += kHex[v >> 4];
    s += kHex[v & 0x0f];
  }
  return s;
}

std::vector<TraitKey> maskable_traits(const TokenRecord& token, const ComponentLibrary& lib) {
  std::vector<TraitKey> out;
  for (const auto& a : token.attributes)
    if (lib.find(a)) out.push_back(a);
  return out;
}

namespace {

constexpr std::uint64_t kSingleGate = 0x73696e676c65ULL;   // "single"
constexpr std::uint64_t kSinglePick = 0x7069636bULL;       // "pick"

}  // namespace

MaskPlan plan_mask(const TokenRecord& token, const ComponentLibrary& lib, const MaskPolicy& policy,
                   std::uint64_t epoch) {
  policy.validate();
  MaskPlan plan;
  plan.collection = token.collection;
  plan.token_id = token.token_id;
  plan.draw_seed = rng::mix({policy.seed, policy.per_epoch_reseed ? epoch : 0, token_key(token.collection, token.token_id)});
  const auto maskable = maskable_traits(token, lib);
  if (maskable.empty()) return plan;
  if (policy.mode == MaskMode::Independent) {
    for (const auto& t : maskable) {
      const double u = rng::to_unit(rng::mix({plan.draw_seed, rng::fnv1a64(t.trait_type), rng::fnv1a64(t.value)}));
      if (u < policy.p) plan.masked_traits.push_back(t);
    }
  } else {
    if (rng::to_unit(rng::mix({plan.draw_seed, kSingleGate})) < policy.p) {
      rng::SplitMix gen(rng::mix({plan.draw_seed, kSinglePick}));
      plan.masked_traits.push_back(maskable[rng::uniform_below(gen, maskable.size())]);
    }
  }
  return plan;
}

Image apply_mask(const Image& image, std::span<const Mask* const> masks, Rgb fill) {
  for (const Mask* m : masks)
    if (m->width != image.width || m->height != image.height)
      throw Error(Errc::GeometryMismatch, "mask geometry differs from image");
  Image out = image;
  kernels::omp::fill_union(out, masks, fill);
  return out;
}

AugmentedPair augment_pair(const TokenRecord& token, const Image& source, const ComponentLibrary& lib,
                           const MaskPlan& plan, const MaskPolicy& policy) {
  AugmentedPair pair;
  pair.plan = plan;
  pair.caption = token.caption;
  if (pair.caption.segments.empty() && !token.attributes.empty())
    pair.caption = render_caption(token.collection, token.attributes);
  std::vector<const Mask*> masks;
  for (const auto& t : plan.masked_traits) {
    const ComponentAsset* a = lib.find(t);
    if (!a) throw Error(Errc::MissingComponentAsset, "no component asset for " + to_string(t));
    masks.push_back(&a->mask);
    pair.caption = remove_trait(pair.caption, t);
  }
  pair.image = masks.empty() ? source : apply_mask(source, masks, policy.fill);
  return pair;
}

fs::path library_dir(const fs::path& library_root, const std::string& collection) {
  return library_root / collection / "components";
}

AugmentStreamStats augment_stream(const Manifest& manifest, const fs::path& manifest_dir, const fs::path& library_root,
                                  const MaskPolicy& policy, std::uint64_t epoch, const PairSink& sink,
                                  std::size_t batch) {
  policy.validate();
  if (batch == 0) batch = 1;
  std::vector<const TokenRecord*> train;
  for (const auto& r : manifest.records)
    if (r.split == Split::Train) train.push_back(&r);

  std::map<std::string, ComponentLibrary> libs;
  for (const TokenRecord* r : train)
    if (!libs.count(r->collection)) libs.emplace(r->collection, read_library(library_dir(library_root, r->collection)));

  AugmentStreamStats stats;
  struct Slot {
    AugmentedPair pair;
    std::string code, detail;
  };
  std::vector<Slot> slots;
  for (std::size_t start = 0; start < train.size(); start += batch) {
    const std::size_t n = std::min(batch, train.size() - start);
    slots.assign(n, Slot{});
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
      const TokenRecord& r = *train[start + i];
      try {
        const ComponentLibrary& lib = libs.at(r.collection);
        const Image src = read_png(manifest_dir / r.image);
        slots[i].pair = augment_pair(r, src, lib, plan_mask(r, lib, policy, epoch), policy);
      } catch (const Error& e) {
        slots[i].code = e.qualified_code();
        slots[i].detail = e.what();
      } catch (const std::exception& e) {
        slots[i].code = "standardize.IoFailure";
        slots[i].detail = e.what();
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const TokenRecord& r = *train[start + i];
      if (!slots[i].code.empty()) {
        stats.skipped.push_back({r.collection, r.token_id, slots[i].code, slots[i].detail});
        continue;
      }
      sink(r, slots[i].pair);
      ++stats.emitted;
    }
  }
  return stats;
}

}  // namespace nftk
