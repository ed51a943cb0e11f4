#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nftk/image.hpp"
#include "nftk/metadata.hpp"

namespace nftk {

struct SeparationConfig {
  std::size_t k = 4;            // images differenced per round
  std::size_t rounds = 8;       // R
  int tolerance = 0;            // per-channel |delta| still counted as shared
  std::size_t min_support = 1;  // rounds that must agree for a pixel to stay
  std::uint64_t seed = 0;
  void validate() const;  // k >= 2, R >= 1, 1 <= s <= R, 0 <= tolerance <= 255
};

struct ComponentAsset {
  TraitKey trait;
  Mask mask;
  Image cutout;                        // template pixels under mask, transparent elsewhere
  std::vector<std::uint16_t> support;  // per pixel: rounds in which it was shared
  std::size_t rounds_used = 0;         // rounds that contributed at least one pixel
  std::size_t carriers = 0;
};

/// Pixel true iff the template is not fully transparent there and every
/// other image matches it within `tolerance` on each RGB channel.
/// Throws GeometryMismatch.
Mask shared_mask(const Image& tmpl, std::span<const Image* const> others, int tolerance);
Mask shared_mask(const Image& tmpl, std::span<const Image> others, int tolerance);

/// Loads a standardized image by token id. Must be safe to call from
/// several threads at once.
using ImageLoader = std::function<Image(TokenId)>;

/// R rounds; each samples k distinct carriers (seeded per trait), masks what
/// they share with the first sample, and the final mask keeps pixels shared
/// in at least s rounds. Cutout pixels come from the latest sharing round.
/// Throws InsufficientImages when fewer than k carriers exist.
ComponentAsset separate_component(const TraitKey& trait, std::span<const TokenId> carriers, const ImageLoader& load,
                                  const SeparationConfig& cfg);

struct SkippedTrait {
  TraitKey trait;
  std::size_t carriers = 0;
  std::string reason;  // error code name, e.g. "InsufficientImages"
};

struct ComponentLibrary {
  std::string collection;
  int width = 0;
  int height = 0;
  SeparationConfig config;
  std::map<TraitKey, ComponentAsset> assets;
  std::vector<SkippedTrait> skipped;

  const ComponentAsset* find(const TraitKey& t) const;
};

/// One asset per trait with >= k carriers; everything else is recorded in
/// `skipped`. Traits run in parallel; results do not depend on the worker
/// count.
ComponentLibrary separate_collection(const std::string& collection, const TraitIndex& index, const ImageLoader& load,
                                     const SeparationConfig& cfg);

/// First 16 hex digits of SHA-256(trait_type 0x1F value).
std::string trait_hash(const TraitKey& t);

/// Writes `<dir>/<trait_hash>/{mask.png,cutout.png,meta.json}` plus
/// `<dir>/index.json`, traits in sorted order.
void write_library(const std::filesystem::path& dir, const ComponentLibrary& lib);
/// Reads masks (and cutouts when `with_cutouts`). A missing directory
/// yields an empty library. Throws MissingComponentAsset for an index entry
/// whose files are gone.
ComponentLibrary read_library(const std::filesystem::path& dir, bool with_cutouts = false);

}  // namespace nftk
