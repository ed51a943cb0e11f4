#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nftk/components.hpp"
#include "nftk/image.hpp"
#include "nftk/records.hpp"
#include "nftk/standardize.hpp"

namespace nftk {

enum class MaskMode {
  Independent,  // every maskable trait drawn on its own with probability p
  Single,       // with probability p, exactly one maskable trait, chosen uniformly
};

std::string_view to_string(MaskMode m) noexcept;
MaskMode parse_mask_mode(std::string_view s);

struct MaskPolicy {
  double p = 0.5;
  Rgb fill{0, 0, 0};
  bool per_epoch_reseed = true;
  std::uint64_t seed = 0;
  MaskMode mode = MaskMode::Independent;
  void validate() const;  // 0 <= p <= 1
};

/// "000000" / "#ff8800" -> Rgb. Throws InvalidArgument.
Rgb parse_fill(std::string_view hex);
std::string fill_hex(Rgb c);

struct MaskPlan {
  std::string collection;
  TokenId token_id = 0;
  std::vector<TraitKey> masked_traits;  // attribute order
  std::uint64_t draw_seed = 0;
  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

/// Traits of the token that have an asset in `lib`, in attribute order.
std::vector<TraitKey> maskable_traits(const TokenRecord& token, const ComponentLibrary& lib);

/// Counter-based: the draw for each trait depends only on (seed, epoch,
/// collection, token, trait), so any token's plan can be computed alone.
MaskPlan plan_mask(const TokenRecord& token, const ComponentLibrary& lib, const MaskPolicy& policy,
                   std::uint64_t epoch);

/// Union of the masks painted with `fill`. Throws GeometryMismatch.
Image apply_mask(const Image& image, std::span<const Mask* const> masks, Rgb fill);

struct AugmentedPair {
  Image image;
  Caption caption;
  MaskPlan plan;
};

/// Throws MissingComponentAsset when the plan names a trait absent from `lib`.
AugmentedPair augment_pair(const TokenRecord& token, const Image& source, const ComponentLibrary& lib,
                           const MaskPlan& plan, const MaskPolicy& policy);

struct AugmentSkip {
  std::string collection;
  TokenId token_id = 0;
  std::string code;
  std::string detail;
};

struct AugmentStreamStats {
  std::size_t emitted = 0;
  std::vector<AugmentSkip> skipped;
};

/// Called in manifest order for each emitted pair.
using PairSink = std::function<void(const TokenRecord&, const AugmentedPair&)>;

/// Every train record of the manifest, in manifest order. Images resolve
/// against `manifest_dir`; libraries live at
/// `<library_root>/<collection>/components`. Work is done in parallel
/// batches and reassembled in order before reaching `sink`.
AugmentStreamStats augment_stream(const Manifest& manifest, const std::filesystem::path& manifest_dir,
                                  const std::filesystem::path& library_root, const MaskPolicy& policy,
                                  std::uint64_t epoch, const PairSink& sink, std::size_t batch = 64);

std::filesystem::path library_dir(const std::filesystem::path& library_root, const std::string& collection);

}  // namespace nftk
