#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nftk/image.hpp"
#include "nftk/media.hpp"
#include "nftk/records.hpp"

namespace nftk {

inline constexpr int kStdWidth = 512;
inline constexpr std::string_view kResampling = "bicubic-keys-a-0.5";
inline constexpr std::size_t kMinTokens = 500;

/// round(512 * h / w), at least 1.
int standard_height(int width, int height);

struct StdImage {
  Image pixels;
  MediaFormat source_format = MediaFormat::Unknown;
  std::size_t frame_index = 0;
  std::size_t frame_count = 1;
};

/// Resize to width 512 with the bicubic kernel; returns the input unchanged
/// when it is already 512 wide.
Image resize_to_standard(const Image& img);

/// Decode (selecting a frame for animated containers), rasterize SVG at 512,
/// and resize. Throws UndecodableMedia, ZeroDimension, NoFrames.
StdImage standardize_image(std::span<const std::uint8_t> raw, std::string_view format_hint = {},
                           std::uint64_t frame_seed = 0);

/// Seeded uniform index in [0, count).
std::size_t frame_index_for(std::uint64_t frame_seed, std::size_t count);
/// The chosen frame of an animated (or still) medium. Throws NoFrames.
Image select_frame(std::span<const std::uint8_t> raw, std::uint64_t frame_seed, std::string_view format_hint = {});
/// Per-token frame seed derived from the run seed.
std::uint64_t frame_seed_for(std::uint64_t seed, std::string_view collection, TokenId token) noexcept;

/// SHA-256 over width, height and the RGBA bytes.
std::string content_hash(const Image& img);

enum class ExclusionReason { AllDuplicateMedia, TooFewTokens, MissingMetadata, NoSemanticContent };
std::string_view to_string(ExclusionReason r) noexcept;

struct CollectionStats {
  std::string collection;
  std::size_t token_count = 0;        // tokens with decodable media
  std::size_t with_metadata = 0;      // ... of which have a metadata file
  std::size_t with_attributes = 0;    // ... of which have usable attributes
  std::vector<std::string> content_hashes;
};

struct CollectionVerdict {
  std::string collection;
  bool kept = true;
  std::vector<ExclusionReason> reasons;
  std::vector<std::string> notes;  // borderline cases for human review
};

/// Kept iff no rule fires. Usable tokens (media + attributes) below
/// `min_tokens` -> TooFewTokens; >= 2 hashes all equal -> AllDuplicateMedia;
/// no metadata at all -> MissingMetadata; metadata but no attributes anywhere
/// -> NoSemanticContent.
CollectionVerdict filter_collection(const CollectionStats& stats, std::size_t min_tokens = kMinTokens);

struct SplitRatios {
  double train = 0.80;
  double val = 0.05;
  double test = 0.15;
  void validate() const;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

/// n_train = floor(train * P), n_val = floor(val * P), test takes the rest.
SplitCounts split_counts(std::size_t p, const SplitRatios& ratios);

struct SplitAssignment {
  std::map<std::string, Split> of;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  SplitCounts counts() const;
};

/// Sorts and shuffles the ids with a seeded mt19937_64, then assigns
/// train/val/test in shuffled order. Throws TooFewCollections below 3 and
/// InvalidArgument on duplicate ids.
SplitAssignment partition(std::vector<std::string> collections, const SplitRatios& ratios, std::uint64_t seed);

// ---- manifest ---------------------------------------------------------------

struct ManifestHeader {
  std::string toolkit_version = NFTK_VERSION;
  std::string resampling{kResampling};
  SplitRatios ratios;
  std::uint64_t seed = 0;
  std::string template_id{kTemplateId};
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();  // stage-specific keys
};

struct Manifest {
  ManifestHeader header;
  std::vector<TokenRecord> records;
};

nlohmann::ordered_json record_to_json(const TokenRecord& r);
TokenRecord record_from_json(const nlohmann::json& j);

/// Records are emitted sorted by (collection, token id). Throws IoFailure.
void write_manifest(const std::filesystem::path& path, Manifest manifest);
/// Throws IoFailure (unreadable) or ManifestInconsistent (bad lines).
Manifest read_manifest(const std::filesystem::path& path);

enum class FindingKind { MissingFile, BadGeometry, SplitInconsistent, CaptionMismatch, TemplateMismatch, DuplicateRecord };
std::string_view to_string(FindingKind k) noexcept;

struct Finding {
  FindingKind kind;
  std::string collection;
  TokenId token_id = 0;
  std::string detail;
};

struct VerifyReport {
  std::size_t records = 0;
  std::vector<Finding> findings;
  bool ok() const noexcept { return findings.empty(); }
};

/// Image paths resolve relative to the manifest's directory.
VerifyReport verify_manifest(const std::filesystem::path& path);

// ---- dataset build ----------------------------------------------------------

struct StandardizeOptions {
  std::size_t min_tokens = kMinTokens;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

struct TokenFailure {
  std::string collection;
  TokenId token_id = 0;
  std::string code;  // module-qualified error code, or standardize.Missing{Media,Metadata}
};

struct StandardizeResult {
  Manifest manifest;
  std::vector<CollectionVerdict> verdicts;
  SplitAssignment splits;
  std::vector<TokenFailure> failures;
};

/// Reads `<ingest_root>/<collection>/{media,meta}`, standardizes every
/// token, filters collections and partitions the kept ones. Images land in
/// `<out_dir>/images/<collection>/<id>.png`; the manifest is not written.
StandardizeResult standardize_dataset(const std::filesystem::path& ingest_root, const std::filesystem::path& out_dir,
                                      const StandardizeOptions& opts);

}  // namespace nftk
