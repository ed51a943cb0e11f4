#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nftk {

enum class Errc {
  // metadata
  MalformedMetadata,
  NoSemanticContent,
  EmptyAttributes,
  TraitNotPresent,
  // ingest
  UnsupportedScheme,
  AllCandidatesFailed,
  SizeLimitExceeded,
  // standardize
  UndecodableMedia,
  ZeroDimension,
  NoFrames,
  TooFewCollections,
  IoFailure,
  ManifestInconsistent,
  // components / dynmask
  GeometryMismatch,
  InsufficientImages,
  MissingComponentAsset,
  // embeddings
  BadMagic,
  HeaderMismatch,
  NonFiniteValue,
  ZeroRow,
  DimMismatch,
  RowCountMismatch,
  // metrics
  Misaligned,
  LengthMismatch,
  NotNormalized,
  TruthMissing,
  DegenerateDistribution,
  // cli / generic
  UsageError,
  InvalidArgument,
};

std::string_view to_string(Errc code) noexcept;

/// Module that owns an error code ("metadata", "ingest", ...).
std::string_view module_of(Errc code) noexcept;

/// Base exception for every failure the toolkit reports. The code is stable
/// and machine-readable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

  /// "module.Code", e.g. "metrics.TruthMissing".
  std::string qualified_code() const;

 private:
  Errc code_;
};

}  // namespace nftk
