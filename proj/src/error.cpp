#include "nftk/error.hpp"

namespace nftk {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedMetadata: return "MalformedMetadata";
    case Errc::NoSemanticContent: return "NoSemanticContent";
    case Errc::EmptyAttributes: return "EmptyAttributes";
    case Errc::TraitNotPresent: return "TraitNotPresent";
    case Errc::UnsupportedScheme: return "UnsupportedScheme";
    case Errc::AllCandidatesFailed: return "AllCandidatesFailed";
    case Errc::SizeLimitExceeded: return "SizeLimitExceeded";
    case Errc::UndecodableMedia: return "UndecodableMedia";
    case Errc::ZeroDimension: return "ZeroDimension";
    case Errc::NoFrames: return "NoFrames";
    case Errc::TooFewCollections: return "TooFewCollections";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ManifestInconsistent: return "ManifestInconsistent";
    case Errc::GeometryMismatch: return "GeometryMismatch";
    case Errc::InsufficientImages: return "InsufficientImages";
    case Errc::MissingComponentAsset: return "MissingComponentAsset";
    case Errc::BadMagic: return "BadMagic";
    case Errc::HeaderMismatch: return "HeaderMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::ZeroRow: return "ZeroRow";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::RowCountMismatch: return "RowCountMismatch";
    case Errc::Misaligned: return "Misaligned";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::TruthMissing: return "TruthMissing";
    case Errc::DegenerateDistribution: return "DegenerateDistribution";
    case Errc::UsageError: return "UsageError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view module_of(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedMetadata:
    case Errc::NoSemanticContent:
    case Errc::EmptyAttributes:
    case Errc::TraitNotPresent:
      return "metadata";
    case Errc::UnsupportedScheme:
    case Errc::AllCandidatesFailed:
    case Errc::SizeLimitExceeded:
      return "ingest";
    case Errc::UndecodableMedia:
    case Errc::ZeroDimension:
    case Errc::NoFrames:
    case Errc::TooFewCollections:
    case Errc::IoFailure:
    case Errc::ManifestInconsistent:
      return "standardize";
    case Errc::GeometryMismatch:
    case Errc::InsufficientImages:
      return "components";
    case Errc::MissingComponentAsset:
      return "dynmask";
    case Errc::BadMagic:
    case Errc::HeaderMismatch:
    case Errc::NonFiniteValue:
    case Errc::ZeroRow:
    case Errc::DimMismatch:
    case Errc::RowCountMismatch:
      return "embeddings";
    case Errc::Misaligned:
    case Errc::LengthMismatch:
    case Errc::NotNormalized:
    case Errc::TruthMissing:
    case Errc::DegenerateDistribution:
      return "metrics";
    case Errc::UsageError:
    case Errc::InvalidArgument:
      return "cli";
  }
  return "unknown";
}

std::string Error::qualified_code() const {
  std::string out(module_of(code_));
  out += '.';
  out += to_string(code_);
  return out;
}

}  // namespace nftk
