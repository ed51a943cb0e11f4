#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nftk/error.hpp"
#include "nftk/metadata.hpp"

namespace nftk {

struct GatewayConfig {
  std::vector<std::string> ipfs_gateways{"https://ipfs.io", "https://dweb.link"};
  std::string arweave_gateway = "https://arweave.net";

  /// Defaults overridden by NFTK_IPFS_GATEWAYS (comma separated) and
  /// NFTK_ARWEAVE_GATEWAY when set.
  static GatewayConfig from_env();
};

enum class FetchKind { Media, Metadata };

struct FetchPlan {
  std::string original_uri;
  std::vector<std::string> candidate_urls;  // gateway preference order
  FetchKind kind = FetchKind::Media;
};

/// ipfs://<cid>/<path> -> <gateway>/ipfs/<cid>/<path> for every gateway,
/// ar://<tx> -> <arweave>/<tx>, http(s) passes through. Throws
/// UnsupportedScheme, or InvalidArgument for an empty URI.
FetchPlan resolve_uri(std::string_view uri, const GatewayConfig& gateways, FetchKind kind = FetchKind::Media);

struct RetryPolicy {
  int max_retries = 3;  // per candidate, after the first attempt
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
  std::size_t size_cap = 64u << 20;
  std::chrono::milliseconds timeout{30000};
  /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1), capped.
  std::chrono::milliseconds backoff(int attempt) const;
};

/// Raised when no candidate produced a successful response.
class FetchError : public Error {
 public:
  FetchError(std::string message, std::vector<std::pair<std::string, std::string>> last_errors)
      : Error(Errc::AllCandidatesFailed, message), last_errors_(std::move(last_errors)) {}
  /// (candidate url, last error seen for it)
  const std::vector<std::pair<std::string, std::string>>& last_errors() const noexcept { return last_errors_; }

 private:
  std::vector<std::pair<std::string, std::string>> last_errors_;
};

/// Hook invoked around each HTTP request; used to enforce per-host limits.
class RequestGate {
 public:
  virtual ~RequestGate() = default;
  virtual void acquire(const std::string& host) = 0;
  virtual void release(const std::string& host) = 0;
};

/// Candidates in order; each retried with exponential backoff on transport
/// errors, 5xx, 408 and 429. Other 4xx move straight to the next candidate.
/// Throws FetchError or SizeLimitExceeded.
std::vector<std::uint8_t> fetch_token(const FetchPlan& plan, const RetryPolicy& policy, RequestGate* gate = nullptr);

struct CollectionTarget {
  std::string name;
  std::string media_uri;     // may contain {id}; empty -> metadata "image"
  std::string metadata_uri;  // may contain {id}; otherwise the id is appended
  TokenId first_id = 0;
  TokenId last_id = 0;
};

/// Expand a base URI for one token.
std::string token_uri(std::string_view pattern, TokenId id);

/// JSONL, one {name, media_uri?, metadata_uri, first_id, last_id} per line.
std::vector<CollectionTarget> read_targets(const std::filesystem::path& path);

struct IngestLimits {
  std::size_t per_host = 8;
  std::size_t workers = 8;
  RetryPolicy retry;
  GatewayConfig gateways;
  double complete_threshold = 0.99;
  bool dry_run = false;
};

struct TokenFailureRecord {
  TokenId token_id = 0;
  std::string error;  // module-qualified code
};

struct DownloadReport {
  std::string collection;
  std::size_t range_size = 0;
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  std::size_t skipped = 0;  // already complete on disk
  std::vector<TokenFailureRecord> failed;
  std::uint64_t bytes_total = 0;
  std::chrono::milliseconds wall_time{0};
  double complete_threshold = 0.99;
  bool complete = false;  // (succeeded + skipped) / range_size >= threshold
};

/// Writes `<root>/<name>/meta/<id>.json` and `<root>/<name>/media/<id>.<ext>`
/// and appends to `<root>/<name>/progress.jsonl`. Tokens whose files match
/// their progress entry (size and SHA-256) are skipped.
DownloadReport fetch_collection(const CollectionTarget& target, const std::filesystem::path& root,
                                const IngestLimits& limits);

}  // namespace nftk
