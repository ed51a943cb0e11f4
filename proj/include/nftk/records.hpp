#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "nftk/metadata.hpp"

namespace nftk {

enum class Split { Train, Val, Test };

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view s);

/// One standardized NFT: the unit every stage after ingest works on.
struct TokenRecord {
  std::string collection;
  TokenId token_id = 0;
  std::string image;  // path relative to the manifest directory
  Caption caption;
  AttributeList attributes;
  Split split = Split::Train;
  std::optional<std::uint64_t> frame_seed;
  std::string template_id{kTemplateId};

  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

/// Stable 64-bit key for (collection, token id).
std::uint64_t token_key(std::string_view collection, TokenId token) noexcept;

}  // namespace nftk
