#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nftk {

using TokenId = std::uint64_t;

struct Attribute {
  std::string trait_type;
  std::string value;
  friend auto operator<=>(const Attribute&, const Attribute&) = default;
};

/// Identity of one visual component: the (trait_type, value) pair.
using TraitKey = Attribute;

/// Attributes in source order, deduplicated on (trait_type, value).
using AttributeList = std::vector<Attribute>;

std::string to_string(const TraitKey& key);

struct ParsePolicy {
  bool keep_empty_values = false;
};

/// Reads the conventional top-level `attributes` array of
/// {trait_type, value} objects. Throws MalformedMetadata for anything that is
/// not a JSON object (or whose `attributes` is not an array) and
/// NoSemanticContent when nothing usable survives filtering.
AttributeList parse_metadata(std::span<const std::uint8_t> raw, const ParsePolicy& policy = {});
AttributeList parse_metadata(std::string_view raw, const ParsePolicy& policy = {});

/// Trim and collapse internal whitespace runs to one space. No case folding.
std::string normalize_text(std::string_view s);

inline constexpr std::string_view kTemplateId = "tmpl-v1";

struct CaptionSegment {
  TraitKey trait;
  std::string phrase;
  friend bool operator==(const CaptionSegment&, const CaptionSegment&) = default;
};

struct Caption {
  std::string collection_name;
  std::vector<CaptionSegment> segments;
  std::string rendered;
  friend bool operator==(const Caption&, const Caption&) = default;
};

/// "a <collection> NFT with <value> <trait_type>, ..." in attribute order,
/// trait_type lower-cased. Throws EmptyAttributes on an empty list.
Caption render_caption(std::string_view collection_name, const AttributeList& attrs);

/// Caption without the segment for `trait`; with no segments left the text
/// collapses to "a <collection> NFT". Throws TraitNotPresent.
Caption remove_trait(const Caption& caption, const TraitKey& trait);

/// Joins segments under the active template.
std::string join_segments(std::string_view collection_name, std::span<const CaptionSegment> segments);

struct TokenRecord;

/// trait -> ascending token ids carrying it.
class TraitIndex {
 public:
  using Map = std::map<TraitKey, std::vector<TokenId>>;

  void add(TokenId token, const AttributeList& attrs);
  /// Sorts and dedups the id lists; call once after the last add().
  void finalize();

  const Map& entries() const noexcept { return entries_; }
  const std::vector<TokenId>* find(const TraitKey& key) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  friend bool operator==(const TraitIndex&, const TraitIndex&) = default;

 private:
  Map entries_;
};

TraitIndex build_trait_index(std::span<const TokenRecord> records);

}  // namespace nftk
