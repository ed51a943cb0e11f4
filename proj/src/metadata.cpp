#include "nftk/metadata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <json.hpp>

#include "nftk/error.hpp"
#include "nftk/records.hpp"
#include "nftk/rng.hpp"

namespace nftk {

using json = nlohmann::json;

std::string to_string(const TraitKey& key) { return key.trait_type + ": " + key.value; }

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(Errc::InvalidArgument, "unknown split label: " + std::string(s));
}

std::uint64_t token_key(std::string_view collection, TokenId token) noexcept {
  return rng::mix({rng::fnv1a64(collection), token});
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string format_double(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.0e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[512];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  if (res.ec != std::errc{}) return {};
  return std::string(buf, res.ptr);
}

// Scalars become text; arrays/objects/null are not usable attribute values.
bool scalar_to_text(const json& v, std::string& out) {
  switch (v.type()) {
    case json::value_t::string: out = v.get_ref<const std::string&>(); return true;
    case json::value_t::number_integer: out = std::to_string(v.get<std::int64_t>()); return true;
    case json::value_t::number_unsigned: out = std::to_string(v.get<std::uint64_t>()); return true;
    case json::value_t::number_float: out = format_double(v.get<double>()); return !out.empty();
    case json::value_t::boolean: out = v.get<bool>() ? "true" : "false"; return true;
    default: return false;
  }
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string phrase_for(const Attribute& a) {
  std::string type = a.trait_type;
  std::transform(type.begin(), type.end(), type.begin(), ascii_lower);
  if (a.value.empty()) return type;
  return a.value + " " + type;
}

}  // namespace

std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

AttributeList parse_metadata(std::string_view raw, const ParsePolicy& policy) {
  const json doc = json::parse(raw.begin(), raw.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw Error(Errc::MalformedMetadata, "metadata is not valid JSON");
  if (!doc.is_object()) throw Error(Errc::MalformedMetadata, "metadata root is not an object");

  const auto it = doc.find("attributes");
  if (it == doc.end() || it->is_null())
    throw Error(Errc::NoSemanticContent, "metadata has no attributes");
  if (!it->is_array()) throw Error(Errc::MalformedMetadata, "`attributes` is not an array");

  AttributeList attrs;
  std::set<Attribute> seen;
  for (const json& entry : *it) {
    if (!entry.is_object()) continue;
    const auto t = entry.find("trait_type");
    if (t == entry.end()) continue;
    std::string type_text;
    if (!scalar_to_text(*t, type_text)) continue;
    Attribute a;
    a.trait_type = normalize_text(type_text);
    if (a.trait_type.empty()) continue;

    const auto v = entry.find("value");
    std::string value_text;
    if (v != entry.end() && !v->is_null() && !scalar_to_text(*v, value_text)) continue;
    a.value = normalize_text(value_text);
    if (a.value.empty() && !policy.keep_empty_values) continue;

    if (seen.insert(a).second) attrs.push_back(std::move(a));
  }
  if (attrs.empty()) throw Error(Errc::NoSemanticContent, "no usable attributes after filtering");
  return attrs;
}

AttributeList parse_metadata(std::span<const std::uint8_t> raw, const ParsePolicy& policy) {
  return parse_metadata(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()), policy);
}

std::string join_segments(std::string_view collection_name, std::span<const CaptionSegment> segments) {
  std::string out = "a ";
  out += collection_name;
  out += " NFT";
  for (std::size_t i = 0; i < segments.size(); ++i) {
    out += i == 0 ? " with " : ", ";
    out += segments[i].phrase;
  }
  return out;
}

Caption render_caption(std::string_view collection_name, const AttributeList& attrs) {
  if (attrs.empty()) throw Error(Errc::EmptyAttributes, "cannot caption an empty attribute list");
  Caption c;
  c.collection_name = std::string(collection_name);
  c.segments.reserve(attrs.size());
  for (const Attribute& a : attrs) c.segments.push_back({a, phrase_for(a)});
  c.rendered = join_segments(c.collection_name, c.segments);
  return c;
}

Caption remove_trait(const Caption& caption, const TraitKey& trait) {
  const auto it = std::find_if(caption.segments.begin(), caption.segments.end(),
                               [&](const CaptionSegment& s) { return s.trait == trait; });
  if (it == caption.segments.end())
    throw Error(Errc::TraitNotPresent, "caption has no segment for " + to_string(trait));
  Caption out;
  out.collection_name = caption.collection_name;
  out.segments.reserve(caption.segments.size() - 1);
  for (auto s = caption.segments.begin(); s != caption.segments.end(); ++s)
    if (s != it) out.segments.push_back(*s);
  out.rendered = join_segments(out.collection_name, out.segments);
  return out;
}

void TraitIndex::add(TokenId token, const AttributeList& attrs) {
  for (const Attribute& a : attrs) entries_[a].push_back(token);
}

void TraitIndex::finalize() {
  for (auto& [key, ids] : entries_) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
}

const std::vector<TokenId>* TraitIndex::find(const TraitKey& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

TraitIndex build_trait_index(std::span<const TokenRecord> records) {
  TraitIndex index;
  for (const TokenRecord& r : records) index.add(r.token_id, r.attributes);
  index.finalize();
  return index;
}

}  // namespace nftk
