#include "nftk/standardize.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "nftk/error.hpp"
#include "nftk/hash.hpp"
#include "nftk/kernels.hpp"
#include "nftk/rng.hpp"

namespace nftk {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

int standard_height(int width, int height) {
  if (width <= 0 || height <= 0) throw Error(Errc::ZeroDimension, "image has a zero dimension");
  const double h = std::round(static_cast<double>(kStdWidth) * height / width);
  return std::max(1, static_cast<int>(h));
}

Image resize_to_standard(const Image& img) {
  const int h = standard_height(img.width, img.height);
  if (img.width == kStdWidth) return img;
  Image out(kStdWidth, h);
  kernels::omp::resize_bicubic(img, out);
  return out;
}

std::size_t frame_index_for(std::uint64_t frame_seed, std::size_t count) {
  if (count == 0) throw Error(Errc::NoFrames, "medium has no frames");
  rng::SplitMix gen(frame_seed);
  return static_cast<std::size_t>(rng::uniform_below(gen, count));
}

std::uint64_t frame_seed_for(std::uint64_t seed, std::string_view collection, TokenId token) noexcept {
  return rng::mix({seed, token_key(collection, token)});
}

Image select_frame(std::span<const std::uint8_t> raw, std::uint64_t frame_seed, std::string_view format_hint) {
  const MediaFormat f = sniff_format(raw, format_hint);
  const std::size_t n = frame_count(raw, f);
  return decode_frame(raw, f, frame_index_for(frame_seed, n), kStdWidth);
}

StdImage standardize_image(std::span<const std::uint8_t> raw, std::string_view format_hint,
                           std::uint64_t frame_seed) {
  if (raw.empty()) throw Error(Errc::UndecodableMedia, "empty media");
  StdImage out;
  out.source_format = sniff_format(raw, format_hint);
  if (out.source_format == MediaFormat::Unknown) throw Error(Errc::UndecodableMedia, "unrecognised media container");
  out.frame_count = frame_count(raw, out.source_format);
  out.frame_index = is_animated_container(out.source_format) ? frame_index_for(frame_seed, out.frame_count) : 0;
  const Image decoded = decode_frame(raw, out.source_format, out.frame_index, kStdWidth);
  out.pixels = resize_to_standard(decoded);
  return out;
}

std::string content_hash(const Image& img) {
  std::vector<std::uint8_t> buf(8);
  for (int i = 0; i < 4; ++i) {
    buf[i] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(img.width) >> (8 * i));
    buf[4 + i] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(img.height) >> (8 * i));
  }
  buf.insert(buf.end(), img.rgba.begin(), img.rgba.end());
  return sha256_hex(buf);
}

std::string_view to_string(ExclusionReason r) noexcept {
  switch (r) {
    case ExclusionReason::AllDuplicateMedia: return "AllDuplicateMedia";
    case ExclusionReason::TooFewTokens: return "TooFewTokens";
    case ExclusionReason::MissingMetadata: return "MissingMetadata";
    case ExclusionReason::NoSemanticContent: return "NoSemanticContent";
  }
  return "?";
}

CollectionVerdict filter_collection(const CollectionStats& s, std::size_t min_tokens) {
  CollectionVerdict v;
  v.collection = s.collection;
  const auto& h = s.content_hashes;
  if (h.size() >= 2 && std::all_of(h.begin(), h.end(), [&](const std::string& x) { return x == h.front(); }))
    v.reasons.push_back(ExclusionReason::AllDuplicateMedia);
  if (s.with_attributes < min_tokens) v.reasons.push_back(ExclusionReason::TooFewTokens);
  if (s.token_count > 0 && s.with_metadata == 0) {
    v.reasons.push_back(ExclusionReason::MissingMetadata);
  } else if (s.with_metadata > 0 && s.with_attributes == 0) {
    v.reasons.push_back(ExclusionReason::NoSemanticContent);
  }
  if (s.with_metadata < s.token_count && s.with_metadata > 0)
    v.notes.push_back(std::to_string(s.token_count - s.with_metadata) + " of " + std::to_string(s.token_count) +
                      " tokens lack a metadata file");
  if (s.with_attributes < s.with_metadata && s.with_attributes > 0)
    v.notes.push_back(std::to_string(s.with_metadata - s.with_attributes) + " of " +
                      std::to_string(s.with_metadata) + " metadata files carry no usable attributes");
  v.kept = v.reasons.empty();
  return v;
}

void SplitRatios::validate() const {
  if (!(train >= 0 && val >= 0 && test >= 0) || std::fabs(train + val + test - 1.0) > 1e-9)
    throw Error(Errc::InvalidArgument, "split ratios must be nonnegative and sum to 1");
}

SplitCounts split_counts(std::size_t p, const SplitRatios& r) {
  r.validate();
  const auto floor_of = [p](double ratio) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(p) + 1e-9));
  };
  SplitCounts c;
  c.train = std::min(p, floor_of(r.train));
  c.val = std::min(p - c.train, floor_of(r.val));
  c.test = p - c.train - c.val;
  return c;
}

SplitCounts SplitAssignment::counts() const {
  SplitCounts c;
  for (const auto& [id, s] : of) {
    (s == Split::Train ? c.train : s == Split::Val ? c.val : c.test) += 1;
  }
  return c;
}

SplitAssignment partition(std::vector<std::string> ids, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(Errc::InvalidArgument, "duplicate collection id in partition input");
  if (ids.size() < 3)
    throw Error(Errc::TooFewCollections, "partition needs at least 3 collections, got " + std::to_string(ids.size()));
  std::mt19937_64 gen(seed);
  rng::shuffle(std::span<std::string>(ids), gen);
  const SplitCounts c = split_counts(ids.size(), ratios);
  SplitAssignment a;
  a.seed = seed;
  a.ratios = ratios;
  for (std::size_t i = 0; i < ids.size(); ++i)
    a.of[ids[i]] = i < c.train ? Split::Train : i < c.train + c.val ? Split::Val : Split::Test;
  return a;
}

// ---- manifest ---------------------------------------------------------------

ojson record_to_json(const TokenRecord& r) {
  ojson attrs = ojson::array();
  for (const auto& a : r.attributes) attrs.push_back(ojson{{"trait_type", a.trait_type}, {"value", a.value}});
  ojson j;
  j["collection"] = r.collection;
  j["token_id"] = r.token_id;
  j["image"] = r.image;
  j["caption"] = r.caption.rendered;
  j["template_id"] = r.template_id;
  j["attributes"] = std::move(attrs);
  j["split"] = std::string(to_string(r.split));
  j["frame_seed"] = r.frame_seed ? ojson(*r.frame_seed) : ojson(nullptr);
  return j;
}

TokenRecord record_from_json(const nlohmann::json& j) {
  TokenRecord r;
  r.collection = j.at("collection").get<std::string>();
  r.token_id = j.at("token_id").get<TokenId>();
  r.image = j.at("image").get<std::string>();
  r.template_id = j.value("template_id", std::string(kTemplateId));
  for (const auto& a : j.at("attributes"))
    r.attributes.push_back({a.at("trait_type").get<std::string>(), a.at("value").get<std::string>()});
  r.split = parse_split(j.at("split").get<std::string>());
  if (j.contains("frame_seed") && !j.at("frame_seed").is_null()) r.frame_seed = j.at("frame_seed").get<std::uint64_t>();
  // Segments from the attributes, text verbatim.
  if (!r.attributes.empty()) r.caption = render_caption(r.collection, r.attributes);
  r.caption.collection_name = r.collection;
  r.caption.rendered = j.at("caption").get<std::string>();
  return r;
}

namespace {

ojson header_to_json(const ManifestHeader& h) {
  ojson j;
  j["nftk_manifest"] = 1;
  j["toolkit_version"] = h.toolkit_version;
  j["resampling"] = h.resampling;
  j["ratios"] = {h.ratios.train, h.ratios.val, h.ratios.test};
  j["seed"] = h.seed;
  j["template_id"] = h.template_id;
  for (const auto& [k, v] : h.extra.items()) j[k] = v;
  return j;
}

ManifestHeader header_from_json(const nlohmann::json& j) {
  ManifestHeader h;
  h.toolkit_version = j.value("toolkit_version", std::string{});
  h.resampling = j.value("resampling", std::string{});
  if (const auto it = j.find("ratios"); it != j.end() && it->is_array() && it->size() == 3)
    h.ratios = {(*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>()};
  h.seed = j.value("seed", std::uint64_t{0});
  h.template_id = j.value("template_id", std::string(kTemplateId));
  static const std::set<std::string> known = {"nftk_manifest", "toolkit_version", "resampling", "ratios", "seed",
                                              "template_id"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) h.extra[k] = v;
  return h;
}

bool record_less(const TokenRecord& a, const TokenRecord& b) {
  if (a.collection != b.collection) return a.collection < b.collection;
  return a.token_id < b.token_id;
}

}  // namespace

void write_manifest(const fs::path& path, Manifest m) {
  std::stable_sort(m.records.begin(), m.records.end(), record_less);
  std::string text = header_to_json(m.header).dump() + "\n";
  for (const auto& r : m.records) text += record_to_json(r).dump() + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(Errc::ManifestInconsistent, "manifest line " + std::to_string(lineno) + " is not a JSON object");
    if (!have_header) {
      if (!j.contains("nftk_manifest"))
        throw Error(Errc::ManifestInconsistent, "manifest is missing its header line");
      m.header = header_from_json(j);
      have_header = true;
      continue;
    }
    try {
      m.records.push_back(record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ManifestInconsistent, "manifest line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::ManifestInconsistent, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(Errc::ManifestInconsistent, "manifest is empty");
  return m;
}

std::string_view to_string(FindingKind k) noexcept {
  switch (k) {
    case FindingKind::MissingFile: return "MissingFile";
    case FindingKind::BadGeometry: return "BadGeometry";
    case FindingKind::SplitInconsistent: return "SplitInconsistent";
    case FindingKind::CaptionMismatch: return "CaptionMismatch";
    case FindingKind::TemplateMismatch: return "TemplateMismatch";
    case FindingKind::DuplicateRecord: return "DuplicateRecord";
  }
  return "?";
}

VerifyReport verify_manifest(const fs::path& path) {
  const Manifest m = read_manifest(path);
  const fs::path base = path.parent_path();
  VerifyReport rep;
  rep.records = m.records.size();

  std::map<std::string, std::array<std::size_t, 3>> split_votes;
  for (const auto& r : m.records) ++split_votes[r.collection][static_cast<int>(r.split)];
  std::map<std::string, Split> majority;
  for (const auto& [c, v] : split_votes)
    majority[c] = static_cast<Split>(std::max_element(v.begin(), v.end()) - v.begin());

  std::set<std::pair<std::string, TokenId>> seen;
  for (const auto& r : m.records) {
    auto add = [&](FindingKind k, std::string detail) { rep.findings.push_back({k, r.collection, r.token_id, std::move(detail)}); };
    if (!seen.insert({r.collection, r.token_id}).second) add(FindingKind::DuplicateRecord, "token listed twice");
    const fs::path img = base / r.image;
    if (!fs::is_regular_file(img)) {
      add(FindingKind::MissingFile, r.image);
    } else {
      const auto [w, h] = png_dimensions(img);
      if (w != kStdWidth || h <= 0)
        add(FindingKind::BadGeometry, r.image + " is " + std::to_string(w) + "x" + std::to_string(h));
    }
    if (r.split != majority[r.collection])
      add(FindingKind::SplitInconsistent, "split " + std::string(to_string(r.split)) + " differs from collection split " +
                                              std::string(to_string(majority[r.collection])));
    if (r.template_id != m.header.template_id)
      add(FindingKind::TemplateMismatch, "template " + r.template_id + " vs header " + m.header.template_id);
    const std::string expected =
        r.attributes.empty() ? join_segments(r.collection, {}) : render_caption(r.collection, r.attributes).rendered;
    if (r.caption.rendered != expected) add(FindingKind::CaptionMismatch, "stored caption does not re-render");
  }
  return rep;
}

// ---- dataset build ----------------------------------------------------------

namespace {

struct TokenFiles {
  fs::path media;
  fs::path meta;
};

std::optional<TokenId> parse_id(const std::string& stem) {
  if (stem.empty() || stem.size() > 19 || !std::all_of(stem.begin(), stem.end(), ::isdigit)) return std::nullopt;
  return std::stoull(stem);
}

std::map<TokenId, TokenFiles> list_tokens(const fs::path& dir) {
  std::map<TokenId, TokenFiles> out;
  auto scan = [&](const fs::path& sub, bool media) {
    if (!fs::is_directory(sub)) return;
    for (const auto& e : fs::directory_iterator(sub)) {
      if (!e.is_regular_file()) continue;
      const auto p = e.path();
      if (p.extension() == ".part") continue;
      const auto id = parse_id(p.stem().string());
      if (!id) continue;
      if (media) out[*id].media = p;
      else if (p.extension() == ".json") out[*id].meta = p;
    }
  };
  scan(dir / "media", true);
  scan(dir / "meta", false);
  return out;
}

struct TokenOutcome {
  TokenId id = 0;
  bool has_media = false;
  bool has_meta = false;
  bool has_attrs = false;
  std::string hash;
  std::optional<std::uint64_t> frame_seed;
  AttributeList attrs;
  std::string error;  // qualified code when the token could not be used
};

}  // namespace

StandardizeResult standardize_dataset(const fs::path& ingest_root, const fs::path& out_dir,
                                      const StandardizeOptions& opts) {
  opts.ratios.validate();
  if (!fs::is_directory(ingest_root)) throw Error(Errc::IoFailure, "ingest root not found: " + ingest_root.string());
  std::vector<std::string> collections;
  for (const auto& e : fs::directory_iterator(ingest_root))
    if (e.is_directory()) collections.push_back(e.path().filename().string());
  std::sort(collections.begin(), collections.end());

  StandardizeResult res;
  std::map<std::string, std::vector<TokenOutcome>> kept_tokens;
  for (const auto& coll : collections) {
    const auto files = list_tokens(ingest_root / coll);
    std::vector<std::pair<TokenId, TokenFiles>> items(files.begin(), files.end());
    std::vector<TokenOutcome> out(items.size());
    const fs::path img_dir = out_dir / "images" / coll;
    if (!opts.dry_run) fs::create_directories(img_dir);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& [id, f] = items[i];
      TokenOutcome& o = out[i];
      o.id = id;
      try {
        if (!f.meta.empty()) {
          o.has_meta = true;
          try {
            o.attrs = parse_metadata(read_file(f.meta));
            o.has_attrs = true;
          } catch (const Error& e) {
            o.error = e.qualified_code();
          }
        }
        if (!f.media.empty()) {
          const auto raw = read_file(f.media);
          const MediaFormat fmt = sniff_format(raw, f.media.extension().string());
          const std::uint64_t fs_seed = frame_seed_for(opts.seed, coll, id);
          const StdImage s = standardize_image(raw, f.media.extension().string(), fs_seed);
          o.has_media = true;
          if (is_animated_container(fmt)) o.frame_seed = fs_seed;
          // Animated media hash frame 0.
          o.hash = is_animated_container(fmt) ? content_hash(decode_frame(raw, fmt, 0)) : content_hash(s.pixels);
          if (!opts.dry_run && o.has_attrs) write_png(img_dir / (std::to_string(id) + ".png"), s.pixels);
        } else if (o.error.empty()) {
          o.error = "standardize.MissingMedia";
        }
        if (o.error.empty() && !o.has_meta) o.error = "standardize.MissingMetadata";
      } catch (const Error& e) {
        o.has_media = false;
        o.error = e.qualified_code();
      } catch (const std::exception&) {
        o.has_media = false;
        o.error = "standardize.IoFailure";
      }
    }

    CollectionStats stats;
    stats.collection = coll;
    for (const auto& o : out) {
      if (!o.has_media) continue;
      ++stats.token_count;
      stats.with_metadata += o.has_meta;
      stats.with_attributes += o.has_attrs;
      stats.content_hashes.push_back(o.hash);
    }
    for (const auto& o : out)
      if (!o.error.empty()) res.failures.push_back({coll, o.id, o.error});
    CollectionVerdict v = filter_collection(stats, opts.min_tokens);
    if (v.kept) {
      std::vector<TokenOutcome> usable;
      for (auto& o : out)
        if (o.has_media && o.has_attrs) usable.push_back(std::move(o));
      kept_tokens[coll] = std::move(usable);
    } else if (!opts.dry_run) {
      fs::remove_all(img_dir);
    }
    res.verdicts.push_back(std::move(v));
  }

  std::vector<std::string> kept;
  for (const auto& [c, _] : kept_tokens) kept.push_back(c);
  res.splits = partition(kept, opts.ratios, opts.seed);

  res.manifest.header.ratios = opts.ratios;
  res.manifest.header.seed = opts.seed;
  for (const auto& [coll, toks] : kept_tokens) {
    for (const auto& o : toks) {
      TokenRecord r;
      r.collection = coll;
      r.token_id = o.id;
      r.image = (fs::path("images") / coll / (std::to_string(o.id) + ".png")).generic_string();
      r.attributes = o.attrs;
      r.caption = render_caption(coll, o.attrs);
      r.split = res.splits.of.at(coll);
      r.frame_seed = o.frame_seed;
      res.manifest.records.push_back(std::move(r));
    }
  }
  std::stable_sort(res.manifest.records.begin(), res.manifest.records.end(), record_less);
  return res;
}

}  // namespace nftk
