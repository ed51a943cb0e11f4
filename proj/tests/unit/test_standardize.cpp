#include <doctest.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <set>

#include "nftk/error.hpp"
#include "nftk/standardize.hpp"
#include "testkit.hpp"

using namespace nftk;
namespace fs = std::filesystem;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no nftk::Error thrown");
  return Errc::InvalidArgument;
}

Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(w, h);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    img.rgba[4 * p] = r;
    img.rgba[4 * p + 1] = g;
    img.rgba[4 * p + 2] = b;
    img.rgba[4 * p + 3] = 255;
  }
  return img;
}

std::vector<std::uint8_t> cv_encode(const char* ext, int w, int h, int seed) {
  cv::Mat bgr(h, w, CV_8UC3, cv::Scalar(seed * 20 % 256, 90, 200 - seed * 10));
  std::vector<std::uint8_t> buf;
  REQUIRE(cv::imencode(ext, bgr, buf));
  return buf;
}

std::vector<std::uint8_t> gif_frames(int frames, int base) {
  const std::vector<Rgb> palette{{0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {static_cast<std::uint8_t>(base), 7, 9}};
  std::vector<testkit::GifFrame> fs;
  for (int i = 0; i < frames; ++i) fs.push_back(testkit::solid_frame(16, 8, static_cast<std::uint8_t>((i + 4) % 5)));
  return testkit::encode_gif(16, 8, palette, fs);
}

std::string svg_doc(int shade) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"20\" height=\"10\"><rect width=\"20\" height=\"10\" fill=\"rgb(" +
         std::to_string(shade) + ",10,10)\"/></svg>";
}

std::string meta_json(const std::string& body, int hat) {
  return R"({"name":"x","attributes":[{"trait_type":"Body","value":")" + body +
         R"("},{"trait_type":"Hat","value":"hat )" + std::to_string(hat) + R"("}]})";
}

void put(const fs::path& p, std::span<const std::uint8_t> bytes) {
  fs::create_directories(p.parent_path());
  write_file(p, bytes);
}

void put(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  testkit::write_text(p, text);
}

TokenRecord record(const std::string& coll, TokenId id, Split split) {
  TokenRecord r;
  r.collection = coll;
  r.token_id = id;
  r.image = "images/" + coll + "/" + std::to_string(id) + ".png";
  r.attributes = {{"Body", "Ape"}, {"Hat", "cap " + std::to_string(id)}};
  r.caption = render_caption(coll, r.attributes);
  r.split = split;
  return r;
}

}  // namespace

TEST_CASE("standard dimensions") {
  CHECK(standard_height(1024, 1024) == 512);
  CHECK(standard_height(800, 400) == 256);
  CHECK(standard_height(300, 600) == 1024);
  CHECK(standard_height(3, 1) == 171);
  CHECK(standard_height(5000, 1) == 1);
  CHECK(code_of([] { standard_height(0, 5); }) == Errc::ZeroDimension);

  for (auto [w, h] : {std::pair{1024, 1024}, std::pair{800, 400}, std::pair{300, 600}}) {
    const Image out = resize_to_standard(solid(w, h, 9, 8, 7));
    CHECK(out.width == 512);
    CHECK(out.height == standard_height(w, h));
  }
}

TEST_CASE("standardizing a standardized image is a no-op") {
  std::mt19937_64 gen(11);
  Image img(37, 23);
  for (auto& v : img.rgba) v = static_cast<std::uint8_t>(gen());
  for (std::size_t p = 0; p < img.pixel_count(); ++p) img.rgba[4 * p + 3] = 255;
  const StdImage once = standardize_image(encode_png(img));
  REQUIRE(once.pixels.width == 512);
  const StdImage twice = standardize_image(encode_png(once.pixels));
  CHECK(twice.pixels == once.pixels);
  CHECK(resize_to_standard(once.pixels) == once.pixels);
}

TEST_CASE("every source format lands at width 512") {
  const std::vector<std::pair<std::vector<std::uint8_t>, MediaFormat>> inputs = {
      {cv_encode(".png", 40, 30, 1), MediaFormat::Png},
      {cv_encode(".jpg", 40, 30, 2), MediaFormat::Jpeg},
      {cv_encode(".webp", 40, 30, 3), MediaFormat::WebP},
      {gif_frames(4, 1), MediaFormat::Gif},
  };
  for (const auto& [bytes, fmt] : inputs) {
    const StdImage s = standardize_image(bytes);
    CHECK(s.source_format == fmt);
    CHECK(s.pixels.width == 512);
    CHECK(s.pixels.height == (fmt == MediaFormat::Gif ? 256 : 384));
  }
  const std::string svg = svg_doc(100);
  const StdImage v = standardize_image(std::span(reinterpret_cast<const std::uint8_t*>(svg.data()), svg.size()), ".svg");
  CHECK(v.source_format == MediaFormat::Svg);
  CHECK(v.pixels.width == 512);
  CHECK(v.pixels.height == 256);
  CHECK(v.pixels.px(300, 100)[0] == 100);

  const std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e'};
  CHECK(code_of([&] { standardize_image(junk); }) == Errc::UndecodableMedia);
}

TEST_CASE("frame selection is seeded and uniform") {
  const auto one = gif_frames(1, 3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(standardize_image(one, {}, seed).frame_index == 0);

  const auto ten = gif_frames(10, 3);
  const StdImage a = standardize_image(ten, {}, 77);
  const StdImage b = standardize_image(ten, {}, 77);
  CHECK(a.frame_count == 10);
  CHECK(a.frame_index == b.frame_index);
  CHECK(a.pixels == b.pixels);
  CHECK(select_frame(ten, 77) == select_frame(ten, 77));

  std::vector<int> counts(10, 0);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++counts[frame_index_for(seed, 10)];
  double chi2 = 0;
  for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  CHECK(chi2 < 21.666);  // chi-square, 9 dof, p = 0.01

  CHECK(frame_seed_for(1, "a", 2) == frame_seed_for(1, "a", 2));
  CHECK(frame_seed_for(1, "a", 2) != frame_seed_for(1, "b", 2));
  CHECK(frame_seed_for(1, "a", 2) != frame_seed_for(2, "a", 2));
}

TEST_CASE("collection filter verdicts") {
  CollectionStats small;
  small.collection = "small";
  small.token_count = small.with_metadata = small.with_attributes = 499;
  for (int i = 0; i < 499; ++i) small.content_hashes.push_back(std::to_string(i));
  auto v = filter_collection(small);
  CHECK(!v.kept);
  CHECK(v.reasons == std::vector{ExclusionReason::TooFewTokens});

  CollectionStats dup = small;
  dup.collection = "dup";
  dup.token_count = dup.with_metadata = dup.with_attributes = 5000;
  dup.content_hashes.assign(5000, "same");
  v = filter_collection(dup);
  CHECK(!v.kept);
  CHECK(v.reasons == std::vector{ExclusionReason::AllDuplicateMedia});

  CollectionStats good = dup;
  for (int i = 0; i < 5000; ++i) good.content_hashes[i] = std::to_string(i);
  v = filter_collection(good);
  CHECK(v.kept);
  CHECK(v.reasons.empty());
  CHECK(filter_collection(good, 5001).reasons == std::vector{ExclusionReason::TooFewTokens});

  CollectionStats nometa = good;
  nometa.with_metadata = nometa.with_attributes = 0;
  v = filter_collection(nometa);
  CHECK(std::count(v.reasons.begin(), v.reasons.end(), ExclusionReason::MissingMetadata) == 1);

  CollectionStats bare = good;
  bare.with_attributes = 0;
  v = filter_collection(bare);
  CHECK(std::count(v.reasons.begin(), v.reasons.end(), ExclusionReason::NoSemanticContent) == 1);

  CollectionStats partial = good;
  partial.with_metadata = 4990;
  partial.with_attributes = 4900;
  v = filter_collection(partial);
  CHECK(v.kept);
  CHECK(v.notes.size() == 2);
}

TEST_CASE("split counts follow the floor rule") {
  const SplitRatios r;
  CHECK(split_counts(1000, r) == SplitCounts{800, 50, 150});
  CHECK(split_counts(20, r) == SplitCounts{16, 1, 3});
  for (std::size_t p = 3; p <= 400; ++p) {
    const auto c = split_counts(p, r);
    CHECK(c.train + c.val + c.test == p);
    CHECK(c.train == static_cast<std::size_t>(0.8 * p + 1e-9));
    CHECK(c.val == static_cast<std::size_t>(0.05 * p + 1e-9));
  }
  CHECK(code_of([] { split_counts(10, SplitRatios{0.5, 0.5, 0.5}); }) == Errc::InvalidArgument);
}

TEST_CASE("partition: counts, disjointness, determinism") {
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back("coll" + std::to_string(i));
  const auto a = nftk::partition(ids, {}, 9);
  CHECK(a.of.size() == 20);
  CHECK(a.counts() == SplitCounts{16, 1, 3});
  auto reversed = ids;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(nftk::partition(reversed, {}, 9).of == a.of);

  bool differs = false;
  for (std::uint64_t s = 10; s < 20 && !differs; ++s) differs = nftk::partition(ids, {}, s).of != a.of;
  CHECK(differs);

  CHECK(code_of([] { nftk::partition({"a", "b"}, {}, 0); }) == Errc::TooFewCollections);
  CHECK(code_of([] { nftk::partition({"a", "b", "a"}, {}, 0); }) == Errc::InvalidArgument);
}

TEST_CASE("manifest round trip and verify") {
  testkit::TempDir dir;
  Manifest m;
  m.header.seed = 5;
  m.header.extra["note"] = "kept";
  for (TokenId id : {3u, 1u, 2u}) m.records.push_back(record("beta", id, Split::Val));
  for (TokenId id : {1u, 2u}) m.records.push_back(record("alpha", id, Split::Train));
  m.records[0].frame_seed = 123;
  for (const auto& r : m.records) write_png(dir / r.image, solid(512, 40, 1, 2, 3));
  write_manifest(dir / "manifest.jsonl", m);

  const Manifest back = read_manifest(dir / "manifest.jsonl");
  CHECK(back.header.seed == 5);
  CHECK(back.header.extra["note"] == "kept");
  REQUIRE(back.records.size() == 5);
  CHECK(back.records[0].collection == "alpha");
  CHECK(back.records[2].token_id == 1);
  CHECK(back.records[4].frame_seed == std::optional<std::uint64_t>(123));
  auto sorted = m.records;
  std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
    return std::tie(x.collection, x.token_id) < std::tie(y.collection, y.token_id);
  });
  CHECK(back.records == sorted);
  CHECK(verify_manifest(dir / "manifest.jsonl").ok());

  fs::remove(dir / "images/beta/2.png");
  auto rep = verify_manifest(dir / "manifest.jsonl");
  REQUIRE(rep.findings.size() == 1);
  CHECK(rep.findings[0].kind == FindingKind::MissingFile);
  CHECK(rep.findings[0].token_id == 2);

  write_png(dir / "images/beta/2.png", solid(300, 40, 1, 2, 3));
  rep = verify_manifest(dir / "manifest.jsonl");
  REQUIRE(rep.findings.size() == 1);
  CHECK(rep.findings[0].kind == FindingKind::BadGeometry);
  write_png(dir / "images/beta/2.png", solid(512, 40, 1, 2, 3));

  std::string text = testkit::read_text(dir / "manifest.jsonl");
  const auto cap = text.find("cap 3 hat");
  REQUIRE(cap != std::string::npos);
  text.replace(cap, 9, "cap 4 hat");
  testkit::write_text(dir / "manifest.jsonl", text);
  rep = verify_manifest(dir / "manifest.jsonl");
  REQUIRE(rep.findings.size() == 1);
  CHECK(rep.findings[0].kind == FindingKind::CaptionMismatch);
  CHECK(rep.findings[0].collection == "beta");
  CHECK(rep.findings[0].token_id == 3);

  m.records[1].split = Split::Test;
  m.records.push_back(m.records[2]);
  m.records.back().template_id = "tmpl-v0";
  write_manifest(dir / "manifest.jsonl", m);
  rep = verify_manifest(dir / "manifest.jsonl");
  std::multiset<FindingKind> kinds;
  for (const auto& f : rep.findings) kinds.insert(f.kind);
  CHECK(kinds.count(FindingKind::SplitInconsistent) == 1);
  CHECK(kinds.count(FindingKind::DuplicateRecord) == 1);
  CHECK(kinds.count(FindingKind::TemplateMismatch) == 1);

  testkit::write_text(dir / "bad.jsonl", "{\"nftk_manifest\":1}\nnot json\n");
  CHECK(code_of([&] { read_manifest(dir / "bad.jsonl"); }) == Errc::ManifestInconsistent);
  CHECK(code_of([&] { read_manifest(dir / "absent.jsonl"); }) == Errc::IoFailure);
}

TEST_CASE("standardize_dataset over mixed formats") {
  testkit::TempDir dir;
  const fs::path in = dir / "ingest";
  for (int i = 0; i < 4; ++i) {
    const std::string id = std::to_string(i);
    put(in / "apng/media" / (id + ".png"), encode_png(solid(30 + i, 20, static_cast<std::uint8_t>(10 * i), 5, 5)));
    put(in / "apng/meta" / (id + ".json"), meta_json("Ape", i));
    put(in / "bgif/media" / (id + ".gif"), gif_frames(5, 40 * i));
    put(in / "bgif/meta" / (id + ".json"), meta_json("Zombie", i));
    put(in / "csvg/media" / (id + ".svg"), svg_doc(50 + i));
    put(in / "csvg/meta" / (id + ".json"), meta_json("Alien", i));
    put(in / "dmix/media" / (id + (i % 2 ? ".jpg" : ".webp")), cv_encode(i % 2 ? ".jpg" : ".webp", 24, 24, i));
    put(in / "dmix/meta" / (id + ".json"), meta_json("Robot", i));
    put(in / "edup/media" / (id + ".png"), encode_png(solid(30, 20, 1, 1, 1)));
    put(in / "edup/meta" / (id + ".json"), meta_json("Ape", i));
    put(in / "fnometa/media" / (id + ".png"), encode_png(solid(30, 20, static_cast<std::uint8_t>(i), 1, 1)));
  }
  put(in / "apng/media/9.png", std::string("broken"));
  put(in / "apng/meta/9.json", meta_json("Ape", 9));
  put(in / "apng/media/7.png.part", std::string("partial"));
  put(in / "apng/meta/8.json", meta_json("Ape", 8));

  {
    const auto mp4 = dir / "clip.mp4";
    cv::VideoWriter w(mp4.string(), cv::CAP_FFMPEG, cv::VideoWriter::fourcc('m', 'p', '4', 'v'), 10.0, cv::Size(32, 24));
    if (w.isOpened()) {
      for (int k = 0; k < 3; ++k) w.write(cv::Mat(24, 32, CV_8UC3, cv::Scalar(0, 80 * k, 200)));
      w.release();
      put(in / "dmix/media/4.mp4", read_file(mp4));
      put(in / "dmix/meta/4.json", meta_json("Robot", 4));
    }
  }

  StandardizeOptions opts;
  opts.min_tokens = 3;
  opts.seed = 21;
  const fs::path out = dir / "out";
  const auto res = standardize_dataset(in, out, opts);

  std::map<std::string, CollectionVerdict> verdicts;
  for (const auto& v : res.verdicts) verdicts[v.collection] = v;
  CHECK(verdicts.at("apng").kept);
  CHECK(verdicts.at("bgif").kept);
  CHECK(verdicts.at("csvg").kept);
  CHECK(verdicts.at("dmix").kept);
  CHECK(verdicts.at("edup").reasons == std::vector{ExclusionReason::AllDuplicateMedia});
  CHECK(std::count(verdicts.at("fnometa").reasons.begin(), verdicts.at("fnometa").reasons.end(),
                   ExclusionReason::MissingMetadata) == 1);
  CHECK(!fs::exists(out / "images/edup"));
  CHECK(!fs::exists(out / "images/fnometa"));

  std::map<std::pair<std::string, TokenId>, std::string> failures;
  for (const auto& f : res.failures) failures[{f.collection, f.token_id}] = f.code;
  CHECK(failures.at({"apng", 9}) == "standardize.UndecodableMedia");
  CHECK(failures.at({"apng", 8}) == "standardize.MissingMedia");
  CHECK(!failures.count({"apng", 7}));

  CHECK(res.splits.of.size() == 4);
  std::set<std::string> colls;
  for (const auto& r : res.manifest.records) {
    colls.insert(r.collection);
    CHECK(r.split == res.splits.of.at(r.collection));
    CHECK(r.frame_seed.has_value() == (r.collection == "bgif" || r.token_id == 4));
    CHECK(r.caption.rendered == render_caption(r.collection, r.attributes).rendered);
    const auto [w, h] = png_dimensions(out / r.image);
    CHECK(w == 512);
    CHECK(h > 0);
  }
  CHECK(colls == std::set<std::string>{"apng", "bgif", "csvg", "dmix"});
  CHECK(std::is_sorted(res.manifest.records.begin(), res.manifest.records.end(), [](const auto& x, const auto& y) {
    return std::tie(x.collection, x.token_id) < std::tie(y.collection, y.token_id);
  }));

  write_manifest(out / "manifest.jsonl", res.manifest);
  CHECK(verify_manifest(out / "manifest.jsonl").ok());

  const auto again = standardize_dataset(in, dir / "out2", opts);
  CHECK(again.manifest.records == res.manifest.records);
  for (const auto& r : res.manifest.records) CHECK(read_png(out / r.image) == read_png(dir / "out2" / r.image));

  opts.dry_run = true;
  const auto dry = standardize_dataset(in, dir / "dry", opts);
  CHECK(dry.manifest.records.size() == res.manifest.records.size());
  CHECK(!fs::exists(dir / "dry"));

  opts.dry_run = false;
  opts.min_tokens = 5;
  CHECK(code_of([&] { standardize_dataset(in, dir / "out3", opts); }) == Errc::TooFewCollections);
}
