#include <doctest.h>

#include <cstdlib>

#include "mock_server.hpp"
#include "nftk/error.hpp"
#include "nftk/image.hpp"
#include "nftk/ingest.hpp"
#include "testkit.hpp"

using namespace nftk;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

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

RetryPolicy quick_retry() {
  RetryPolicy r;
  r.base_backoff = 1ms;
  r.max_backoff = 4ms;
  r.timeout = 5000ms;
  return r;
}

std::string png_body(std::uint8_t shade) {
  Image img(4, 4);
  for (std::size_t p = 0; p < 16; ++p) {
    img.rgba[4 * p] = shade;
    img.rgba[4 * p + 3] = 255;
  }
  const auto bytes = encode_png(img);
  return {bytes.begin(), bytes.end()};
}

std::string meta_body(TokenId id) {
  return R"({"name":"t)" + std::to_string(id) + R"(","image":"ipfs://CID/img/)" + std::to_string(id) +
         R"(.png","attributes":[{"trait_type":"Hat","value":"cap"}]})";
}

void serve_collection(testkit::MockServer& s, const std::string& gw, TokenId first, TokenId last) {
  for (TokenId id = first; id <= last; ++id) {
    s.set(gw + "/ipfs/CID/meta/" + std::to_string(id), {200, meta_body(id), "application/json"});
    s.set(gw + "/ipfs/CID/img/" + std::to_string(id) + ".png", {200, png_body(static_cast<std::uint8_t>(id)), "image/png"});
  }
}

IngestLimits limits_for(const testkit::MockServer& s) {
  IngestLimits l;
  l.retry = quick_retry();
  l.gateways.ipfs_gateways = {s.base() + "/gw1", s.base() + "/gw2/"};
  return l;
}

CollectionTarget target(TokenId first, TokenId last) {
  CollectionTarget t;
  t.name = "punks";
  t.metadata_uri = "ipfs://CID/meta";
  t.first_id = first;
  t.last_id = last;
  return t;
}

}  // namespace

TEST_CASE("resolve_uri maps schemes to candidates in gateway order") {
  GatewayConfig g;
  g.ipfs_gateways = {"https://a.example", "https://b.example/"};
  g.arweave_gateway = "https://ar.example";
  auto p = resolve_uri("ipfs://Qm123/7.json", g, FetchKind::Metadata);
  CHECK(p.candidate_urls == std::vector<std::string>{"https://a.example/ipfs/Qm123/7.json", "https://b.example/ipfs/Qm123/7.json"});
  CHECK(p.kind == FetchKind::Metadata);
  CHECK(resolve_uri("ipfs://ipfs/Qm9", g).candidate_urls.front() == "https://a.example/ipfs/Qm9");
  CHECK(resolve_uri("IPFS://Qm9", g).candidate_urls.size() == 2);
  CHECK(resolve_uri("ar://tx1", g).candidate_urls == std::vector<std::string>{"https://ar.example/tx1"});
  CHECK(resolve_uri("https://x.example/a.png", g).candidate_urls == std::vector<std::string>{"https://x.example/a.png"});
  CHECK(code_of([&] { resolve_uri("ftp://x/y", g); }) == Errc::UnsupportedScheme);
  CHECK(code_of([&] { resolve_uri("ipfs://", g); }) == Errc::UnsupportedScheme);
  CHECK(code_of([&] { resolve_uri("", g); }) == Errc::InvalidArgument);
}

TEST_CASE("gateway configuration from the environment") {
  ::setenv("NFTK_IPFS_GATEWAYS", " http://one/ , http://two", 1);
  ::setenv("NFTK_ARWEAVE_GATEWAY", "http://ar/", 1);
  const auto g = GatewayConfig::from_env();
  CHECK(g.ipfs_gateways == std::vector<std::string>{"http://one", "http://two"});
  CHECK(g.arweave_gateway == "http://ar");
  ::unsetenv("NFTK_IPFS_GATEWAYS");
  ::unsetenv("NFTK_ARWEAVE_GATEWAY");
  CHECK(GatewayConfig::from_env().ipfs_gateways.size() == 2);
}

TEST_CASE("backoff doubles up to the cap") {
  RetryPolicy r;
  CHECK(r.backoff(1) == 500ms);
  CHECK(r.backoff(2) == 1000ms);
  CHECK(r.backoff(4) == 4000ms);
  CHECK(r.backoff(5) == 8000ms);
  CHECK(r.backoff(12) == 8000ms);
}

TEST_CASE("token_uri and target lists") {
  CHECK(token_uri("ipfs://CID/meta", 7) == "ipfs://CID/meta/7");
  CHECK(token_uri("ipfs://CID/meta/", 7) == "ipfs://CID/meta/7");
  CHECK(token_uri("https://x/{id}.json?id={id}", 12) == "https://x/12.json?id=12");
  testkit::TempDir dir;
  testkit::write_text(dir / "t.jsonl",
                      "{\"name\":\"a\",\"metadata_uri\":\"ipfs://C\",\"first_id\":0,\"last_id\":9}\n\n"
                      "{\"name\":\"b\",\"media_uri\":\"ar://{id}\",\"metadata_uri\":\"ipfs://D\",\"first_id\":5,\"last_id\":5}\n");
  const auto t = read_targets(dir / "t.jsonl");
  REQUIRE(t.size() == 2);
  CHECK(t[1].media_uri == "ar://{id}");
  CHECK(t[0].last_id == 9);
  testkit::write_text(dir / "bad.jsonl", "{\"name\":\"../x\",\"metadata_uri\":\"ipfs://C\",\"first_id\":0,\"last_id\":1}\n");
  CHECK(code_of([&] { read_targets(dir / "bad.jsonl"); }) == Errc::InvalidArgument);
  testkit::write_text(dir / "rev.jsonl", "{\"name\":\"x\",\"metadata_uri\":\"ipfs://C\",\"first_id\":3,\"last_id\":1}\n");
  CHECK(code_of([&] { read_targets(dir / "rev.jsonl"); }) == Errc::InvalidArgument);
}

TEST_CASE("fetch_token: fallback, retries and failure reporting") {
  testkit::MockServer s;
  const auto plan = [&](const std::string& path) {
    GatewayConfig g;
    g.ipfs_gateways = {s.base() + "/gw1", s.base() + "/gw2"};
    return resolve_uri("ipfs://CID/" + path, g);
  };
  s.set("/gw2/ipfs/CID/a", {200, "second"});
  const auto a = fetch_token(plan("a"), quick_retry());
  CHECK(std::string(a.begin(), a.end()) == "second");
  CHECK(s.hits("/gw1/ipfs/CID/a") == 1);  // 404 is not retried

  s.set("/gw1/ipfs/CID/b", {200, "flaky", "text/plain", 2});
  const auto b = fetch_token(plan("b"), quick_retry());
  CHECK(std::string(b.begin(), b.end()) == "flaky");
  CHECK(s.hits("/gw1/ipfs/CID/b") == 3);
  CHECK(s.hits("/gw2/ipfs/CID/b") == 0);

  s.set("/gw1/ipfs/CID/c", {429, "slow down"});
  s.set("/gw2/ipfs/CID/c", {410, "gone"});
  try {
    fetch_token(plan("c"), quick_retry());
    FAIL("expected FetchError");
  } catch (const FetchError& e) {
    CHECK(e.code() == Errc::AllCandidatesFailed);
    REQUIRE(e.last_errors().size() == 2);
    CHECK(e.last_errors()[0].second == "HTTP 429");
    CHECK(e.last_errors()[1].second == "HTTP 410");
  }
  CHECK(s.hits("/gw1/ipfs/CID/c") == 4);
  CHECK(s.hits("/gw2/ipfs/CID/c") == 1);

  s.set("/gw1/ipfs/CID/big", {200, std::string(5000, 'x')});
  auto capped = quick_retry();
  capped.size_cap = 1000;
  CHECK(code_of([&] { fetch_token(plan("big"), capped); }) == Errc::SizeLimitExceeded);
  CHECK(s.hits("/gw2/ipfs/CID/big") == 0);

  FetchPlan dead;
  dead.original_uri = "http://127.0.0.1:1/x";
  dead.candidate_urls = {"http://127.0.0.1:1/x"};
  auto once = quick_retry();
  once.max_retries = 1;
  CHECK(code_of([&] { fetch_token(dead, once); }) == Errc::AllCandidatesFailed);
}

TEST_CASE("fetch_collection: downloads, failures and completeness") {
  testkit::MockServer s;
  serve_collection(s, "/gw2", 0, 9);
  s.remove("/gw2/ipfs/CID/img/3.png");
  s.set("/gw2/ipfs/CID/meta/6", {200, "{\"name\":\"no image\"}", "application/json"});
  testkit::TempDir dir;
  const auto rep = fetch_collection(target(0, 9), dir.path(), limits_for(s));
  CHECK(rep.range_size == 10);
  CHECK(rep.attempted == 10);
  CHECK(rep.succeeded == 8);
  REQUIRE(rep.failed.size() == 2);
  CHECK(rep.failed[0].token_id == 3);
  CHECK(rep.failed[0].error == "ingest.AllCandidatesFailed");
  CHECK(rep.failed[1].token_id == 6);
  CHECK(rep.failed[1].error == "metadata.MalformedMetadata");
  CHECK(!rep.complete);
  CHECK(rep.bytes_total > 0);
  for (TokenId id : {0u, 1u, 9u}) {
    CHECK(fs::exists(dir / ("punks/meta/" + std::to_string(id) + ".json")));
    CHECK(read_png(dir / ("punks/media/" + std::to_string(id) + ".png")).px(0, 0)[0] == id);
  }
  CHECK(!fs::exists(dir / "punks/media/3.png"));

  IngestLimits lenient = limits_for(s);
  lenient.complete_threshold = 0.8;
  s.reset_counters();
  const auto again = fetch_collection(target(0, 9), dir.path(), lenient);
  CHECK(again.skipped == 8);
  CHECK(again.attempted == 2);
  CHECK(again.complete);
}

TEST_CASE("fetch_collection: resume is idempotent and detects damage") {
  testkit::MockServer s;
  serve_collection(s, "/gw1", 100, 119);
  testkit::TempDir dir;
  const auto limits = limits_for(s);
  const auto first = fetch_collection(target(100, 119), dir.path(), limits);
  REQUIRE(first.succeeded == 20);
  CHECK(first.complete);

  s.reset_counters();
  const auto second = fetch_collection(target(100, 119), dir.path(), limits);
  CHECK(second.skipped == 20);
  CHECK(second.attempted == 0);
  CHECK(s.total_hits() == 0);

  testkit::write_text(dir / "punks/media/105.png", "damaged");
  fs::remove(dir / "punks/meta/111.json");
  {
    std::ofstream torn(dir / "punks/progress.jsonl", std::ios::app);
    torn << "{\"token_id\":107,\"meta\":\"meta/10";
  }
  s.reset_counters();
  const auto third = fetch_collection(target(100, 119), dir.path(), limits);
  CHECK(third.skipped == 18);
  CHECK(third.succeeded == 2);
  CHECK(s.hits("/gw1/ipfs/CID/meta/105") == 1);
  CHECK(s.hits("/gw1/ipfs/CID/meta/111") == 1);
  CHECK(s.total_hits() == 4);
  CHECK(read_png(dir / "punks/media/105.png").width == 4);

  IngestLimits dry = limits;
  dry.dry_run = true;
  s.reset_counters();
  const auto plan = fetch_collection(target(100, 124), dir.path(), dry);
  CHECK(plan.skipped == 20);
  CHECK(plan.attempted == 0);
  CHECK(s.total_hits() == 0);
}

TEST_CASE("fetch_collection honours the per-host limit") {
  testkit::MockServer s;
  serve_collection(s, "/gw1", 0, 23);
  for (TokenId id = 0; id <= 23; ++id) s.set("/gw1/ipfs/CID/meta/" + std::to_string(id), {200, meta_body(id), "application/json", 0, 30});
  testkit::TempDir dir;
  IngestLimits limits = limits_for(s);
  limits.workers = 8;
  limits.per_host = 2;
  const auto rep = fetch_collection(target(0, 23), dir.path(), limits);
  CHECK(rep.succeeded == 24);
  CHECK(s.max_in_flight() <= 2);
  CHECK(s.max_in_flight() >= 1);

  limits.per_host = 6;
  s.reset_counters();
  testkit::TempDir dir2;
  fetch_collection(target(0, 23), dir2.path(), limits);
  CHECK(s.max_in_flight() <= 6);
  CHECK(s.max_in_flight() > 2);
}

TEST_CASE("fetch_collection: an explicit media pattern and the size cap") {
  testkit::MockServer s;
  serve_collection(s, "/gw1", 0, 2);
  s.set("/raw/0.gif", {200, "GIF89a-not-really"});
  s.set("/raw/1.gif", {200, std::string(4096, 'x')});
  s.set("/raw/2.gif", {200, "GIF89a-small"});
  testkit::TempDir dir;
  CollectionTarget t = target(0, 2);
  t.media_uri = s.base() + "/raw/{id}.gif";
  IngestLimits limits = limits_for(s);
  limits.retry.size_cap = 1024;
  const auto rep = fetch_collection(t, dir.path(), limits);
  CHECK(rep.succeeded == 2);
  REQUIRE(rep.failed.size() == 1);
  CHECK(rep.failed[0].error == "ingest.SizeLimitExceeded");
  CHECK(fs::exists(dir / "punks/media/0.gif"));
  CHECK(!fs::exists(dir / "punks/media/1.gif"));
}
