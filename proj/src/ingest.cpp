#include "nftk/ingest.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <thread>

#include "nftk/hash.hpp"
#include "nftk/image.hpp"
#include "nftk/media.hpp"

namespace nftk {

namespace fs = std::filesystem;

namespace {

std::string trim_slashes(std::string s) {
  while (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    std::string item(s.substr(0, comma));
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(trim_slashes(item));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

GatewayConfig GatewayConfig::from_env() {
  GatewayConfig g;
  if (const char* v = std::getenv("NFTK_IPFS_GATEWAYS"); v && *v) {
    auto list = split_list(v);
    if (!list.empty()) g.ipfs_gateways = std::move(list);
  }
  if (const char* v = std::getenv("NFTK_ARWEAVE_GATEWAY"); v && *v) g.arweave_gateway = trim_slashes(v);
  return g;
}

FetchPlan resolve_uri(std::string_view uri, const GatewayConfig& gateways, FetchKind kind) {
  if (uri.empty()) throw Error(Errc::InvalidArgument, "empty URI");
  FetchPlan plan;
  plan.original_uri = std::string(uri);
  plan.kind = kind;
  auto lower_prefix = [&](std::string_view p) {
    if (uri.size() < p.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(uri[i])) != p[i]) return false;
    return true;
  };
  if (lower_prefix("ipfs://")) {
    std::string_view rest = uri.substr(7);
    if (rest.substr(0, 5) == "ipfs/") rest.remove_prefix(5);  // legacy ipfs://ipfs/<cid>
    if (rest.empty()) throw Error(Errc::UnsupportedScheme, "ipfs URI without a CID");
    if (gateways.ipfs_gateways.empty()) throw Error(Errc::UnsupportedScheme, "no IPFS gateway configured");
    for (const auto& g : gateways.ipfs_gateways) plan.candidate_urls.push_back(trim_slashes(g) + "/ipfs/" + std::string(rest));
  } else if (lower_prefix("ar://")) {
    const std::string_view rest = uri.substr(5);
    if (rest.empty()) throw Error(Errc::UnsupportedScheme, "ar URI without a transaction id");
    plan.candidate_urls.push_back(trim_slashes(gateways.arweave_gateway) + "/" + std::string(rest));
  } else if (lower_prefix("http://") || lower_prefix("https://")) {
    plan.candidate_urls.push_back(std::string(uri));
  } else {
    throw Error(Errc::UnsupportedScheme, "unsupported URI scheme: " + std::string(uri.substr(0, uri.find(':'))));
  }
  return plan;
}

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
  if (attempt < 1) return std::chrono::milliseconds{0};
  auto ms = base_backoff.count();
  for (int i = 1; i < attempt && ms < max_backoff.count(); ++i) ms *= 2;
  return std::chrono::milliseconds{std::min<long long>(ms, max_backoff.count())};
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string target;  // /path?query
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::UnsupportedScheme, "not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Url u;
  u.origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  u.target = path_start == std::string::npos ? "/" : url.substr(path_start);
  return u;
}

struct Attempt {
  bool ok = false;
  bool retryable = false;
  std::string error;
  std::vector<std::uint8_t> body;
};

class SizeExceeded {};

Attempt attempt_get(const Url& u, const RetryPolicy& policy) {
  Attempt a;
  httplib::Client cli(u.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy.timeout).count();
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(policy.timeout).count() % 1000000;
  cli.set_connection_timeout(static_cast<time_t>(secs), static_cast<time_t>(usecs));
  cli.set_read_timeout(static_cast<time_t>(secs), static_cast<time_t>(usecs));
  cli.set_follow_location(true);
  bool too_big = false;
  auto res = cli.Get(
      u.target,
      [&](const httplib::Response& r) {
        if (r.status >= 200 && r.status < 300 && r.has_header("Content-Length")) {
          const auto len = std::strtoull(r.get_header_value("Content-Length").c_str(), nullptr, 10);
          if (len > policy.size_cap) {
            too_big = true;
            return false;
          }
        }
        return true;
      },
      [&](const char* data, std::size_t n) {
        if (a.body.size() + n > policy.size_cap) {
          too_big = true;
          return false;
        }
        a.body.insert(a.body.end(), data, data + n);
        return true;
      });
  if (too_big) throw SizeExceeded{};
  if (!res) {
    a.retryable = true;
    a.error = "transport: " + httplib::to_string(res.error());
    return a;
  }
  const int st = res->status;
  if (st >= 200 && st < 300) {
    a.ok = true;
    return a;
  }
  a.body.clear();
  a.error = "HTTP " + std::to_string(st);
  a.retryable = st >= 500 || st == 408 || st == 429;
  return a;
}

}  // namespace

std::vector<std::uint8_t> fetch_token(const FetchPlan& plan, const RetryPolicy& policy, RequestGate* gate) {
  if (plan.candidate_urls.empty()) throw Error(Errc::InvalidArgument, "fetch plan has no candidates");
  std::vector<std::pair<std::string, std::string>> errors;
  for (const auto& url : plan.candidate_urls) {
    const Url u = split_url(url);
    std::string last;
    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(policy.backoff(attempt));
      Attempt a;
      if (gate) gate->acquire(u.origin);
      try {
        a = attempt_get(u, policy);
      } catch (const SizeExceeded&) {
        if (gate) gate->release(u.origin);
        throw Error(Errc::SizeLimitExceeded, url + " exceeds the " + std::to_string(policy.size_cap) + "-byte cap");
      } catch (...) {
        if (gate) gate->release(u.origin);
        throw;
      }
      if (gate) gate->release(u.origin);
      if (a.ok) return std::move(a.body);
      last = a.error;
      if (!a.retryable) break;
    }
    errors.emplace_back(url, last);
  }
  std::string msg = "all candidates failed for " + plan.original_uri + ":";
  for (const auto& [url, err] : errors) msg += " [" + url + ": " + err + "]";
  throw FetchError(msg, std::move(errors));
}

std::string token_uri(std::string_view pattern, TokenId id) {
  const std::string ids = std::to_string(id);
  std::string s(pattern);
  if (const auto pos = s.find("{id}"); pos != std::string::npos) {
    for (auto p = pos; p != std::string::npos; p = s.find("{id}", p + ids.size())) s.replace(p, 4, ids);
    return s;
  }
  if (!s.empty() && s.back() != '/') s += '/';
  return s + ids;
}

std::vector<CollectionTarget> read_targets(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open target list " + path.string());
  std::vector<CollectionTarget> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    try {
      if (j.is_discarded() || !j.is_object()) throw std::runtime_error("not a JSON object");
      CollectionTarget t;
      t.name = j.at("name").get<std::string>();
      t.metadata_uri = j.at("metadata_uri").get<std::string>();
      t.media_uri = j.value("media_uri", std::string{});
      t.first_id = j.at("first_id").get<TokenId>();
      t.last_id = j.at("last_id").get<TokenId>();
      if (t.name.empty() || t.name.find('/') != std::string::npos || t.name == "." || t.name == "..")
        throw std::runtime_error("invalid collection name");
      if (t.last_id < t.first_id) throw std::runtime_error("empty token id range");
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw Error(Errc::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

class HostGate : public RequestGate {
 public:
  explicit HostGate(std::size_t per_host) : per_host_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, per_host))) {}
  void acquire(const std::string& host) override { slot(host).acquire(); }
  void release(const std::string& host) override { slot(host).release(); }

 private:
  std::counting_semaphore<>& slot(const std::string& host) {
    std::lock_guard lock(mu_);
    auto& s = slots_[host];
    if (!s) s = std::make_unique<std::counting_semaphore<>>(per_host_);
    return *s;
  }
  std::ptrdiff_t per_host_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<std::counting_semaphore<>>> slots_;
};

struct ProgressEntry {
  std::string meta;
  std::uint64_t meta_size = 0;
  std::string meta_sha256;
  std::string media;
  std::uint64_t media_size = 0;
  std::string media_sha256;
};

std::map<TokenId, ProgressEntry> load_progress(const fs::path& p) {
  std::map<TokenId, ProgressEntry> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;  // a torn final line from an interrupted run
    try {
      ProgressEntry e;
      e.meta = j.at("meta").get<std::string>();
      e.meta_size = j.at("meta_size").get<std::uint64_t>();
      e.meta_sha256 = j.at("meta_sha256").get<std::string>();
      e.media = j.at("media").get<std::string>();
      e.media_size = j.at("media_size").get<std::uint64_t>();
      e.media_sha256 = j.at("media_sha256").get<std::string>();
      out[j.at("token_id").get<TokenId>()] = std::move(e);
    } catch (const nlohmann::json::exception&) {
    }
  }
  return out;
}

bool file_matches(const fs::path& p, std::uint64_t size, const std::string& sha) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec) || fs::file_size(p, ec) != size) return false;
  return sha256_hex(read_file(p)) == sha;
}

std::string media_uri_from_metadata(const std::vector<std::uint8_t>& meta) {
  const auto j = nlohmann::json::parse(meta.begin(), meta.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::MalformedMetadata, "metadata is not a JSON object");
  for (const char* key : {"image", "image_url", "animation_url"})
    if (j.contains(key) && j.at(key).is_string() && !j.at(key).get<std::string>().empty())
      return j.at(key).get<std::string>();
  throw Error(Errc::MalformedMetadata, "metadata names no image");
}

std::string extension_from_url(const std::string& url) {
  auto path = url.substr(0, url.find_first_of("?#"));
  const auto slash = path.rfind('/');
  const auto dot = path.rfind('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return "";
  return path.substr(dot + 1);
}

}  // namespace

DownloadReport fetch_collection(const CollectionTarget& target, const fs::path& root, const IngestLimits& limits) {
  if (target.last_id < target.first_id) throw Error(Errc::InvalidArgument, "empty token id range");
  const auto t0 = std::chrono::steady_clock::now();
  DownloadReport rep;
  rep.collection = target.name;
  rep.range_size = static_cast<std::size_t>(target.last_id - target.first_id + 1);
  rep.complete_threshold = limits.complete_threshold;

  const fs::path dir = root / target.name;
  const fs::path progress_path = dir / "progress.jsonl";
  const auto progress = load_progress(progress_path);

  std::vector<TokenId> todo;
  for (TokenId id = target.first_id;; ++id) {
    const auto it = progress.find(id);
    const bool done = it != progress.end() && file_matches(dir / it->second.meta, it->second.meta_size, it->second.meta_sha256) &&
                      file_matches(dir / it->second.media, it->second.media_size, it->second.media_sha256);
    if (done) ++rep.skipped;
    else todo.push_back(id);
    if (id == target.last_id) break;
  }
  if (limits.dry_run) {
    rep.complete = rep.range_size > 0 && static_cast<double>(rep.skipped) / rep.range_size >= limits.complete_threshold;
    return rep;
  }
  fs::create_directories(dir / "meta");
  fs::create_directories(dir / "media");

  HostGate gate(limits.per_host);
  std::mutex mu;
  std::ofstream progress_out(progress_path, std::ios::app);
  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> bytes{0};
  std::vector<std::string> errors(todo.size());

  auto work = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      const TokenId id = todo[i];
      try {
        const auto meta_plan = resolve_uri(token_uri(target.metadata_uri, id), limits.gateways, FetchKind::Metadata);
        const auto meta = fetch_token(meta_plan, limits.retry, &gate);
        const std::string media_src =
            target.media_uri.empty() ? media_uri_from_metadata(meta) : token_uri(target.media_uri, id);
        const auto media_plan = resolve_uri(media_src, limits.gateways, FetchKind::Media);
        const auto media = fetch_token(media_plan, limits.retry, &gate);
        MediaFormat fmt = sniff_format(media, extension_from_url(media_plan.candidate_urls.front()));
        const std::string media_rel = "media/" + std::to_string(id) + "." + std::string(extension_for(fmt));
        const std::string meta_rel = "meta/" + std::to_string(id) + ".json";
        write_file(dir / meta_rel, meta);
        write_file(dir / media_rel, media);
        bytes += meta.size() + media.size();
        nlohmann::ordered_json entry = {{"token_id", id},
                                        {"meta", meta_rel},
                                        {"meta_size", meta.size()},
                                        {"meta_sha256", sha256_hex(meta)},
                                        {"media", media_rel},
                                        {"media_size", media.size()},
                                        {"media_sha256", sha256_hex(media)}};
        std::lock_guard lock(mu);
        progress_out << entry.dump() << '\n';
        progress_out.flush();
      } catch (const Error& e) {
        errors[i] = e.qualified_code();
      } catch (const std::exception&) {
        errors[i] = "ingest.AllCandidatesFailed";
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(limits.workers, 1, std::max<std::size_t>(1, todo.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  rep.attempted = todo.size();
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (errors[i].empty()) ++rep.succeeded;
    else rep.failed.push_back({todo[i], errors[i]});
  }
  rep.bytes_total = bytes;
  rep.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  rep.complete = static_cast<double>(rep.succeeded + rep.skipped) / static_cast<double>(rep.range_size) >=
                 limits.complete_threshold;
  return rep;
}

}  // namespace nftk
