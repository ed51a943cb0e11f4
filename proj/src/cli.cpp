#include "nftk/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nftk/components.hpp"
#include "nftk/dynmask.hpp"
#include "nftk/embeddings.hpp"
#include "nftk/error.hpp"
#include "nftk/ingest.hpp"
#include "nftk/kernels.hpp"
#include "nftk/metadata.hpp"
#include "nftk/metrics.hpp"
#include "nftk/standardize.hpp"

namespace nftk::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

/// Options shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  int jobs = 0;
  bool dry_run = false;
  std::string log_level = "info";
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  Common common;
  std::string subcommand;
  std::vector<std::string> argv;

  void info(const std::string& msg) const {
    if (common.log_level != "quiet") err << msg << '\n';
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random choice in this stage")->default_val(0);
  sub->add_option("--jobs", c.jobs, "Worker threads (0 = logical CPU count)")->default_val(0)->check(CLI::NonNegativeNumber);
  sub->add_flag("--dry-run", c.dry_run, "Validate inputs and print the plan without writing");
  sub->add_option("--log-level", c.log_level, "quiet | info")->default_val("info")->check(CLI::IsMember({"quiet", "info"}));
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void snapshot(const Context& ctx, const fs::path& dir, ojson options) {
  if (ctx.common.dry_run) return;
  ojson j;
  j["subcommand"] = ctx.subcommand;
  j["toolkit_version"] = NFTK_VERSION;
  j["argv"] = ctx.argv;
  options["seed"] = ctx.common.seed;
  options["jobs"] = ctx.common.jobs;
  j["options"] = std::move(options);
  write_text(dir / ("run_config." + ctx.subcommand + ".json"), j.dump(2) + "\n");
}

std::vector<double> parse_doubles(const std::string& s, char sep) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::UsageError, "not a number: '" + item + "'");
    }
  }
  return out;
}

std::string collection_of_id(const std::string& id) {
  const auto slash = id.rfind('/');
  return slash == std::string::npos ? std::string("all") : id.substr(0, slash);
}

/// A directory stands for the row-wise concatenation of its files in name order.
EmbeddingMatrix read_matrix_or_dir(const fs::path& p) {
  if (!fs::is_directory(p)) return read_matrix(p);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().filename().string().rfind("run_config.", 0) != 0) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  EmbeddingMatrix all;
  for (const auto& f : files) {
    EmbeddingMatrix m = read_matrix(f);
    if (all.rows == 0) all.dim = m.dim;
    if (m.dim != all.dim) throw Error(Errc::DimMismatch, "matrix " + f.string() + " has a different dim");
    all.rows += m.rows;
    all.data.insert(all.data.end(), m.data.begin(), m.data.end());
    all.ids.insert(all.ids.end(), m.ids.begin(), m.ids.end());
  }
  return all;
}

EmbeddingMatrix load_matrix(const fs::path& p, bool normalize) {
  EmbeddingMatrix m = read_matrix_or_dir(p);
  m.validate();
  return normalize ? l2_normalize(m) : m;
}

EmbeddingMatrix select_rows(const EmbeddingMatrix& m, const std::vector<std::size_t>& rows) {
  EmbeddingMatrix s;
  s.rows = rows.size();
  s.dim = m.dim;
  s.data.reserve(rows.size() * m.dim);
  for (std::size_t r : rows) {
    const auto v = m.row(r);
    s.data.insert(s.data.end(), v.begin(), v.end());
    s.ids.push_back(m.ids[r]);
  }
  return s;
}

/// Splits aligned text/image matrices into per-collection batches using the
/// "<collection>/<token>" id convention. Images are reordered to follow texts.
std::vector<CollectionEmbeddings> group_by_collection(const EmbeddingMatrix& texts, const EmbeddingMatrix& images,
                                                      std::size_t batch_size) {
  if (texts.rows != images.rows) throw Error(Errc::Misaligned, "text and image matrices differ in row count");
  std::map<std::string, std::size_t> image_row;
  for (std::size_t i = 0; i < images.rows; ++i) image_row[images.ids[i]] = i;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < texts.rows; ++i) {
    const auto it = image_row.find(texts.ids[i]);
    if (it == image_row.end()) throw Error(Errc::Misaligned, "text id " + texts.ids[i] + " has no image row");
    auto& g = groups[collection_of_id(texts.ids[i])];
    g.first.push_back(i);
    g.second.push_back(it->second);
  }
  std::vector<CollectionEmbeddings> out;
  for (const auto& [name, g] : groups) {
    const std::size_t n = g.first.size();
    const std::size_t step = batch_size == 0 ? n : batch_size;
    for (std::size_t start = 0, b = 0; start < n; start += step, ++b) {
      const std::size_t end = std::min(n, start + step);
      std::vector<std::size_t> tr(g.first.begin() + start, g.first.begin() + end);
      std::vector<std::size_t> ir(g.second.begin() + start, g.second.begin() + end);
      CollectionEmbeddings c;
      c.collection = batch_size == 0 ? name : name + "#" + std::to_string(b);
      c.texts = select_rows(texts, tr);
      c.images = select_rows(images, ir);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  for (double d : parse_doubles(s, ',')) {
    if (d < 1 || d != static_cast<double>(static_cast<std::size_t>(d)))
      throw Error(Errc::UsageError, "k values must be positive integers");
    ks.push_back(static_cast<std::size_t>(d));
  }
  return ks;
}

void emit(const Context& ctx, const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    ctx.out << text;
  } else if (!ctx.common.dry_run) {
    write_text(out_path, text);
  }
}

bool wants_jsonl(const std::string& out_path, const std::string& format) {
  if (format == "jsonl") return true;
  if (format == "csv") return false;
  return fs::path(out_path).extension() == ".jsonl";
}

// ---- subcommands ------------------------------------------------------------

struct IngestArgs {
  std::string targets, root, collection, arweave;
  std::vector<std::string> gateways;
  std::size_t per_host = 8, workers = 8;
  int retries = 3;
  long backoff_ms = 500, timeout_ms = 30000;
  std::size_t size_cap_mb = 64;
  double complete_threshold = 0.99;
};

int run_ingest(Context& ctx, const IngestArgs& a) {
  IngestLimits lim;
  lim.gateways = GatewayConfig::from_env();
  if (!a.gateways.empty()) lim.gateways.ipfs_gateways = a.gateways;
  if (!a.arweave.empty()) lim.gateways.arweave_gateway = a.arweave;
  lim.per_host = a.per_host;
  lim.workers = a.workers;
  lim.retry.max_retries = a.retries;
  lim.retry.base_backoff = std::chrono::milliseconds{a.backoff_ms};
  lim.retry.timeout = std::chrono::milliseconds{a.timeout_ms};
  lim.retry.size_cap = a.size_cap_mb << 20;
  lim.complete_threshold = a.complete_threshold;
  lim.dry_run = ctx.common.dry_run;

  auto targets = read_targets(a.targets);
  if (!a.collection.empty())
    std::erase_if(targets, [&](const CollectionTarget& t) { return t.name != a.collection; });
  if (targets.empty()) throw Error(Errc::UsageError, "no matching collection in target list");

  std::string report;
  for (const auto& t : targets) {
    if (ctx.common.dry_run) {
      const auto plan = resolve_uri(token_uri(t.metadata_uri, t.first_id), lim.gateways, FetchKind::Metadata);
      ctx.out << "plan " << t.name << ": ids " << t.first_id << ".." << t.last_id << ", first metadata candidates:";
      for (const auto& u : plan.candidate_urls) ctx.out << ' ' << u;
      ctx.out << '\n';
    }
    const DownloadReport r = fetch_collection(t, a.root, lim);
    ojson j;
    j["collection"] = r.collection;
    j["range_size"] = r.range_size;
    j["attempted"] = r.attempted;
    j["succeeded"] = r.succeeded;
    j["skipped"] = r.skipped;
    j["failed"] = ojson::array();
    for (const auto& f : r.failed) j["failed"].push_back(ojson{{"token_id", f.token_id}, {"error", f.error}});
    j["bytes_total"] = r.bytes_total;
    j["wall_time_ms"] = r.wall_time.count();
    j["complete_threshold"] = r.complete_threshold;
    j["complete"] = r.complete;
    report += j.dump() + "\n";
    ctx.info("ingest " + r.collection + ": " + std::to_string(r.succeeded) + " fetched, " +
             std::to_string(r.failed.size()) + " failed, " + std::to_string(r.skipped) + " already complete");
  }
  if (ctx.common.dry_run) {
    ctx.out << report;
    return kExitOk;
  }
  write_text(fs::path(a.root) / "ingest_report.jsonl", report);
  snapshot(ctx, a.root, {{"targets", a.targets}, {"root", a.root}, {"per_host", a.per_host}, {"workers", a.workers},
                         {"retries", a.retries}, {"backoff_ms", a.backoff_ms}, {"size_cap_mb", a.size_cap_mb},
                         {"complete_threshold", a.complete_threshold}});
  return kExitOk;
}

struct StandardizeArgs {
  std::string input, out, ratios = "0.8,0.05,0.15";
  std::size_t min_tokens = kMinTokens;
};

int run_standardize(Context& ctx, const StandardizeArgs& a) {
  StandardizeOptions opts;
  opts.min_tokens = a.min_tokens;
  const auto r = parse_doubles(a.ratios, ',');
  if (r.size() != 3) throw Error(Errc::UsageError, "--ratios takes three comma-separated values");
  opts.ratios = {r[0], r[1], r[2]};
  opts.seed = ctx.common.seed;
  opts.dry_run = ctx.common.dry_run;
  const StandardizeResult res = standardize_dataset(a.input, a.out, opts);

  std::string verdicts;
  for (const auto& v : res.verdicts) {
    ojson j;
    j["collection"] = v.collection;
    j["kept"] = v.kept;
    j["reasons"] = ojson::array();
    for (auto reason : v.reasons) j["reasons"].push_back(std::string(to_string(reason)));
    j["notes"] = v.notes;
    if (v.kept) j["split"] = std::string(to_string(res.splits.of.at(v.collection)));
    std::size_t failures = 0;
    for (const auto& f : res.failures) failures += f.collection == v.collection;
    j["token_failures"] = failures;
    verdicts += j.dump() + "\n";
  }
  std::string failures;
  for (const auto& f : res.failures)
    failures += ojson{{"collection", f.collection}, {"token_id", f.token_id}, {"code", f.code}}.dump() + "\n";
  const auto c = res.splits.counts();
  ctx.info("standardize: " + std::to_string(res.manifest.records.size()) + " tokens in " +
           std::to_string(res.splits.of.size()) + " collections (" + std::to_string(c.train) + "/" +
           std::to_string(c.val) + "/" + std::to_string(c.test) + ")");
  if (ctx.common.dry_run) {
    ctx.out << verdicts;
    return kExitOk;
  }
  const fs::path out(a.out);
  write_manifest(out / "manifest.jsonl", res.manifest);
  write_text(out / "collections.jsonl", verdicts);
  write_text(out / "token_failures.jsonl", failures);
  snapshot(ctx, out, {{"input", a.input}, {"out", a.out}, {"ratios", r}, {"min_tokens", a.min_tokens}});
  return kExitOk;
}

struct CaptionArgs {
  std::string manifest, out, metadata, collection;
};

int run_caption(Context& ctx, const CaptionArgs& a) {
  if (!a.metadata.empty()) {
    if (a.collection.empty()) throw Error(Errc::UsageError, "--metadata needs --collection");
    const auto attrs = parse_metadata(read_file(a.metadata));
    ctx.out << render_caption(a.collection, attrs).rendered << '\n';
    return kExitOk;
  }
  if (a.manifest.empty()) throw Error(Errc::UsageError, "caption needs --manifest or --metadata");
  Manifest m = read_manifest(a.manifest);
  std::size_t changed = 0;
  for (auto& r : m.records) {
    Caption c = render_caption(r.collection, r.attributes);
    changed += c.rendered != r.caption.rendered || r.template_id != kTemplateId;
    r.caption = std::move(c);
    r.template_id = std::string(kTemplateId);
  }
  m.header.template_id = std::string(kTemplateId);
  ctx.info("caption: " + std::to_string(m.records.size()) + " records, " + std::to_string(changed) + " re-rendered");
  if (ctx.common.dry_run) return kExitOk;
  const fs::path target = a.out.empty() ? fs::path(a.manifest) : fs::path(a.out);
  write_manifest(target, std::move(m));
  snapshot(ctx, target.parent_path(), {{"manifest", a.manifest}, {"out", target.string()}, {"template_id", kTemplateId}});
  return kExitOk;
}

struct SeparateArgs {
  std::string manifest, library;
  std::vector<std::string> collections;
  std::size_t k = 4, rounds = 8, support = 1;
  int tolerance = 0;
};

int run_separate(Context& ctx, const SeparateArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  const fs::path base = fs::path(a.manifest).parent_path();
  const fs::path root = a.library.empty() ? base : fs::path(a.library);
  SeparationConfig cfg;
  cfg.k = a.k;
  cfg.rounds = a.rounds;
  cfg.min_support = a.support;
  cfg.tolerance = a.tolerance;
  cfg.seed = ctx.common.seed;
  cfg.validate();

  std::map<std::string, std::vector<const TokenRecord*>> by_coll;
  for (const auto& r : m.records) by_coll[r.collection].push_back(&r);
  std::vector<std::string> wanted = a.collections;
  if (wanted.empty())
    for (const auto& [c, _] : by_coll) wanted.push_back(c);
  for (const auto& c : wanted)
    if (!by_coll.count(c)) throw Error(Errc::UsageError, "collection not in manifest: " + c);

  for (const auto& coll : wanted) {
    TraitIndex index;
    std::map<TokenId, std::string> image_of;
    for (const TokenRecord* r : by_coll[coll]) {
      index.add(r->token_id, r->attributes);
      image_of[r->token_id] = r->image;
    }
    index.finalize();
    const ImageLoader load = [&](TokenId id) { return read_png(base / image_of.at(id)); };
    if (ctx.common.dry_run) {
      std::size_t eligible = 0;
      for (const auto& [t, ids] : index.entries()) eligible += ids.size() >= cfg.k;
      ctx.out << "plan " << coll << ": " << index.size() << " traits, " << eligible << " with >= " << cfg.k
              << " carriers\n";
      continue;
    }
    const ComponentLibrary lib = separate_collection(coll, index, load, cfg);
    write_library(library_dir(root, coll), lib);
    ctx.info("separate " + coll + ": " + std::to_string(lib.assets.size()) + " components, " +
             std::to_string(lib.skipped.size()) + " skipped");
  }
  snapshot(ctx, root, {{"manifest", a.manifest}, {"library", root.string()}, {"collections", wanted}, {"k", a.k},
                       {"rounds", a.rounds}, {"support", a.support}, {"tolerance", a.tolerance}});
  return kExitOk;
}

struct AugmentArgs {
  std::string manifest, library, out, fill = "000000", mode = "independent";
  double p = 0.5;
  std::uint64_t epoch = 0;
  bool no_reseed = false;
};

int run_augment(Context& ctx, const AugmentArgs& a) {
  MaskPolicy policy;
  policy.p = a.p;
  policy.fill = parse_fill(a.fill);
  policy.seed = ctx.common.seed;
  policy.per_epoch_reseed = !a.no_reseed;
  policy.mode = parse_mask_mode(a.mode);
  policy.validate();
  const Manifest m = read_manifest(a.manifest);
  const fs::path base = fs::path(a.manifest).parent_path();
  const fs::path lib_root = a.library.empty() ? base : fs::path(a.library);
  const bool stream = a.out == "-";
  const fs::path out_dir = stream ? fs::path() : fs::path(a.out);

  if (ctx.common.dry_run) {
    std::size_t train = 0;
    for (const auto& r : m.records) train += r.split == Split::Train;
    ctx.out << "plan: " << train << " train records, p=" << a.p << ", epoch " << a.epoch << ", mode " << a.mode << '\n';
    return kExitOk;
  }

  Manifest sidecar;
  sidecar.header = m.header;
  sidecar.header.extra = ojson{{"augment", ojson{{"p", a.p},
                                                 {"fill", fill_hex(policy.fill)},
                                                 {"seed", policy.seed},
                                                 {"epoch", a.epoch},
                                                 {"mode", a.mode},
                                                 {"per_epoch_reseed", policy.per_epoch_reseed}}}};
  std::string lines;
  const auto stats = augment_stream(
      m, base, lib_root, policy, a.epoch, [&](const TokenRecord& r, const AugmentedPair& pair) {
        TokenRecord rec = r;
        rec.caption = pair.caption;
        ojson masked = ojson::array();
        for (const auto& t : pair.plan.masked_traits) masked.push_back(ojson{{"trait_type", t.trait_type}, {"value", t.value}});
        if (stream) {
          ojson j = record_to_json(rec);
          j["masked_traits"] = masked;
          ctx.out << j.dump() << '\n';
          return;
        }
        rec.image = (fs::path("images") / r.collection / (std::to_string(r.token_id) + ".png")).generic_string();
        write_png(out_dir / rec.image, pair.image);
        ojson j = record_to_json(rec);
        j["masked_traits"] = masked;
        lines += j.dump() + "\n";
      });
  for (const auto& s : stats.skipped) ctx.info("augment: skipped " + s.collection + "/" + std::to_string(s.token_id) + " (" + s.code + ")");
  if (stream) return kExitOk;
  // Header first, then the records already in manifest order.
  ojson header;
  header["nftk_manifest"] = 1;
  header["toolkit_version"] = sidecar.header.toolkit_version;
  header["resampling"] = sidecar.header.resampling;
  header["ratios"] = {sidecar.header.ratios.train, sidecar.header.ratios.val, sidecar.header.ratios.test};
  header["seed"] = sidecar.header.seed;
  header["template_id"] = sidecar.header.template_id;
  header["augment"] = sidecar.header.extra["augment"];
  write_text(out_dir / "manifest.jsonl", header.dump() + "\n" + lines);
  ctx.info("augment: " + std::to_string(stats.emitted) + " pairs, " + std::to_string(stats.skipped.size()) + " skipped");
  snapshot(ctx, out_dir, {{"manifest", a.manifest}, {"library", lib_root.string()}, {"out", a.out}, {"p", a.p},
                          {"fill", a.fill}, {"epoch", a.epoch}, {"mode", a.mode}, {"per_epoch_reseed", !a.no_reseed}});
  return kExitOk;
}

struct EmbedImportArgs {
  std::string input, ids, out, format;
};

int run_embed_import(Context& ctx, const EmbedImportArgs& a) {
  std::string fmt = a.format;
  if (fmt.empty()) fmt = fs::path(a.input).extension() == ".npy" ? "npy" : "csv";
  EmbeddingMatrix m = fmt == "npy" ? import_npy(a.input, a.ids) : import_csv(a.input);
  m.validate();
  ctx.info("embed-import: " + std::to_string(m.rows) + " x " + std::to_string(m.dim));
  if (ctx.common.dry_run) return kExitOk;
  write_matrix(m, a.out);
  snapshot(ctx, fs::path(a.out).parent_path(), {{"input", a.input}, {"ids", a.ids}, {"out", a.out}, {"format", fmt}});
  return kExitOk;
}

int run_embed_info(Context& ctx, const std::string& path) {
  const EmbeddingMatrix m = read_matrix(path);
  m.validate();
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0;
    for (float v : m.row(i)) s += static_cast<double>(v) * v;
    const double n = std::sqrt(s);
    lo = i == 0 ? n : std::min(lo, n);
    hi = i == 0 ? n : std::max(hi, n);
  }
  std::set<std::string> colls;
  for (const auto& id : m.ids) colls.insert(collection_of_id(id));
  ojson j{{"rows", m.rows}, {"dim", m.dim}, {"dtype", "f32le"}, {"collections", colls.size()},
          {"min_norm", lo}, {"max_norm", hi}};
  j["first_ids"] = std::vector<std::string>(m.ids.begin(), m.ids.begin() + std::min<std::size_t>(5, m.ids.size()));
  ctx.out << j.dump() << '\n';
  return kExitOk;
}

struct SimilarityArgs {
  std::string left, right, out;
  bool no_normalize = false;
};

int run_similarity(Context& ctx, const SimilarityArgs& a) {
  const auto l = load_matrix(a.left, !a.no_normalize);
  const auto r = load_matrix(a.right, !a.no_normalize);
  const SimilarityMatrix s = similarity(l, r);
  ctx.info("similarity: " + std::to_string(s.rows) + " x " + std::to_string(s.cols));
  if (ctx.common.dry_run) return kExitOk;
  write_similarity(s, a.out);
  snapshot(ctx, fs::path(a.out).parent_path(), {{"left", a.left}, {"right", a.right}, {"out", a.out},
                                                {"normalize", !a.no_normalize}});
  return kExitOk;
}

struct EvalArgs {
  std::string texts, images, sim, truth, out, ks = "1,5,10", format;
  bool per_collection = false, no_normalize = false;
};

int run_eval(Context& ctx, const EvalArgs& a) {
  SimilarityMatrix s;
  if (!a.sim.empty()) {
    s = read_similarity(a.sim);
  } else {
    if (a.texts.empty() || a.images.empty()) throw Error(Errc::UsageError, "eval needs --similarity or --texts and --images");
    s = similarity(load_matrix(a.texts, !a.no_normalize), load_matrix(a.images, !a.no_normalize));
  }
  std::map<std::string, std::string> truth;
  if (a.truth.empty()) {
    for (const auto& id : s.left_ids) truth[id] = id;
  } else if (fs::path(a.truth).extension() == ".jsonl") {
    // Manifest ids: a caption's target is the image of the same token.
    for (const auto& r : read_manifest(a.truth).records) {
      const std::string id = r.collection + "/" + std::to_string(r.token_id);
      truth[id] = id;
    }
  } else {
    std::ifstream in(a.truth);
    if (!in) throw Error(Errc::IoFailure, "cannot open truth file " + a.truth);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto comma = line.find(',');
      if (line.empty() || comma == std::string::npos) continue;
      truth[line.substr(0, comma)] = line.substr(comma + 1);
    }
  }
  const auto ks = parse_ks(a.ks);
  std::vector<RetrievalReport> reports{topk_accuracy(s, truth, ks)};
  if (a.per_collection) {
    std::map<std::string, std::string> coll;
    for (const auto& id : s.left_ids) coll[id] = collection_of_id(id);
    for (const auto& id : s.right_ids) coll[id] = collection_of_id(id);
    for (auto& r : topk_per_collection(s, truth, coll, ks)) reports.push_back(std::move(r));
  }
  for (const auto& r : reports)
    for (std::size_t i = 1; i < r.accuracy.size(); ++i)
      if (r.accuracy[i] < r.accuracy[i - 1]) throw Error(Errc::InvalidArgument, "top-k accuracies are not monotone");
  std::ostringstream os;
  if (wants_jsonl(a.out, a.format)) write_retrieval_jsonl(os, reports);
  else write_retrieval_csv(os, reports);
  emit(ctx, a.out, os.str());
  if (!a.out.empty() && a.out != "-")
    snapshot(ctx, fs::path(a.out).parent_path(), {{"texts", a.texts}, {"images", a.images}, {"similarity", a.sim},
                                                  {"truth", a.truth}, {"ks", a.ks}, {"per_collection", a.per_collection},
                                                  {"normalize", !a.no_normalize}, {"out", a.out}});
  return kExitOk;
}

struct CviArgs {
  std::string texts, images, out, variance = "population", ks = "1,5,10", format;
  double alpha = 0.7;
  bool with_topk = false, no_normalize = false;
  std::size_t batch_size = 0;
};

int run_cvi(Context& ctx, const CviArgs& a) {
  CviParams params;
  params.alpha = a.alpha;
  params.variance = a.variance == "sample" ? VarianceKind::Sample : VarianceKind::Population;
  params.validate();
  const auto groups = group_by_collection(load_matrix(a.texts, !a.no_normalize), load_matrix(a.images, !a.no_normalize),
                                          a.batch_size);
  const auto rows = cvi_report(groups, params, a.with_topk, parse_ks(a.ks));
  std::ostringstream os;
  if (wants_jsonl(a.out, a.format)) write_cvi_jsonl(os, rows);
  else write_cvi_csv(os, rows);
  emit(ctx, a.out, os.str());
  if (!a.out.empty() && a.out != "-")
    snapshot(ctx, fs::path(a.out).parent_path(), {{"texts", a.texts}, {"images", a.images}, {"alpha", a.alpha},
                                                  {"variance", a.variance}, {"with_topk", a.with_topk},
                                                  {"batch_size", a.batch_size}, {"normalize", !a.no_normalize},
                                                  {"out", a.out}});
  return kExitOk;
}

struct SweepArgs {
  std::string texts, images, out, grid = "0:1:0.05", variance = "population";
  std::size_t k = 1;
  bool no_normalize = false;
};

int run_alpha_sweep(Context& ctx, const SweepArgs& a) {
  const auto g = parse_doubles(a.grid, ':');
  if (g.size() != 3) throw Error(Errc::UsageError, "--grid takes lo:hi:step");
  const auto grid = make_grid(g[0], g[1], g[2]);
  const VarianceKind kind = a.variance == "sample" ? VarianceKind::Sample : VarianceKind::Population;
  const auto groups = group_by_collection(load_matrix(a.texts, !a.no_normalize), load_matrix(a.images, !a.no_normalize), 0);
  std::vector<SweepInput> inputs;
  for (const auto& c : groups) {
    std::map<std::string, std::string> truth;
    for (const auto& id : c.texts.ids) truth[id] = id;
    const auto rep = topk_accuracy(similarity(c.texts, c.images), truth, {a.k});
    inputs.push_back({c.collection, cvi_components(c.images, c.texts, kind), rep.at(a.k)});
  }
  const AlphaCurve curve = alpha_sweep(inputs, grid);
  std::ostringstream os;
  write_curve_csv(os, curve);
  emit(ctx, a.out, os.str());
  ctx.info("alpha-sweep: best alpha " + std::to_string(curve.best_alpha) + " (JSD " +
           std::to_string(curve.best_divergence) + ")");
  if (!a.out.empty() && a.out != "-")
    snapshot(ctx, fs::path(a.out).parent_path(), {{"texts", a.texts}, {"images", a.images}, {"grid", a.grid},
                                                  {"k", a.k}, {"variance", a.variance}, {"out", a.out}});
  return kExitOk;
}

int run_verify(Context& ctx, const std::string& manifest) {
  const VerifyReport rep = verify_manifest(manifest);
  for (const auto& f : rep.findings)
    ctx.out << ojson{{"kind", to_string(f.kind)}, {"collection", f.collection}, {"token_id", f.token_id},
                     {"detail", f.detail}}.dump()
            << '\n';
  ctx.info("verify: " + std::to_string(rep.records) + " records, " + std::to_string(rep.findings.size()) + " findings");
  if (!rep.ok())
    throw Error(Errc::ManifestInconsistent, std::to_string(rep.findings.size()) + " inconsistencies in " + manifest);
  return kExitOk;
}

void error_record(std::ostream& err, const std::string& code, const std::string& message) {
  err << ojson{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

std::vector<std::string> replay_args(const std::string& path) {
  const auto raw = read_file(path);
  const auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
  if (j.is_discarded() || !j.contains("argv") || !j.at("argv").is_array())
    throw Error(Errc::UsageError, "not a run config snapshot: " + path);
  return j.at("argv").get<std::vector<std::string>>();
}

}  // namespace

int dispatch(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args = args_in;
  try {
    if (args.size() == 2 && args[0] == "--replay") args = replay_args(args[1]);
  } catch (const Error& e) {
    error_record(err, e.qualified_code(), e.what());
    return e.code() == Errc::UsageError ? kExitUsage : kExitModuleError;
  }

  CLI::App app{"nftk: NFT image-text dataset toolkit", "nftk"};
  app.set_version_flag("--version", std::string(NFTK_VERSION));
  app.require_subcommand(1);
  Context ctx{out, err, {}, {}, args};
  // Common options are registered on every subcommand.
  Common common;

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Download metadata and media for target collections");
  ingest->add_option("--targets", ia.targets, "Target list (JSONL)")->required()->check(CLI::ExistingFile);
  const char* env_root = std::getenv("NFTK_ROOT");
  ia.root = env_root && *env_root ? env_root : "nftk-data";
  ingest->add_option("--root", ia.root, "Download root (default $NFTK_ROOT or ./nftk-data)");
  ingest->add_option("--collection", ia.collection, "Only this collection from the target list");
  ingest->add_option("--gateway", ia.gateways, "IPFS gateway, repeatable; overrides NFTK_IPFS_GATEWAYS");
  ingest->add_option("--arweave-gateway", ia.arweave, "Arweave gateway; overrides NFTK_ARWEAVE_GATEWAY");
  ingest->add_option("--per-host", ia.per_host, "Concurrent requests per host")->default_val(8)->check(CLI::PositiveNumber);
  ingest->add_option("--workers", ia.workers, "Token download workers")->default_val(8)->check(CLI::PositiveNumber);
  ingest->add_option("--retries", ia.retries, "Retries per candidate")->default_val(3)->check(CLI::NonNegativeNumber);
  ingest->add_option("--backoff-ms", ia.backoff_ms, "Base backoff")->default_val(500)->check(CLI::NonNegativeNumber);
  ingest->add_option("--timeout-ms", ia.timeout_ms, "Per-request timeout")->default_val(30000)->check(CLI::PositiveNumber);
  ingest->add_option("--size-cap-mb", ia.size_cap_mb, "Maximum response size")->default_val(64)->check(CLI::PositiveNumber);
  ingest->add_option("--complete-threshold", ia.complete_threshold, "Fraction of the id range that marks a collection complete")
      ->default_val(0.99)
      ->check(CLI::Range(0.0, 1.0));
  add_common(ingest, common);

  StandardizeArgs sa;
  auto* standardize = app.add_subcommand("standardize", "Convert media to 512-wide PNG, filter, split and write the manifest");
  standardize->add_option("--input", sa.input, "Ingest root")->required()->check(CLI::ExistingDirectory);
  standardize->add_option("--out", sa.out, "Output directory")->required();
  standardize->add_option("--min-tokens", sa.min_tokens, "Exclude collections with fewer usable tokens")->default_val(kMinTokens);
  standardize->add_option("--ratios", sa.ratios, "train,val,test")->default_val("0.8,0.05,0.15");
  add_common(standardize, common);

  CaptionArgs ca;
  auto* caption = app.add_subcommand("caption", "Re-render template captions from stored attributes");
  caption->add_option("--manifest", ca.manifest, "Manifest to re-render")->check(CLI::ExistingFile);
  caption->add_option("--out", ca.out, "Output manifest (default: in place)");
  caption->add_option("--metadata", ca.metadata, "Render one metadata file instead")->check(CLI::ExistingFile);
  caption->add_option("--collection", ca.collection, "Collection name for --metadata");
  add_common(caption, common);

  SeparateArgs pa;
  auto* separate = app.add_subcommand("separate", "Recover per-trait component masks by image differencing");
  separate->add_option("--manifest", pa.manifest, "Standardized manifest")->required()->check(CLI::ExistingFile);
  separate->add_option("--collection", pa.collections, "Collection id, repeatable (default: all)");
  separate->add_option("--library", pa.library, "Library root (default: manifest directory)");
  separate->add_option("--k", pa.k, "Images per differencing group")->default_val(4);
  separate->add_option("--rounds", pa.rounds, "Rounds R")->default_val(8);
  separate->add_option("--support", pa.support, "Rounds a pixel must be shared in")->default_val(1);
  separate->add_option("--tolerance", pa.tolerance, "Per-channel tolerance")->default_val(0);
  add_common(separate, common);

  AugmentArgs aa;
  auto* augment = app.add_subcommand("augment", "Emit dynamically masked image-caption pairs for training tokens");
  augment->add_option("--manifest", aa.manifest, "Standardized manifest")->required()->check(CLI::ExistingFile);
  augment->add_option("--library", aa.library, "Library root (default: manifest directory)");
  augment->add_option("--p", aa.p, "Mask probability")->default_val(0.5)->check(CLI::Range(0.0, 1.0));
  augment->add_option("--fill", aa.fill, "Fill colour, hex RRGGBB")->default_val("000000");
  augment->add_option("--epoch", aa.epoch, "Epoch number")->default_val(0);
  augment->add_option("--mode", aa.mode, "independent | single")->default_val("independent")->check(CLI::IsMember({"independent", "single"}));
  augment->add_flag("--no-reseed", aa.no_reseed, "Use the same plans for every epoch");
  augment->add_option("--out", aa.out, "Output directory, or - for a JSONL stream")->required();
  add_common(augment, common);

  EmbedImportArgs ea;
  auto* embed_import = app.add_subcommand("embed-import", "Convert CSV or .npy features to an NFTEMB01 matrix");
  embed_import->add_option("--input", ea.input, "CSV (id,v0,...) or .npy")->required()->check(CLI::ExistingFile);
  embed_import->add_option("--ids", ea.ids, "Row ids for .npy input, one per line")->check(CLI::ExistingFile);
  embed_import->add_option("--format", ea.format, "csv | npy (default: by extension)")->check(CLI::IsMember({"csv", "npy"}));
  embed_import->add_option("--out", ea.out, "Output matrix")->required();
  add_common(embed_import, common);

  std::string info_path;
  auto* embed_info = app.add_subcommand("embed-info", "Print the header and norm range of a matrix file");
  embed_info->add_option("path", info_path, "Matrix file")->required()->check(CLI::ExistingFile);
  add_common(embed_info, common);

  SimilarityArgs ma;
  auto* sim = app.add_subcommand("similarity", "Inner-product matrix between two embedding files");
  sim->add_option("--left", ma.left, "Row embeddings (e.g. texts)")->required()->check(CLI::ExistingFile);
  sim->add_option("--right", ma.right, "Column embeddings (e.g. images)")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", ma.out, "Output file")->required();
  sim->add_flag("--no-normalize", ma.no_normalize, "Skip L2 normalization");
  add_common(sim, common);

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Text-to-image top-k retrieval accuracy");
  eval->add_option("--texts", va.texts, "Text embeddings")->check(CLI::ExistingFile);
  eval->add_option("--images", va.images, "Image embeddings")->check(CLI::ExistingFile);
  eval->add_option("--sim,--similarity", va.sim, "Precomputed similarity file")->check(CLI::ExistingFile);
  eval->add_option("--truth", va.truth, "CSV text_id,image_id, or a manifest (default: equal ids)")->check(CLI::ExistingFile);
  eval->add_option("--k,--ks", va.ks, "Comma-separated k values")->default_val("1,5,10");
  eval->add_flag("--per-collection", va.per_collection, "Also report each collection on its own");
  eval->add_flag("--no-normalize", va.no_normalize, "Skip L2 normalization");
  eval->add_option("--format", va.format, "csv | jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  eval->add_option("--out", va.out, "Output file (default: stdout)");
  add_common(eval, common);

  CviArgs cv;
  auto* cvi_cmd = app.add_subcommand("cvi", "Comprehensive variance index per collection");
  cvi_cmd->add_option("--texts", cv.texts, "Text embeddings (file or directory)")->required()->check(CLI::ExistingPath);
  cvi_cmd->add_option("--images", cv.images, "Image embeddings (file or directory)")->required()->check(CLI::ExistingPath);
  cvi_cmd->add_option("--alpha", cv.alpha, "Image-image weight")->default_val(0.7)->check(CLI::Range(0.0, 1.0));
  cvi_cmd->add_option("--variance", cv.variance, "population | sample")->default_val("population")->check(CLI::IsMember({"population", "sample"}));
  cvi_cmd->add_flag("--with-topk", cv.with_topk, "Add within-collection retrieval accuracy");
  cvi_cmd->add_option("--k,--ks", cv.ks, "Comma-separated k values")->default_val("1,5,10");
  cvi_cmd->add_option("--batch-size", cv.batch_size, "Split collections into batches of this many rows (0 = whole)")->default_val(0);
  cvi_cmd->add_flag("--no-normalize", cv.no_normalize, "Skip L2 normalization");
  cvi_cmd->add_option("--format", cv.format, "csv | jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  cvi_cmd->add_option("--out", cv.out, "Output file (default: stdout)");
  add_common(cvi_cmd, common);

  SweepArgs wa;
  auto* sweep = app.add_subcommand("alpha-sweep", "JSD between CVI and top-k distributions over an alpha grid");
  sweep->add_option("--texts", wa.texts, "Text embeddings (file or directory)")->required()->check(CLI::ExistingPath);
  sweep->add_option("--images", wa.images, "Image embeddings (file or directory)")->required()->check(CLI::ExistingPath);
  sweep->add_option("--grid", wa.grid, "lo:hi:step")->default_val("0:1:0.05");
  sweep->add_option("--topk,--k", wa.k, "Top-k used as the target distribution")->default_val(1)->check(CLI::PositiveNumber);
  sweep->add_option("--variance", wa.variance, "population | sample")->default_val("population")->check(CLI::IsMember({"population", "sample"}));
  sweep->add_flag("--no-normalize", wa.no_normalize, "Skip L2 normalization");
  sweep->add_option("--out", wa.out, "Curve CSV (default: stdout)");
  add_common(sweep, common);

  std::string verify_path;
  auto* verify = app.add_subcommand("verify", "Check a manifest against the files it names");
  verify->add_option("--manifest", verify_path, "Manifest")->required()->check(CLI::ExistingFile);
  add_common(verify, common);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    error_record(err, "cli.UsageError", e.what());
    return kExitUsage;
  }

  auto* chosen = app.get_subcommands().front();
  ctx.subcommand = chosen->get_name();
  ctx.common = common;
  kernels::set_jobs(common.jobs);
  try {
    const std::string& s = ctx.subcommand;
    if (s == "ingest") return run_ingest(ctx, ia);
    if (s == "standardize") return run_standardize(ctx, sa);
    if (s == "caption") return run_caption(ctx, ca);
    if (s == "separate") return run_separate(ctx, pa);
    if (s == "augment") return run_augment(ctx, aa);
    if (s == "embed-import") return run_embed_import(ctx, ea);
    if (s == "embed-info") return run_embed_info(ctx, info_path);
    if (s == "similarity") return run_similarity(ctx, ma);
    if (s == "eval") return run_eval(ctx, va);
    if (s == "cvi") return run_cvi(ctx, cv);
    if (s == "alpha-sweep") return run_alpha_sweep(ctx, wa);
    if (s == "verify") return run_verify(ctx, verify_path);
  } catch (const Error& e) {
    error_record(err, e.qualified_code(), e.what());
    return e.code() == Errc::UsageError ? kExitUsage : kExitModuleError;
  } catch (const std::exception& e) {
    error_record(err, "standardize.IoFailure", e.what());
    return kExitModuleError;
  }
  return kExitUsage;
}

}  // namespace nftk::cli
