#include "nftk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "nftk/error.hpp"
#include "nftk/kernels.hpp"
#include "textfmt.hpp"

namespace nftk {

using json = nlohmann::ordered_json;

std::vector<double> row_variance(const SimilarityMatrix& s, VarianceKind kind) {
  std::vector<double> out(s.rows);
  kernels::omp::row_variance(s.values.data(), s.rows, s.cols, kind == VarianceKind::Sample, out.data());
  return out;
}

void CviParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error(Errc::InvalidArgument, "alpha must lie in [0, 1], got " + std::to_string(alpha));
}

CviComponents cvi_components(const EmbeddingMatrix& images, const EmbeddingMatrix& texts, VarianceKind kind) {
  if (images.rows != texts.rows || images.dim != texts.dim)
    throw Error(Errc::Misaligned, "image and text matrices differ in shape");
  if (images.ids != texts.ids) throw Error(Errc::Misaligned, "image and text row ids are not aligned");
  const std::size_t n = images.rows, m = images.dim;
  const bool sample = kind == VarianceKind::Sample;
  std::vector<double> var(n);
  CviComponents c;
  c.n = n;
  auto total = [&] { return std::accumulate(var.begin(), var.end(), 0.0); };
  kernels::omp::gram_row_variance(images.data.data(), images.data.data(), n, m, sample, var.data());
  c.sum_var_ii = total();
  kernels::omp::gram_row_variance(texts.data.data(), texts.data.data(), n, m, sample, var.data());
  c.sum_var_tt = total();
  kernels::omp::gram_row_variance(texts.data.data(), images.data.data(), n, m, sample, var.data());
  c.sum_var_ti = total();
  return c;
}

double cvi_from_components(const CviComponents& c, double alpha) {
  if (c.n == 0) return 0.0;
  return (alpha * c.sum_var_ii + (1.0 - alpha) * c.sum_var_tt + c.sum_var_ti) / (2.0 * static_cast<double>(c.n));
}

double cvi(const EmbeddingMatrix& images, const EmbeddingMatrix& texts, const CviParams& params) {
  params.validate();
  return cvi_from_components(cvi_components(images, texts, params.variance), params.alpha);
}

namespace {

void check_distribution(std::span<const double> p, const char* name) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw Error(Errc::NotNormalized, std::string(name) + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error(Errc::NotNormalized, std::string(name) + " does not sum to 1");
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(Errc::LengthMismatch, "distributions differ in length");
  check_distribution(p, "P");
  check_distribution(q, "Q");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double tp = p[i] > 0.0 ? p[i] * std::log2(p[i] / m) : 0.0;
    const double tq = q[i] > 0.0 ? q[i] * std::log2(q[i] / m) : 0.0;
    d += 0.5 * (tp + tq);
  }
  return std::clamp(d, 0.0, 1.0);
}

std::vector<double> l1_normalize(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0) throw Error(Errc::DegenerateDistribution, "vector has a negative or non-finite entry");
    sum += x;
  }
  if (!(sum > 0.0)) throw Error(Errc::DegenerateDistribution, "all-zero vector cannot be L1-normalized");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= sum;
  return out;
}

double RetrievalReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return accuracy[i];
  throw Error(Errc::InvalidArgument, "k=" + std::to_string(k) + " not in report");
}

namespace {

void normalize_ks(std::vector<std::size_t>& ks) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty() || ks.front() == 0) throw Error(Errc::InvalidArgument, "k values must be positive");
}

RetrievalReport score_ranks(std::string scope, std::vector<std::size_t> ranks, const std::vector<std::size_t>& ks) {
  RetrievalReport r;
  r.scope = std::move(scope);
  r.ks = ks;
  r.accuracy.reserve(ks.size());
  const double n = static_cast<double>(ranks.size());
  for (std::size_t k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t rk) { return rk <= k; });
    r.accuracy.push_back(ranks.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / n);
  }
  r.ranks = std::move(ranks);
  return r;
}

std::map<std::string, std::size_t> column_index(const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t j = 0; j < ids.size(); ++j) idx.emplace(ids[j], j);
  return idx;
}

}  // namespace

RetrievalReport topk_accuracy(const SimilarityMatrix& s, const std::map<std::string, std::string>& truth,
                              std::vector<std::size_t> ks) {
  normalize_ks(ks);
  const auto cols = column_index(s.right_ids);
  std::vector<std::size_t> target(s.rows);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const auto t = truth.find(s.left_ids[i]);
    if (t == truth.end()) throw Error(Errc::TruthMissing, "no truth target for query " + s.left_ids[i]);
    const auto c = cols.find(t->second);
    if (c == cols.end()) throw Error(Errc::TruthMissing, "truth target " + t->second + " is not a column");
    target[i] = c->second;
  }
  std::vector<std::size_t> ranks(s.rows);
  kernels::omp::truth_ranks(s.values.data(), s.rows, s.cols, target.data(), ranks.data());
  return score_ranks("global", std::move(ranks), ks);
}

std::vector<RetrievalReport> topk_per_collection(const SimilarityMatrix& s,
                                                 const std::map<std::string, std::string>& truth,
                                                 const std::map<std::string, std::string>& collection_of,
                                                 std::vector<std::size_t> ks) {
  normalize_ks(ks);
  auto owner = [&](const std::string& id) -> const std::string& {
    const auto it = collection_of.find(id);
    if (it == collection_of.end()) throw Error(Errc::TruthMissing, "id " + id + " has no collection");
    return it->second;
  };
  std::map<std::string, std::vector<std::size_t>> rows_by, cols_by;
  for (std::size_t i = 0; i < s.rows; ++i) rows_by[owner(s.left_ids[i])].push_back(i);
  for (std::size_t j = 0; j < s.cols; ++j) cols_by[owner(s.right_ids[j])].push_back(j);

  std::vector<RetrievalReport> out;
  for (const auto& [coll, rows] : rows_by) {
    SimilarityMatrix sub;
    const auto& cols = cols_by[coll];
    sub.rows = rows.size();
    sub.cols = cols.size();
    sub.values.resize(sub.rows * sub.cols);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      sub.left_ids.push_back(s.left_ids[rows[a]]);
      for (std::size_t b = 0; b < cols.size(); ++b) sub.values[a * sub.cols + b] = s.at(rows[a], cols[b]);
    }
    for (std::size_t j : cols) sub.right_ids.push_back(s.right_ids[j]);
    RetrievalReport r = topk_accuracy(sub, truth, ks);
    r.scope = coll;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw Error(Errc::InvalidArgument, "grid needs step > 0 and hi >= lo");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) g[i] = std::min(hi, lo + static_cast<double>(i) * step);
  return g;
}

AlphaCurve alpha_sweep(std::span<const SweepInput> batches, std::span<const double> grid) {
  if (batches.size() < 2) throw Error(Errc::InvalidArgument, "alpha sweep needs at least 2 collections");
  if (grid.empty()) throw Error(Errc::InvalidArgument, "empty alpha grid");
  for (double a : grid)
    if (!(a >= 0.0 && a <= 1.0)) throw Error(Errc::InvalidArgument, "alpha grid must lie in [0, 1]");

  std::vector<double> target(batches.size());
  for (std::size_t c = 0; c < batches.size(); ++c) target[c] = batches[c].topk;
  const std::vector<double> q = l1_normalize(target);

  AlphaCurve curve;
  curve.alphas.assign(grid.begin(), grid.end());
  curve.divergence.reserve(grid.size());
  std::vector<double> values(batches.size());
  for (double a : grid) {
    for (std::size_t c = 0; c < batches.size(); ++c) values[c] = cvi_from_components(batches[c].components, a);
    curve.divergence.push_back(jsd(l1_normalize(values), q));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.divergence.size(); ++i)
    if (curve.divergence[i] < curve.divergence[best]) best = i;
  curve.best_alpha = curve.alphas[best];
  curve.best_divergence = curve.divergence[best];
  return curve;
}

std::vector<CviRow> cvi_report(std::span<const CollectionEmbeddings> collections, const CviParams& params,
                               bool with_topk, std::vector<std::size_t> ks) {
  params.validate();
  std::vector<CviRow> rows;
  rows.reserve(collections.size());
  for (const auto& c : collections) {
    CviRow row;
    row.collection = c.collection;
    row.n = c.images.rows;
    row.cvi = cvi(c.images, c.texts, params);
    if (with_topk) {
      std::map<std::string, std::string> truth;
      for (const auto& id : c.texts.ids) truth.emplace(id, id);
      RetrievalReport r = topk_accuracy(similarity(c.texts, c.images), truth, ks);
      r.scope = c.collection;
      row.retrieval = std::move(r);
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const CviRow& a, const CviRow& b) {
    if (a.cvi != b.cvi) return a.cvi < b.cvi;
    return a.collection < b.collection;
  });
  return rows;
}

void write_retrieval_csv(std::ostream& out, std::span<const RetrievalReport> reports) {
  out << "collection,item_num";
  if (!reports.empty())
    for (std::size_t k : reports.front().ks) out << ",top" << k;
  out << '\n';
  for (const auto& r : reports) {
    out << detail::csv_cell(r.scope) << ',' << r.queries();
    for (double a : r.accuracy) out << ',' << detail::fixed(a, 4);
    out << '\n';
  }
}

void write_retrieval_jsonl(std::ostream& out, std::span<const RetrievalReport> reports) {
  for (const auto& r : reports) {
    json j = {{"collection", r.scope}, {"item_num", r.queries()}};
    for (std::size_t i = 0; i < r.ks.size(); ++i)
      j["top" + std::to_string(r.ks[i])] = std::stod(detail::fixed(r.accuracy[i], 4));
    out << j.dump() << '\n';
  }
}

void write_cvi_csv(std::ostream& out, std::span<const CviRow> rows) {
  const bool with_topk = !rows.empty() && rows.front().retrieval.has_value();
  out << "Collection/Category,item_num";
  if (with_topk)
    for (std::size_t k : rows.front().retrieval->ks) out << ",Top" << k;
  out << ",CVI\n";
  for (const auto& r : rows) {
    out << detail::csv_cell(r.collection) << ',' << r.n;
    if (with_topk && r.retrieval)
      for (double a : r.retrieval->accuracy) out << ',' << detail::fixed(a, 4);
    out << ',' << detail::fixed(r.cvi, 8) << '\n';
  }
}

void write_cvi_jsonl(std::ostream& out, std::span<const CviRow> rows) {
  for (const auto& r : rows) {
    json j = {{"collection", r.collection}, {"item_num", r.n}};
    if (r.retrieval)
      for (std::size_t i = 0; i < r.retrieval->ks.size(); ++i)
        j["Top" + std::to_string(r.retrieval->ks[i])] = std::stod(detail::fixed(r.retrieval->accuracy[i], 4));
    j["CVI"] = std::stod(detail::fixed(r.cvi, 8));
    out << j.dump() << '\n';
  }
}

void write_curve_csv(std::ostream& out, const AlphaCurve& curve) {
  out << "alpha,jsd\n";
  for (std::size_t i = 0; i < curve.alphas.size(); ++i)
    out << detail::fixed(curve.alphas[i], 4) << ',' << detail::fixed(curve.divergence[i], 10) << '\n';
}

}  // namespace nftk
