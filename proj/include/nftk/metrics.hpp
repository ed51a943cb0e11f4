#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nftk/embeddings.hpp"

namespace nftk {

enum class VarianceKind { Population, Sample };

/// Per-row variance of a similarity matrix, computed in double.
std::vector<double> row_variance(const SimilarityMatrix& s, VarianceKind kind = VarianceKind::Population);

struct CviParams {
  double alpha = 0.7;  // weight on image-image spread; (1 - alpha) on text-text
  VarianceKind variance = VarianceKind::Population;
  void validate() const;
};

/// Row-variance sums of S_II, S_TT and S_TI for one batch. Everything CVI
/// needs, and what the α sweep consumes per collection.
struct CviComponents {
  double sum_var_ii = 0.0;
  double sum_var_tt = 0.0;
  double sum_var_ti = 0.0;
  std::size_t n = 0;
};

/// Requires I and T with equal shape and identical id sequences
/// (Misaligned otherwise); both are expected to be L2-normalized.
CviComponents cvi_components(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                             VarianceKind kind = VarianceKind::Population);

/// (α·ΣvarII + (1-α)·ΣvarTT + ΣvarTI) / 2N
double cvi_from_components(const CviComponents& c, double alpha);

double cvi(const EmbeddingMatrix& images, const EmbeddingMatrix& texts, const CviParams& params = {});

/// Jensen-Shannon divergence in bits; both inputs must be distributions
/// (nonnegative, summing to 1 within 1e-9).
double jsd(std::span<const double> p, std::span<const double> q);

/// Divide by the L1 norm; throws DegenerateDistribution for an all-zero or
/// negative-valued vector.
std::vector<double> l1_normalize(std::span<const double> v);

struct RetrievalReport {
  std::string scope = "global";
  std::vector<std::size_t> ranks;          // 1-based, per query row
  std::vector<std::size_t> ks;             // ascending
  std::vector<double> accuracy;            // percent, aligned with ks
  std::size_t queries() const noexcept { return ranks.size(); }
  double at(std::size_t k) const;          // accuracy for k (must be in ks)
};

/// Ranks each row's truth column among all columns (descending score, ties
/// to the lower column index). `truth` maps row id -> column id; a row id
/// without an entry or whose target is not a column raises TruthMissing.
RetrievalReport topk_accuracy(const SimilarityMatrix& s, const std::map<std::string, std::string>& truth,
                              std::vector<std::size_t> ks = {1, 5, 10});

/// Same protocol restricted to each collection's own rows and columns.
/// `collection_of` maps a row/column id to its collection.
std::vector<RetrievalReport> topk_per_collection(const SimilarityMatrix& s,
                                                 const std::map<std::string, std::string>& truth,
                                                 const std::map<std::string, std::string>& collection_of,
                                                 std::vector<std::size_t> ks = {1, 5, 10});

struct SweepInput {
  std::string collection;
  CviComponents components;
  double topk = 0.0;  // retrieval accuracy used as the target distribution
};

struct AlphaCurve {
  std::vector<double> alphas;
  std::vector<double> divergence;
  double best_alpha = 0.0;
  double best_divergence = 0.0;
};

/// Grid values lo, lo+step, ..., hi built as lo + i*step (no accumulation).
std::vector<double> make_grid(double lo, double hi, double step);

/// For every α: per-collection CVI, L1-normalize CVI and top-k vectors, JSD.
/// argmin ties resolve to the smallest α.
AlphaCurve alpha_sweep(std::span<const SweepInput> batches, std::span<const double> grid);

struct CviRow {
  std::string collection;
  std::size_t n = 0;
  double cvi = 0.0;
  std::optional<RetrievalReport> retrieval;
};

struct CollectionEmbeddings {
  std::string collection;
  EmbeddingMatrix images;
  EmbeddingMatrix texts;
};

/// One row per collection sorted by ascending CVI (ties by name). With
/// `with_topk`, each row also carries text->image retrieval within the
/// collection, truth = same row id.
std::vector<CviRow> cvi_report(std::span<const CollectionEmbeddings> collections, const CviParams& params,
                               bool with_topk = false, std::vector<std::size_t> ks = {1, 5, 10});

void write_retrieval_csv(std::ostream& out, std::span<const RetrievalReport> reports);
void write_retrieval_jsonl(std::ostream& out, std::span<const RetrievalReport> reports);
void write_cvi_csv(std::ostream& out, std::span<const CviRow> rows);
void write_cvi_jsonl(std::ostream& out, std::span<const CviRow> rows);
void write_curve_csv(std::ostream& out, const AlphaCurve& curve);

}  // namespace nftk
