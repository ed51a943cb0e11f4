#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nftk {

/// N×M float32 features, row-major, one identifier per row.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;
  std::vector<std::string> ids;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

  /// Throws HeaderMismatch / NonFiniteValue / InvalidArgument (duplicate ids).
  void validate() const;
  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

/// N×N inner products. `left_ids` label rows, `right_ids` label columns.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  std::vector<std::string> left_ids;
  std::vector<std::string> right_ids;

  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

inline constexpr char kMatrixMagic[8] = {'N', 'F', 'T', 'E', 'M', 'B', '0', '1'};

/// Layout: magic "NFTEMB01" | u32 LE header length | UTF-8 JSON header
/// {"rows":N,"dim":M,"dtype":"f32le","ids":[...]} | N·M f32 LE, row-major.
void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_matrix(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_matrix(const EmbeddingMatrix& m);
EmbeddingMatrix deserialize_matrix(std::span<const std::uint8_t> bytes);

/// Similarity matrices reuse the container; column ids go in "col_ids".
void write_similarity(const SimilarityMatrix& s, const std::filesystem::path& path);
SimilarityMatrix read_similarity(const std::filesystem::path& path);

/// Each row scaled to unit L2 norm. Throws ZeroRow naming the row id.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

/// values[i][j] = dot(a_i, b_j), accumulated in double. Requires equal dim
/// (DimMismatch) and equal row counts (RowCountMismatch).
SimilarityMatrix similarity(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

/// Import from CSV: `id,v0,v1,...` per line, optional header line starting
/// with "id". Rows keep file order.
EmbeddingMatrix import_csv(const std::filesystem::path& path);
/// Import a 2-D little-endian float32/float64 C-order .npy; ids come from
/// `ids_path` (one per line) or default to the row index.
EmbeddingMatrix import_npy(const std::filesystem::path& path, const std::filesystem::path& ids_path = {});

}  // namespace nftk
