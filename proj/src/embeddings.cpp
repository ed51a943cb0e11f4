#include "nftk/embeddings.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "nftk/error.hpp"
#include "nftk/image.hpp"
#include "nftk/kernels.hpp"

namespace nftk {

using json = nlohmann::json;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

std::uint32_t get_u32le(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::vector<std::uint8_t> serialize(const nlohmann::ordered_json& header, std::span<const float> payload) {
  const std::string h = header.dump();
  std::vector<std::uint8_t> out(12 + h.size() + payload.size() * 4);
  std::uint8_t* w = out.data();
  std::memcpy(w, kMatrixMagic, 8);
  const auto hlen = static_cast<std::uint32_t>(h.size());
  for (int b = 0; b < 4; ++b) w[8 + b] = static_cast<std::uint8_t>(hlen >> (8 * b));
  std::memcpy(w + 12, h.data(), h.size());
  w += 12 + h.size();
  for (float f : payload) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) *w++ = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return out;
}

struct Parsed {
  json header;
  std::vector<float> payload;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMatrixMagic, 8) != 0)
    throw Error(Errc::BadMagic, "not an NFTEMB01 matrix file");
  const std::uint32_t hlen = get_u32le(bytes.data() + 8);
  if (bytes.size() < 12ULL + hlen) throw Error(Errc::HeaderMismatch, "header length exceeds file size");
  Parsed p;
  p.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen, nullptr, false);
  if (p.header.is_discarded() || !p.header.is_object())
    throw Error(Errc::HeaderMismatch, "matrix header is not a JSON object");
  if (p.header.value("dtype", std::string{}) != "f32le")
    throw Error(Errc::HeaderMismatch, "unsupported dtype");
  const auto rows = p.header.value("rows", std::uint64_t{0});
  const auto dim = p.header.value("dim", std::uint64_t{0});
  const std::size_t payload_bytes = bytes.size() - 12 - hlen;
  if (dim != 0 && rows > (std::numeric_limits<std::size_t>::max() / 4) / dim)
    throw Error(Errc::HeaderMismatch, "declared shape overflows");
  if (payload_bytes != rows * dim * 4)
    throw Error(Errc::HeaderMismatch, "payload is " + std::to_string(payload_bytes) + " bytes, header declares " +
                                          std::to_string(rows) + "x" + std::to_string(dim));
  p.payload.resize(rows * dim);
  const std::uint8_t* src = bytes.data() + 12 + hlen;
  for (std::size_t i = 0; i < p.payload.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32le(src + i * 4));
    if (!std::isfinite(f)) throw Error(Errc::NonFiniteValue, "non-finite value at flat index " + std::to_string(i));
    p.payload[i] = f;
  }
  return p;
}

std::vector<std::string> read_ids(const json& header, const char* key, std::size_t expected) {
  const auto it = header.find(key);
  if (it == header.end() || !it->is_array()) throw Error(Errc::HeaderMismatch, std::string("missing ") + key);
  std::vector<std::string> ids;
  ids.reserve(it->size());
  for (const json& v : *it) {
    if (!v.is_string()) throw Error(Errc::HeaderMismatch, std::string(key) + " must be strings");
    ids.push_back(v.get<std::string>());
  }
  if (ids.size() != expected) throw Error(Errc::HeaderMismatch, std::string(key) + " count differs from shape");
  return ids;
}

}  // namespace

void EmbeddingMatrix::validate() const {
  if (data.size() != rows * dim) throw Error(Errc::HeaderMismatch, "data size differs from rows*dim");
  if (ids.size() != rows) throw Error(Errc::HeaderMismatch, "id count differs from rows");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i])) throw Error(Errc::NonFiniteValue, "non-finite value at flat index " + std::to_string(i));
  std::unordered_set<std::string_view> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw Error(Errc::InvalidArgument, "duplicate row id: " + id);
}

std::vector<std::uint8_t> serialize_matrix(const EmbeddingMatrix& m) {
  m.validate();
  const nlohmann::ordered_json header = {{"rows", m.rows}, {"dim", m.dim}, {"dtype", "f32le"}, {"ids", m.ids}};
  return serialize(header, m.data);
}

EmbeddingMatrix deserialize_matrix(std::span<const std::uint8_t> bytes) {
  Parsed p = parse(bytes);
  EmbeddingMatrix m;
  m.rows = p.header.value("rows", std::size_t{0});
  m.dim = p.header.value("dim", std::size_t{0});
  m.data = std::move(p.payload);
  m.ids = read_ids(p.header, "ids", m.rows);
  std::unordered_set<std::string_view> seen;
  for (const auto& id : m.ids)
    if (!seen.insert(id).second) throw Error(Errc::HeaderMismatch, "duplicate row id: " + id);
  return m;
}

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  write_file(path, serialize_matrix(m));
}

EmbeddingMatrix read_matrix(const std::filesystem::path& path) { return deserialize_matrix(read_file(path)); }

void write_similarity(const SimilarityMatrix& s, const std::filesystem::path& path) {
  const nlohmann::ordered_json header = {{"rows", s.rows}, {"dim", s.cols}, {"dtype", "f32le"},
                       {"ids", s.left_ids}, {"col_ids", s.right_ids}, {"kind", "similarity"}};
  write_file(path, serialize(header, s.values));
}

SimilarityMatrix read_similarity(const std::filesystem::path& path) {
  Parsed p = parse(read_file(path));
  SimilarityMatrix s;
  s.rows = p.header.value("rows", std::size_t{0});
  s.cols = p.header.value("dim", std::size_t{0});
  s.values = std::move(p.payload);
  s.left_ids = read_ids(p.header, "ids", s.rows);
  s.right_ids = read_ids(p.header, "col_ids", s.cols);
  return s;
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = m.row(i);
    double ss = 0.0;
    for (float v : r) ss += static_cast<double>(v) * v;
    if (ss == 0.0) throw Error(Errc::ZeroRow, "row has zero norm: " + (i < m.ids.size() ? m.ids[i] : std::to_string(i)));
    const double inv = 1.0 / std::sqrt(ss);
    auto o = out.row(i);
    for (std::size_t k = 0; k < m.dim; ++k) o[k] = static_cast<float>(static_cast<double>(r[k]) * inv);
  }
  return out;
}

SimilarityMatrix similarity(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.dim != b.dim)
    throw Error(Errc::DimMismatch, "dims differ: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  if (a.rows != b.rows)
    throw Error(Errc::RowCountMismatch, "row counts differ: " + std::to_string(a.rows) + " vs " + std::to_string(b.rows));
  SimilarityMatrix s;
  s.rows = a.rows;
  s.cols = b.rows;
  s.values.resize(s.rows * s.cols);
  s.left_ids = a.ids;
  s.right_ids = b.ids;
  kernels::omp::gram(a.data.data(), a.rows, b.data.data(), b.rows, a.dim, s.values.data());
  return s;
}

EmbeddingMatrix import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  EmbeddingMatrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("id", 0) == 0 && (line.size() == 2 || line[2] == ',')) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    m.ids.push_back(cell);
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const float v = std::strtof(cell.c_str(), &end);
      if (end == cell.c_str())
        throw Error(Errc::InvalidArgument, path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      m.data.push_back(v);
      ++count;
    }
    if (m.rows == 0) m.dim = count;
    if (count != m.dim)
      throw Error(Errc::DimMismatch, path.string() + ":" + std::to_string(line_no) + ": ragged row");
    ++m.rows;
  }
  m.validate();
  return m;
}

EmbeddingMatrix import_npy(const std::filesystem::path& path, const std::filesystem::path& ids_path) {
  const auto bytes = read_file(path);
  static constexpr unsigned char npy_magic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (bytes.size() < 10 || std::memcmp(bytes.data(), npy_magic, 6) != 0)
    throw Error(Errc::BadMagic, "not a .npy file: " + path.string());
  const int major = bytes[6];
  std::size_t hlen = 0, off = 0;
  if (major == 1) {
    hlen = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    off = 10;
  } else {
    if (bytes.size() < 12) throw Error(Errc::HeaderMismatch, "truncated .npy header");
    hlen = get_u32le(bytes.data() + 8);
    off = 12;
  }
  if (bytes.size() < off + hlen) throw Error(Errc::HeaderMismatch, "truncated .npy header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + off), hlen);
  auto field = [&](const std::string& key) {
    const auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw Error(Errc::HeaderMismatch, ".npy header lacks " + key);
    return header.substr(header.find(':', k) + 1);
  };
  const std::string descr = field("descr");
  const bool f4 = descr.find("<f4") != std::string::npos;
  const bool f8 = descr.find("<f8") != std::string::npos;
  if (!f4 && !f8) throw Error(Errc::HeaderMismatch, "only little-endian f4/f8 .npy supported");
  if (field("fortran_order").find("False") == std::string::npos)
    throw Error(Errc::HeaderMismatch, "Fortran-order .npy not supported");
  const std::string shape = field("shape");
  std::size_t rows = 0, dim = 0;
  if (std::sscanf(shape.c_str(), " (%zu, %zu)", &rows, &dim) != 2)
    throw Error(Errc::HeaderMismatch, ".npy must be 2-D");
  const std::size_t width = f4 ? 4 : 8;
  const std::uint8_t* payload = bytes.data() + off + hlen;
  if (bytes.size() - off - hlen != rows * dim * width) throw Error(Errc::HeaderMismatch, ".npy payload size mismatch");

  EmbeddingMatrix m;
  m.rows = rows;
  m.dim = dim;
  m.data.resize(rows * dim);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (f4) {
      m.data[i] = std::bit_cast<float>(get_u32le(payload + i * 4));
    } else {
      std::uint64_t u = 0;
      for (int b = 7; b >= 0; --b) u = (u << 8) | payload[i * 8 + b];
      m.data[i] = static_cast<float>(std::bit_cast<double>(u));
    }
  }
  if (!ids_path.empty()) {
    std::ifstream in(ids_path);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + ids_path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) m.ids.push_back(line);
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) m.ids.push_back(std::to_string(i));
  }
  m.validate();
  return m;
}

}  // namespace nftk
