#include "nftk/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <array>
#include <fstream>

#include "nftk/error.hpp"

namespace nftk {

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

double Mask::coverage() const noexcept {
  if (bits.empty()) return 0.0;
  return static_cast<double>(count()) / static_cast<double>(bits.size());
}

bool Mask::subset_of(const Mask& o) const noexcept {
  if (bits.size() != o.bits.size()) return false;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i] && !o.bits[i]) return false;
  return true;
}

double iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error(Errc::GeometryMismatch, "iou: mask geometry differs");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

Image from_mat(const cv::Mat& decoded) {
  cv::Mat m8;
  if (decoded.depth() == CV_16U) {
    decoded.convertTo(m8, CV_8U, 1.0 / 257.0);
  } else if (decoded.depth() == CV_8U) {
    m8 = decoded;
  } else {
    throw Error(Errc::UndecodableMedia, "unsupported sample depth");
  }
  if (m8.cols <= 0 || m8.rows <= 0) throw Error(Errc::ZeroDimension, "decoded image has no pixels");
  Image img(m8.cols, m8.rows);
  const int ch = m8.channels();
  for (int y = 0; y < m8.rows; ++y) {
    const std::uint8_t* row = m8.ptr<std::uint8_t>(y);
    for (int x = 0; x < m8.cols; ++x) {
      std::uint8_t* p = img.px(x, y);
      const std::uint8_t* s = row + static_cast<std::size_t>(x) * ch;
      switch (ch) {
        case 1: p[0] = p[1] = p[2] = s[0]; p[3] = 255; break;
        case 2: p[0] = p[1] = p[2] = s[0]; p[3] = s[1]; break;
        case 3: p[0] = s[2]; p[1] = s[1]; p[2] = s[0]; p[3] = 255; break;
        case 4: p[0] = s[2]; p[1] = s[1]; p[2] = s[0]; p[3] = s[3]; break;
        default: throw Error(Errc::UndecodableMedia, "unsupported channel count");
      }
    }
  }
  return img;
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(Errc::UndecodableMedia, "empty PNG buffer");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(Errc::UndecodableMedia, std::string("image decode failed: ") + e.what());
  }
  if (decoded.empty()) throw Error(Errc::UndecodableMedia, "image decode failed");
  return from_mat(decoded);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw Error(Errc::ZeroDimension, "cannot encode empty image");
  cv::Mat bgra(img.height, img.width, CV_8UC4);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = bgra.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      row[x * 4 + 0] = p[2];
      row[x * 4 + 1] = p[1];
      row[x * 4 + 2] = p[0];
      row[x * 4 + 3] = p[3];
    }
  }
  std::vector<std::uint8_t> out;
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imencode(".png", bgra, out, params)) throw Error(Errc::IoFailure, "PNG encode failed");
  return out;
}

Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes);
}

void write_png(const std::filesystem::path& path, const Image& img) {
  write_file(path, encode_png(img));
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  if (mask.width <= 0 || mask.height <= 0) throw Error(Errc::ZeroDimension, "cannot encode empty mask");
  cv::Mat gray(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    std::uint8_t* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x)
      row[x] = mask.bits[static_cast<std::size_t>(y) * mask.width + x] ? 255 : 0;
  }
  std::vector<std::uint8_t> out;
  const std::vector<int> params{cv::IMWRITE_PNG_BILEVEL, 1};
  if (!cv::imencode(".png", gray, out, params)) throw Error(Errc::IoFailure, "mask encode failed");
  write_file(path, out);
}

Mask read_mask_png(const std::filesystem::path& path) {
  const Image img = read_png(path);
  Mask m(img.width, img.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = img.rgba[i * 4] >= 128 ? 1 : 0;
  return m;
}

std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 24> hdr{};
  if (!in.read(reinterpret_cast<char*>(hdr.data()), hdr.size())) return {0, 0};
  static constexpr std::array<unsigned char, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (!std::equal(sig.begin(), sig.end(), hdr.begin())) return {0, 0};
  auto be32 = [&](std::size_t off) {
    return static_cast<int>((std::uint32_t{hdr[off]} << 24) | (std::uint32_t{hdr[off + 1]} << 16) |
                            (std::uint32_t{hdr[off + 2]} << 8) | std::uint32_t{hdr[off + 3]});
  };
  return {be32(16), be32(20)};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw Error(Errc::IoFailure, "short read on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  // Write-then-rename so an interrupted run never leaves a truncated file behind.
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::IoFailure, "write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoFailure, "rename failed for " + path.string() + ": " + ec.message());
}

}  // namespace nftk
