#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nftk {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGBA raster, row-major, no padding.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgba(static_cast<std::size_t>(w) * h * 4, 0) {}

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::uint8_t* px(int x, int y) noexcept {
    return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4;
  }
  const std::uint8_t* px(int x, int y) const noexcept {
    return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4;
  }
  bool same_geometry(const Image& o) const noexcept {
    return width == o.width && height == o.height;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Boolean raster stored one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool value = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  std::size_t pixel_count() const noexcept { return bits.size(); }
  bool at(std::size_t i) const noexcept { return bits[i] != 0; }
  std::size_t count() const noexcept;
  /// Fraction of true pixels; 0 for an empty raster.
  double coverage() const noexcept;
  bool subset_of(const Mask& o) const noexcept;
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// |a ∩ b| / |a ∪ b|; 1.0 when both are empty.
double iou(const Mask& a, const Mask& b);

// PNG container helpers. Rasters are always RGBA in memory.
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& img);
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
/// Masks are written as 1-bit grayscale PNG.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

/// Width/height from a PNG IHDR without decoding; {0,0} if not a PNG.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace nftk
