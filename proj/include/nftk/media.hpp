#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "nftk/image.hpp"

namespace nftk {

enum class MediaFormat { Png, Jpeg, WebP, Gif, Svg, Mp4, Unknown };

std::string_view to_string(MediaFormat f) noexcept;
/// File extension without the dot ("png", "jpg", ...).
std::string_view extension_for(MediaFormat f) noexcept;
/// Maps an extension or MIME-ish hint ("jpg", "image/gif", ".svg") to a format.
MediaFormat format_from_hint(std::string_view hint) noexcept;

/// Identify the container from magic bytes; falls back to `hint` only when
/// the bytes are not recognised.
MediaFormat sniff_format(std::span<const std::uint8_t> bytes, std::string_view hint = {});

bool is_animated_container(MediaFormat f) noexcept;

/// Number of frames (1 for still formats). Throws UndecodableMedia / NoFrames.
std::size_t frame_count(std::span<const std::uint8_t> bytes, MediaFormat f);

/// Frame `index` fully composited (GIF disposal applied). Still formats only
/// accept index 0. SVG is rasterized at `svg_width` pixels wide.
Image decode_frame(std::span<const std::uint8_t> bytes, MediaFormat f, std::size_t index, int svg_width = 512);

namespace gif {
std::size_t frame_count(std::span<const std::uint8_t> bytes);
Image decode_frame(std::span<const std::uint8_t> bytes, std::size_t index);
}  // namespace gif

namespace svg {
/// Flat-color subset: rect, circle, ellipse, line-free polygon/polyline,
/// path (M L H V C Q Z, absolute and relative), nested g with fill and
/// translate/scale. Sampled at pixel centres without antialiasing.
Image rasterize(std::string_view text, int target_width);
}  // namespace svg

namespace video {
std::size_t frame_count(std::span<const std::uint8_t> bytes);
Image decode_frame(std::span<const std::uint8_t> bytes, std::size_t index);
}  // namespace video

}  // namespace nftk
