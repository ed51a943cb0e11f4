#include "nftk/media.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <string>

#include "nftk/error.hpp"

namespace nftk {

std::string_view to_string(MediaFormat f) noexcept {
  switch (f) {
    case MediaFormat::Png: return "PNG";
    case MediaFormat::Jpeg: return "JPEG";
    case MediaFormat::WebP: return "WebP";
    case MediaFormat::Gif: return "GIF";
    case MediaFormat::Svg: return "SVG";
    case MediaFormat::Mp4: return "MP4";
    case MediaFormat::Unknown: break;
  }
  return "unknown";
}

std::string_view extension_for(MediaFormat f) noexcept {
  switch (f) {
    case MediaFormat::Png: return "png";
    case MediaFormat::Jpeg: return "jpg";
    case MediaFormat::WebP: return "webp";
    case MediaFormat::Gif: return "gif";
    case MediaFormat::Svg: return "svg";
    case MediaFormat::Mp4: return "mp4";
    case MediaFormat::Unknown: break;
  }
  return "bin";
}

MediaFormat format_from_hint(std::string_view hint) noexcept {
  std::string h;
  for (char c : hint) h += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (const auto slash = h.rfind('/'); slash != std::string::npos) h = h.substr(slash + 1);
  if (const auto dot = h.rfind('.'); dot != std::string::npos) h = h.substr(dot + 1);
  if (h == "png") return MediaFormat::Png;
  if (h == "jpg" || h == "jpeg") return MediaFormat::Jpeg;
  if (h == "webp") return MediaFormat::WebP;
  if (h == "gif") return MediaFormat::Gif;
  if (h == "svg" || h == "svg+xml") return MediaFormat::Svg;
  if (h == "mp4" || h == "m4v") return MediaFormat::Mp4;
  return MediaFormat::Unknown;
}

namespace {

bool starts_with(std::span<const std::uint8_t> b, std::size_t off, std::string_view magic) {
  return b.size() >= off + magic.size() && std::memcmp(b.data() + off, magic.data(), magic.size()) == 0;
}

bool looks_like_svg(std::span<const std::uint8_t> b) {
  std::size_t i = 0;
  if (starts_with(b, 0, "\xEF\xBB\xBF")) i = 3;
  while (i < b.size() && std::isspace(b[i])) ++i;
  if (i >= b.size() || b[i] != '<') return false;
  const std::string_view text(reinterpret_cast<const char*>(b.data()), std::min<std::size_t>(b.size(), 4096));
  return text.find("<svg") != std::string_view::npos;
}

}  // namespace

MediaFormat sniff_format(std::span<const std::uint8_t> b, std::string_view hint) {
  if (starts_with(b, 0, "\x89PNG\r\n\x1a\n")) return MediaFormat::Png;
  if (starts_with(b, 0, "\xFF\xD8\xFF")) return MediaFormat::Jpeg;
  if (starts_with(b, 0, "GIF87a") || starts_with(b, 0, "GIF89a")) return MediaFormat::Gif;
  if (starts_with(b, 0, "RIFF") && starts_with(b, 8, "WEBP")) return MediaFormat::WebP;
  if (starts_with(b, 4, "ftyp")) return MediaFormat::Mp4;
  if (looks_like_svg(b)) return MediaFormat::Svg;
  return format_from_hint(hint);
}

bool is_animated_container(MediaFormat f) noexcept {
  return f == MediaFormat::Gif || f == MediaFormat::Mp4;
}

std::size_t frame_count(std::span<const std::uint8_t> bytes, MediaFormat f) {
  switch (f) {
    case MediaFormat::Gif: return gif::frame_count(bytes);
    case MediaFormat::Mp4: return video::frame_count(bytes);
    case MediaFormat::Unknown: throw Error(Errc::UndecodableMedia, "unrecognised media container");
    default: return 1;
  }
}

Image decode_frame(std::span<const std::uint8_t> bytes, MediaFormat f, std::size_t index, int svg_width) {
  switch (f) {
    case MediaFormat::Gif: return gif::decode_frame(bytes, index);
    case MediaFormat::Mp4: return video::decode_frame(bytes, index);
    case MediaFormat::Svg:
      if (index != 0) throw Error(Errc::NoFrames, "SVG has a single frame");
      return svg::rasterize(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), svg_width);
    case MediaFormat::Png:
    case MediaFormat::Jpeg:
    case MediaFormat::WebP:
      if (index != 0) throw Error(Errc::NoFrames, "still image has a single frame");
      return decode_png(bytes);  // OpenCV's decoder handles all three containers
    case MediaFormat::Unknown: break;
  }
  throw Error(Errc::UndecodableMedia, "unrecognised media container");
}

}  // namespace nftk
