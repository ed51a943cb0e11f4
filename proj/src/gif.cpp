// GIF87a/89a decoder: LZW, local/global palettes, interlacing, transparency
// and the three disposal methods. Frames are composited onto an initially
// transparent canvas the size of the logical screen.

#include <array>
#include <cstring>
#include <vector>

#include "nftk/error.hpp"
#include "nftk/media.hpp"

namespace nftk::gif {

namespace {

[[noreturn]] void bad(const char* what) { throw Error(Errc::UndecodableMedia, std::string("GIF: ") + what); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    if (pos_ >= b_.size()) bad("truncated stream");
    return b_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > b_.size()) bad("truncated stream");
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip_sub_blocks() {
    for (std::uint8_t n = u8(); n != 0; n = u8()) take(n);
  }
  std::vector<std::uint8_t> read_sub_blocks() {
    std::vector<std::uint8_t> out;
    for (std::uint8_t n = u8(); n != 0; n = u8()) {
      auto s = take(n);
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }
  bool done() const { return pos_ >= b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

using Palette = std::vector<std::array<std::uint8_t, 3>>;

Palette read_palette(Reader& r, int flags) {
  Palette p(std::size_t{1} << ((flags & 0x07) + 1));
  for (auto& c : p) {
    c[0] = r.u8();
    c[1] = r.u8();
    c[2] = r.u8();
  }
  return p;
}

std::vector<std::uint8_t> lzw_decode(const std::vector<std::uint8_t>& data, int min_code_size, std::size_t want) {
  if (min_code_size < 2 || min_code_size > 11) bad("invalid LZW code size");
  const int clear = 1 << min_code_size;
  const int eoi = clear + 1;
  std::array<std::uint16_t, 4096> prefix{};
  std::array<std::uint8_t, 4096> suffix{};
  std::array<std::uint8_t, 4096> first{};
  std::array<std::uint8_t, 4097> stack{};
  for (int i = 0; i < clear; ++i) {
    suffix[i] = static_cast<std::uint8_t>(i);
    first[i] = static_cast<std::uint8_t>(i);
  }

  std::vector<std::uint8_t> out;
  out.reserve(want);
  int code_size = min_code_size + 1;
  int next = clear + 2;
  int prev = -1;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pos = 0;

  while (out.size() < want) {
    while (bits < code_size) {
      if (pos >= data.size()) return out;  // short data: caller pads with index 0
      acc |= std::uint32_t{data[pos++]} << bits;
      bits += 8;
    }
    const int code = static_cast<int>(acc & ((1u << code_size) - 1));
    acc >>= code_size;
    bits -= code_size;

    if (code == clear) {
      code_size = min_code_size + 1;
      next = clear + 2;
      prev = -1;
      continue;
    }
    if (code == eoi) break;

    int cur = code;
    std::size_t sp = 0;
    if (prev < 0) {
      if (code >= clear) bad("LZW stream starts with a non-literal code");
      out.push_back(static_cast<std::uint8_t>(code));
      prev = code;
      continue;
    }
    if (code > next || (code == next && next >= 4096)) bad("LZW code out of range");
    if (code == next) {
      stack[sp++] = first[prev];
      cur = prev;
    }
    while (cur >= clear) {
      stack[sp++] = suffix[cur];
      cur = prefix[cur];
    }
    stack[sp++] = static_cast<std::uint8_t>(cur);
    while (sp > 0 && out.size() < want) out.push_back(stack[--sp]);

    if (next < 4096) {
      prefix[next] = static_cast<std::uint16_t>(prev);
      suffix[next] = static_cast<std::uint8_t>(cur);
      first[next] = first[prev];
      ++next;
      if (next == (1 << code_size) && code_size < 12) ++code_size;
    }
    prev = code;
  }
  return out;
}

struct FrameInfo {
  int x = 0, y = 0, w = 0, h = 0;
  bool interlaced = false;
  int disposal = 0;
  int transparent = -1;
  const Palette* palette = nullptr;
  Palette local;
  std::vector<std::uint8_t> indices;
};

void draw(Image& canvas, const FrameInfo& f) {
  const Palette& pal = *f.palette;
  auto row_of = [&](int i) {
    if (!f.interlaced) return i;
    // Passes start at 0, 4, 2, 1 with strides 8, 8, 4, 2.
    const int p1 = (f.h + 7) / 8, p2 = (f.h + 3) / 8, p3 = (f.h + 1) / 4;
    if (i < p1) return i * 8;
    i -= p1;
    if (i < p2) return 4 + i * 8;
    i -= p2;
    if (i < p3) return 2 + i * 4;
    i -= p3;
    return 1 + i * 2;
  };
  for (int i = 0; i < f.h; ++i) {
    const int cy = f.y + row_of(i);
    if (cy < 0 || cy >= canvas.height) continue;
    for (int j = 0; j < f.w; ++j) {
      const int cx = f.x + j;
      if (cx < 0 || cx >= canvas.width) continue;
      const std::size_t k = static_cast<std::size_t>(i) * f.w + j;
      const int idx = k < f.indices.size() ? f.indices[k] : 0;
      if (idx == f.transparent) continue;
      std::uint8_t* p = canvas.px(cx, cy);
      if (static_cast<std::size_t>(idx) < pal.size()) {
        p[0] = pal[idx][0];
        p[1] = pal[idx][1];
        p[2] = pal[idx][2];
      } else {
        p[0] = p[1] = p[2] = 0;
      }
      p[3] = 255;
    }
  }
}

void clear_rect(Image& canvas, const FrameInfo& f) {
  for (int y = std::max(0, f.y); y < std::min(canvas.height, f.y + f.h); ++y)
    for (int x = std::max(0, f.x); x < std::min(canvas.width, f.x + f.w); ++x) std::memset(canvas.px(x, y), 0, 4);
}

/// Walks the stream; `on_frame` gets each decoded frame in order and returns
/// false to stop. When `decode` is false frames are counted but not decoded.
template <class F>
std::size_t walk(std::span<const std::uint8_t> bytes, bool decode, F&& on_frame, int* screen_w = nullptr,
                 int* screen_h = nullptr) {
  Reader r(bytes);
  const auto sig = r.take(6);
  if (std::memcmp(sig.data(), "GIF87a", 6) != 0 && std::memcmp(sig.data(), "GIF89a", 6) != 0) bad("bad signature");
  const int sw = r.u16(), sh = r.u16();
  const int flags = r.u8();
  r.u8();  // background colour index: canvas starts transparent instead
  r.u8();  // pixel aspect ratio
  if (sw == 0 || sh == 0) throw Error(Errc::ZeroDimension, "GIF logical screen is empty");
  if (screen_w) *screen_w = sw;
  if (screen_h) *screen_h = sh;
  Palette global;
  if (flags & 0x80) global = read_palette(r, flags);

  std::size_t count = 0;
  int disposal = 0, transparent = -1;
  while (!r.done()) {
    const std::uint8_t block = r.u8();
    if (block == 0x3B) break;
    if (block == 0x21) {
      const std::uint8_t label = r.u8();
      if (label == 0xF9) {
        const std::uint8_t n = r.u8();
        auto gce = r.take(n);
        if (n >= 4) {
          disposal = (gce[0] >> 2) & 0x07;
          transparent = (gce[0] & 0x01) ? gce[3] : -1;
        }
        r.skip_sub_blocks();
      } else {
        r.skip_sub_blocks();
      }
      continue;
    }
    if (block != 0x2C) bad("unknown block");
    FrameInfo f;
    f.x = r.u16();
    f.y = r.u16();
    f.w = r.u16();
    f.h = r.u16();
    const int iflags = r.u8();
    f.interlaced = (iflags & 0x40) != 0;
    if (iflags & 0x80) f.local = read_palette(r, iflags);
    f.palette = (iflags & 0x80) ? &f.local : &global;
    f.disposal = disposal;
    f.transparent = transparent;
    disposal = 0;
    transparent = -1;
    const int min_code = r.u8();
    if (decode) {
      const auto data = r.read_sub_blocks();
      f.indices = lzw_decode(data, min_code, static_cast<std::size_t>(f.w) * f.h);
      if (!on_frame(f)) return count + 1;
    } else {
      r.skip_sub_blocks();
    }
    ++count;
  }
  return count;
}

}  // namespace

std::size_t frame_count(std::span<const std::uint8_t> bytes) {
  const std::size_t n = walk(bytes, false, [](const FrameInfo&) { return true; });
  if (n == 0) throw Error(Errc::NoFrames, "GIF contains no image frames");
  return n;
}

Image decode_frame(std::span<const std::uint8_t> bytes, std::size_t index) {
  int sw = 0, sh = 0;
  Image canvas;
  Image previous;
  std::size_t seen = 0;
  bool found = false;
  Image result;
  walk(
      bytes, true,
      [&](const FrameInfo& f) {
        if (canvas.width == 0) canvas = Image(sw, sh);
        if (f.disposal == 3) previous = canvas;
        draw(canvas, f);
        if (seen == index) {
          result = canvas;
          found = true;
          return false;
        }
        if (f.disposal == 2) clear_rect(canvas, f);
        if (f.disposal == 3) canvas = previous;
        ++seen;
        return true;
      },
      &sw, &sh);
  if (!found) {
    if (seen == 0) throw Error(Errc::NoFrames, "GIF contains no image frames");
    throw Error(Errc::NoFrames, "GIF frame index " + std::to_string(index) + " out of range");
  }
  return result;
}

}  // namespace nftk::gif
