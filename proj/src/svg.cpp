#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nftk/error.hpp"
#include "nftk/media.hpp"

namespace nftk::svg {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::UndecodableMedia, "SVG: " + what); }

struct Point {
  double x, y;
};

struct Affine {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;  // x' = a x + c y + e, y' = b x + d y + f
  Point apply(Point p) const { return {a * p.x + c * p.y + e, b * p.x + d * p.y + f}; }
  Affine then(const Affine& o) const {  // apply *this first, then o
    return {o.a * a + o.c * b, o.b * a + o.d * b, o.a * c + o.c * d, o.b * c + o.d * d, o.a * e + o.c * f + o.e,
            o.b * e + o.d * f + o.f};
  }
};

struct Paint {
  bool none = false;
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
};

struct Style {
  Paint fill;
  double opacity = 1.0;
  bool evenodd = false;
  Affine ctm;
};

struct Tag {
  std::string name;
  std::map<std::string, std::string> attrs;
  bool closing = false;
  bool self_closing = false;
};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  std::optional<Tag> next() {
    while (true) {
      const auto lt = s_.find('<', pos_);
      if (lt == std::string_view::npos) return std::nullopt;
      pos_ = lt;
      if (s_.compare(pos_, 4, "<!--") == 0) {
        const auto end = s_.find("-->", pos_);
        if (end == std::string_view::npos) bad("unterminated comment");
        pos_ = end + 3;
        continue;
      }
      if (s_.compare(pos_, 2, "<?") == 0 || s_.compare(pos_, 2, "<!") == 0) {
        const auto end = s_.find('>', pos_);
        if (end == std::string_view::npos) bad("unterminated declaration");
        pos_ = end + 1;
        continue;
      }
      return parse_tag();
    }
  }

 private:
  Tag parse_tag() {
    Tag t;
    ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '/') {
      t.closing = true;
      ++pos_;
    }
    t.name = ident();
    if (t.name.empty()) bad("malformed tag");
    while (true) {
      skip_ws();
      if (pos_ >= s_.size()) bad("unterminated tag");
      if (s_[pos_] == '>') {
        ++pos_;
        return t;
      }
      if (s_.compare(pos_, 2, "/>") == 0) {
        pos_ += 2;
        t.self_closing = true;
        return t;
      }
      std::string key = ident();
      if (key.empty()) bad("malformed attribute in <" + t.name + ">");
      skip_ws();
      if (pos_ >= s_.size() || s_[pos_] != '=') bad("attribute without value");
      ++pos_;
      skip_ws();
      if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) bad("unquoted attribute");
      const char q = s_[pos_++];
      const auto end = s_.find(q, pos_);
      if (end == std::string_view::npos) bad("unterminated attribute");
      t.attrs[key] = std::string(s_.substr(pos_, end - pos_));
      pos_ = end + 1;
    }
  }

  std::string ident() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-' ||
                                s_[pos_] == '_' || s_[pos_] == ':' || s_[pos_] == '.'))
      ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

/// Number list scanner accepting SVG's comma/space separators and packed
/// forms such as "1-2" or ".5.5".
class Numbers {
 public:
  explicit Numbers(std::string_view s) : s_(s) {}
  bool at_number() {
    skip_sep();
    if (pos_ >= s_.size()) return false;
    const char c = s_[pos_];
    return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.';
  }
  double number() {
    if (!at_number()) bad("expected number");
    std::size_t end = pos_;
    if (s_[end] == '-' || s_[end] == '+') ++end;
    bool dot = false, digits = false;
    while (end < s_.size()) {
      const char c = s_[end];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digits = true;
      } else if (c == '.' && !dot) {
        dot = true;
      } else {
        break;
      }
      ++end;
    }
    if (!digits) bad("malformed number");
    if (end < s_.size() && (s_[end] == 'e' || s_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < s_.size() && (s_[e] == '-' || s_[e] == '+')) ++e;
      if (e < s_.size() && std::isdigit(static_cast<unsigned char>(s_[e]))) {
        end = e;
        while (end < s_.size() && std::isdigit(static_cast<unsigned char>(s_[end]))) ++end;
      }
    }
    std::string tok(s_.substr(pos_, end - pos_));
    if (tok[0] == '+') tok.erase(0, 1);
    double v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{}) bad("malformed number");
    pos_ = end;
    return v;
  }
  std::optional<char> command() {
    skip_sep();
    if (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) return s_[pos_++];
    return std::nullopt;
  }
  bool done() {
    skip_sep();
    return pos_ >= s_.size();
  }

 private:
  void skip_sep() {
    while (pos_ < s_.size() && (std::isspace(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == ',')) ++pos_;
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

double length(const std::string& s) {
  Numbers n(s);
  return n.number();  // unit suffixes such as "px" are ignored
}

int hexval(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  bad("bad hex colour");
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

Paint parse_paint(std::string_view raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  Paint p;
  if (s == "none" || s == "transparent") {
    p.none = true;
    return p;
  }
  if (s.size() == 4 && s[0] == '#') {
    for (int i = 0; i < 3; ++i) p.rgb[i] = static_cast<std::uint8_t>(hexval(s[1 + i]) * 17);
    return p;
  }
  if (s.size() == 7 && s[0] == '#') {
    for (int i = 0; i < 3; ++i) p.rgb[i] = static_cast<std::uint8_t>(hexval(s[1 + 2 * i]) * 16 + hexval(s[2 + 2 * i]));
    return p;
  }
  if (s.rfind("rgb(", 0) == 0 && s.back() == ')') {
    Numbers n(std::string_view(s).substr(4, s.size() - 5));
    for (int i = 0; i < 3; ++i) p.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(n.number()), 0L, 255L));
    return p;
  }
  static const std::map<std::string, std::array<std::uint8_t, 3>> named = {
      {"black", {0, 0, 0}},       {"white", {255, 255, 255}}, {"red", {255, 0, 0}},
      {"green", {0, 128, 0}},     {"lime", {0, 255, 0}},      {"blue", {0, 0, 255}},
      {"yellow", {255, 255, 0}},  {"cyan", {0, 255, 255}},    {"magenta", {255, 0, 255}},
      {"gray", {128, 128, 128}},  {"grey", {128, 128, 128}},  {"orange", {255, 165, 0}},
      {"purple", {128, 0, 128}},  {"brown", {165, 42, 42}},   {"pink", {255, 192, 203}},
      {"navy", {0, 0, 128}},      {"silver", {192, 192, 192}}, {"gold", {255, 215, 0}},
  };
  const auto it = named.find(s);
  if (it == named.end()) bad("unsupported paint '" + s + "'");
  p.rgb = it->second;
  return p;
}

Affine parse_transform(const std::string& s) {
  Affine m;
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size() && (std::isspace(static_cast<unsigned char>(s[pos])) || s[pos] == ',')) ++pos;
    if (pos >= s.size()) break;
    const auto open = s.find('(', pos);
    const auto close = s.find(')', pos);
    if (open == std::string::npos || close == std::string::npos || close < open) bad("malformed transform");
    const std::string fn = trim(std::string_view(s).substr(pos, open - pos));
    Numbers n(std::string_view(s).substr(open + 1, close - open - 1));
    std::vector<double> v;
    while (n.at_number()) v.push_back(n.number());
    Affine t;
    if (fn == "translate" && !v.empty()) {
      t.e = v[0];
      t.f = v.size() > 1 ? v[1] : 0.0;
    } else if (fn == "scale" && !v.empty()) {
      t.a = v[0];
      t.d = v.size() > 1 ? v[1] : v[0];
    } else if (fn == "matrix" && v.size() == 6) {
      t = {v[0], v[1], v[2], v[3], v[4], v[5]};
    } else {
      bad("unsupported transform '" + fn + "'");
    }
    m = t.then(m);  // later entries apply first
    pos = close + 1;
  }
  return m;
}

void apply_presentation(Style& st, const Tag& t) {
  auto handle = [&](const std::string& key, const std::string& value) {
    if (key == "fill") st.fill = parse_paint(value);
    else if (key == "opacity" || key == "fill-opacity") st.opacity *= std::clamp(length(value), 0.0, 1.0);
    else if (key == "fill-rule") st.evenodd = trim(value) == "evenodd";
  };
  for (const char* key : {"fill", "opacity", "fill-opacity", "fill-rule"})
    if (auto it = t.attrs.find(key); it != t.attrs.end()) handle(key, it->second);
  if (auto it = t.attrs.find("style"); it != t.attrs.end()) {
    std::string_view rest = it->second;
    while (!rest.empty()) {
      const auto semi = rest.find(';');
      const std::string_view decl = rest.substr(0, semi);
      if (const auto colon = decl.find(':'); colon != std::string_view::npos)
        handle(trim(decl.substr(0, colon)), trim(decl.substr(colon + 1)));
      if (semi == std::string_view::npos) break;
      rest.remove_prefix(semi + 1);
    }
  }
}

using Contour = std::vector<Point>;

double attr_num(const Tag& t, const char* key, double fallback = 0.0) {
  const auto it = t.attrs.find(key);
  return it == t.attrs.end() ? fallback : length(it->second);
}

Contour ellipse_contour(double cx, double cy, double rx, double ry) {
  constexpr int kSegments = 96;
  Contour c;
  c.reserve(kSegments);
  for (int i = 0; i < kSegments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / kSegments;
    c.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return c;
}

std::vector<Contour> parse_path(const std::string& d) {
  std::vector<Contour> out;
  Numbers n(d);
  Contour cur;
  Point pen{0, 0}, start{0, 0};
  char cmd = 0;
  auto flush = [&] {
    if (cur.size() >= 3) out.push_back(cur);
    cur.clear();
  };
  auto bezier = [&](std::initializer_list<Point> ctrl) {
    std::vector<Point> p{pen};
    p.insert(p.end(), ctrl);
    constexpr int kSteps = 16;
    for (int s = 1; s <= kSteps; ++s) {
      std::vector<Point> q = p;
      const double t = static_cast<double>(s) / kSteps;
      for (std::size_t lvl = q.size() - 1; lvl > 0; --lvl)
        for (std::size_t i = 0; i < lvl; ++i) q[i] = {q[i].x + t * (q[i + 1].x - q[i].x), q[i].y + t * (q[i + 1].y - q[i].y)};
      cur.push_back(q[0]);
    }
    pen = p.back();
  };
  while (!n.done()) {
    if (auto c = n.command()) {
      cmd = *c;
    } else if (cmd == 0) {
      bad("path data must start with a command");
    }
    const bool rel = std::islower(static_cast<unsigned char>(cmd)) != 0;
    const Point base = rel ? pen : Point{0, 0};
    switch (std::toupper(static_cast<unsigned char>(cmd))) {
      case 'M': {
        flush();
        const double x = n.number(), y = n.number();
        pen = {base.x + x, base.y + y};
        start = pen;
        cur.push_back(pen);
        cmd = rel ? 'l' : 'L';  // implicit lineto for further pairs
        break;
      }
      case 'L': {
        const double x = n.number(), y = n.number();
        pen = {base.x + x, base.y + y};
        cur.push_back(pen);
        break;
      }
      case 'H': pen.x = (rel ? pen.x : 0.0) + n.number(); cur.push_back(pen); break;
      case 'V': pen.y = (rel ? pen.y : 0.0) + n.number(); cur.push_back(pen); break;
      case 'C': {
        Point c[3];
        for (auto& p : c) {
          const double x = n.number(), y = n.number();
          p = {base.x + x, base.y + y};
        }
        bezier({c[0], c[1], c[2]});
        break;
      }
      case 'Q': {
        Point c[2];
        for (auto& p : c) {
          const double x = n.number(), y = n.number();
          p = {base.x + x, base.y + y};
        }
        bezier({c[0], c[1]});
        break;
      }
      case 'Z':
        flush();
        pen = start;
        cmd = 0;
        break;
      default: bad(std::string("unsupported path command '") + cmd + "'");
    }
  }
  flush();
  return out;
}

class Canvas {
 public:
  Canvas(int w, int h) : img_(w, h) {}

  void fill(const std::vector<Contour>& contours, const Style& st) {
    if (st.fill.none || st.opacity <= 0.0 || contours.empty()) return;
    struct Edge {
      Point a, b;
      int dir;
    };
    std::vector<Edge> edges;
    for (const auto& c : contours) {
      for (std::size_t i = 0; i < c.size(); ++i) {
        const Point a = st.ctm.apply(c[i]);
        const Point b = st.ctm.apply(c[(i + 1) % c.size()]);
        if (a.y == b.y) continue;
        edges.push_back(a.y < b.y ? Edge{a, b, 1} : Edge{b, a, -1});
      }
    }
    const auto alpha = static_cast<std::uint8_t>(std::lround(st.opacity * 255.0));
    std::vector<std::pair<double, int>> xs;
    for (int y = 0; y < img_.height; ++y) {
      const double sy = y + 0.5;
      xs.clear();
      for (const auto& e : edges) {
        if (sy < e.a.y || sy >= e.b.y) continue;
        xs.push_back({e.a.x + (sy - e.a.y) * (e.b.x - e.a.x) / (e.b.y - e.a.y), e.dir});
      }
      if (xs.empty()) continue;
      std::sort(xs.begin(), xs.end());
      int winding = 0;
      for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        winding += st.evenodd ? 1 : xs[i].second;
        const bool inside = st.evenodd ? (winding & 1) != 0 : winding != 0;
        if (!inside) continue;
        // pixel centres x + 0.5 in [xs[i], xs[i+1])
        const int x0 = std::max(0, static_cast<int>(std::ceil(xs[i].first - 0.5)));
        const int x1 = std::min(img_.width, static_cast<int>(std::ceil(xs[i + 1].first - 0.5)));
        for (int x = x0; x < x1; ++x) blend(img_.px(x, y), st.fill.rgb, alpha);
      }
    }
  }

  Image take() { return std::move(img_); }

 private:
  static void blend(std::uint8_t* p, const std::array<std::uint8_t, 3>& rgb, std::uint8_t a) {
    if (a == 255 || p[3] == 0) {
      p[0] = rgb[0];
      p[1] = rgb[1];
      p[2] = rgb[2];
      p[3] = a;
      return;
    }
    // source-over with integer rounding
    const int da = p[3], sa = a;
    const int oa = sa + da * (255 - sa) / 255;
    for (int c = 0; c < 3; ++c) {
      const int v = (rgb[c] * sa * 255 + p[c] * da * (255 - sa)) / std::max(1, oa * 255);
      p[c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
    p[3] = static_cast<std::uint8_t>(oa);
  }

  Image img_;
};

std::vector<Contour> shape_contours(const Tag& t) {
  if (t.name == "rect") {
    const double x = attr_num(t, "x"), y = attr_num(t, "y");
    const double w = attr_num(t, "width"), h = attr_num(t, "height");
    if (w <= 0 || h <= 0) return {};
    return {{{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}}};
  }
  if (t.name == "circle") {
    const double r = attr_num(t, "r");
    if (r <= 0) return {};
    return {ellipse_contour(attr_num(t, "cx"), attr_num(t, "cy"), r, r)};
  }
  if (t.name == "ellipse") {
    const double rx = attr_num(t, "rx"), ry = attr_num(t, "ry");
    if (rx <= 0 || ry <= 0) return {};
    return {ellipse_contour(attr_num(t, "cx"), attr_num(t, "cy"), rx, ry)};
  }
  if (t.name == "polygon" || t.name == "polyline") {
    const auto it = t.attrs.find("points");
    if (it == t.attrs.end()) return {};
    Numbers n(it->second);
    Contour c;
    while (n.at_number()) {
      const double x = n.number(), y = n.number();
      c.push_back({x, y});
    }
    if (c.size() < 3) return {};
    return {c};
  }
  if (t.name == "path") {
    const auto it = t.attrs.find("d");
    return it == t.attrs.end() ? std::vector<Contour>{} : parse_path(it->second);
  }
  return {};
}

}  // namespace

Image rasterize(std::string_view text, int target_width) {
  if (target_width <= 0) throw Error(Errc::InvalidArgument, "SVG target width must be positive");
  Lexer lex(text);
  std::optional<Tag> root;
  while (auto t = lex.next()) {
    if (!t->closing && t->name == "svg") {
      root = std::move(t);
      break;
    }
  }
  if (!root) bad("no <svg> element");

  double vx = 0, vy = 0, vw = 0, vh = 0;
  if (auto it = root->attrs.find("viewBox"); it != root->attrs.end()) {
    Numbers n(it->second);
    vx = n.number();
    vy = n.number();
    vw = n.number();
    vh = n.number();
  }
  double w = root->attrs.count("width") ? length(root->attrs.at("width")) : vw;
  double h = root->attrs.count("height") ? length(root->attrs.at("height")) : vh;
  if (vw <= 0 || vh <= 0) {
    vx = vy = 0;
    vw = w;
    vh = h;
  }
  if (!(w > 0) || !(h > 0)) throw Error(Errc::ZeroDimension, "SVG has no positive width/height or viewBox");
  const int out_w = target_width;
  const int out_h = std::max(1, static_cast<int>(std::lround(target_width * h / w)));

  Style base;
  base.ctm = Affine{out_w / vw, 0, 0, out_h / vh, -vx * out_w / vw, -vy * out_h / vh};
  apply_presentation(base, *root);

  Canvas canvas(out_w, out_h);
  std::vector<Style> stack{base};
  std::vector<std::string> open{"svg"};
  if (root->self_closing) return canvas.take();

  int skip_depth = 0;  // inside defs/clipPath/etc.: nothing is painted
  while (auto t = lex.next()) {
    if (t->closing) {
      if (open.empty() || open.back() != t->name) bad("mismatched </" + t->name + ">");
      open.pop_back();
      stack.pop_back();
      if (skip_depth > 0) --skip_depth;
      if (open.empty()) break;
      continue;
    }
    Style st = stack.back();
    apply_presentation(st, *t);
    if (auto it = t->attrs.find("transform"); it != t->attrs.end()) st.ctm = parse_transform(it->second).then(st.ctm);
    const bool container = t->name == "g" || t->name == "svg";
    const bool hidden = t->name == "defs" || t->name == "clipPath" || t->name == "mask" || t->name == "symbol" ||
                        t->name == "pattern" || t->name == "linearGradient" || t->name == "radialGradient";
    if (skip_depth == 0 && !container && !hidden) canvas.fill(shape_contours(*t), st);
    if (!t->self_closing) {
      open.push_back(t->name);
      stack.push_back(st);
      if (hidden || skip_depth > 0) ++skip_depth;
    }
  }
  return canvas.take();
}

}  // namespace nftk::svg
