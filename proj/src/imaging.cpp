#include "hdp/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "hdp/error.hpp"
#include "hdp/io_util.hpp"

namespace hdp {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void check_window(std::size_t window) {
  if (window == 0 || window % 2 == 0) {
    throw ParamError("window must be odd and >= 1, got " + std::to_string(window));
  }
}

// Bilinear upsampling of a (g+1) x (g+1) lattice of values to h x w.
std::vector<double> lattice_field(std::mt19937_64& rng, std::size_t grid, std::size_t h,
                                  std::size_t w) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::size_t g = std::max<std::size_t>(grid, 1);
  std::vector<double> lat((g + 1) * (g + 1));
  for (double& v : lat) v = uni(rng);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = h > 1 ? static_cast<double>(y) * g / static_cast<double>(h - 1) : 0.0;
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), g - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = w > 1 ? static_cast<double>(x) * g / static_cast<double>(w - 1) : 0.0;
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), g - 1);
      const double tx = fx - static_cast<double>(x0);
      const double a = lat[y0 * (g + 1) + x0], b = lat[y0 * (g + 1) + x0 + 1];
      const double c = lat[(y0 + 1) * (g + 1) + x0], d = lat[(y0 + 1) * (g + 1) + x0 + 1];
      out[y * w + x] = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  }
  return out;
}

bool inside_shape(int cls, double dx, double dy, double r) {
  switch (cls) {
    case 0:  // disk
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case 2:  // upward triangle
      return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0;
    case 3:  // plus
      return (std::abs(dx) <= r / 3.0 && std::abs(dy) <= r) ||
             (std::abs(dy) <= r / 3.0 && std::abs(dx) <= r);
    default: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
  }
}

}  // namespace

Airlight Airlight::clamped(float r, float g, float b) {
  Airlight a;
  a.rgb = {std::max(r, kFloor), std::max(g, kFloor), std::max(b, kFloor)};
  return a;
}

Image degrade(const Image& clean, const TransmissionMap& t, const Airlight& a) {
  if (clean.height() != t.height() || clean.width() != t.width()) {
    throw ShapeError("degrade: image " + std::to_string(clean.height()) + "x" +
                     std::to_string(clean.width()) + " vs transmission " +
                     std::to_string(t.height()) + "x" + std::to_string(t.width()));
  }
  Image out(clean.height(), clean.width());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < clean.height(); ++y) {
      for (std::size_t x = 0; x < clean.width(); ++x) {
        const double tv = t.at(y, x);
        out.at(c, y, x) = clamp01(static_cast<double>(clean.at(c, y, x)) * tv +
                                  static_cast<double>(a.rgb[c]) * (1.0 - tv));
      }
    }
  }
  return out;
}

GrayMap window_min(const GrayMap& m, std::size_t window) {
  check_window(window);
  const std::size_t h = m.height(), w = m.width();
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  // Square minimum is separable, and border replication commutes with it.
  GrayMap rows(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float v = m.at(y, x);
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto xx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + d, 0,
                                                   static_cast<std::ptrdiff_t>(w) - 1);
        v = std::min(v, m.at(y, static_cast<std::size_t>(xx)));
      }
      rows.at(y, x) = v;
    }
  }
  GrayMap out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float v = rows.at(y, x);
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + d, 0,
                                                   static_cast<std::ptrdiff_t>(h) - 1);
        v = std::min(v, rows.at(static_cast<std::size_t>(yy), x));
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

GrayMap underwater_dark_channel(const Image& img, std::size_t window) {
  check_window(window);
  GrayMap cmin(img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      cmin.at(y, x) = std::min(img.at(1, y, x), img.at(2, y, x));
    }
  }
  return window_min(cmin, window);
}

Airlight estimate_airlight(const Image& img, std::size_t window) {
  if (img.height() == 0 || img.width() == 0) throw ShapeError("estimate_airlight: empty image");
  const GrayMap dark = underwater_dark_channel(img, window);
  std::size_t best = 0;
  for (std::size_t i = 1; i < dark.data().size(); ++i) {
    if (dark.data()[i] > dark.data()[best]) best = i;
  }
  const std::size_t y = best / img.width(), x = best % img.width();
  return Airlight::clamped(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
}

TransmissionMap estimate_transmission(const Image& img, const Airlight& a, std::size_t window,
                                      double omega) {
  if (!(omega > 0.0 && omega <= 1.0)) {
    throw ParamError("omega must lie in (0, 1], got " + fmt_num(omega));
  }
  for (float v : a.rgb) {
    if (!(v >= Airlight::kFloor)) throw ParamError("airlight channel below floor");
  }
  GrayMap ratio(img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double g = static_cast<double>(img.at(1, y, x)) / a.rgb[1];
      const double b = static_cast<double>(img.at(2, y, x)) / a.rgb[2];
      ratio.at(y, x) = static_cast<float>(std::min(g, b));
    }
  }
  const GrayMap dark = window_min(ratio, window);
  TransmissionMap t(img.height(), img.width());
  for (std::size_t i = 0; i < t.data().size(); ++i) {
    t.data()[i] = clamp01(1.0 - omega * static_cast<double>(dark.data()[i]));
  }
  return t;
}

Scene synth_scene(std::uint64_t seed, std::size_t h, std::size_t w, const SceneOptions& opts) {
  if (h < 32 || w < 32) throw ParamError("synth_scene: h and w must be >= 32");
  if (opts.classes < 1 || opts.classes > kMaxShapeClasses) {
    throw ParamError("synth_scene: class count must be in [1, " + std::to_string(kMaxShapeClasses) +
                     "]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);

  Scene scene;
  scene.image = Image(h, w);
  Image& img = scene.image;

  // Background: base colour, shared low-frequency luminance field, pixel noise, dark speckles.
  double base[3];
  for (double& b : base) b = 0.3 + 0.5 * uni(rng);
  const auto field = lattice_field(rng, 6, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double lum = 0.24 * (field[y * w + x] - 0.5);
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(base[c] + lum + noise(rng));
      if (uni(rng) < opts.speckle) {
        const std::size_t ch = uni(rng) < 0.5 ? 1 : 2;
        img.at(ch, y, x) = clamp01(0.03 * uni(rng));
      }
    }
  }

  // Shapes in distinct cells of a 2x2 grid.
  std::vector<std::size_t> cells = {0, 1, 2, 3};
  std::shuffle(cells.begin(), cells.end(), rng);
  const std::size_t count = 1 + static_cast<std::size_t>(uni(rng) * 4.0) % 4;
  const std::size_t cw = w / 2, ch = h / 2;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t cell = cells[k];
    const double x0 = static_cast<double>((cell % 2) * cw), y0 = static_cast<double>((cell / 2) * ch);
    const double cmin = static_cast<double>(std::min(cw, ch));
    const double r = (0.28 + 0.08 * uni(rng)) * cmin;
    const double cx = x0 + r + 1.0 + uni(rng) * std::max(0.0, static_cast<double>(cw) - 2.0 * r - 3.0);
    const double cy = y0 + r + 1.0 + uni(rng) * std::max(0.0, static_cast<double>(ch) - 2.0 * r - 3.0);
    const int cls = static_cast<int>(uni(rng) * opts.classes) % opts.classes;
    // Fixed contrast against the base colour, brighter or darker per shape.
    const double sign = uni(rng) < 0.5 ? -1.0 : 1.0;
    double color[3];
    for (std::size_t c = 0; c < 3; ++c) {
      color[c] = std::clamp(base[c] + sign * (0.3 + 0.1 * uni(rng)), 0.0, 1.0);
    }

    std::size_t bx0 = w, by0 = h, bx1 = 0, by1 = 0;
    const auto ylo = static_cast<std::size_t>(std::max(0.0, std::floor(cy - r)));
    const auto yhi = std::min(h - 1, static_cast<std::size_t>(std::ceil(cy + r)));
    const auto xlo = static_cast<std::size_t>(std::max(0.0, std::floor(cx - r)));
    const auto xhi = std::min(w - 1, static_cast<std::size_t>(std::ceil(cx + r)));
    for (std::size_t y = ylo; y <= yhi; ++y) {
      for (std::size_t x = xlo; x <= xhi; ++x) {
        if (!inside_shape(cls, static_cast<double>(x) - cx, static_cast<double>(y) - cy, r)) continue;
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(color[c] + noise(rng));
        if (uni(rng) < opts.dark_fraction) img.at(2, y, x) = clamp01(0.02 * uni(rng));
        bx0 = std::min(bx0, x);
        by0 = std::min(by0, y);
        bx1 = std::max(bx1, x);
        by1 = std::max(by1, y);
      }
    }
    if (bx1 >= bx0 && by1 >= by0) {
      scene.labels.push_back(SceneLabel{cls, bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1});
    }
  }
  return scene;
}

TransmissionMap synth_transmission(std::uint64_t seed, std::size_t h, std::size_t w, double t_low,
                                   double t_high, std::size_t grid) {
  if (!(t_low >= 0.0 && t_low <= t_high && t_high <= 1.0)) {
    throw ParamError("synth_transmission: need 0 <= t_low <= t_high <= 1");
  }
  std::mt19937_64 rng(seed);
  const auto field = lattice_field(rng, grid, h, w);
  TransmissionMap t(h, w);
  for (std::size_t i = 0; i < field.size(); ++i) {
    t.data()[i] = static_cast<float>(std::clamp(t_low + field[i] * (t_high - t_low), t_low, t_high));
  }
  return t;
}

void apply_dark_lattice(Image& img, std::size_t window) {
  check_window(window);
  const std::size_t step = (window + 1) / 2;
  for (std::size_t y = 0; y < img.height(); y += step) {
    for (std::size_t x = 0; x < img.width(); x += step) img.at(2, y, x) = 0.0f;
  }
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * img.height() * img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(img.at(c, y, x)), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_ws();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      if (++digits > 9) throw FormatError(std::string("PPM ") + what + " too large");
    }
    if (digits == 0) throw FormatError(std::string("PPM header: missing ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError("not a binary PPM (expected P6 magic)");
  }
  pos = 2;
  const std::size_t w = read_uint("width");
  const std::size_t h = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval));
  if (w == 0 || h == 0) throw FormatError("PPM has zero extent");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("PPM header not terminated by whitespace");
  }
  ++pos;
  if (bytes.size() - pos != 3 * w * h) {
    throw FormatError("PPM payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(3 * w * h));
  }
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(bytes[pos++] / 255.0);
      }
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  write_bytes(path, encode_ppm(img));
}

Image read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_labels(const std::vector<SceneLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    out += std::to_string(l.class_id) + " " + std::to_string(l.x) + " " + std::to_string(l.y) + " " +
           std::to_string(l.w) + " " + std::to_string(l.h) + "\n";
  }
  return out;
}

std::vector<SceneLabel> parse_labels(const std::string& text) {
  std::vector<SceneLabel> out;
  for (const auto& line : split_lines(text)) {
    const auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 5) throw FormatError("label line needs 5 fields: '" + line + "'");
    SceneLabel l;
    l.class_id = static_cast<int>(parse_int(f[0], "class_id"));
    const long long x = parse_int(f[1], "x"), y = parse_int(f[2], "y");
    const long long w = parse_int(f[3], "w"), h = parse_int(f[4], "h");
    if (x < 0 || y < 0 || w < 0 || h < 0) throw FormatError("negative label window: '" + line + "'");
    l.x = static_cast<std::size_t>(x);
    l.y = static_cast<std::size_t>(y);
    l.w = static_cast<std::size_t>(w);
    l.h = static_cast<std::size_t>(h);
    out.push_back(l);
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<SceneLabel>& labels) {
  write_text(path, format_labels(labels));
}

std::vector<SceneLabel> read_labels(const std::filesystem::path& path) {
  return parse_labels(read_text(path));
}

}  // namespace hdp
