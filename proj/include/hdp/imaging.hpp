#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hdp {

// Planar RGB image, values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : h_(h), w_(w), data_(3 * h * w, fill) {}

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * h_ + y) * w_ + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * h_ + y) * w_ + x]; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }
  bool operator==(const Image&) const = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<float> data_;
};

// Single-channel (h, w) map: transmission, dark channel, ...
class GrayMap {
 public:
  GrayMap() = default;
  GrayMap(std::size_t h, std::size_t w, float fill = 0.0f) : h_(h), w_(w), data_(h * w, fill) {}

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  float& at(std::size_t y, std::size_t x) { return data_[y * w_ + x]; }
  float at(std::size_t y, std::size_t x) const { return data_[y * w_ + x]; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }
  bool operator==(const GrayMap&) const = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<float> data_;
};

using TransmissionMap = GrayMap;

// Veiling light per channel (R, G, B).
struct Airlight {
  static constexpr float kFloor = 0.05f;
  std::array<float, 3> rgb{kFloor, kFloor, kFloor};

  // Channels raised to kFloor where needed.
  static Airlight clamped(float r, float g, float b);
  bool operator==(const Airlight&) const = default;
};

struct SceneLabel {
  int class_id = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;
  bool operator==(const SceneLabel&) const = default;
};

struct Scene {
  Image image;
  std::vector<SceneLabel> labels;
};

inline constexpr int kMaxShapeClasses = 5;

// I = J * t + A * (1 - t), clamped to [0, 1].
Image degrade(const Image& clean, const TransmissionMap& t, const Airlight& a);

// Windowed minimum with replicated borders; window must be odd.
GrayMap window_min(const GrayMap& m, std::size_t window);

// min over {G, B}, then window minimum.
GrayMap underwater_dark_channel(const Image& img, std::size_t window);

// Image colour at the brightest dark-channel pixel (first in row-major order
// on ties), floored at Airlight::kFloor.
Airlight estimate_airlight(const Image& img, std::size_t window);

// t = 1 - omega * window_min(min_{G,B} I_c / A_c), clamped to [0, 1].
TransmissionMap estimate_transmission(const Image& img, const Airlight& a, std::size_t window,
                                      double omega);

struct SceneOptions {
  int classes = 4;
  // Fraction of each shape's pixels whose blue channel is pushed near zero.
  double dark_fraction = 0.5;
  // Per-pixel probability of a dark speckle in the background texture.
  double speckle = 0.08;
};

// Deterministic clean scene: textured background plus 1-4 shapes placed in
// distinct cells of a 2x2 grid. Requires h, w >= 32.
Scene synth_scene(std::uint64_t seed, std::size_t h, std::size_t w, const SceneOptions& opts = {});

// Smooth random field on a (grid + 1)^2 lattice, bilinearly upsampled and
// mapped linearly into [t_low, t_high].
TransmissionMap synth_transmission(std::uint64_t seed, std::size_t h, std::size_t w, double t_low,
                                   double t_high, std::size_t grid = 3);

// Zeroes the blue channel on a lattice of spacing (window + 1) / 2 so every
// window x window neighbourhood (borders replicated) contains a zero in
// min(G, B).
void apply_dark_lattice(Image& img, std::size_t window);

// Binary PPM (P6, maxval 255). Reading maps bytes by /255; writing rounds to
// nearest after x255.
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

// Labels as UTF-8 lines "class_id x y w h".
std::string format_labels(const std::vector<SceneLabel>& labels);
std::vector<SceneLabel> parse_labels(const std::string& text);
void write_labels(const std::filesystem::path& path, const std::vector<SceneLabel>& labels);
std::vector<SceneLabel> read_labels(const std::filesystem::path& path);

}  // namespace hdp
