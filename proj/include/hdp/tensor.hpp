#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hdp {

// Extents of a 4-D (batch, channel, height, width) tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense row-major float tensor, w fastest. Storage is always numel() long.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  // Pointer to the (n, c) plane.
  float* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const float* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  // Copy of samples [first, first + count) along the batch axis.
  Tensor slice(std::size_t first, std::size_t count) const;
  // Overwrites sample `n` with the single-sample tensor `sample`.
  void set_sample(std::size_t n, const Tensor& sample);

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Stacks single-sample tensors (n == 1 each, equal c/h/w) along the batch axis.
Tensor stack(std::span<const Tensor> samples);

// FNV-1a over the raw bytes of a float buffer; used as a cheap bitwise fingerprint.
std::uint64_t fnv1a(std::span<const float> values, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace hdp
