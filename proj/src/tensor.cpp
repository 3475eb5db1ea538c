#include "hdp/tensor.hpp"

#include <cmath>
#include <cstring>

#include "hdp/error.hpp"

namespace hdp {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

Tensor Tensor::slice(std::size_t first, std::size_t count) const {
  if (first + count > shape_.n) {
    throw ShapeError("slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") out of batch range for " + shape_.str());
  }
  Shape s = shape_;
  s.n = count;
  const std::size_t stride = shape_.c * shape_.plane();
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(first * stride),
                         data_.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return Tensor(s, std::move(out));
}

void Tensor::set_sample(std::size_t n, const Tensor& sample) {
  const Shape& s = sample.shape();
  if (s.n != 1 || s.c != shape_.c || s.h != shape_.h || s.w != shape_.w || n >= shape_.n) {
    throw ShapeError("set_sample: sample " + s.str() + " does not fit slot " + std::to_string(n) +
                     " of " + shape_.str());
  }
  std::memcpy(plane(n, 0), sample.data().data(), sample.numel() * sizeof(float));
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) throw ShapeError("stack: no samples");
  Shape s = samples.front().shape();
  if (s.n != 1) throw ShapeError("stack: samples must have n == 1, got " + s.str());
  s.n = samples.size();
  Tensor out(s);
  for (std::size_t i = 0; i < samples.size(); ++i) out.set_sample(i, samples[i]);
  return out;
}

std::uint64_t fnv1a(std::span<const float> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hdp
