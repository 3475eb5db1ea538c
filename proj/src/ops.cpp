#include "hdp/ops.hpp"

#include <algorithm>
#include <cmath>

#include "hdp/error.hpp"

namespace hdp {

namespace {

// Valid output column range [lo, hi) for kernel column `kx`: positions where
// ox * stride + kx - pad lands inside [0, in_w).
void valid_range(std::size_t out_w, std::size_t in_w, std::size_t stride, std::size_t kx,
                 std::size_t pad, std::size_t& lo, std::size_t& hi) {
  lo = 0;
  while (lo < out_w && lo * stride + kx < pad) ++lo;
  hi = out_w;
  while (hi > lo && (hi - 1) * stride + kx >= pad + in_w) --hi;
}

// Dot product in double with four interleaved partial sums combined in a
// fixed order.
double dot4(const float* a, const float* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

void check_conv(const Shape& in, const ConvParams& p) {
  if (p.weights.shape().numel() == 0) throw ShapeError("conv2d: empty kernel");
  if (in.c != p.c_in()) {
    throw ShapeError("conv2d: input " + in.str() + " has " + std::to_string(in.c) +
                     " channels, kernel " + p.weights.shape().str() + " expects " +
                     std::to_string(p.c_in()));
  }
  if (p.bias.size() != p.c_out()) {
    throw ShapeError("conv2d: bias length " + std::to_string(p.bias.size()) + " != c_out " +
                     std::to_string(p.c_out()));
  }
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (in.h + 2 * p.padding < p.kh() || in.w + 2 * p.padding < p.kw()) {
    throw ShapeError("conv2d: kernel " + p.weights.shape().str() + " larger than padded input " +
                     in.str());
  }
}

// Stride-1 convolutions run on zero-padded planes of width W' = w + 2 * pad.
// Output rows keep the padded width, so every kernel tap is one contiguous
// run of length oh * W'; the extra kw - 1 columns per row are discarded.
struct PaddedLayout {
  std::size_t wp = 0;      // padded width
  std::size_t plane = 0;   // padded plane size plus tail slack
  std::size_t run = 0;     // oh * wp
};

PaddedLayout padded_layout(const Shape& in, const Shape& os, const ConvParams& p) {
  const std::size_t wp = in.w + 2 * p.padding, hp = in.h + 2 * p.padding;
  return {wp, hp * wp + p.kw(), os.h * wp};
}

// All channels of sample n, zero padded.
std::vector<float> pad_sample(const Tensor& x, std::size_t n, std::size_t pad, const PaddedLayout& l) {
  const Shape& s = x.shape();
  std::vector<float> out(s.c * l.plane, 0.0f);
  for (std::size_t c = 0; c < s.c; ++c) {
    const float* src = x.plane(n, c);
    for (std::size_t y = 0; y < s.h; ++y) {
      std::copy(src + y * s.w, src + (y + 1) * s.w, out.begin() + static_cast<std::ptrdiff_t>(c * l.plane + (y + pad) * l.wp + pad));
    }
  }
  return out;
}

// Output-shaped gradient of sample n in padded-width rows, zeros in the extra columns.
std::vector<float> widen_sample(const Tensor& g, std::size_t n, const PaddedLayout& l) {
  const Shape& s = g.shape();
  std::vector<float> out(s.c * l.run, 0.0f);
  for (std::size_t c = 0; c < s.c; ++c) {
    const float* src = g.plane(n, c);
    for (std::size_t y = 0; y < s.h; ++y) {
      std::copy(src + y * s.w, src + (y + 1) * s.w, out.begin() + static_cast<std::ptrdiff_t>(c * l.run + y * l.wp));
    }
  }
  return out;
}

Tensor conv2d_unit_stride(const Tensor& input, const ConvParams& p, const Shape& os) {
  const Shape& in = input.shape();
  const PaddedLayout l = padded_layout(in, os, p);
  const std::size_t kh = p.kh(), kw = p.kw();
  Tensor out(os);
  std::vector<double> acc(l.run);
  for (std::size_t n = 0; n < os.n; ++n) {
    const std::vector<float> pin = pad_sample(input, n, p.padding, l);
    for (std::size_t co = 0; co < os.c; ++co) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(p.bias[co]));
      for (std::size_t ci = 0; ci < in.c; ++ci) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = p.weights.at(co, ci, ky, kx);
            const float* src = pin.data() + ci * l.plane + ky * l.wp + kx;
            for (std::size_t j = 0; j < l.run; ++j) acc[j] += wv * static_cast<double>(src[j]);
          }
        }
      }
      float* dst = out.plane(n, co);
      for (std::size_t y = 0; y < os.h; ++y) {
        for (std::size_t x = 0; x < os.w; ++x) dst[y * os.w + x] = static_cast<float>(acc[y * l.wp + x]);
      }
    }
  }
  return out;
}

void conv2d_grad_unit_stride(const Tensor& input, const ConvParams& p, const Tensor& grad_out,
                             bool need_input, ConvGrads& g) {
  const Shape& in = input.shape();
  const Shape& os = grad_out.shape();
  const PaddedLayout l = padded_layout(in, os, p);
  const std::size_t kh = p.kh(), kw = p.kw();
  std::vector<double> wsum(p.weights.numel(), 0.0);
  if (need_input) g.input = Tensor(in);
  std::vector<double> acc(need_input ? l.plane : 0);
  for (std::size_t n = 0; n < os.n; ++n) {
    const std::vector<float> pin = pad_sample(input, n, p.padding, l);
    const std::vector<float> gw = widen_sample(grad_out, n, l);
    for (std::size_t co = 0; co < os.c; ++co) {
      const float* go = gw.data() + co * l.run;
      for (std::size_t ci = 0; ci < in.c; ++ci) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            wsum[((co * in.c + ci) * kh + ky) * kw + kx] +=
                dot4(go, pin.data() + ci * l.plane + ky * l.wp + kx, l.run);
          }
        }
      }
    }
    if (!need_input) continue;
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t co = 0; co < os.c; ++co) {
        const float* go = gw.data() + co * l.run;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = p.weights.at(co, ci, ky, kx);
            double* a = acc.data() + ky * l.wp + kx;
            for (std::size_t j = 0; j < l.run; ++j) a[j] += wv * static_cast<double>(go[j]);
          }
        }
      }
      float* dst = g.input.plane(n, ci);
      for (std::size_t y = 0; y < in.h; ++y) {
        for (std::size_t x = 0; x < in.w; ++x) {
          dst[y * in.w + x] = static_cast<float>(acc[(y + p.padding) * l.wp + x + p.padding]);
        }
      }
    }
  }
  for (std::size_t i = 0; i < wsum.size(); ++i) g.weights[i] = static_cast<float>(wsum[i]);
}

}  // namespace

std::uint64_t ConvParams::hash(std::uint64_t seed) const {
  return fnv1a(bias, fnv1a(weights.data(), seed));
}

ConvParams make_conv(std::size_t c_in, std::size_t c_out, std::size_t k, std::mt19937_64& rng,
                     double gain) {
  ConvParams p = zero_conv(c_in, c_out, k);
  std::normal_distribution<double> normal(0.0, std::sqrt(gain / static_cast<double>(c_in * k * k)));
  for (float& v : p.weights.data()) v = static_cast<float>(normal(rng));
  return p;
}

ConvParams zero_conv(std::size_t c_in, std::size_t c_out, std::size_t k) {
  ConvParams p;
  p.weights = Tensor(Shape{c_out, c_in, k, k});
  p.bias.assign(c_out, 0.0f);
  p.stride = 1;
  p.padding = (k - 1) / 2;
  return p;
}

Shape conv2d_output_shape(const Shape& in, const ConvParams& p) {
  check_conv(in, p);
  return Shape{in.n, p.c_out(), (in.h + 2 * p.padding - p.kh()) / p.stride + 1,
               (in.w + 2 * p.padding - p.kw()) / p.stride + 1};
}

Tensor conv2d(const Tensor& input, const ConvParams& p) {
  const Shape& in = input.shape();
  const Shape os = conv2d_output_shape(in, p);
  if (p.stride == 1) return conv2d_unit_stride(input, p, os);
  Tensor out(os);
  const std::size_t kh = p.kh(), kw = p.kw(), s = p.stride, pad = p.padding;
  std::vector<double> acc(os.plane());
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t co = 0; co < os.c; ++co) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(p.bias[co]));
      for (std::size_t ci = 0; ci < in.c; ++ci) {
        const float* src = input.plane(n, ci);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = p.weights.at(co, ci, ky, kx);
            std::size_t lo = 0, hi = 0;
            valid_range(os.w, in.w, s, kx, pad, lo, hi);
            for (std::size_t oy = 0; oy < os.h; ++oy) {
              const std::size_t iy_pad = oy * s + ky;
              if (iy_pad < pad || iy_pad >= pad + in.h) continue;
              const float* row = src + (iy_pad - pad) * in.w;
              double* arow = acc.data() + oy * os.w;
              for (std::size_t ox = lo; ox < hi; ++ox) arow[ox] += wv * row[ox * s + kx - pad];
            }
          }
        }
      }
      float* dst = out.plane(n, co);
      for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
    }
  }
  return out;
}

ConvGrads conv2d_grad(const Tensor& input, const ConvParams& p, const Tensor& grad_out,
                      bool need_input) {
  const Shape& in = input.shape();
  const Shape os = conv2d_output_shape(in, p);
  if (grad_out.shape() != os) {
    throw ShapeError("conv2d_grad: grad_out " + grad_out.shape().str() + " != output shape " +
                     os.str());
  }
  const std::size_t kh = p.kh(), kw = p.kw(), s = p.stride, pad = p.padding;
  ConvGrads g;
  g.weights = Tensor(p.weights.shape());
  g.bias.assign(p.c_out(), 0.0f);

  for (std::size_t co = 0; co < os.c; ++co) {
    double b = 0.0;
    for (std::size_t n = 0; n < os.n; ++n) {
      const float* go = grad_out.plane(n, co);
      for (std::size_t i = 0; i < os.plane(); ++i) b += go[i];
    }
    g.bias[co] = static_cast<float>(b);
  }
  if (p.stride == 1) {
    conv2d_grad_unit_stride(input, p, grad_out, need_input, g);
    return g;
  }

  for (std::size_t co = 0; co < os.c; ++co) {
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          std::size_t lo = 0, hi = 0;
          valid_range(os.w, in.w, s, kx, pad, lo, hi);
          double sum = 0.0;
          for (std::size_t n = 0; n < os.n; ++n) {
            const float* go = grad_out.plane(n, co);
            const float* src = input.plane(n, ci);
            for (std::size_t oy = 0; oy < os.h; ++oy) {
              const std::size_t iy_pad = oy * s + ky;
              if (iy_pad < pad || iy_pad >= pad + in.h) continue;
              const float* row = src + (iy_pad - pad) * in.w;
              const float* grow = go + oy * os.w;
              for (std::size_t ox = lo; ox < hi; ++ox) {
                sum += static_cast<double>(grow[ox]) * row[ox * s + kx - pad];
              }
            }
          }
          g.weights.at(co, ci, ky, kx) = static_cast<float>(sum);
        }
      }
    }
  }

  if (need_input) {
    g.input = Tensor(in);
    std::vector<double> acc(in.plane());
    for (std::size_t n = 0; n < in.n; ++n) {
      for (std::size_t ci = 0; ci < in.c; ++ci) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t co = 0; co < os.c; ++co) {
          const float* go = grad_out.plane(n, co);
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double wv = p.weights.at(co, ci, ky, kx);
              std::size_t lo = 0, hi = 0;
              valid_range(os.w, in.w, s, kx, pad, lo, hi);
              for (std::size_t oy = 0; oy < os.h; ++oy) {
                const std::size_t iy_pad = oy * s + ky;
                if (iy_pad < pad || iy_pad >= pad + in.h) continue;
                double* arow = acc.data() + (iy_pad - pad) * in.w;
                const float* grow = go + oy * os.w;
                for (std::size_t ox = lo; ox < hi; ++ox) arow[ox * s + kx - pad] += wv * grow[ox];
              }
            }
          }
        }
        float* dst = g.input.plane(n, ci);
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
      }
    }
  }
  return g;
}

PoolResult maxpool2(const Tensor& input) {
  const Shape& in = input.shape();
  if (in.h % 2 != 0 || in.w % 2 != 0 || in.h == 0 || in.w == 0) {
    throw ShapeError("maxpool2: spatial extent must be even and non-zero, got " + in.str());
  }
  const Shape os{in.n, in.c, in.h / 2, in.w / 2};
  PoolResult r{Tensor(os), std::vector<std::uint32_t>(os.numel())};
  std::size_t o = 0;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
          std::size_t best = input.index(n, c, 2 * oy, 2 * ox);
          const std::size_t cand[3] = {best + 1, input.index(n, c, 2 * oy + 1, 2 * ox),
                                       input.index(n, c, 2 * oy + 1, 2 * ox) + 1};
          for (std::size_t k : cand) {
            if (input[k] > input[best]) best = k;
          }
          r.output[o] = input[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return r;
}

Tensor maxpool2_grad(const std::vector<std::uint32_t>& argmax, const Tensor& grad_out,
                     const Shape& input_shape) {
  const Shape expect{input_shape.n, input_shape.c, input_shape.h / 2, input_shape.w / 2};
  if (input_shape.h % 2 != 0 || input_shape.w % 2 != 0 || grad_out.shape() != expect ||
      argmax.size() != grad_out.numel()) {
    throw ShapeError("maxpool2_grad: grad_out " + grad_out.shape().str() +
                     " does not match pooled input " + input_shape.str());
  }
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.numel()) throw ShapeError("maxpool2_grad: argmax index out of range");
    g[argmax[i]] += grad_out[i];
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor relu_grad(const Tensor& input, const Tensor& grad_out) {
  if (input.shape() != grad_out.shape()) {
    throw ShapeError("relu_grad: input " + input.shape().str() + " vs grad " +
                     grad_out.shape().str());
  }
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) g[i] = input[i] > 0.0f ? grad_out[i] : 0.0f;
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& s = input.shape();
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = input.plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) sum += src[i];
      out.at(n, c, 0, 0) = static_cast<float>(sum / static_cast<double>(s.plane()));
    }
  }
  return out;
}

Tensor global_avg_pool_grad(const Tensor& grad_out, const Shape& input_shape) {
  if (grad_out.shape() != Shape{input_shape.n, input_shape.c, 1, 1}) {
    throw ShapeError("global_avg_pool_grad: grad " + grad_out.shape().str() + " vs input " +
                     input_shape.str());
  }
  Tensor g(input_shape);
  const double inv = 1.0 / static_cast<double>(input_shape.plane());
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      const float v = static_cast<float>(grad_out.at(n, c, 0, 0) * inv);
      float* dst = g.plane(n, c);
      std::fill(dst, dst + input_shape.plane(), v);
    }
  }
  return g;
}

}  // namespace hdp
