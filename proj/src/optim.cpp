#include "hdp/optim.hpp"

#include <string>

#include "hdp/error.hpp"

namespace hdp {

void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity,
              double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: params/grads/velocity lengths differ (" +
                     std::to_string(params.size()) + ", " + std::to_string(grads.size()) + ", " +
                     std::to_string(velocity.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = momentum * velocity[i] + grads[i];
    velocity[i] = static_cast<float>(v);
    params[i] = static_cast<float>(params[i] - lr * velocity[i]);
  }
}

void Sgd::step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const float>>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("Sgd::step: " + std::to_string(params.size()) + " parameter buffers but " +
                     std::to_string(grads.size()) + " gradient buffers");
  }
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0f);
  }
  if (velocity_.size() != params.size()) throw ShapeError("Sgd::step: parameter layout changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    sgd_step(params[k], grads[k], velocity_[k], lr_, momentum_);
  }
}

}  // namespace hdp
