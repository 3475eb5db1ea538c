#pragma once

#include <span>
#include <vector>

namespace hdp {

// SGD with classical momentum: v <- momentum * v + g; theta <- theta - lr * v.
void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity,
              double lr, double momentum);

// Owns one velocity buffer per parameter buffer. The buffer list must keep
// the same layout across steps.
class Sgd {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<std::span<float>>& params,
            const std::vector<std::span<const float>>& grads);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<float>> velocity_;
};

}  // namespace hdp
