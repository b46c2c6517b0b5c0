#pragma once

#include "comind/autodiff/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace comind::ad {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are allocated lazily on the first step
/// to match the parameter shapes and must keep matching afterwards.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamOptions options) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  std::uint64_t step_count() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  /// Applies one update in place. params[i] and grads[i] must have equal shapes.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
  AdamOptions options_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads) {
  state.step(params, grads);
}

}  // namespace comind::ad
