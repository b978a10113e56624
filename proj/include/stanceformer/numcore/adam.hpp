#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "stanceformer/numcore/tensor.hpp"

namespace stanceformer::num {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers are sized lazily on the first step and then pinned to the
// parameter shapes they were created for.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  explicit AdamState(AdamOptions opts = {}) : options(opts) {}
};

// One bias-corrected Adam update over `params`. Every parameter must carry a
// gradient; call zero_grad() before the backward pass rather than clearing.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      std::ostringstream os;
      os << "adam_step: parameter " << i << " " << to_string(params[i].shape()) << " has no gradient";
      throw UsageError(os.str());
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), T{0});
      state.second_moment.emplace_back(p.size(), T{0});
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw UsageError("adam_step: parameter list changed size between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size()) {
      throw UsageError("adam_step: parameter " + std::to_string(i) + " changed shape between steps");
    }
  }

  ++state.step;
  const auto& o = state.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T b1 = T(o.beta1), b2 = T(o.beta2);
  const T step_size = T(o.lr / bc1);
  const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
  const T eps = T(o.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace stanceformer::num
