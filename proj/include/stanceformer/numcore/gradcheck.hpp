#pragma once

// Central finite-difference check of reverse-mode gradients, in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <vector>

#include "stanceformer/numcore/tensor.hpp"

namespace stanceformer::num {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor: below this magnitude the error is measured absolutely,
  // since finite differences cannot resolve relative error near zero.
  double magnitude_floor = 1e-6;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  bool passed = false;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t elements_checked = 0;
};

// `f` must rebuild its graph from the current contents of `inputs` on every
// call and return a single-element tensor. Inputs are perturbed in place and
// restored bit-exactly afterwards.
inline GradcheckReport gradcheck(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> inputs,
                                 const GradcheckOptions& opts = {}) {
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw UsageError("gradcheck: every input must require grad");
    x.clear_grad();
  }
  Tensor<double> y = f();
  if (y.size() != 1) throw UsageError("gradcheck: function must be scalar-valued, got " + to_string(y.shape()));
  y.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(x.size(), 0.0);
    }
  }

  auto eval = [&](const char* side, std::size_t input, std::size_t index) {
    const double v = f().item();
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "gradcheck: f(x" << side << "h) is non-finite at input " << input << ", element " << index;
      throw NumericError(os.str());
    }
    return v;
  };

  GradcheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + opts.step;
      const double up = eval("+", k, i);
      data[i] = saved - opts.step;
      const double down = eval("-", k, i);
      data[i] = saved;

      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.magnitude_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error || report.elements_checked == 0) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        report.worst_input = k;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
      ++report.elements_checked;
    }
  }
  for (auto& x : inputs) x.clear_grad();
  report.passed = report.max_rel_error <= opts.tolerance;
  return report;
}

inline GradcheckReport gradcheck(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                                 const GradcheckOptions& opts = {}) {
  std::vector<Tensor<double>> inputs{x};
  return gradcheck([&] { return f(inputs[0]); }, std::span<Tensor<double>>(inputs), opts);
}

}  // namespace stanceformer::num
