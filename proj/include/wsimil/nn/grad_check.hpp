#pragma once

#include <functional>
#include <vector>

#include "wsimil/nn/tensor.hpp"

namespace wsimil::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t input = 0;  // location of the worst element
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of a scalar function with the five-point
/// central difference (f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h for
/// every element of every input. Relative error per element is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs, double step = 1e-3);

}  // namespace wsimil::nn
