#include "wsimil/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace wsimil::nn {

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs, double step) {
  std::vector<Tensor> leaves;
  for (const auto& t : inputs) leaves.push_back(Tensor::from(t.rows(), t.cols(), t.data(), true));
  f(leaves).backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves)
    analytic.push_back(l.grad().empty() ? std::vector<double>(l.size(), 0.0) : l.grad());

  GradCheckReport report;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    for (std::size_t i = 0; i < leaves[k].size(); ++i) {
      auto eval = [&](double offset) {
        std::vector<Tensor> probe;
        for (std::size_t j = 0; j < leaves.size(); ++j) {
          auto data = leaves[j].data();
          if (j == k) data[i] += offset;
          probe.push_back(Tensor::from(leaves[j].rows(), leaves[j].cols(), std::move(data), false));
        }
        return f(probe).item();
      };
      const double numeric =
          (eval(-2 * step) - 8 * eval(-step) + 8 * eval(step) - eval(2 * step)) / (12 * step);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (err > report.max_rel_error || (k == 0 && i == 0)) {
        report = {err, k, i, a, numeric};
      }
    }
  }
  return report;
}

}  // namespace wsimil::nn
