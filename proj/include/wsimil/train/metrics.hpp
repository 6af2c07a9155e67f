#pragma once

#include <span>
#include <utility>
#include <vector>

namespace wsimil::train {

/// Rank-based AUROC with midranks for ties:
/// (sum of positive ranks - P(P+1)/2) / (P N). Labels are 0/1.
/// Throws DataError("AUROC undefined ...") unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Mean and standard error (sample standard deviation / sqrt(k)).
std::pair<double, double> mean_and_se(std::span<const double> values);

struct TTest {
  double t = 0.0;  // +-inf when the differences have zero variance
  double dof = 0.0;
  double p = 1.0;
};

/// Paired t-test on per-fold differences a - b with k - 1 degrees of freedom.
TTest paired_t_test(std::span<const double> a, std::span<const double> b, bool two_tailed = true);

/// Welch's unequal-variance t-test.
TTest welch_t_test(std::span<const double> a, std::span<const double> b, bool two_tailed = true);

}  // namespace wsimil::train
