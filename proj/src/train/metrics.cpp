#include "wsimil/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "wsimil/common/error.hpp"

namespace wsimil::train {

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  double P = 0.0, N = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        positive_rank_sum += midrank;
        P += 1;
      } else {
        N += 1;
      }
    }
    i = j;
  }
  if (P == 0 || N == 0) throw DataError("AUROC undefined: only one class present");
  return (positive_rank_sum - P * (P + 1) / 2.0) / (P * N);
}

std::pair<double, double> mean_and_se(std::span<const double> values) {
  if (values.empty()) throw DataError("mean_and_se: no values");
  const double k = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (k - 1)) / std::sqrt(k)};
}

namespace {

TTest finish(double mean, double se, double dof, bool two_tailed) {
  TTest r;
  r.dof = dof;
  if (!(se > 0.0)) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / se;
  const boost::math::students_t dist(dof);
  const double tail = boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.p = two_tailed ? std::min(1.0, 2.0 * tail) : (r.t > 0 ? tail : 1.0 - tail);
  return r;
}

}  // namespace

TTest paired_t_test(std::span<const double> a, std::span<const double> b, bool two_tailed) {
  if (a.size() != b.size()) throw DataError("paired t-test needs equally many folds");
  if (a.size() < 2) throw DataError("paired t-test needs at least 2 folds");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const auto [mean, se] = mean_and_se(d);
  return finish(mean, se, static_cast<double>(d.size() - 1), two_tailed);
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b, bool two_tailed) {
  if (a.size() < 2 || b.size() < 2) throw DataError("Welch t-test needs at least 2 values per group");
  const auto [ma, sea] = mean_and_se(a);
  const auto [mb, seb] = mean_and_se(b);
  const double va = sea * sea, vb = seb * seb;  // squared standard errors
  const double se = std::sqrt(va + vb);
  const double dof = (va + vb) * (va + vb) /
                     (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  return finish(ma - mb, se, std::isfinite(dof) ? dof : static_cast<double>(a.size() + b.size() - 2), two_tailed);
}

}  // namespace wsimil::train
