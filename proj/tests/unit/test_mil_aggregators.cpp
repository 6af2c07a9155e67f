#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/mil/heads.hpp"
#include "wsimil/nn/grad_check.hpp"

using namespace wsimil;
using namespace wsimil::mil;
using nn::Tensor;

namespace {

using Mat = std::vector<std::vector<double>>;

Tensor random_instances(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n) * d);
  for (double& x : v) x = g(rng);
  return Tensor::from(n, d, std::move(v));
}

/// Sets every parameter to a distinct deterministic value.
void assign_params(MilHead& head, double spread) {
  int k = 0;
  for (auto& p : head.params())
    for (double& v : p.tensor.data()) v = spread * std::sin(0.37 * ++k + 0.11 * k * k);
}

Mat as_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

std::vector<double> affine(const std::vector<double>& x, const Mat& w, const Mat& b) {
  std::vector<double> y(b[0]);
  for (std::size_t j = 0; j < y.size(); ++j)
    for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * w[i][j];
  return y;
}

double gelu(double x) { return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x))); }

std::vector<double> norm(const std::vector<double>& x, const Mat& g, const Mat& b) {
  double mu = 0, var = 0;
  for (double v : x) mu += v / x.size();
  for (double v : x) var += (v - mu) * (v - mu) / x.size();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[0][i] + b[0][i];
  return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> softmax(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> y(x.size());
  double t = 0;
  for (std::size_t i = 0; i < x.size(); ++i) t += y[i] = std::exp(x[i] - m);
  for (double& v : y) v /= t;
  return y;
}

}  // namespace

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_attention(std::vector<double>{0.1, 0.9}), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(normalize_attention(std::vector<double>(4, 0.25)), std::vector<double>(4, 0.5));
  const auto n = normalize_attention(std::vector<double>{0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_NEAR(n[1], 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(n[2], 1.0);
}

TEST(Dsmil, SingleInstanceAndIdenticalInstances) {
  auto head = make_head(testing_support::small_head_config(HeadType::Dsmil, 5), 1);
  std::mt19937_64 rng(1);
  const auto one = head->infer(random_instances(rng, 1, 5));
  EXPECT_EQ(one.raw_attention, std::vector<double>{1.0});
  EXPECT_EQ(one.critical_index, 0);
  std::vector<double> row{0.3, -1.0, 0.2, 0.5, 2.0}, rows;
  for (int i = 0; i < 6; ++i) rows.insert(rows.end(), row.begin(), row.end());
  const auto same = head->infer(Tensor::from(6, 5, rows));
  for (double a : same.raw_attention) EXPECT_NEAR(a, 1.0 / 6, 1e-12);
}

TEST(Dsmil, MatchesScalarOracle) {
  auto head = make_head(testing_support::small_head_config(HeadType::Dsmil, 2), 0);
  assign_params(*head, 0.8);
  const Mat x{{0.5, -1.2}, {1.5, 0.3}, {-0.7, 0.9}};
  std::vector<double> flat;
  for (const auto& r : x) flat.insert(flat.end(), r.begin(), r.end());
  const auto& p = head->params();
  const Mat wc = as_mat(p[0].tensor), bc = as_mat(p[1].tensor), wq = as_mat(p[2].tensor), bq = as_mat(p[3].tensor),
            wv = as_mat(p[4].tensor), bv = as_mat(p[5].tensor), wb = as_mat(p[6].tensor), bb = as_mat(p[7].tensor);
  std::vector<double> c(3);
  Mat q(3), v(3);
  for (int i = 0; i < 3; ++i) {
    c[i] = affine(x[i], wc, bc)[0];
    q[i] = affine(x[i], wq, bq);
    for (double& e : q[i]) e = std::tanh(e);
    v[i] = affine(x[i], wv, bv);
  }
  const int m = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
  std::vector<double> s(3);
  for (int i = 0; i < 3; ++i) s[i] = dot(q[i], q[m]) / std::sqrt(2.0);
  const auto a = softmax(s);
  std::vector<double> b(2, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) b[j] += a[i] * v[i][j];
  const double logit = 0.5 * (c[m] + affine(b, wb, bb)[0]);

  const auto out = head->infer(Tensor::from(3, 2, flat));
  EXPECT_NEAR(out.bag_logit, logit, 1e-12);
  EXPECT_EQ(out.critical_index, m);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(out.raw_attention[i], a[i], 1e-12);
}

TEST(Dsmil, DuplicatingCriticalInstanceKeepsMaxLogit) {
  std::mt19937_64 rng(2);
  auto head = make_head(testing_support::small_head_config(HeadType::Dsmil, 4), 2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_instances(rng, 7, 4);
    const auto out = head->infer(x);
    const double before = *std::max_element(out.instance_logits.begin(), out.instance_logits.end());
    auto data = x.data();
    for (int d = 0; d < 4; ++d) data.push_back(x.at(out.critical_index, d));
    const auto dup = head->infer(Tensor::from(8, 4, data));
    EXPECT_GE(*std::max_element(dup.instance_logits.begin(), dup.instance_logits.end()), before);
  }
}

TEST(Transformer, SingleRegion) {
  auto head = make_head(testing_support::small_head_config(HeadType::Transformer, 4), 1);
  std::mt19937_64 rng(3);
  EXPECT_EQ(head->infer(random_instances(rng, 1, 4)).raw_attention, std::vector<double>{1.0});
}

TEST(Transformer, MatchesScalarOracle) {
  auto cfg = testing_support::small_head_config(HeadType::Transformer, 6);
  auto head = make_head(cfg, 0);
  assign_params(*head, 0.6);
  const Mat x{{0.2, -0.4, 1.1, 0.0, -0.9, 0.5}, {-1.3, 0.8, 0.1, 0.6, 0.3, -0.2}};
  std::vector<double> flat;
  for (const auto& r : x) flat.insert(flat.end(), r.begin(), r.end());
  std::vector<Mat> P;
  for (const auto& p : head->params()) P.push_back(as_mat(p.tensor));

  Mat tokens{P[2][0]};
  for (const auto& r : x) {
    auto h = affine(r, P[0], P[1]);
    for (double& e : h) e = gelu(e);
    tokens.push_back(h);
  }
  Mat normed;
  for (const auto& t : tokens) normed.push_back(norm(t, P[3], P[4]));
  const auto q = affine(normed[0], P[5], P[6]);
  Mat k, v;
  for (const auto& t : normed) {
    k.push_back(affine(t, P[7], P[8]));
    v.push_back(affine(t, P[9], P[10]));
  }
  std::vector<double> concat, raw(2, 0.0);
  for (int h = 0; h < 3; ++h) {
    std::vector<double> s;
    for (const auto& kt : k) s.push_back((q[2 * h] * kt[2 * h] + q[2 * h + 1] * kt[2 * h + 1]) / std::sqrt(2.0));
    const auto a = softmax(s);
    raw[0] += a[1] / 3;
    raw[1] += a[2] / 3;
    for (int j = 0; j < 2; ++j) {
      double o = 0;
      for (std::size_t t = 0; t < a.size(); ++t) o += a[t] * v[t][2 * h + j];
      concat.push_back(o);
    }
  }
  auto cls = affine(concat, P[11], P[12]);
  for (int i = 0; i < 6; ++i) cls[i] += tokens[0][i];
  auto ff = affine(norm(cls, P[13], P[14]), P[15], P[16]);
  for (double& e : ff) e = gelu(e);
  ff = affine(ff, P[17], P[18]);
  for (int i = 0; i < 6; ++i) ff[i] += cls[i];
  const double logit = affine(norm(ff, P[19], P[20]), P[21], P[22])[0];

  const auto out = head->infer(Tensor::from(2, 6, flat));
  EXPECT_NEAR(out.bag_logit, logit, 1e-12);
  const double total = raw[0] + raw[1];
  EXPECT_NEAR(out.raw_attention[0], raw[0] / total, 1e-12);
  EXPECT_NEAR(out.raw_attention[1], raw[1] / total, 1e-12);
}

TEST(Transformer, PermutationEquivariant) {
  std::mt19937_64 rng(4);
  auto head = make_head(testing_support::small_head_config(HeadType::Transformer, 5), 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    const auto x = random_instances(rng, n, 5);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> data;
    for (int i : perm)
      for (int d = 0; d < 5; ++d) data.push_back(x.at(i, d));
    const auto a = head->infer(x), b = head->infer(Tensor::from(n, 5, data));
    EXPECT_NEAR(a.bag_logit, b.bag_logit, 1e-12);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(b.raw_attention[i], a.raw_attention[perm[i]], 1e-12);
  }
}

TEST(Heads, AttentionSumsToOneOnRandomBags) {
  std::mt19937_64 rng(5);
  auto dsmil = make_head(HeadConfig::defaults(HeadType::Dsmil, 8), 1);
  auto cfg = HeadConfig::defaults(HeadType::Transformer, 8);
  cfg.model_dim = 12;
  auto tr = make_head(cfg, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 30)(rng);
    const auto x = random_instances(rng, n, 8);
    for (const auto* h : {dsmil.get(), tr.get()}) {
      const auto out = h->infer(x);
      ASSERT_EQ(out.raw_attention.size(), static_cast<std::size_t>(n));
      ASSERT_NEAR(std::accumulate(out.raw_attention.begin(), out.raw_attention.end(), 0.0), 1.0, 1e-6);
    }
  }
}

TEST(Heads, FullLossGradCheck) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const auto x = random_instances(rng, 5, 4);
    for (auto type : {HeadType::Dsmil, HeadType::Transformer}) {
      auto cfg = testing_support::small_head_config(type, 4);
      if (type == HeadType::Transformer) cfg.dropout = 0.2;
      auto head = make_head(cfg, seed);
      std::vector<Tensor> inputs;
      for (auto& p : head->params()) inputs.push_back(p.tensor);
      const auto report = nn::grad_check(
          [&](const std::vector<Tensor>&) {
            return nn::bce_with_logits(head->forward(x, true, seed).bag_logit, seed % 2 ? 1.0 : 0.0);
          },
          inputs);
      EXPECT_LT(report.max_rel_error, 1e-4) << to_string(type) << " seed " << seed << " param "
                                            << head->params()[report.input].name;
    }
  }
}

TEST(Heads, ShapeMismatchAndConfigRoundTrip) {
  auto head = make_head(testing_support::small_head_config(HeadType::Dsmil, 4), 1);
  std::mt19937_64 rng(6);
  EXPECT_THROW(head->infer(random_instances(rng, 3, 5)), ShapeError);
  auto cfg = HeadConfig::defaults(HeadType::Transformer, 32);
  cfg.region_factor = 2;
  const auto back = HeadConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(parse_head("hipt"), HeadType::Transformer);
  EXPECT_THROW(parse_head("abmil"), DataError);
}

TEST(Heads, PreparedRegionsMapBackToPatches) {
  std::mt19937_64 rng(7);
  auto bag = testing_support::random_bag(rng, 30, 6, 8);
  auto cfg = HeadConfig::defaults(HeadType::Transformer, 6);
  cfg.region_factor = 2;
  const auto prepared = prepare_bag(bag, cfg);
  EXPECT_LE(prepared.instances.rows(), 16);
  std::vector<double> per(prepared.instances.rows());
  std::iota(per.begin(), per.end(), 0.0);
  const auto back = patch_attention(prepared, per);
  for (std::size_t i = 0; i < bag.size(); ++i) EXPECT_EQ(back[i], prepared.patch_instance[i]);
}
