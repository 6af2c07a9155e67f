#include "wsimil/mil/heads.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wsimil/common/error.hpp"
#include "wsimil/common/rng.hpp"
#include "wsimil/embed/regions.hpp"

namespace wsimil::mil {

using nn::Tensor;

const char* to_string(HeadType h) { return h == HeadType::Dsmil ? "dsmil" : "transformer"; }

HeadType parse_head(const std::string& s) {
  if (s == "dsmil") return HeadType::Dsmil;
  if (s == "transformer" || s == "hipt") return HeadType::Transformer;
  throw DataError("unknown head '" + s + "' (expected dsmil or transformer)");
}

HeadConfig HeadConfig::defaults(HeadType type, int input_dim) {
  HeadConfig c;
  c.type = type;
  c.input_dim = input_dim;
  if (type == HeadType::Dsmil) {
    c.epochs = 200;
    c.dropout = 0.0;
    c.optim.lr = 2e-4;
    c.optim.weight_decay = 5e-3;
  } else {
    c.epochs = 20;
    c.dropout = 0.25;
    c.optim.lr = 3e-4;
    c.optim.weight_decay = 1e-5;
  }
  return c;
}

nlohmann::json HeadConfig::to_json() const {
  return {{"head_type", to_string(type)},
          {"input_dim", input_dim},
          {"query_dim", query_dim},
          {"value_dim", value_dim},
          {"model_dim", model_dim},
          {"heads", heads},
          {"ff_dim", ff_dim},
          {"dropout", dropout},
          {"region_factor", region_factor},
          {"epochs", epochs},
          {"lr", optim.lr},
          {"beta1", optim.beta1},
          {"beta2", optim.beta2},
          {"eps", optim.eps},
          {"weight_decay", optim.weight_decay}};
}

HeadConfig HeadConfig::from_json(const nlohmann::json& j) {
  HeadConfig c = defaults(parse_head(j.at("head_type").get<std::string>()), j.at("input_dim").get<int>());
  c.query_dim = j.value("query_dim", c.query_dim);
  c.value_dim = j.value("value_dim", c.value_dim);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.heads = j.value("heads", c.heads);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.region_factor = j.value("region_factor", c.region_factor);
  c.epochs = j.value("epochs", c.epochs);
  c.optim.lr = j.value("lr", c.optim.lr);
  c.optim.beta1 = j.value("beta1", c.optim.beta1);
  c.optim.beta2 = j.value("beta2", c.optim.beta2);
  c.optim.eps = j.value("eps", c.optim.eps);
  c.optim.weight_decay = j.value("weight_decay", c.optim.weight_decay);
  return c;
}

std::vector<double> normalize_attention(std::span<const double> raw) {
  std::vector<double> out(raw.size(), 0.5);
  if (raw.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  // Exact endpoints regardless of rounding.
  out[static_cast<std::size_t>(hi - raw.begin())] = 1.0;
  out[static_cast<std::size_t>(lo - raw.begin())] = 0.0;
  return out;
}

MilOutput MilHead::infer(const Tensor& instances) const {
  ForwardPass pass = forward(instances, false, 0);
  MilOutput out;
  out.bag_logit = pass.bag_logit.item();
  out.raw_attention = std::move(pass.raw_attention);
  out.instance_attention = normalize_attention(out.raw_attention);
  out.instance_logits = std::move(pass.instance_logits);
  out.critical_index = pass.critical_index;
  return out;
}

namespace {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual linear-layer default.
Tensor linear_init(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = u(rng);
  return Tensor::from(rows, cols, std::move(v), true);
}

Tensor constant(int rows, int cols, double value) {
  return Tensor::from(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, value), true);
}

void add_linear(nn::ParamList& params, const std::string& name, int in, int out, std::mt19937_64& rng) {
  params.push_back({name + ".weight", linear_init(in, out, in, rng)});
  params.push_back({name + ".bias", linear_init(1, out, in, rng)});
}

void require_dim(const Tensor& x, int dim) {
  if (x.cols() != dim)
    throw ShapeError("instance dimension " + std::to_string(x.cols()) + " does not match head input " +
                     std::to_string(dim));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return nn::add(nn::matmul(x, w), b); }

}  // namespace

DsmilHead::DsmilHead(HeadConfig config, std::uint64_t seed) : MilHead(std::move(config)) {
  auto& c = config_;
  if (c.query_dim <= 0) c.query_dim = c.input_dim;
  if (c.value_dim <= 0) c.value_dim = c.input_dim;
  std::mt19937_64 rng(derive_seed(seed, 0x5D511));
  add_linear(params_, "instance_classifier", c.input_dim, 1, rng);
  add_linear(params_, "query", c.input_dim, c.query_dim, rng);
  add_linear(params_, "value", c.input_dim, c.value_dim, rng);
  add_linear(params_, "bag_classifier", c.value_dim, 1, rng);
}

ForwardPass DsmilHead::forward(const Tensor& x, bool training, std::uint64_t dropout_seed) const {
  require_dim(x, config_.input_dim);
  const Tensor input = nn::dropout(x, config_.dropout, derive_seed(dropout_seed, 1), training);
  const Tensor c = linear(input, param(0), param(1));  // N x 1
  auto [c_max, m] = nn::max_with_argmax(c);
  const Tensor q = nn::tanh(linear(input, param(2), param(3)));  // N x Dq
  const Tensor v = linear(input, param(4), param(5));            // N x Dv
  const Tensor qm = nn::select_row(q, m);
  const Tensor scores = nn::scale(nn::matmul(q, nn::transpose(qm)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  const Tensor a = nn::softmax(scores, 0);                        // N x 1
  const Tensor b = nn::matmul(nn::transpose(a), v);               // 1 x Dv
  const Tensor bag_score = linear(b, param(6), param(7));         // 1 x 1
  ForwardPass out;
  out.bag_logit = nn::scale(nn::add(c_max, bag_score), 0.5);
  out.raw_attention = a.data();
  out.instance_logits = c.data();
  out.critical_index = m;
  return out;
}

TransformerHead::TransformerHead(HeadConfig config, std::uint64_t seed) : MilHead(std::move(config)) {
  auto& c = config_;
  if (c.ff_dim <= 0) c.ff_dim = c.model_dim;
  if (c.heads <= 0 || c.model_dim % c.heads != 0)
    throw ShapeError("model_dim " + std::to_string(c.model_dim) + " is not divisible by " + std::to_string(c.heads) +
                     " heads");
  std::mt19937_64 rng(derive_seed(seed, 0x7F0A3));
  const int d = c.model_dim;
  add_linear(params_, "input_projection", c.input_dim, d, rng);                  // 0, 1
  {
    std::normal_distribution<double> n(0.0, 0.02);
    std::vector<double> v(d);
    for (double& x : v) x = n(rng);
    params_.push_back({"class_token", Tensor::from(1, d, std::move(v), true)});  // 2
  }
  params_.push_back({"norm1.gamma", constant(1, d, 1.0)});                       // 3
  params_.push_back({"norm1.beta", constant(1, d, 0.0)});                        // 4
  add_linear(params_, "attention.query", d, d, rng);                            // 5, 6
  add_linear(params_, "attention.key", d, d, rng);                              // 7, 8
  add_linear(params_, "attention.value", d, d, rng);                            // 9, 10
  add_linear(params_, "attention.output", d, d, rng);                           // 11, 12
  params_.push_back({"norm2.gamma", constant(1, d, 1.0)});                       // 13
  params_.push_back({"norm2.beta", constant(1, d, 0.0)});                        // 14
  add_linear(params_, "feed_forward.in", d, c.ff_dim, rng);                     // 15, 16
  add_linear(params_, "feed_forward.out", c.ff_dim, d, rng);                    // 17, 18
  params_.push_back({"final_norm.gamma", constant(1, d, 1.0)});                  // 19
  params_.push_back({"final_norm.beta", constant(1, d, 0.0)});                   // 20
  add_linear(params_, "classifier", d, 1, rng);                                 // 21, 22
}

ForwardPass TransformerHead::forward(const Tensor& x, bool training, std::uint64_t dropout_seed) const {
  require_dim(x, config_.input_dim);
  const double p = config_.dropout;
  auto drop = [&](const Tensor& t, std::uint64_t stream) {
    return nn::dropout(t, p, derive_seed(dropout_seed, stream), training);
  };
  const int M = x.rows();
  const int heads = config_.heads;
  const int dh = config_.model_dim / heads;

  const Tensor regions = drop(nn::gelu(linear(x, param(0), param(1))), 1);
  const Tensor tokens = nn::concat({param(2), regions}, 0);  // (M + 1) x d
  const Tensor normed = nn::layer_norm(tokens, param(3), param(4));
  const Tensor q = linear(nn::select_row(normed, 0), param(5), param(6));
  const Tensor k = linear(normed, param(7), param(8));
  const Tensor v = linear(normed, param(9), param(10));

  std::vector<Tensor> head_out;
  std::vector<double> raw(M, 0.0);
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = nn::slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = nn::slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = nn::slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor scores = nn::scale(nn::matmul(qh, nn::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    const Tensor attn = nn::softmax(scores, 1);  // 1 x (M + 1)
    for (int i = 0; i < M; ++i) raw[i] += attn.data()[i + 1] / heads;
    head_out.push_back(nn::matmul(drop(attn, 10 + h), vh));
  }
  const Tensor attn_out = linear(nn::concat(head_out, 1), param(11), param(12));
  const Tensor cls = nn::add(nn::select_row(tokens, 0), drop(attn_out, 2));
  const Tensor ff_in = nn::layer_norm(cls, param(13), param(14));
  const Tensor ff = linear(drop(nn::gelu(linear(ff_in, param(15), param(16))), 3), param(17), param(18));
  const Tensor out = nn::layer_norm(nn::add(cls, drop(ff, 4)), param(19), param(20));

  ForwardPass pass;
  pass.bag_logit = linear(out, param(21), param(22));
  double total = 0.0;
  for (double r : raw) total += r;
  for (double& r : raw) r /= total;
  pass.raw_attention = std::move(raw);
  pass.critical_index = static_cast<int>(std::max_element(pass.raw_attention.begin(), pass.raw_attention.end()) -
                                         pass.raw_attention.begin());
  return pass;
}

std::unique_ptr<MilHead> make_head(const HeadConfig& config, std::uint64_t seed) {
  std::unique_ptr<MilHead> head;
  if (config.type == HeadType::Dsmil) head = std::make_unique<DsmilHead>(config, seed);
  else head = std::make_unique<TransformerHead>(config, seed);
  // Start from float-representable values so checkpoints are exact.
  nn::round_to_float(head->params());
  return head;
}

PreparedBag prepare_bag(const embed::EmbeddingBag& bag, const HeadConfig& config) {
  PreparedBag out;
  out.slide_id = bag.slide_id;
  if (bag.dim != static_cast<std::uint32_t>(config.input_dim))
    throw ShapeError("bag " + bag.slide_id + " has dimension " + std::to_string(bag.dim) + ", head expects " +
                     std::to_string(config.input_dim));
  if (config.type == HeadType::Dsmil || config.region_factor <= 1) {
    out.instances = Tensor::from(static_cast<int>(bag.size()), static_cast<int>(bag.dim),
                                 std::vector<double>(bag.values.begin(), bag.values.end()));
    out.patch_instance.resize(bag.size());
    for (std::size_t i = 0; i < bag.size(); ++i) out.patch_instance[i] = static_cast<std::uint32_t>(i);
    return out;
  }
  const auto regions = embed::group_regions(bag, bag.tile_size * static_cast<std::uint32_t>(config.region_factor));
  out.instances = Tensor::from(static_cast<int>(regions.size()), static_cast<int>(regions.dim),
                               std::vector<double>(regions.values.begin(), regions.values.end()));
  out.patch_instance = regions.patch_region;
  return out;
}

std::vector<double> patch_attention(const PreparedBag& prepared, std::span<const double> instance_values) {
  std::vector<double> out(prepared.patch_instance.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = instance_values[prepared.patch_instance[i]];
  return out;
}

}  // namespace wsimil::mil
