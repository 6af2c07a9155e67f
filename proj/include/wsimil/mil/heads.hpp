#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/embed/bag.hpp"
#include "wsimil/nn/optim.hpp"
#include "wsimil/nn/tensor.hpp"

namespace wsimil::mil {

enum class HeadType { Dsmil, Transformer };

const char* to_string(HeadType h);
HeadType parse_head(const std::string& s);

struct HeadConfig {
  HeadType type = HeadType::Dsmil;
  int input_dim = 512;
  // Dual-stream head; 0 means "same as input_dim".
  int query_dim = 0;
  int value_dim = 0;
  // Transformer head.
  int model_dim = 192;
  int heads = 3;
  int ff_dim = 0;  // 0 means "same as model_dim"
  double dropout = 0.25;
  /// Region edge in patches for the transformer's region grouping.
  int region_factor = 1;
  // Training.
  int epochs = 200;
  nn::AdamConfig optim;

  /// Hyperparameters used for each head unless overridden.
  static HeadConfig defaults(HeadType type, int input_dim);
  nlohmann::json to_json() const;
  static HeadConfig from_json(const nlohmann::json& j);
};

/// Result of one forward pass, still attached to the graph.
struct ForwardPass {
  nn::Tensor bag_logit;                 // 1 x 1
  std::vector<double> raw_attention;    // sums to 1
  std::vector<double> instance_logits;  // dual-stream head only
  int critical_index = 0;
};

/// Plain-value model output over instances (patches or regions).
struct MilOutput {
  double bag_logit = 0.0;
  std::vector<double> instance_attention;  // min-max normalised
  std::vector<double> raw_attention;
  std::vector<double> instance_logits;
  int critical_index = 0;
};

/// Min-max normalisation to [0, 1]; constant input maps to 0.5.
std::vector<double> normalize_attention(std::span<const double> raw);

class MilHead {
 public:
  virtual ~MilHead() = default;

  /// `instances` is N x input_dim. `dropout_seed` selects the dropout masks
  /// when training.
  virtual ForwardPass forward(const nn::Tensor& instances, bool training, std::uint64_t dropout_seed) const = 0;

  MilOutput infer(const nn::Tensor& instances) const;

  const HeadConfig& config() const { return config_; }
  nn::ParamList& params() { return params_; }
  const nn::ParamList& params() const { return params_; }

 protected:
  explicit MilHead(HeadConfig config) : config_(std::move(config)) {}
  const nn::Tensor& param(std::size_t i) const { return params_[i].tensor; }

  HeadConfig config_;
  nn::ParamList params_;
};

/// Dual-stream head: instance classifier c = XWc + bc picks the critical
/// instance m; queries q = tanh(XWq + bq); attention softmax(q_i . q_m / sqrt(Dq));
/// bag embedding b = sum a_i v_i with v = XWv + bv; logit = (c_m + bWb + bb) / 2.
class DsmilHead : public MilHead {
 public:
  DsmilHead(HeadConfig config, std::uint64_t seed);
  ForwardPass forward(const nn::Tensor& instances, bool training, std::uint64_t dropout_seed) const override;
};

/// One pre-norm transformer encoder layer over [class token; projected
/// regions], no positional encoding. Only the class-token query is computed,
/// which is exact for a single layer whose output is read at the class token.
class TransformerHead : public MilHead {
 public:
  TransformerHead(HeadConfig config, std::uint64_t seed);
  ForwardPass forward(const nn::Tensor& instances, bool training, std::uint64_t dropout_seed) const override;
};

std::unique_ptr<MilHead> make_head(const HeadConfig& config, std::uint64_t seed);

/// Instances a head consumes for one slide, and how they map back to patches.
struct PreparedBag {
  std::string slide_id;
  nn::Tensor instances;
  std::vector<std::uint32_t> patch_instance;  // bag row -> instance row
};

/// Patches as-is for the dual-stream head; mean-pooled regions of
/// region_factor x region_factor patches for the transformer head.
PreparedBag prepare_bag(const embed::EmbeddingBag& bag, const HeadConfig& config);

/// Per-patch attention from per-instance attention.
std::vector<double> patch_attention(const PreparedBag& prepared, std::span<const double> instance_values);

}  // namespace wsimil::mil
