#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wsimil/nn/tensor.hpp"

namespace wsimil::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
};

/// Adam with decoupled weight decay. Missing gradients count as zero.
class Adam {
 public:
  Adam(ParamList params, AdamConfig config);

  /// Throws NumericError naming the parameter when a gradient is not finite.
  void step();
  void zero_grad();
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParamList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

/// Checkpoint layout (little-endian):
///   "WMCK" | version u16 | count u32 |
///   count x (name: u32 length + bytes | rank u32 | rank x u32 dims | f32 payload)
void save_checkpoint(const std::filesystem::path& path, const ParamList& params);
/// Loads into existing parameters, requiring identical names and shapes.
void load_checkpoint(const std::filesystem::path& path, ParamList& params);

/// Rounds every value through float so in-memory parameters equal what a
/// checkpoint stores.
void round_to_float(ParamList& params);

}  // namespace wsimil::nn
