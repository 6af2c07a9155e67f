#include "wsimil/nn/optim.hpp"

#include <cmath>
#include <fstream>

#include "wsimil/common/binary_io.hpp"
#include "wsimil/common/error.hpp"

namespace wsimil::nn {

namespace {
constexpr char kCheckpointMagic[4] = {'W', 'M', 'C', 'K'};
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

Adam::Adam(ParamList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_)
    for (double g : p.tensor.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    auto& w = t.data();
    const auto& g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * gi;
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= config_.lr * config_.weight_decay * w[i];
      w[i] -= config_.lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 4);
  io::write_le<std::uint16_t>(out, kCheckpointVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    io::write_string(out, p.name);
    io::write_le<std::uint32_t>(out, 2);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rows()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.cols()));
    for (double v : p.tensor.data()) io::write_f32(out, static_cast<float>(v));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParamList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    char magic[4];
    in.read(magic, 4);
    if (!in || !std::equal(magic, magic + 4, kCheckpointMagic)) throw DataError("not a checkpoint (bad magic)");
    const auto version = io::read_le<std::uint16_t>(in, "version");
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto count = io::read_le<std::uint32_t>(in, "tensor count");
    if (count != params.size())
      throw DataError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
    for (auto& p : params) {
      const auto name = io::read_string(in, "tensor name");
      if (name != p.name) throw DataError("checkpoint tensor '" + name + "' where '" + p.name + "' expected");
      const auto rank = io::read_le<std::uint32_t>(in, "rank");
      std::vector<std::uint32_t> dims(rank);
      std::size_t n = 1;
      for (auto& d : dims) n *= (d = io::read_le<std::uint32_t>(in, "dimension"));
      const bool match = (rank == 2 && dims[0] == static_cast<std::uint32_t>(p.tensor.rows()) &&
                          dims[1] == static_cast<std::uint32_t>(p.tensor.cols())) ||
                         (rank == 1 && p.tensor.rows() == 1 && dims[0] == static_cast<std::uint32_t>(p.tensor.cols()));
      if (!match || n != p.tensor.size()) throw DataError("checkpoint tensor '" + name + "' has the wrong shape");
      for (double& v : p.tensor.data()) v = io::read_f32(in, "tensor payload");
    }
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void round_to_float(ParamList& params) {
  for (auto& p : params)
    for (double& v : p.tensor.data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace wsimil::nn
