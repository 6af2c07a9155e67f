#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wsimil/qc/tiling.hpp"

namespace wsimil::embed {

/// N x D instance embeddings of one slide, with the grid position of each row.
struct EmbeddingBag {
  std::string slide_id;
  std::string encoder_id;
  std::uint32_t dim = 0;
  std::uint32_t tile_size = 224;
  std::uint32_t level_downsample = 1;
  std::vector<qc::TileCoord> coords;
  std::vector<float> values;  // row-major N x dim

  std::size_t size() const { return coords.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

  /// Throws DataError unless N >= 1, coordinates are unique, the value count
  /// matches N x dim and every value is finite.
  void validate() const;
};

inline constexpr char kBagMagic[4] = {'W', 'M', 'B', 'K'};
inline constexpr std::uint16_t kBagVersion = 1;
inline constexpr const char* kBagExtension = ".wmbk";

/// Little-endian layout:
///   "WMBK" | version u16 | D u32 | N u64 | tile_size u32 | level_downsample u32
///   | encoder_id (u32 length + bytes) | N x (col u32, row u32, D x f32)
/// The slide id is not stored; it is the file stem.
void write_bag(std::ostream& out, const EmbeddingBag& bag);
EmbeddingBag read_bag(std::istream& in, const std::string& slide_id = {});

void write_bag(const std::filesystem::path& path, const EmbeddingBag& bag);
EmbeddingBag read_bag(const std::filesystem::path& path);

std::filesystem::path bag_path(const std::filesystem::path& dir, const std::string& slide_id);

}  // namespace wsimil::embed
