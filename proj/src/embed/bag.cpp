#include "wsimil/embed/bag.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "wsimil/common/binary_io.hpp"
#include "wsimil/common/error.hpp"

namespace wsimil::embed {

void EmbeddingBag::validate() const {
  if (dim == 0) throw DataError("bag " + slide_id + ": embedding dimension is zero");
  if (coords.empty()) throw DataError("bag " + slide_id + ": no instances");
  if (values.size() != coords.size() * dim)
    throw DataError("bag " + slide_id + ": value count does not match N x D");
  std::set<qc::TileCoord> seen;
  for (const auto& c : coords)
    if (!seen.insert(c).second)
      throw DataError("bag " + slide_id + ": duplicate coordinate (" + std::to_string(c.col) + "," +
                      std::to_string(c.row) + ")");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw DataError("bag " + slide_id + ": non-finite embedding in row " + std::to_string(i / dim));
}

void write_bag(std::ostream& out, const EmbeddingBag& bag) {
  bag.validate();
  out.write(kBagMagic, 4);
  io::write_le<std::uint16_t>(out, kBagVersion);
  io::write_le<std::uint32_t>(out, bag.dim);
  io::write_le<std::uint64_t>(out, bag.size());
  io::write_le<std::uint32_t>(out, bag.tile_size);
  io::write_le<std::uint32_t>(out, bag.level_downsample);
  io::write_string(out, bag.encoder_id);
  for (std::size_t i = 0; i < bag.size(); ++i) {
    io::write_le<std::uint32_t>(out, bag.coords[i].col);
    io::write_le<std::uint32_t>(out, bag.coords[i].row);
    for (float v : bag.row(i)) io::write_f32(out, v);
  }
  if (!out) throw DataError("failed writing embedding bag " + bag.slide_id);
}

EmbeddingBag read_bag(std::istream& in, const std::string& slide_id) {
  char magic[4] = {};
  if (!in.read(magic, 4)) throw DataError("unexpected end of file while reading bag magic");
  if (std::memcmp(magic, kBagMagic, 4) != 0) throw DataError("not an embedding bag (bad magic)");
  EmbeddingBag bag;
  bag.slide_id = slide_id;
  const auto version = io::read_le<std::uint16_t>(in, "bag version");
  if (version != kBagVersion)
    throw DataError("unsupported embedding bag version " + std::to_string(version) + "; re-run `embed`");
  bag.dim = io::read_le<std::uint32_t>(in, "bag dimension");
  const auto n = io::read_le<std::uint64_t>(in, "bag instance count");
  bag.tile_size = io::read_le<std::uint32_t>(in, "bag tile size");
  bag.level_downsample = io::read_le<std::uint32_t>(in, "bag level downsample");
  bag.encoder_id = io::read_string(in, "bag encoder id");
  if (bag.dim == 0 || bag.dim > (1u << 16)) throw DataError("embedding bag has invalid dimension");
  if (n == 0 || n > (1ull << 32)) throw DataError("embedding bag has invalid instance count");
  bag.coords.resize(n);
  bag.values.resize(n * bag.dim);
  // Decode row by row from a byte buffer; per-value stream reads are slow for
  // million-row bags.
  const std::size_t row_bytes = 8 + 4 * static_cast<std::size_t>(bag.dim);
  std::vector<unsigned char> buf(row_bytes);
  auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(buf[off]) | static_cast<std::uint32_t>(buf[off + 1]) << 8 |
           static_cast<std::uint32_t>(buf[off + 2]) << 16 | static_cast<std::uint32_t>(buf[off + 3]) << 24;
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(row_bytes)))
      throw DataError("unexpected end of file in bag body (row " + std::to_string(i) + ")");
    bag.coords[i].col = u32(0);
    bag.coords[i].row = u32(4);
    float* row = bag.values.data() + i * bag.dim;
    for (std::uint32_t d = 0; d < bag.dim; ++d) {
      const std::uint32_t bits = u32(8 + 4 * static_cast<std::size_t>(d));
      std::memcpy(&row[d], &bits, sizeof(float));
    }
  }
  bag.validate();
  return bag;
}

void write_bag(const std::filesystem::path& path, const EmbeddingBag& bag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_bag(out, bag);
}

EmbeddingBag read_bag(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding bag " + path.string());
  try {
    return read_bag(in, path.stem().string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::filesystem::path bag_path(const std::filesystem::path& dir, const std::string& slide_id) {
  return dir / (slide_id + kBagExtension);
}

}  // namespace wsimil::embed
