#include "wsimil/embed/regions.hpp"

#include <map>

#include "wsimil/common/error.hpp"

namespace wsimil::embed {

RegionBag group_regions(const EmbeddingBag& bag, std::uint32_t region_size) {
  if (bag.tile_size == 0 || region_size == 0 || region_size % bag.tile_size != 0)
    throw ShapeError("region size " + std::to_string(region_size) + " is not a multiple of tile size " +
                     std::to_string(bag.tile_size));
  if (bag.size() == 0) throw DataError("group_regions: bag " + bag.slide_id + " has no instances");
  const std::uint32_t factor = region_size / bag.tile_size;

  std::map<qc::TileCoord, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < bag.size(); ++i)
    members[{bag.coords[i].col / factor, bag.coords[i].row / factor}].push_back(i);

  RegionBag out;
  out.slide_id = bag.slide_id;
  out.dim = bag.dim;
  out.region_size = region_size;
  out.patch_region.resize(bag.size());
  out.values.reserve(members.size() * bag.dim);
  for (const auto& [coord, rows] : members) {  // TileCoord orders row-major
    const auto index = static_cast<std::uint32_t>(out.region_coords.size());
    out.region_coords.push_back(coord);
    out.member_counts.push_back(static_cast<std::uint32_t>(rows.size()));
    std::vector<double> acc(bag.dim, 0.0);
    for (std::size_t r : rows) {
      out.patch_region[r] = index;
      const auto v = bag.row(r);
      for (std::uint32_t d = 0; d < bag.dim; ++d) acc[d] += v[d];
    }
    for (std::uint32_t d = 0; d < bag.dim; ++d)
      out.values.push_back(static_cast<float>(acc[d] / static_cast<double>(rows.size())));
  }
  if (out.region_coords.empty()) throw DataError("group_regions: no non-empty region");
  return out;
}

std::vector<double> broadcast_to_patches(const RegionBag& regions, std::span<const double> per_region) {
  if (per_region.size() != regions.size()) throw ShapeError("broadcast_to_patches: length mismatch");
  std::vector<double> out(regions.patch_region.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = per_region[regions.patch_region[i]];
  return out;
}

}  // namespace wsimil::embed
