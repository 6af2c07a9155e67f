#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsimil/qc/image.hpp"

namespace wsimil {

qc::RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const qc::RgbImage& image);
/// `rgba` is interleaved, 4 bytes per pixel.
void write_png_rgba(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& rgba);

}  // namespace wsimil
