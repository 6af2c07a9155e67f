#pragma once

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wsimil/common/rng.hpp"
#include "wsimil/embed/bag.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("wsimil_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline wsimil::embed::EmbeddingBag random_bag(std::mt19937_64& rng, int n, int dim, int grid = 16) {
  wsimil::embed::EmbeddingBag bag;
  bag.slide_id = "S";
  bag.encoder_id = "test";
  bag.dim = static_cast<std::uint32_t>(dim);
  std::vector<int> cells(static_cast<std::size_t>(grid) * grid);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  std::shuffle(cells.begin(), cells.end(), rng);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (int i = 0; i < n; ++i) {
    bag.coords.push_back({static_cast<std::uint32_t>(cells[i] % grid), static_cast<std::uint32_t>(cells[i] / grid)});
    for (int d = 0; d < dim; ++d) bag.values.push_back(g(rng));
  }
  return bag;
}

}  // namespace testing_support
