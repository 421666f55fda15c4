#pragma once

#include "bevmotion/core.hpp"
#include "bevmotion/preprocess.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace bevmotion::test {

inline Config small_config() {
  Config cfg;
  cfg.x_range = {-8.0, 8.0};
  cfg.y_range = {-8.0, 8.0};
  return cfg;
}

inline CellSet cells_from(const GridSpec& g, const std::vector<CellIndex>& idx) {
  CellSet s;
  for (const auto& c : idx) {
    s.indices.push_back(c);
    s.coords.push_back(g.cell_center(c));
  }
  return s;
}

inline std::vector<std::int32_t> flat_cells(const GridSpec& g, const std::vector<CellIndex>& idx) {
  std::vector<std::int32_t> out;
  for (const auto& c : idx) out.push_back(g.flat(c));
  return out;
}

inline void fill_random(MotionStack& s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : s.values()) v = u(rng);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bevmotion_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace bevmotion::test
