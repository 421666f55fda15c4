#pragma once

#include "bevmotion/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace bevmotion {

/// Binary occupancy lattice, stored H x W x C row-major with the channel last.
struct BevGrid {
  GridSpec grid;
  double timestamp = 0.0;
  std::vector<std::uint8_t> occupancy;

  bool at(int row, int col, int ch) const {
    return occupancy[(static_cast<std::size_t>(row) * grid.W() + col) * grid.C() + ch] != 0;
  }
  std::size_t occupied_voxels() const;
};

/// Non-empty BEV cells in row-major order with their metric centers.
struct CellSet {
  std::vector<Vec2> coords;
  std::vector<CellIndex> indices;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

struct GroundLabel {
  std::vector<bool> is_ground;
  // z = a*x + b*y + c; absent when no acceptable plane was found.
  std::optional<std::array<double, 3>> plane;
};

struct GroundRemoval {
  PointFrame kept;
  GroundLabel labels;
};

/// Random-sample consensus fit of a near-horizontal plane (normal within 30
/// degrees of vertical). Points within dist_tol of the refined plane are
/// labelled ground and dropped. Fewer than three points, or point sets with no
/// acceptable plane, come back untouched with an empty plane.
GroundRemoval remove_ground(const PointFrame& frame, int iterations, double dist_tol,
                            std::uint64_t seed);

BevGrid voxelize(const PointFrame& frame, const GridSpec& grid);

CellSet extract_cells(const BevGrid& grid);

/// Cells of `frame` after ground removal, the input to matching.
CellSet foreground_cells(const PointFrame& frame, const Config& cfg, std::uint64_t seed);

}  // namespace bevmotion
