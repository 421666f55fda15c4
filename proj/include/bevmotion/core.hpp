#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bevmotion {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by validate_config; carries the name of every offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> fields, const std::string& detail);
  const std::vector<std::string>& fields() const noexcept { return fields_; }

 private:
  std::vector<std::string> fields_;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double extent() const { return hi - lo; }
  bool operator==(const Range&) const = default;
};

/// Integer (row, col) address of a BEV cell. Rows run along X, columns along Y.
struct CellIndex {
  int row = 0;
  int col = 0;
  auto operator<=>(const CellIndex&) const = default;
};

/// Voxel lattice geometry. Bins are half-open [lo, hi) on every axis.
class GridSpec {
 public:
  GridSpec() = default;

  /// Throws ConfigError if a range is empty, a voxel size is non-positive, or
  /// an extent is not an integer multiple of its voxel size.
  static GridSpec make(Range x, Range y, Range z, double voxel_xy, double voxel_z);

  const Range& x_range() const { return x_; }
  const Range& y_range() const { return y_; }
  const Range& z_range() const { return z_; }
  double voxel_xy() const { return voxel_xy_; }
  double voxel_z() const { return voxel_z_; }
  int H() const { return h_; }
  int W() const { return w_; }
  int C() const { return c_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(h_) * w_; }

  /// Bin of a coordinate along one axis, or -1 when outside [lo, hi).
  int bin_x(double x) const;
  int bin_y(double y) const;
  int bin_z(double z) const;

  Vec2 cell_center(CellIndex c) const;
  std::int32_t flat(CellIndex c) const { return c.row * w_ + c.col; }
  CellIndex unflat(std::int32_t f) const { return {f / w_, f % w_}; }
  bool contains(CellIndex c) const { return c.row >= 0 && c.row < h_ && c.col >= 0 && c.col < w_; }

  bool operator==(const GridSpec&) const = default;

 private:
  Range x_, y_, z_;
  double voxel_xy_ = 0.0;
  double voxel_z_ = 0.0;
  int h_ = 0, w_ = 0, c_ = 0;
};

enum class LabelMode { barycentric, raw_product };

struct Config {
  double theta_c = 3.0;
  double theta_b = 10.0;
  int d_c = 3;
  double alpha = 0.05;
  double beta = 0.1;
  double gamma = 1.0;
  int T = 5;
  int T_prime = 5;
  double frame_dt = 0.2;
  double sinkhorn_epsilon = 0.03;
  int sinkhorn_iters = 200;
  double sinkhorn_tol = 1e-6;
  int outer_rounds = 5;
  int opt_steps = 200;
  double opt_lr = 0.05;
  // Huber width (meters) applied to the norm-based terms while optimizing.
  double opt_norm_smoothing = 0.05;
  double smooth_l1_delta = 1.0;
  double static_speed_threshold = 0.2;
  std::uint64_t rng_seed = 0;

  Range x_range{-32.0, 32.0};
  Range y_range{-32.0, 32.0};
  // -3..2 does not divide by 0.4; the top is raised to 2.2 so C = 13.
  Range z_range{-3.0, 2.2};
  double voxel_xy = 0.25;
  double voxel_z = 0.4;

  int ground_iterations = 100;
  double ground_dist_tol = 0.15;
  int knn_k = 5;
  // false drops the exp(-t / theta_b) factor (every step weighted 1).
  bool backward_exp_weighting = true;
  LabelMode label_mode = LabelMode::barycentric;

  GridSpec grid() const { return GridSpec::make(x_range, y_range, z_range, voxel_xy, voxel_z); }
  bool operator==(const Config&) const = default;
};

/// Returns cfg unchanged when every invariant holds; otherwise throws a
/// ConfigError naming all violated fields at once.
Config validate_config(const Config& cfg);

struct PointFrame {
  double timestamp = 0.0;
  std::vector<Vec3> points;
};

enum class Direction : std::uint8_t { forward = 0, backward = 1 };

const char* to_string(Direction d);

/// Per-cell 2D displacement fields for steps 1..T', stored only for cells in
/// the validity mask. Every cell outside the mask reads as exactly zero.
class MotionStack {
 public:
  MotionStack() = default;

  /// `cells` are flat row-major indices; they are sorted and deduplicated.
  MotionStack(GridSpec grid, Direction dir, int steps, std::vector<std::int32_t> cells);

  const GridSpec& grid() const { return grid_; }
  Direction direction() const { return dir_; }
  int steps() const { return steps_; }
  std::size_t size() const { return cells_.size(); }
  const std::vector<std::int32_t>& cells() const { return cells_; }

  /// Position of a flat cell inside the compact storage.
  std::optional<std::size_t> find(std::int32_t flat) const;
  bool valid(CellIndex c) const { return grid_.contains(c) && find(grid_.flat(c)).has_value(); }

  // Steps are 0-based here: step s stores the displacement for horizon s + 1.
  Vec2 at(int step, std::size_t k) const {
    const std::size_t o = offset(step, k);
    return {values_[o], values_[o + 1]};
  }
  void set(int step, std::size_t k, const Vec2& v) {
    const std::size_t o = offset(step, k);
    values_[o] = v.x();
    values_[o + 1] = v.y();
  }
  /// Value at an arbitrary grid cell; zero when the cell is not valid.
  Vec2 sample(int step, CellIndex c) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Mask over all H*W cells, row-major.
  std::vector<std::uint8_t> mask() const;
  /// Dense (steps, H, W, 2) copy, row-major.
  std::vector<double> dense() const;

  bool same_layout(const MotionStack& o) const {
    return grid_ == o.grid_ && steps_ == o.steps_ && cells_ == o.cells_;
  }
  bool operator==(const MotionStack&) const = default;

 private:
  std::size_t offset(int step, std::size_t k) const {
    return (static_cast<std::size_t>(step) * cells_.size() + k) * 2;
  }

  GridSpec grid_;
  Direction dir_ = Direction::forward;
  int steps_ = 0;
  std::vector<std::int32_t> cells_;
  std::vector<double> values_;
};

/// Time-ordered frames around a current frame. Frames before `current` are the
/// past (backward targets), frames after it the future (forward targets).
struct SceneSequence {
  std::vector<PointFrame> frames;
  std::size_t current = 0;
  std::optional<MotionStack> ground_truth;
  // Generator-only metadata: per frame, per point instance id
  // (-1 ground, 0 clutter, k > 0 object k). Empty for loaded archives.
  std::vector<std::vector<int>> instance_ids;

  const PointFrame& current_frame() const { return frames.at(current); }
  int past_available() const { return static_cast<int>(current); }
  int future_available() const { return static_cast<int>(frames.size() - current - 1); }
};

/// Throws if timestamps are not strictly increasing with spacing frame_dt.
void check_sequence(const SceneSequence& seq, const Config& cfg);

}  // namespace bevmotion
