#include "bevmotion/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace bevmotion {

namespace {

// cos(30 deg): minimum |n_z| of an acceptable unit plane normal.
constexpr double kMinVerticalCos = 0.8660254037844386;

struct Plane {
  Vec3 n;  // unit normal
  double d = 0.0;
  double distance(const Vec3& p) const { return std::abs(n.dot(p) + d); }
};

std::optional<Plane> plane_through(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  const double scale = std::max({(b - a).norm(), (c - a).norm(), 1e-12});
  if (len < 1e-9 * scale * scale) return std::nullopt;
  n /= len;
  if (std::abs(n.z()) < kMinVerticalCos) return std::nullopt;
  return Plane{n, -n.dot(a)};
}

// Least-squares z = a x + b y + c over the inliers.
std::optional<Plane> refine(const std::vector<Vec3>& pts, const std::vector<std::size_t>& inliers) {
  if (inliers.size() < 3) return std::nullopt;
  Eigen::MatrixXd A(inliers.size(), 3);
  Eigen::VectorXd z(inliers.size());
  for (std::size_t i = 0; i < inliers.size(); ++i) {
    const Vec3& p = pts[inliers[i]];
    A.row(i) << p.x(), p.y(), 1.0;
    z(i) = p.z();
  }
  const Eigen::Vector3d sol = A.colPivHouseholderQr().solve(z);
  if (!sol.allFinite()) return std::nullopt;
  Vec3 n(-sol(0), -sol(1), 1.0);
  const double len = n.norm();
  n /= len;
  if (std::abs(n.z()) < kMinVerticalCos) return std::nullopt;
  return Plane{n, -sol(2) / len};
}

}  // namespace

std::size_t BevGrid::occupied_voxels() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
}

GroundRemoval remove_ground(const PointFrame& frame, int iterations, double dist_tol,
                            std::uint64_t seed) {
  GroundRemoval out;
  out.kept.timestamp = frame.timestamp;
  const auto& pts = frame.points;
  out.labels.is_ground.assign(pts.size(), false);
  if (pts.size() < 3) {
    out.kept.points = pts;
    return out;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::optional<Plane> best;
  std::size_t best_count = 0;
  for (int it = 0; it < iterations; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    auto cand = plane_through(pts[i], pts[j], pts[k]);
    if (!cand) continue;
    std::size_t count = 0;
    for (const auto& p : pts) count += cand->distance(p) <= dist_tol;
    if (count > best_count) {
      best_count = count;
      best = cand;
    }
  }
  if (!best) {
    out.kept.points = pts;
    return out;
  }

  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (best->distance(pts[i]) <= dist_tol) inliers.push_back(i);
  }
  if (auto r = refine(pts, inliers)) best = r;

  const Plane& pl = *best;
  out.labels.plane = std::array<double, 3>{-pl.n.x() / pl.n.z(), -pl.n.y() / pl.n.z(), -pl.d / pl.n.z()};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool g = pl.distance(pts[i]) <= dist_tol;
    out.labels.is_ground[i] = g;
    if (!g) out.kept.points.push_back(pts[i]);
  }
  return out;
}

BevGrid voxelize(const PointFrame& frame, const GridSpec& grid) {
  BevGrid out;
  out.grid = grid;
  out.timestamp = frame.timestamp;
  out.occupancy.assign(grid.cell_count() * grid.C(), 0);
  for (const auto& p : frame.points) {
    const int r = grid.bin_x(p.x()), c = grid.bin_y(p.y()), z = grid.bin_z(p.z());
    if (r < 0 || c < 0 || z < 0) continue;
    out.occupancy[(static_cast<std::size_t>(r) * grid.W() + c) * grid.C() + z] = 1;
  }
  return out;
}

CellSet extract_cells(const BevGrid& bev) {
  CellSet out;
  const GridSpec& g = bev.grid;
  const std::size_t ch = g.C();
  for (int r = 0; r < g.H(); ++r) {
    for (int c = 0; c < g.W(); ++c) {
      const auto* col = bev.occupancy.data() + (static_cast<std::size_t>(r) * g.W() + c) * ch;
      if (std::any_of(col, col + ch, [](std::uint8_t v) { return v != 0; })) {
        out.indices.push_back({r, c});
        out.coords.push_back(g.cell_center({r, c}));
      }
    }
  }
  return out;
}

CellSet foreground_cells(const PointFrame& frame, const Config& cfg, std::uint64_t seed) {
  const auto removed = remove_ground(frame, cfg.ground_iterations, cfg.ground_dist_tol, seed);
  return extract_cells(voxelize(removed.kept, cfg.grid()));
}

}  // namespace bevmotion
