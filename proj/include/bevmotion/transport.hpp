#pragma once

#include "bevmotion/core.hpp"
#include "bevmotion/preprocess.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace bevmotion {

/// C_ij = 1 - exp(-|s_i - t_j|^2 / theta_c), entries in [0, 1).
struct CostMatrix {
  Eigen::MatrixXd values;
  double theta_c = 0.0;
};

/// Entropic transport plan with uniform marginals 1/N_src (rows) and
/// 1/N_tgt (columns).
struct TransportPlan {
  Eigen::MatrixXd values;
  double epsilon = 0.0;
  int iterations = 0;
  bool converged = false;
  double marginal_error = 0.0;  // max deviation over rows and columns
};

/// Throws if either side is empty.
CostMatrix cost_matrix(const std::vector<Vec2>& source, const std::vector<Vec2>& target,
                       double theta_c);

/// Log-stabilized Sinkhorn scaling. Potentials are absorbed into the kernel
/// whenever a scaling vector leaves [1e-100, 1e100], so small epsilon never
/// underflows. Non-convergence is reported through `converged`; a NaN
/// anywhere throws.
TransportPlan sinkhorn(const CostMatrix& cost, double epsilon, int max_iters, double tol);

/// Per-source displacement. Barycentric mode: sum_j P_ij t_j / sum_j P_ij - s_i.
/// Raw-product mode applies the plan to the target coordinates without row
/// normalization (coordinates come out scaled by 1/N_src).
std::vector<Vec2> pseudo_labels(const TransportPlan& plan, const std::vector<Vec2>& source,
                                const std::vector<Vec2>& target,
                                LabelMode mode = LabelMode::barycentric);

/// Source coordinates shifted by the predicted displacement at `step`
/// (1-based horizon). Throws if a source cell is outside the prediction mask.
std::vector<Vec2> prewarp(const CellSet& source, const MotionStack& prediction, int step);

/// Foreground cell sets for every frame of a sequence, computed once so label
/// regeneration does not repeat ground removal and voxelization.
struct PreparedSequence {
  std::vector<CellSet> cells;
  std::size_t current = 0;
  std::vector<std::int32_t> valid;  // flat cells non-empty in the current frame
  int past_available = 0;
  int future_available = 0;
};

PreparedSequence prepare_sequence(const SceneSequence& seq, const Config& cfg);

/// Cells occupied in the current frame (ground included), as flat indices.
std::vector<std::int32_t> current_cells(const SceneSequence& seq, const GridSpec& grid);

struct LabelStackResult {
  MotionStack labels;
  std::vector<std::string> warnings;
  int unconverged_steps = 0;
};

/// Pseudo labels for steps 1..T'. Sources are the foreground cells of the
/// current frame, pre-warped by `prediction`; targets are the foreground
/// cells of frame current +/- t. Ground-only cells keep a zero label.
LabelStackResult label_stack(const PreparedSequence& prep, const MotionStack& prediction,
                             const Config& cfg);
LabelStackResult label_stack(const SceneSequence& seq, const MotionStack& prediction,
                             const Config& cfg);

}  // namespace bevmotion
