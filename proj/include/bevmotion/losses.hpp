#pragma once

#include "bevmotion/clustering.hpp"
#include "bevmotion/core.hpp"

#include <string>
#include <vector>

namespace bevmotion {

// Every per-cell term below is averaged over the cells of the stack's validity
// mask and summed over steps. Gradients share the layout of
// MotionStack::values().

struct SmoothL1 {
  double value = 0.0;
  Vec2 grad = Vec2::Zero();  // with respect to `pred`
};

/// Huber-style smooth L1 per component, averaged over the two components.
SmoothL1 smooth_l1(const Vec2& pred, const Vec2& target, double delta);

/// Value plus gradients with respect to the forward and backward stacks. A
/// gradient is empty when the term does not depend on that stack. Terms of a
/// single stack report into `grad_fwd` whatever that stack's direction is.
struct LossTerm {
  double value = 0.0;
  std::vector<double> grad_fwd;
  std::vector<double> grad_bwd;
};

/// Cluster membership expressed as positions into a MotionStack.
struct StackClusters {
  std::vector<std::vector<std::size_t>> members;
};

StackClusters map_clusters(const MotionStack& stack, const CellSet& cells, const ClusterSet& clusters);

/// For each stack position, the stack positions of its nearest cells.
struct KnnGraph {
  std::vector<std::vector<std::size_t>> neighbors;
  std::vector<std::size_t> members;  // stack positions that own a neighbor list
};

/// K nearest cells by metric distance (ties broken by CellSet order). Fewer
/// than K neighbors are used when the set is smaller than K + 1.
KnnGraph build_knn(const MotionStack& stack, const CellSet& cells, int k);

LossTerm loss_sup(const MotionStack& pred, const MotionStack& labels, double delta);

/// (1/|S|) sum_s (1/|s|^2) sum over ordered pairs (i, j) in s of |M(i) - M(j)|,
/// summed over steps. The subgradient at M(i) == M(j) is taken as zero.
/// With smoothing mu > 0 each norm is replaced by its Huber envelope
/// (|d|^2 / 2mu below mu, |d| - mu/2 above); mu = 0 is the exact loss.
LossTerm loss_cluster(const MotionStack& pred, const StackClusters& clusters, double smoothing = 0.0);
LossTerm loss_cluster(const MotionStack& pred, const CellSet& cells, const ClusterSet& clusters);

/// Mean over graph members of the mean L2 distance to their neighbors' motion.
LossTerm loss_knn(const MotionStack& pred, const KnnGraph& graph, double smoothing = 0.0);
LossTerm loss_knn(const MotionStack& pred, const CellSet& cells, int k);

/// sum_{t=1}^{T'-1} smooth_l1(M_t, t/(t+1) M_{t+1}); zero when T' == 1.
LossTerm loss_forward(const MotionStack& pred, double delta);

/// Per-step weight of the forward/backward coupling: exp(-t / theta_b), or 1
/// when exponential weighting is switched off.
double backward_weight(int t, double theta_b, bool exp_weighting);

/// sum_t w_t smooth_l1(F_t, -B_t).
LossTerm loss_backward(const MotionStack& fwd, const MotionStack& bwd, double theta_b, double delta,
                       bool exp_weighting = true);

struct LossToggles {
  bool sup = true;
  bool c = true;
  bool f = true;
  bool b = true;
  bool knn = false;

  /// Parses a comma list drawn from {sup, c, f, b, knn}.
  static LossToggles parse(const std::string& list);
  std::string str() const;
  bool operator==(const LossToggles&) const = default;
};

/// The eight supervision/regularizer combinations of the ablation, in order.
std::vector<LossToggles> ablation_rows();

struct LossReport {
  struct Entry {
    std::string name;
    double weight = 1.0;
    LossTerm term;
  };
  std::vector<Entry> terms;
  double total = 0.0;
  std::vector<double> grad_fwd;
  std::vector<double> grad_bwd;

  double value(const std::string& name) const;
};

/// Everything total_loss needs beyond the two stacks, prepared once per round.
struct LossContext {
  const MotionStack* labels_fwd = nullptr;
  const MotionStack* labels_bwd = nullptr;
  const StackClusters* clusters = nullptr;
  const KnnGraph* knn = nullptr;
  // Huber smoothing of the norm-based terms (cluster, KNN); 0 = exact.
  double norm_smoothing = 0.0;
};

/// L_sup(fwd) + L_sup(bwd) + alpha (L_c(fwd) + L_c(bwd)) + beta (L_f(fwd) + L_f(bwd))
/// + gamma L_b, with KNN consistency weighted by alpha when toggled on.
LossReport total_loss(const MotionStack& fwd, const MotionStack& bwd, const LossContext& ctx,
                      const Config& cfg, const LossToggles& toggles = {});

}  // namespace bevmotion
