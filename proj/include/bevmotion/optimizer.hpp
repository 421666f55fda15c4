#pragma once

#include "bevmotion/eval.hpp"
#include "bevmotion/losses.hpp"
#include "bevmotion/synth.hpp"
#include "bevmotion/transport.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bevmotion {

struct OptState {
  MotionStack forward, backward;
  MotionStack labels_fwd, labels_bwd;
  int rounds = 0;
  std::vector<double> round_loss;               // total at the end of each round
  std::vector<std::vector<double>> step_loss;   // total after every descent step
  std::vector<double> label_error;              // mean |label - GT| per round, when GT exists
  std::vector<std::string> warnings;
  bool converged = false;
};

/// Directly optimizes the forward and backward motion fields of one scene.
/// Each round regenerates both label stacks with the current fields as the
/// pre-warp, then runs opt_steps of RMS-preconditioned descent with
/// backtracking, so the recorded total never increases within a round.
/// The descent objective (and so round_loss and step_loss) uses the
/// Huber-smoothed cluster and KNN terms with width cfg.opt_norm_smoothing;
/// fields starting at zero sit on the kink of the exact norms.
OptState optimize_scene(const SceneSequence& seq, const Config& cfg, const LossToggles& toggles = {});

/// Descent on fixed labels; exposed for tests and the per-round loop above.
void descend(MotionStack& fwd, MotionStack& bwd, const LossContext& ctx, const Config& cfg,
             const LossToggles& toggles, int steps, std::vector<double>& history);

/// Mean over valid cells and steps of |labels - gt|.
double label_error(const MotionStack& labels, const MotionStack& gt);

struct SceneResult {
  std::string name;
  OptState state;
  std::optional<MotionStack> ground_truth;
  std::optional<BucketedMetrics> metrics;
};

struct SuiteResult {
  LossToggles toggles;
  std::vector<SceneResult> scenes;
  std::optional<BucketedMetrics> pooled;  // over every scene with ground truth
};

/// Generates and optimizes every recipe; scenes run on up to `threads`
/// workers (0 = hardware concurrency). Output order follows the input.
SuiteResult run_suite(const std::vector<SceneRecipe>& recipes, const Config& cfg, const LossToggles& toggles,
                      unsigned threads = 1);

/// Divergence analysis pooled over every scene of a suite.
DivergenceReport suite_divergence(const SuiteResult& suite);

}  // namespace bevmotion
