#pragma once

#include "bevmotion/losses.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bevmotion {

/// A loss term as a function of the (forward, backward) stack pair.
struct GradTerm {
  std::string name;
  std::function<LossTerm(const MotionStack&, const MotionStack&)> eval;
};

struct GradCheckOptions {
  int points = 100;
  double step = 1e-5;       // meters
  double tolerance = 1e-5;  // relative
  double perturbation = 0.05;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string term;
  int points = 0;
  double max_rel_error = 0.0;
  bool passed = true;
  // Worst coordinate seen.
  std::string stack;
  int step = 0;  // 1-based horizon
  CellIndex cell;
  int component = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference check of `term` at `points` random evaluation points.
/// Each point perturbs the base fields by uniform noise of the given size and
/// compares one random coordinate (among those of stacks the term depends on)
/// against (L(x + h) - L(x - h)) / 2h.
GradCheckResult check_gradient(const GradTerm& term, const MotionStack& fwd, const MotionStack& bwd,
                               const GradCheckOptions& opt);

/// Small random scene (cells, clusters, labels, stacks) exercising every term.
struct GradCheckFixture {
  Config cfg;
  CellSet cells;
  ClusterSet clusters;
  StackClusters stack_clusters;
  KnnGraph knn;
  MotionStack fwd, bwd, labels_fwd, labels_bwd;
};

GradCheckFixture make_gradcheck_fixture(const Config& cfg, std::uint64_t seed);

/// The terms L_sup, L_c, L_f, L_b, L_knn and the combined total over a fixture.
std::vector<GradTerm> standard_terms(const GradCheckFixture& fx);

}  // namespace bevmotion
