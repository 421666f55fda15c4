#pragma once

#include "bevmotion/core.hpp"

#include <array>
#include <optional>
#include <vector>

namespace bevmotion {

enum class SpeedBucket { static_, slow, fast };

const char* to_string(SpeedBucket b);

/// Static below static_speed_threshold, slow up to and including 5 m/s, fast above.
SpeedBucket classify_speed(double speed, double static_threshold);

struct BucketStats {
  std::optional<double> mean;
  std::optional<double> median;  // lower median for even counts
  std::size_t count = 0;
};

struct BucketedMetrics {
  int horizon = 0;  // 1-based step evaluated
  std::array<BucketStats, 3> buckets;
  // per_step[s][bucket]: the same statistics at horizon s + 1, bucketed by
  // the speed measured at the final horizon.
  std::vector<std::array<BucketStats, 3>> per_step;

  const BucketStats& operator[](SpeedBucket b) const { return buckets[static_cast<int>(b)]; }
};

/// Deterministic lower median; empty input yields nullopt.
std::optional<double> lower_median(std::vector<double> values);

/// L2 error per valid cell at the last horizon, grouped by ground-truth speed
/// |GT_T'| / (T' frame_dt). Throws if the stacks do not share a layout.
BucketedMetrics bucketed_errors(const MotionStack& pred, const MotionStack& gt, const Config& cfg);

/// Same statistics pooled over the cells of several scenes.
BucketedMetrics bucketed_errors(const std::vector<const MotionStack*>& preds,
                                const std::vector<const MotionStack*>& gts, const Config& cfg);

struct DivergenceReport {
  std::vector<double> error;       // |F_T' - GT_T'| per valid cell
  std::vector<double> divergence;  // sum_t |F_t + B_t| per valid cell
  std::optional<double> spearman;  // nullopt below three cells or with a constant series
  // Mean error per divergence decile (equal-count bins, ascending divergence).
  std::vector<double> binned_divergence;
  std::vector<double> binned_error;
};

/// Spearman rank correlation with average ranks for ties.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

DivergenceReport divergence_report(const MotionStack& fwd, const MotionStack& bwd, const MotionStack& gt,
                                   int bins = 10);

}  // namespace bevmotion
