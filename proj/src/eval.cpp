#include "bevmotion/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bevmotion {

namespace {

BucketStats summarize(const std::vector<double>& errs) {
  BucketStats s;
  s.count = errs.size();
  if (errs.empty()) return s;
  s.mean = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
  s.median = lower_median(errs);
  return s;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

const char* to_string(SpeedBucket b) {
  switch (b) {
    case SpeedBucket::static_: return "static";
    case SpeedBucket::slow: return "slow";
    case SpeedBucket::fast: return "fast";
  }
  return "?";
}

SpeedBucket classify_speed(double speed, double static_threshold) {
  if (speed < static_threshold) return SpeedBucket::static_;
  if (speed <= 5.0) return SpeedBucket::slow;
  return SpeedBucket::fast;
}

std::optional<double> lower_median(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

BucketedMetrics bucketed_errors(const std::vector<const MotionStack*>& preds,
                                const std::vector<const MotionStack*>& gts, const Config& cfg) {
  if (preds.size() != gts.size() || preds.empty()) {
    throw Error("bucketed_errors: need one prediction per ground truth");
  }
  const int steps = gts.front()->steps();
  if (steps < 1) throw Error("bucketed_errors: ground truth has no steps");
  std::vector<std::array<std::vector<double>, 3>> errs(steps);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const MotionStack& pred = *preds[i];
    const MotionStack& gt = *gts[i];
    if (!pred.same_layout(gt) || gt.steps() != steps) {
      throw Error("bucketed_errors: prediction and ground truth differ in layout");
    }
    const double horizon_s = steps * cfg.frame_dt;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const double speed = gt.at(steps - 1, k).norm() / horizon_s;
      const int b = static_cast<int>(classify_speed(speed, cfg.static_speed_threshold));
      for (int s = 0; s < steps; ++s) errs[s][b].push_back((pred.at(s, k) - gt.at(s, k)).norm());
    }
  }
  BucketedMetrics m;
  m.horizon = steps;
  for (int s = 0; s < steps; ++s) {
    std::array<BucketStats, 3> stats;
    for (int b = 0; b < 3; ++b) stats[b] = summarize(errs[s][b]);
    m.per_step.push_back(stats);
  }
  m.buckets = m.per_step.back();
  return m;
}

BucketedMetrics bucketed_errors(const MotionStack& pred, const MotionStack& gt, const Config& cfg) {
  return bucketed_errors(std::vector<const MotionStack*>{&pred}, std::vector<const MotionStack*>{&gt}, cfg);
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("spearman: series lengths differ");
  if (x.size() < 3) return std::nullopt;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

DivergenceReport divergence_report(const MotionStack& fwd, const MotionStack& bwd, const MotionStack& gt,
                                   int bins) {
  if (!fwd.same_layout(bwd) || !fwd.same_layout(gt)) {
    throw Error("divergence_report: stacks differ in layout");
  }
  DivergenceReport r;
  const int last = fwd.steps() - 1;
  for (std::size_t k = 0; k < fwd.size(); ++k) {
    double div = 0.0;
    for (int s = 0; s < fwd.steps(); ++s) div += (fwd.at(s, k) + bwd.at(s, k)).norm();
    r.divergence.push_back(div);
    r.error.push_back(last >= 0 ? (fwd.at(last, k) - gt.at(last, k)).norm() : 0.0);
  }
  r.spearman = spearman(r.divergence, r.error);

  if (bins > 0 && !r.divergence.empty()) {
    std::vector<std::size_t> order(r.divergence.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.divergence[a] < r.divergence[b]; });
    const std::size_t n = order.size();
    const std::size_t nb = std::min<std::size_t>(bins, n);
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t lo = b * n / nb, hi = (b + 1) * n / nb;
      double sd = 0, se = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        sd += r.divergence[order[i]];
        se += r.error[order[i]];
      }
      r.binned_divergence.push_back(sd / static_cast<double>(hi - lo));
      r.binned_error.push_back(se / static_cast<double>(hi - lo));
    }
  }
  return r;
}

}  // namespace bevmotion
