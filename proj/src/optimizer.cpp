#include "bevmotion/optimizer.hpp"

#include "bevmotion/parallel.hpp"

#include <cmath>
#include <sstream>

namespace bevmotion {

namespace {

constexpr double kRmsDecay = 0.9;
constexpr int kMaxBacktracks = 12;

void check_finite(const LossReport& rep) {
  for (const auto& e : rep.terms) {
    bool ok = std::isfinite(e.term.value);
    for (double g : e.term.grad_fwd) ok = ok && std::isfinite(g);
    for (double g : e.term.grad_bwd) ok = ok && std::isfinite(g);
    if (!ok) throw Error("optimizer: non-finite value or gradient in loss term " + e.name);
  }
}

}  // namespace

double label_error(const MotionStack& labels, const MotionStack& gt) {
  if (!labels.same_layout(gt)) throw Error("label_error: stacks differ in layout");
  if (gt.size() == 0 || gt.steps() == 0) return 0.0;
  double sum = 0.0;
  for (int s = 0; s < gt.steps(); ++s) {
    for (std::size_t k = 0; k < gt.size(); ++k) sum += (labels.at(s, k) - gt.at(s, k)).norm();
  }
  return sum / static_cast<double>(gt.size() * gt.steps());
}

void descend(MotionStack& fwd, MotionStack& bwd, const LossContext& ctx, const Config& cfg,
             const LossToggles& toggles, int steps, std::vector<double>& history) {
  const std::size_t nf = fwd.values().size(), nb = bwd.values().size();
  std::vector<double> ms(nf + nb, 0.0);

  LossReport rep = total_loss(fwd, bwd, ctx, cfg, toggles);
  check_finite(rep);
  double decay_pow = 1.0;
  MotionStack trial_f = fwd, trial_b = bwd;
  std::vector<double> dir(nf + nb);

  for (int it = 0; it < steps; ++it) {
    decay_pow *= kRmsDecay;
    for (std::size_t i = 0; i < nf + nb; ++i) {
      const double g = i < nf ? rep.grad_fwd[i] : rep.grad_bwd[i - nf];
      ms[i] = kRmsDecay * ms[i] + (1.0 - kRmsDecay) * g * g;
      const double rms = std::sqrt(ms[i] / (1.0 - decay_pow));
      dir[i] = rms > 0.0 ? -g / rms : 0.0;
    }

    double scale = cfg.opt_lr;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks && !accepted; ++bt, scale *= 0.5) {
      auto& tf = trial_f.values();
      auto& tb = trial_b.values();
      for (std::size_t i = 0; i < nf; ++i) tf[i] = fwd.values()[i] + scale * dir[i];
      for (std::size_t i = 0; i < nb; ++i) tb[i] = bwd.values()[i] + scale * dir[nf + i];
      LossReport trial = total_loss(trial_f, trial_b, ctx, cfg, toggles);
      check_finite(trial);
      if (trial.total <= rep.total) {
        std::swap(fwd, trial_f);
        std::swap(bwd, trial_b);
        rep = std::move(trial);
        accepted = true;
      }
    }
    history.push_back(rep.total);
  }
}

OptState optimize_scene(const SceneSequence& seq, const Config& cfg_in, const LossToggles& toggles) {
  const Config cfg = validate_config(cfg_in);
  const PreparedSequence prep = prepare_sequence(seq, cfg);
  if (prep.valid.empty()) throw Error("optimize_scene: the current frame has no occupied cells");
  const GridSpec grid = cfg.grid();

  OptState st;
  st.forward = MotionStack(grid, Direction::forward, cfg.T_prime, prep.valid);
  st.backward = MotionStack(grid, Direction::backward, cfg.T_prime, prep.valid);
  st.labels_fwd = st.forward;
  st.labels_bwd = st.backward;

  const CellSet& fg = prep.cells[prep.current];
  const StackClusters clusters = map_clusters(st.forward, fg, bfs_cluster(fg, cfg.d_c));
  std::optional<KnnGraph> knn;
  if (toggles.knn) knn = build_knn(st.forward, fg, cfg.knn_k);

  for (int round = 0; round < cfg.outer_rounds; ++round) {
    auto lf = label_stack(prep, st.forward, cfg);
    auto lb = label_stack(prep, st.backward, cfg);
    st.labels_fwd = std::move(lf.labels);
    st.labels_bwd = std::move(lb.labels);
    for (auto* w : {&lf.warnings, &lb.warnings}) {
      for (auto& msg : *w) st.warnings.push_back("round " + std::to_string(round + 1) + ": " + msg);
    }
    if (seq.ground_truth) st.label_error.push_back(label_error(st.labels_fwd, *seq.ground_truth));

    LossContext ctx{&st.labels_fwd, &st.labels_bwd, &clusters, knn ? &*knn : nullptr, cfg.opt_norm_smoothing};
    std::vector<double> hist;
    descend(st.forward, st.backward, ctx, cfg, toggles, cfg.opt_steps, hist);
    if (hist.empty()) hist.push_back(total_loss(st.forward, st.backward, ctx, cfg, toggles).total);
    st.round_loss.push_back(hist.back());
    if (hist.size() >= 2) {
      const double a = hist[hist.size() - 2], b = hist.back();
      st.converged = std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a));
    }
    st.step_loss.push_back(std::move(hist));
    ++st.rounds;
  }
  return st;
}

SuiteResult run_suite(const std::vector<SceneRecipe>& recipes, const Config& cfg, const LossToggles& toggles,
                      unsigned threads) {
  if (recipes.empty()) throw Error("run_suite: no recipes");
  SuiteResult out;
  out.toggles = toggles;
  out.scenes.resize(recipes.size());
  parallel_for(recipes.size(), threads, [&](std::size_t i) {
    const SceneSequence seq = generate(recipes[i], cfg);
    SceneResult r;
    r.name = recipes[i].name;
    r.state = optimize_scene(seq, cfg, toggles);
    r.ground_truth = seq.ground_truth;
    if (r.ground_truth) r.metrics = bucketed_errors(r.state.forward, *r.ground_truth, cfg);
    out.scenes[i] = std::move(r);
  });

  std::vector<const MotionStack*> preds, gts;
  for (const auto& s : out.scenes) {
    if (!s.ground_truth) continue;
    preds.push_back(&s.state.forward);
    gts.push_back(&*s.ground_truth);
  }
  if (!preds.empty()) out.pooled = bucketed_errors(preds, gts, cfg);
  return out;
}

DivergenceReport suite_divergence(const SuiteResult& suite) {
  DivergenceReport pooled;
  for (const auto& s : suite.scenes) {
    if (!s.ground_truth) continue;
    const auto r = divergence_report(s.state.forward, s.state.backward, *s.ground_truth, 0);
    pooled.error.insert(pooled.error.end(), r.error.begin(), r.error.end());
    pooled.divergence.insert(pooled.divergence.end(), r.divergence.begin(), r.divergence.end());
  }
  pooled.spearman = spearman(pooled.divergence, pooled.error);
  return pooled;
}

}  // namespace bevmotion
