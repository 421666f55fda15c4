#include "bevmotion/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>

namespace bevmotion {

GradCheckResult check_gradient(const GradTerm& term, const MotionStack& fwd, const MotionStack& bwd,
                               const GradCheckOptions& opt) {
  GradCheckResult res;
  res.term = term.name;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> noise(-opt.perturbation, opt.perturbation);

  for (int p = 0; p < opt.points; ++p) {
    MotionStack f = fwd, b = bwd;
    for (auto& v : f.values()) v += noise(rng);
    for (auto& v : b.values()) v += noise(rng);

    const LossTerm at = term.eval(f, b);
    std::vector<int> stacks;
    if (!at.grad_fwd.empty()) stacks.push_back(0);
    if (!at.grad_bwd.empty()) stacks.push_back(1);
    if (stacks.empty()) throw Error("check_gradient: term " + term.name + " reports no gradient");

    const int which = stacks[std::uniform_int_distribution<std::size_t>(0, stacks.size() - 1)(rng)];
    MotionStack& target = which == 0 ? f : b;
    const auto& grad = which == 0 ? at.grad_fwd : at.grad_bwd;
    const std::size_t coord = std::uniform_int_distribution<std::size_t>(0, grad.size() - 1)(rng);

    const double orig = target.values()[coord];
    target.values()[coord] = orig + opt.step;
    const double up = term.eval(f, b).value;
    target.values()[coord] = orig - opt.step;
    const double down = term.eval(f, b).value;
    target.values()[coord] = orig;

    const double numeric = (up - down) / (2.0 * opt.step);
    const double analytic = grad[coord];
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    const double rel = scale < 1e-12 ? 0.0 : std::abs(numeric - analytic) / scale;

    ++res.points;
    if (rel >= res.max_rel_error) {
      res.max_rel_error = rel;
      const std::size_t cell_pos = (coord / 2) % target.size();
      res.stack = which == 0 ? "forward" : "backward";
      res.step = static_cast<int>(coord / 2 / target.size()) + 1;
      res.cell = target.grid().unflat(target.cells()[cell_pos]);
      res.component = static_cast<int>(coord % 2);
      res.analytic = analytic;
      res.numeric = numeric;
    }
  }
  res.passed = res.max_rel_error < opt.tolerance;
  return res;
}

GradCheckFixture make_gradcheck_fixture(const Config& base, std::uint64_t seed) {
  GradCheckFixture fx;
  fx.cfg = base;
  fx.cfg.x_range = {-4.0, 4.0};
  fx.cfg.y_range = {-4.0, 4.0};
  const GridSpec grid = fx.cfg.grid();
  std::mt19937_64 rng(seed);

  // A few compact blobs plus isolated cells, so clusters of several sizes exist.
  std::set<std::int32_t> chosen;
  std::uniform_int_distribution<int> coord(0, grid.H() - 1);
  std::uniform_int_distribution<int> jitter(-2, 2);
  for (int blob = 0; blob < 4; ++blob) {
    const int r0 = coord(rng), c0 = coord(rng);
    for (int i = 0; i < 8; ++i) {
      const CellIndex c{std::clamp(r0 + jitter(rng), 0, grid.H() - 1), std::clamp(c0 + jitter(rng), 0, grid.W() - 1)};
      chosen.insert(grid.flat(c));
    }
  }
  for (int i = 0; i < 6; ++i) chosen.insert(grid.flat({coord(rng), coord(rng)}));

  std::vector<std::int32_t> cells(chosen.begin(), chosen.end());
  for (auto f : cells) {
    const CellIndex c = grid.unflat(f);
    fx.cells.indices.push_back(c);
    fx.cells.coords.push_back(grid.cell_center(c));
  }
  fx.clusters = bfs_cluster(fx.cells, fx.cfg.d_c);

  const int steps = fx.cfg.T_prime;
  fx.fwd = MotionStack(grid, Direction::forward, steps, cells);
  fx.bwd = MotionStack(grid, Direction::backward, steps, cells);
  fx.labels_fwd = fx.fwd;
  fx.labels_bwd = fx.bwd;
  // Spread of 1.5 m puts component differences on both sides of the 1 m
  // smooth-L1 breakpoint.
  std::normal_distribution<double> motion(0.0, 1.5);
  for (auto* s : {&fx.fwd, &fx.bwd, &fx.labels_fwd, &fx.labels_bwd}) {
    for (auto& v : s->values()) v = motion(rng);
  }
  fx.stack_clusters = map_clusters(fx.fwd, fx.cells, fx.clusters);
  fx.knn = build_knn(fx.fwd, fx.cells, fx.cfg.knn_k);
  return fx;
}

std::vector<GradTerm> standard_terms(const GradCheckFixture& fx) {
  const Config cfg = fx.cfg;
  const double delta = cfg.smooth_l1_delta;
  // Copies keep the closures valid independently of the fixture's lifetime.
  auto labels_fwd = std::make_shared<MotionStack>(fx.labels_fwd);
  auto labels_bwd = std::make_shared<MotionStack>(fx.labels_bwd);
  auto clusters = std::make_shared<StackClusters>(fx.stack_clusters);
  auto knn = std::make_shared<KnnGraph>(fx.knn);

  std::vector<GradTerm> terms;
  terms.push_back({"L_sup", [=](const MotionStack& f, const MotionStack&) {
                     return loss_sup(f, *labels_fwd, delta);
                   }});
  terms.push_back({"L_c", [=](const MotionStack& f, const MotionStack&) { return loss_cluster(f, *clusters); }});
  terms.push_back({"L_f", [=](const MotionStack& f, const MotionStack&) { return loss_forward(f, delta); }});
  terms.push_back({"L_b", [=](const MotionStack& f, const MotionStack& b) {
                     return loss_backward(f, b, cfg.theta_b, delta, cfg.backward_exp_weighting);
                   }});
  terms.push_back({"L_knn", [=](const MotionStack& f, const MotionStack&) { return loss_knn(f, *knn); }});
  terms.push_back({"L_total", [=](const MotionStack& f, const MotionStack& b) {
                     LossContext ctx{labels_fwd.get(), labels_bwd.get(), clusters.get(), knn.get()};
                     const auto rep = total_loss(f, b, ctx, cfg, LossToggles{true, true, true, true, true});
                     return LossTerm{rep.total, rep.grad_fwd, rep.grad_bwd};
                   }});
  return terms;
}

}  // namespace bevmotion
