#include "bevmotion/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bevmotion {

namespace {

void require_same_layout(const MotionStack& a, const MotionStack& b, const char* who) {
  if (!a.same_layout(b)) throw Error(std::string(who) + ": stacks differ in grid, steps or mask");
}

double huber(double x, double delta, double& dx) {
  const double ax = std::abs(x);
  if (ax < delta) {
    dx = x / delta;
    return 0.5 * x * x / delta;
  }
  dx = x > 0 ? 1.0 : -1.0;
  return ax - 0.5 * delta;
}

void add(std::vector<double>& g, int step, std::size_t k, std::size_t n, const Vec2& v) {
  const std::size_t o = (static_cast<std::size_t>(step) * n + k) * 2;
  g[o] += v.x();
  g[o + 1] += v.y();
}

// Accumulates sum_t |M_t(i) - M_t(j)| style pair terms for one stack.
void pair_term(const MotionStack& pred, std::size_t i, std::size_t j, double w, double mu, double& value,
               std::vector<double>& grad) {
  const std::size_t n = pred.size();
  for (int s = 0; s < pred.steps(); ++s) {
    const Vec2 d = pred.at(s, i) - pred.at(s, j);
    const double len = d.norm();
    if (len < mu) {
      value += w * 0.5 * len * len / mu;
      const Vec2 u = (w / mu) * d;
      add(grad, s, i, n, u);
      add(grad, s, j, n, -u);
      continue;
    }
    value += w * (len - 0.5 * mu);
    if (len > 0.0) {
      const Vec2 u = (w / len) * d;
      add(grad, s, i, n, u);
      add(grad, s, j, n, -u);
    }
  }
}

}  // namespace

SmoothL1 smooth_l1(const Vec2& pred, const Vec2& target, double delta) {
  SmoothL1 r;
  double gx = 0.0, gy = 0.0;
  r.value = 0.5 * (huber(pred.x() - target.x(), delta, gx) + huber(pred.y() - target.y(), delta, gy));
  r.grad = Vec2(0.5 * gx, 0.5 * gy);
  return r;
}

StackClusters map_clusters(const MotionStack& stack, const CellSet& cells, const ClusterSet& clusters) {
  StackClusters out;
  out.members.reserve(clusters.count());
  for (const auto& cl : clusters.clusters) {
    std::vector<std::size_t> m;
    m.reserve(cl.size());
    for (auto pos : cl) {
      auto k = stack.find(stack.grid().flat(cells.indices.at(pos)));
      if (!k) throw Error("map_clusters: clustered cell is outside the stack mask");
      m.push_back(*k);
    }
    out.members.push_back(std::move(m));
  }
  return out;
}

KnnGraph build_knn(const MotionStack& stack, const CellSet& cells, int k) {
  if (k < 1) throw Error("build_knn: K must be >= 1");
  KnnGraph g;
  const std::size_t n = cells.size();
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = stack.find(stack.grid().flat(cells.indices[i]));
    if (!p) throw Error("build_knn: cell is outside the stack mask");
    pos[i] = *p;
  }
  const std::size_t kk = std::min<std::size_t>(k, n > 0 ? n - 1 : 0);
  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.members.push_back(pos[i]);
    std::vector<std::size_t> nb;
    if (kk > 0) {
      d.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) d.emplace_back((cells.coords[i] - cells.coords[j]).squaredNorm(), j);
      }
      std::partial_sort(d.begin(), d.begin() + kk, d.end());
      for (std::size_t q = 0; q < kk; ++q) nb.push_back(pos[d[q].second]);
    }
    g.neighbors.push_back(std::move(nb));
  }
  return g;
}

LossTerm loss_sup(const MotionStack& pred, const MotionStack& labels, double delta) {
  require_same_layout(pred, labels, "loss_sup");
  if (pred.direction() != labels.direction()) throw Error("loss_sup: direction mismatch");
  LossTerm out;
  const std::size_t n = pred.size();
  out.grad_fwd.assign(pred.values().size(), 0.0);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int s = 0; s < pred.steps(); ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = smooth_l1(pred.at(s, k), labels.at(s, k), delta);
      out.value += inv_n * r.value;
      add(out.grad_fwd, s, k, n, inv_n * r.grad);
    }
  }
  return out;
}

LossTerm loss_cluster(const MotionStack& pred, const StackClusters& clusters, double smoothing) {
  LossTerm out;
  out.grad_fwd.assign(pred.values().size(), 0.0);
  if (clusters.members.empty()) return out;
  const double inv_s = 1.0 / static_cast<double>(clusters.members.size());
  for (const auto& m : clusters.members) {
    const double sz = static_cast<double>(m.size());
    // Each unordered pair appears twice among the ordered pairs.
    const double w = 2.0 * inv_s / (sz * sz);
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = a + 1; b < m.size(); ++b) pair_term(pred, m[a], m[b], w, smoothing, out.value, out.grad_fwd);
    }
  }
  return out;
}

LossTerm loss_cluster(const MotionStack& pred, const CellSet& cells, const ClusterSet& clusters) {
  return loss_cluster(pred, map_clusters(pred, cells, clusters));
}

LossTerm loss_knn(const MotionStack& pred, const KnnGraph& graph, double smoothing) {
  LossTerm out;
  out.grad_fwd.assign(pred.values().size(), 0.0);
  if (graph.members.size() < 2) return out;
  const double inv_n = 1.0 / static_cast<double>(graph.members.size());
  for (std::size_t q = 0; q < graph.members.size(); ++q) {
    const auto& nb = graph.neighbors[q];
    if (nb.empty()) continue;
    const double w = inv_n / static_cast<double>(nb.size());
    for (auto j : nb) pair_term(pred, graph.members[q], j, w, smoothing, out.value, out.grad_fwd);
  }
  return out;
}

LossTerm loss_knn(const MotionStack& pred, const CellSet& cells, int k) {
  return loss_knn(pred, build_knn(pred, cells, k));
}

LossTerm loss_forward(const MotionStack& pred, double delta) {
  LossTerm out;
  const std::size_t n = pred.size();
  out.grad_fwd.assign(pred.values().size(), 0.0);
  if (n == 0 || pred.steps() < 2) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int s = 0; s + 1 < pred.steps(); ++s) {
    const double t = s + 1;
    const double ratio = t / (t + 1.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = smooth_l1(pred.at(s, k), ratio * pred.at(s + 1, k), delta);
      out.value += inv_n * r.value;
      add(out.grad_fwd, s, k, n, inv_n * r.grad);
      add(out.grad_fwd, s + 1, k, n, -ratio * inv_n * r.grad);
    }
  }
  return out;
}

double backward_weight(int t, double theta_b, bool exp_weighting) {
  return exp_weighting ? std::exp(-static_cast<double>(t) / theta_b) : 1.0;
}

LossTerm loss_backward(const MotionStack& fwd, const MotionStack& bwd, double theta_b, double delta,
                       bool exp_weighting) {
  require_same_layout(fwd, bwd, "loss_backward");
  if (fwd.direction() != Direction::forward || bwd.direction() != Direction::backward) {
    throw Error("loss_backward: expected a forward and a backward stack");
  }
  LossTerm out;
  const std::size_t n = fwd.size();
  out.grad_fwd.assign(fwd.values().size(), 0.0);
  out.grad_bwd.assign(bwd.values().size(), 0.0);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int s = 0; s < fwd.steps(); ++s) {
    const double w = inv_n * backward_weight(s + 1, theta_b, exp_weighting);
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = smooth_l1(fwd.at(s, k), -bwd.at(s, k), delta);
      out.value += w * r.value;
      add(out.grad_fwd, s, k, n, w * r.grad);
      add(out.grad_bwd, s, k, n, w * r.grad);
    }
  }
  return out;
}

LossToggles LossToggles::parse(const std::string& list) {
  LossToggles t{false, false, false, false, false};
  std::stringstream ss(list);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item == "sup") t.sup = true;
    else if (item == "c") t.c = true;
    else if (item == "f") t.f = true;
    else if (item == "b") t.b = true;
    else if (item == "knn") t.knn = true;
    else throw Error("unknown loss toggle '" + item + "'; valid names are {sup, c, f, b, knn}");
    any = true;
  }
  if (!any) throw Error("empty loss toggle list; valid names are {sup, c, f, b, knn}");
  return t;
}

std::string LossToggles::str() const {
  std::string s;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ',';
    s += name;
  };
  put(sup, "sup");
  put(c, "c");
  put(f, "f");
  put(b, "b");
  put(knn, "knn");
  return s;
}

std::vector<LossToggles> ablation_rows() {
  // {sup, c, f, b}
  return {
      {true, false, false, false, false},  // 1
      {true, false, false, true, false},   // 2
      {true, false, true, false, false},   // 3
      {true, false, true, true, false},    // 4
      {true, true, false, true, false},    // 5
      {true, true, false, false, false},   // 6
      {true, true, true, false, false},    // 7
      {true, true, true, true, false},     // 8
  };
}

double LossReport::value(const std::string& name) const {
  for (const auto& e : terms) {
    if (e.name == name) return e.term.value;
  }
  throw Error("LossReport: no term named " + name);
}

LossReport total_loss(const MotionStack& fwd, const MotionStack& bwd, const LossContext& ctx,
                      const Config& cfg, const LossToggles& toggles) {
  require_same_layout(fwd, bwd, "total_loss");
  LossReport rep;
  rep.grad_fwd.assign(fwd.values().size(), 0.0);
  rep.grad_bwd.assign(bwd.values().size(), 0.0);
  const double delta = cfg.smooth_l1_delta;

  auto push = [&](std::string name, double weight, LossTerm term, bool on_bwd) {
    auto& target = on_bwd ? rep.grad_bwd : rep.grad_fwd;
    if (weight != 0.0) {
      rep.total += weight * term.value;
      for (std::size_t i = 0; i < term.grad_fwd.size(); ++i) target[i] += weight * term.grad_fwd[i];
      for (std::size_t i = 0; i < term.grad_bwd.size(); ++i) rep.grad_bwd[i] += weight * term.grad_bwd[i];
    }
    rep.terms.push_back({std::move(name), weight, std::move(term)});
  };

  if (toggles.sup) {
    if (!ctx.labels_fwd || !ctx.labels_bwd) throw Error("total_loss: supervision needs both label stacks");
    push("sup_fwd", 1.0, loss_sup(fwd, *ctx.labels_fwd, delta), false);
    push("sup_bwd", 1.0, loss_sup(bwd, *ctx.labels_bwd, delta), true);
  }
  if (toggles.c) {
    if (!ctx.clusters) throw Error("total_loss: cluster consistency needs clusters");
    push("c_fwd", cfg.alpha, loss_cluster(fwd, *ctx.clusters, ctx.norm_smoothing), false);
    push("c_bwd", cfg.alpha, loss_cluster(bwd, *ctx.clusters, ctx.norm_smoothing), true);
  }
  if (toggles.knn) {
    if (!ctx.knn) throw Error("total_loss: KNN consistency needs a neighbor graph");
    push("knn_fwd", cfg.alpha, loss_knn(fwd, *ctx.knn, ctx.norm_smoothing), false);
    push("knn_bwd", cfg.alpha, loss_knn(bwd, *ctx.knn, ctx.norm_smoothing), true);
  }
  if (toggles.f) {
    push("f_fwd", cfg.beta, loss_forward(fwd, delta), false);
    push("f_bwd", cfg.beta, loss_forward(bwd, delta), true);
  }
  if (toggles.b) {
    push("b", cfg.gamma, loss_backward(fwd, bwd, cfg.theta_b, delta, cfg.backward_exp_weighting), false);
  }
  return rep;
}

}  // namespace bevmotion
