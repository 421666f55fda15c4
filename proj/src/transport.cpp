#include "bevmotion/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bevmotion {

namespace {

constexpr double kScaleLo = 1e-100;
constexpr double kScaleHi = 1e100;

bool out_of_band(const Eigen::VectorXd& s) {
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double v = s(i);
    if (!(v >= kScaleLo && v <= kScaleHi)) return true;
  }
  return false;
}

std::uint64_t frame_seed(std::uint64_t base, std::size_t frame) {
  // splitmix64 finalizer over (base, frame)
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (frame + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

CostMatrix cost_matrix(const std::vector<Vec2>& source, const std::vector<Vec2>& target,
                       double theta_c) {
  if (source.empty() || target.empty()) throw Error("cost_matrix: empty cell set");
  if (!(theta_c > 0.0)) throw Error("cost_matrix: theta_c must be > 0");
  CostMatrix c;
  c.theta_c = theta_c;
  c.values.resize(static_cast<Eigen::Index>(source.size()), static_cast<Eigen::Index>(target.size()));
  for (std::size_t j = 0; j < target.size(); ++j) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      const double d2 = (source[i] - target[j]).squaredNorm();
      c.values(i, j) = -std::expm1(-d2 / theta_c);
    }
  }
  return c;
}

TransportPlan sinkhorn(const CostMatrix& cost, double epsilon, int max_iters, double tol) {
  const Eigen::MatrixXd& C = cost.values;
  const Eigen::Index n = C.rows(), m = C.cols();
  if (n == 0 || m == 0) throw Error("sinkhorn: empty cost matrix");
  if (!C.allFinite()) throw Error("sinkhorn: cost matrix contains NaN or infinity");
  if (!(epsilon > 0.0)) throw Error("sinkhorn: epsilon must be > 0");

  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  const double log_a = std::log(a), log_b = std::log(b);

  // Dual potentials; the kernel is exp((alpha_i + beta_j - C_ij) / eps).
  Eigen::VectorXd alpha = C.rowwise().minCoeff();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd K(n, m);
  auto rebuild = [&] {
    K = ((-C).colwise() + alpha).rowwise() + beta.transpose();
    K = (K / epsilon).array().exp().matrix();
  };
  auto softmin_rows = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd z = (beta.transpose().array() - C.row(i).array()) / epsilon;
      const double mx = z.maxCoeff();
      alpha(i) = epsilon * (log_a - mx - std::log((z - mx).exp().sum()));
    }
  };
  auto softmin_cols = [&] {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::ArrayXd z = (alpha.array() - C.col(j).array()) / epsilon;
      const double mx = z.maxCoeff();
      beta(j) = epsilon * (log_b - mx - std::log((z - mx).exp().sum()));
    }
  };
  rebuild();

  Eigen::VectorXd u = Eigen::VectorXd::Ones(n), v = Eigen::VectorXd::Ones(m);
  TransportPlan plan;
  plan.epsilon = epsilon;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Eigen::VectorXd Kv = K * v;
    // Columns are exact after every v update, so the row error is the only
    // marginal left to check.
    if (it > 0) {
      const double row_err = ((u.array() * Kv.array()) - a).abs().maxCoeff();
      if (row_err < tol) {
        plan.converged = true;
        break;
      }
    }
    u = (a / Kv.array()).matrix();
    v = (b / (K.transpose() * u).array()).matrix();
    if (out_of_band(u) || out_of_band(v)) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isfinite(u(i)) && u(i) > 0.0) alpha(i) += epsilon * std::log(u(i));
      }
      softmin_cols();
      softmin_rows();
      softmin_cols();
      rebuild();
      u.setOnes();
      v.setOnes();
    }
  }
  plan.iterations = it;
  plan.values = u.asDiagonal() * K * v.asDiagonal();
  if (!plan.values.allFinite()) throw Error("sinkhorn: transport plan contains NaN");

  const double row_dev = (plan.values.rowwise().sum().array() - a).abs().maxCoeff();
  const double col_dev = (plan.values.colwise().sum().array() - b).abs().maxCoeff();
  plan.marginal_error = std::max(row_dev, col_dev);
  return plan;
}

std::vector<Vec2> pseudo_labels(const TransportPlan& plan, const std::vector<Vec2>& source,
                                const std::vector<Vec2>& target, LabelMode mode) {
  const Eigen::MatrixXd& P = plan.values;
  if (P.rows() != static_cast<Eigen::Index>(source.size()) ||
      P.cols() != static_cast<Eigen::Index>(target.size())) {
    throw Error("pseudo_labels: plan shape does not match the cell sets");
  }
  Eigen::MatrixXd T(target.size(), 2);
  for (std::size_t j = 0; j < target.size(); ++j) T.row(j) = target[j].transpose();
  const Eigen::MatrixXd PT = P * T;
  const Eigen::VectorXd mass = P.rowwise().sum();

  std::vector<Vec2> labels(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    Vec2 proj = PT.row(i).transpose();
    if (mode == LabelMode::barycentric) {
      if (!(mass(i) > 0.0)) throw Error("pseudo_labels: source cell carries no transport mass");
      proj /= mass(i);
    }
    labels[i] = proj - source[i];
  }
  return labels;
}

std::vector<Vec2> prewarp(const CellSet& source, const MotionStack& prediction, int step) {
  if (step < 1 || step > prediction.steps()) throw Error("prewarp: step outside the prediction");
  std::vector<Vec2> out(source.size());
  const GridSpec& g = prediction.grid();
  for (std::size_t i = 0; i < source.size(); ++i) {
    auto k = prediction.find(g.flat(source.indices[i]));
    if (!k) throw Error("prewarp: source cell is not covered by the prediction");
    out[i] = source.coords[i] + prediction.at(step - 1, *k);
  }
  return out;
}

std::vector<std::int32_t> current_cells(const SceneSequence& seq, const GridSpec& grid) {
  const CellSet cs = extract_cells(voxelize(seq.current_frame(), grid));
  std::vector<std::int32_t> flat;
  flat.reserve(cs.size());
  for (const auto& c : cs.indices) flat.push_back(grid.flat(c));
  return flat;
}

PreparedSequence prepare_sequence(const SceneSequence& seq, const Config& cfg) {
  check_sequence(seq, cfg);
  PreparedSequence p;
  p.current = seq.current;
  p.past_available = seq.past_available();
  p.future_available = seq.future_available();
  p.cells.reserve(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    p.cells.push_back(foreground_cells(seq.frames[f], cfg, frame_seed(cfg.rng_seed, f)));
  }
  p.valid = current_cells(seq, cfg.grid());
  return p;
}

LabelStackResult label_stack(const PreparedSequence& prep, const MotionStack& prediction,
                             const Config& cfg) {
  const GridSpec grid = cfg.grid();
  const Direction dir = prediction.direction();
  const int available = dir == Direction::forward ? prep.future_available : prep.past_available;
  if (available < cfg.T_prime) {
    std::ostringstream os;
    os << "label_stack: " << to_string(dir) << " labels need " << cfg.T_prime << " frames, sequence has "
       << available;
    throw Error(os.str());
  }
  if (prediction.grid() != grid || prediction.steps() != cfg.T_prime) {
    throw Error("label_stack: prediction layout does not match the configuration");
  }

  LabelStackResult res{MotionStack(grid, dir, cfg.T_prime, prep.valid), {}, 0};
  const CellSet& source = prep.cells[prep.current];
  for (int t = 1; t <= cfg.T_prime; ++t) {
    const std::size_t tgt_idx = dir == Direction::forward ? prep.current + t : prep.current - t;
    const CellSet& target = prep.cells[tgt_idx];
    if (source.empty() || target.empty()) {
      std::ostringstream os;
      os << "step " << t << ": empty " << (source.empty() ? "source" : "target")
         << " cell set, labels left at zero";
      res.warnings.push_back(os.str());
      continue;
    }
    const auto warped = prewarp(source, prediction, t);
    const auto plan = sinkhorn(cost_matrix(warped, target.coords, cfg.theta_c), cfg.sinkhorn_epsilon,
                               cfg.sinkhorn_iters, cfg.sinkhorn_tol);
    if (!plan.converged) ++res.unconverged_steps;
    const auto labels = pseudo_labels(plan, source.coords, target.coords, cfg.label_mode);
    for (std::size_t i = 0; i < source.size(); ++i) {
      auto k = res.labels.find(grid.flat(source.indices[i]));
      if (k) res.labels.set(t - 1, *k, labels[i]);
    }
  }
  return res;
}

LabelStackResult label_stack(const SceneSequence& seq, const MotionStack& prediction,
                             const Config& cfg) {
  return label_stack(prepare_sequence(seq, cfg), prediction, cfg);
}

}  // namespace bevmotion
