#pragma once

// Recurrent coefficient estimator: GRU over a state/input history, a dense
// head, the Physics Guard, then one step of the discrete vehicle model.

#include "fisherpinn/datagen.hpp"
#include "fisherpinn/dynamics.hpp"
#include "fisherpinn/nn.hpp"
#include "fisherpinn/training.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

namespace fisherpinn {

/// 1/3 sum over (vx, vy, omega) of squared errors, averaged over columns.
/// Rows are either the full 6-state or just the three velocity states.
inline double ddm_loss(const Matrix& predicted, const Matrix& observed) {
  if (predicted.rows() != observed.rows() || predicted.cols() != observed.cols())
    throw DimensionError("ddm_loss: shape mismatch");
  if (predicted.rows() != 3 && predicted.rows() != 6) throw DimensionError("ddm_loss expects 3 or 6 state rows");
  if (predicted.cols() == 0) throw std::invalid_argument("ddm_loss over an empty batch");
  const Eigen::Index off = predicted.rows() == 6 ? 3 : 0;
  return (predicted.middleRows(off, 3) - observed.middleRows(off, 3)).squaredNorm() / (3.0 * predicted.cols());
}

inline double ddm_loss(const Vector& predicted, const Vector& observed) {
  return ddm_loss(Matrix(predicted), Matrix(observed));
}

/// Guard bounds scaled around nominal coefficients: [lo * |c|, hi * |c|]
/// with the ordering flipped for negative nominals.
inline nn::PhysicsGuardBounds scaled_guard_bounds(const std::array<double, kNumCoefficients>& nominal, double lo,
                                                  double hi) {
  nn::PhysicsGuardBounds b{Vector(static_cast<Eigen::Index>(kNumCoefficients)),
                           Vector(static_cast<Eigen::Index>(kNumCoefficients))};
  for (std::size_t i = 0; i < kNumCoefficients; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double a = lo * nominal[i], c = hi * nominal[i];
    b.lower[k] = std::min(a, c);
    b.upper[k] = std::max(a, c);
  }
  b.validate();
  return b;
}

struct EstimatorConfig {
  int tau = 5;
  int hidden = 32;
  int dense = 32;
  double learning_rate = 1.9e-3;
  int epochs = 40;
  int batch_size = 256;
  nn::PhysicsGuardBounds bounds;
  std::uint64_t seed = 0;

  void validate() const {
    if (tau < 1) throw ConfigError("history length tau must be at least 1");
    if (hidden < 1 || dense < 1) throw ConfigError("estimator layer sizes must be positive");
    if (epochs < 0 || batch_size < 1) throw ConfigError("estimator epochs/batch size invalid");
    if (!(learning_rate > 0)) throw ConfigError("estimator learning rate must be positive");
    if (bounds.lower.size() != static_cast<Eigen::Index>(kNumCoefficients))
      throw ConfigError("guard bounds must cover all " + std::to_string(kNumCoefficients) + " coefficients");
    bounds.validate();
  }
};

inline constexpr int kEstimatorFeatures = 5;  // vx, vy, omega, throttle, delta

struct EstimatorParams {
  nn::GruSpec gru;
  nn::NetworkParams head;
  Vector feature_offset;
  Vector feature_scale;
  nn::PhysicsGuardBounds bounds;
  int tau = 5;
};

/// History windows: features at t-tau+1..t, the state/input at t and the
/// observed next state.
struct EstimatorWindows {
  std::vector<Matrix> history;  // tau entries, features x W
  Matrix state;                 // 6 x W
  Matrix input;                 // 2 x W
  Matrix next;                  // 6 x W
  std::vector<double> t;
  std::vector<int> trajectory;
  Eigen::Index count() const { return state.cols(); }

  EstimatorWindows subset(const std::vector<Eigen::Index>& cols) const {
    EstimatorWindows w;
    for (const auto& h : history) w.history.push_back(h(Eigen::all, cols));
    w.state = state(Eigen::all, cols);
    w.input = input(Eigen::all, cols);
    w.next = next(Eigen::all, cols);
    for (auto c : cols) {
      w.t.push_back(t[static_cast<std::size_t>(c)]);
      w.trajectory.push_back(trajectory[static_cast<std::size_t>(c)]);
    }
    return w;
  }
};

inline EstimatorWindows make_estimator_windows(const std::vector<Trajectory>& trs, int tau) {
  if (tau < 1) throw ConfigError("history length tau must be at least 1");
  std::vector<std::pair<int, std::size_t>> idx;
  for (std::size_t k = 0; k < trs.size(); ++k)
    for (std::size_t i = static_cast<std::size_t>(tau - 1); i + 1 < trs[k].size(); ++i)
      idx.emplace_back(static_cast<int>(k), i);
  if (idx.empty()) throw ConfigError("trajectories too short for history length " + std::to_string(tau));
  const auto n = static_cast<Eigen::Index>(idx.size());
  EstimatorWindows w;
  w.history.assign(static_cast<std::size_t>(tau), Matrix(kEstimatorFeatures, n));
  w.state.resize(6, n);
  w.input.resize(2, n);
  w.next.resize(6, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto [k, i] = idx[static_cast<std::size_t>(c)];
    const Trajectory& tr = trs[static_cast<std::size_t>(k)];
    for (int j = 0; j < tau; ++j) {
      const std::size_t s = i + 1 - static_cast<std::size_t>(tau) + static_cast<std::size_t>(j);
      w.history[static_cast<std::size_t>(j)].col(c) << tr.states[s].segment(3, 3), tr.inputs[s];
    }
    w.state.col(c) = tr.states[i];
    w.input.col(c) = tr.inputs[i];
    w.next.col(c) = tr.states[i + 1];
    w.t.push_back(tr.t[i]);
    w.trajectory.push_back(k);
  }
  return w;
}

inline EstimatorParams make_estimator(const EstimatorConfig& cfg, const EstimatorWindows& data) {
  cfg.validate();
  EstimatorParams p;
  p.tau = cfg.tau;
  p.bounds = cfg.bounds;
  p.gru = nn::GruSpec::random(kEstimatorFeatures, cfg.hidden, mix_seed(cfg.seed, 1));
  p.head = nn::make_mlp(cfg.hidden, {{cfg.dense, nn::Activation::mish}}, static_cast<int>(kNumCoefficients),
                        mix_seed(cfg.seed, 2));
  const Matrix& last = data.history.back();
  p.feature_offset = last.rowwise().mean();
  p.feature_scale = Vector(kEstimatorFeatures);
  for (int r = 0; r < kEstimatorFeatures; ++r) {
    const double sd = std::sqrt((last.row(r).array() - p.feature_offset[r]).square().mean());
    p.feature_scale[r] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return p;
}

struct EstimatorForward {
  std::vector<nn::GruBatchCache> gru_cache;
  nn::ForwardCache head_cache;
  Matrix z;       // unconstrained head outputs
  Matrix phi;     // guarded coefficients, kNumCoefficients x W
  Matrix pred;    // predicted next state, 6 x W
};

inline std::vector<Matrix> normalized_history(const EstimatorParams& p, const EstimatorWindows& w) {
  std::vector<Matrix> h;
  for (const auto& m : w.history)
    h.push_back((m.colwise() - p.feature_offset).array().colwise() * p.feature_scale.array());
  return h;
}

inline Matrix estimate_coefficients(const EstimatorParams& p, const EstimatorWindows& w, EstimatorForward* fw = nullptr) {
  const Matrix hidden = nn::gru_forward_batch(p.gru, normalized_history(p, w), fw ? &fw->gru_cache : nullptr);
  Matrix z = nn::forward_batch(p.head, hidden, fw ? &fw->head_cache : nullptr);
  Matrix phi(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) phi.col(c) = nn::physics_guard(z.col(c), p.bounds);
  if (fw) fw->z = std::move(z);
  return phi;
}

inline DynamicModel with_coefficients(const DynamicModel& nominal, const Vector& phi) {
  DynamicModel m = nominal;
  m.disturbances.clear();
  std::array<double, kNumCoefficients> c{};
  for (std::size_t i = 0; i < kNumCoefficients; ++i) c[i] = phi[static_cast<Eigen::Index>(i)];
  m.set_coefficients(c);
  return m;
}

/// Forward pass through the physics step; the nominal model supplies the
/// known quantities (mass, axle distances, Ts) and no disturbances.
inline double estimator_loss(const EstimatorParams& p, const DynamicModel& nominal, const EstimatorWindows& w,
                             EstimatorForward* fw_out = nullptr, Matrix* dphi = nullptr) {
  EstimatorForward local;
  EstimatorForward& fw = fw_out ? *fw_out : local;
  fw.phi = estimate_coefficients(p, w, &fw);
  const Eigen::Index n = w.count();
  const double ts = nominal.vehicle.Ts;
  fw.pred.resize(6, n);
  if (dphi) dphi->resize(static_cast<Eigen::Index>(kNumCoefficients), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const DynamicModel m = with_coefficients(nominal, fw.phi.col(c));
    const DynamicState s = DynamicState::from_vector(w.state.col(c));
    const DynamicInput u = DynamicInput::from_vector(w.input.col(c));
    fw.pred.col(c) = w.state.col(c) + ts * dynamic_rhs(s, u, m);
    if (dphi) {
      const Vector err = fw.pred.col(c).segment(3, 3) - w.next.col(c).segment(3, 3);
      const Matrix g = dynamic_rhs_coefficient_gradient(s, u, m);
      dphi->col(c) = ts * g.transpose() * (2.0 / (3.0 * static_cast<double>(n)) * err);
    }
  }
  const double loss = ddm_loss(fw.pred, w.next);
  if (!std::isfinite(loss)) throw NumericError("non-finite estimator loss");
  return loss;
}

struct EstimatorGradients {
  nn::GruGradients gru;
  nn::Gradients head;
};

inline Vector flatten(const EstimatorParams& p) {
  const Vector a = nn::flatten(p.gru), b = nn::flatten(p.head);
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline Vector flatten(const EstimatorGradients& g) {
  const Vector a = nn::flatten(g.gru), b = nn::flatten(g.head);
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline void unflatten(const Vector& flat, EstimatorParams& p) {
  const auto na = nn::flatten(p.gru).size();
  nn::unflatten(flat.head(na), p.gru);
  nn::unflatten(flat.tail(flat.size() - na), p.head);
}

inline double estimator_gradient(const EstimatorParams& p, const DynamicModel& nominal, const EstimatorWindows& w,
                                 EstimatorGradients& grads) {
  EstimatorForward fw;
  Matrix dphi;
  const double loss = estimator_loss(p, nominal, w, &fw, &dphi);
  Matrix dz(dphi.rows(), dphi.cols());
  for (Eigen::Index c = 0; c < dz.cols(); ++c)
    dz.col(c) = dphi.col(c).cwiseProduct(nn::physics_guard_derivative(fw.z.col(c), p.bounds));
  grads.head = nn::Gradients::zeros_like(p.head);
  grads.gru = nn::GruGradients::zeros_like(p.gru);
  const Matrix dh = nn::backward_batch(p.head, fw.head_cache, dz, grads.head);
  nn::gru_backward_batch(p.gru, fw.gru_cache, dh, grads.gru);
  return loss;
}

struct CoefficientRecord {
  int trajectory = 0;
  double t = 0.0;
  std::array<double, kNumCoefficients> phi{};
};

struct EstimatorReport {
  EstimatorParams params;
  std::vector<double> loss_curve;
  double initial_loss = 0.0;
  std::vector<CoefficientRecord> records;
  double wall_time = 0.0;
  bool diverged = false;
  std::string diverge_reason;
  std::size_t guard_violations = 0;
};

inline std::vector<CoefficientRecord> record_coefficients(const EstimatorParams& p, const EstimatorWindows& w,
                                                          std::size_t* violations = nullptr) {
  const Matrix phi = estimate_coefficients(p, w);
  std::vector<CoefficientRecord> out;
  out.reserve(static_cast<std::size_t>(phi.cols()));
  std::size_t bad = 0;
  for (Eigen::Index c = 0; c < phi.cols(); ++c) {
    CoefficientRecord r{w.trajectory[static_cast<std::size_t>(c)], w.t[static_cast<std::size_t>(c)], {}};
    for (std::size_t i = 0; i < kNumCoefficients; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      r.phi[i] = phi(k, c);
      if (!(phi(k, c) > p.bounds.lower[k] && phi(k, c) < p.bounds.upper[k])) ++bad;
    }
    out.push_back(r);
  }
  if (violations) *violations = bad;
  return out;
}

/// Minibatch Adam on the DDM loss; ends with a pass recording Phi_hat for
/// every window.
inline EstimatorReport train_coefficient_estimator(const EstimatorConfig& cfg, const std::vector<Trajectory>& trajectories,
                                                   const DynamicModel& nominal) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const EstimatorWindows w = make_estimator_windows(trajectories, cfg.tau);
  EstimatorReport rep;
  rep.params = make_estimator(cfg, w);
  EstimatorParams& p = rep.params;
  std::mt19937_64 rng(mix_seed(cfg.seed, 3));
  auto order = detail::iota(w.count());
  Vector theta = flatten(p);
  nn::AdamState adam = nn::AdamState::for_size(theta.size(), cfg.learning_rate);
  try {
    rep.initial_loss = estimator_loss(p, nominal, w);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double acc = 0.0;
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t stop = std::min(start + bs, order.size());
        const std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(stop));
        EstimatorGradients g;
        acc += estimator_gradient(p, nominal, w.subset(cols), g) * static_cast<double>(stop - start);
        const Vector gf = flatten(g);
        if (!gf.allFinite()) throw NumericError("non-finite estimator gradient at epoch " + std::to_string(epoch));
        nn::adam_step(theta, gf, adam);
        unflatten(theta, p);
      }
      rep.loss_curve.push_back(acc / static_cast<double>(order.size()));
    }
  } catch (const NumericError& e) {
    rep.diverged = true;
    rep.diverge_reason = e.what();
  }
  rep.records = record_coefficients(p, w, &rep.guard_violations);
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace fisherpinn
