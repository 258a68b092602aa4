#pragma once

#include "fisherpinn/datagen.hpp"
#include "fisherpinn/fisher.hpp"
#include "fisherpinn/nn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace fisherpinn {

class DivergedRolloutError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Box over (state..., input...) for collocation sampling.
struct CollocationBounds {
  int state_dim = 3;
  Vector lower;
  Vector upper;

  static CollocationBounds kinematic_default() {
    return {3, Vector{{-100.0, -10.0, -0.5236, 0.0, -0.5236}}, Vector{{100.0, 10.0, 0.5236, 5.0, 0.5236}}};
  }

  void validate() const {
    if (lower.size() != upper.size() || lower.size() <= state_dim || state_dim < 1)
      throw ConfigError("collocation bounds dimension mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] <= upper[i])) throw ConfigError("collocation bounds require lower <= upper");
  }
  int input_dim() const { return static_cast<int>(lower.size()) - state_dim; }
  Box box() const { return {lower, upper}; }
};

inline std::vector<StatePoint> sample_collocation(const CollocationBounds& b, std::size_t n, std::uint64_t seed) {
  b.validate();
  if (n < 1) throw ConfigError("collocation count must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<StatePoint> pts;
  pts.reserve(n);
  const Eigen::Index d = b.lower.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vector z(d);
    for (Eigen::Index k = 0; k < d; ++k) z[k] = b.lower[k] + (b.upper[k] - b.lower[k]) * u01(rng);
    pts.push_back({z.head(b.state_dim), z.tail(d - b.state_dim), 0.0});
  }
  return pts;
}

using RhsFunction = std::function<Vector(const Vector& x, const Vector& u)>;

/// Network inputs (x; u) and regression targets, one column per sample.
struct LabeledSamples {
  Matrix inputs;
  Matrix targets;
  Eigen::Index size() const { return inputs.cols(); }
};

inline LabeledSamples label_points(const std::vector<StatePoint>& pts, const RhsFunction& rhs) {
  if (pts.empty()) throw std::invalid_argument("point list must be non-empty");
  const auto ns = pts.front().state.size(), ni = pts.front().input.size();
  LabeledSamples s{Matrix(ns + ni, static_cast<Eigen::Index>(pts.size())), Matrix()};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    s.inputs.col(c) << pts[i].state, pts[i].input;
    const Vector f = rhs(pts[i].state, pts[i].input);
    if (s.targets.size() == 0) s.targets.resize(f.size(), s.inputs.cols());
    s.targets.col(c) = f;
  }
  return s;
}

inline LabeledSamples samples_from_trajectories(const std::vector<Trajectory>& trs) {
  std::size_t n = 0;
  for (const auto& t : trs) n += t.size();
  if (n == 0) throw std::invalid_argument("dataset has no samples");
  const Trajectory* first = nullptr;
  for (const auto& t : trs)
    if (t.size()) first = first ? first : &t;
  const auto ns = first->states[0].size(), ni = first->inputs[0].size();
  LabeledSamples s{Matrix(ns + ni, static_cast<Eigen::Index>(n)), Matrix(ns, static_cast<Eigen::Index>(n))};
  Eigen::Index c = 0;
  for (const auto& t : trs)
    for (std::size_t i = 0; i < t.size(); ++i, ++c) {
      s.inputs.col(c) << t.states[i], t.inputs[i];
      s.targets.col(c) = t.derivatives[i];
    }
  return s;
}

inline double regression_loss(const nn::NetworkParams& net, const LabeledSamples& s) {
  if (s.size() == 0) throw std::invalid_argument("loss over an empty set");
  return (nn::forward_batch(net, s.inputs) - s.targets).squaredNorm() / static_cast<double>(s.size());
}

/// mean over points of |F(x,u) - F_hat(x,u)|^2
inline double physics_loss(const nn::NetworkParams& net, const std::vector<StatePoint>& pts, const RhsFunction& rhs) {
  return regression_loss(net, label_points(pts, rhs));
}

/// mean over samples of |F_hat(x,u) - xdot_data|^2
inline double data_loss(const nn::NetworkParams& net, const LabeledSamples& data) { return regression_loss(net, data); }

// ---------------------------------------------------------------------------
// Trajectory rollout loss (gradients through unrolled RK4)

struct TrajectoryWindows {
  int horizon = 0;
  double dt = 0.0;
  std::vector<Matrix> states;  // horizon + 1 entries, state_dim x W
  std::vector<Matrix> inputs;  // horizon entries, input_dim x W
  Eigen::Index count() const { return states.empty() ? 0 : states[0].cols(); }

  TrajectoryWindows subset(const std::vector<Eigen::Index>& cols) const {
    TrajectoryWindows w{horizon, dt, {}, {}};
    for (const auto& m : states) w.states.push_back(m(Eigen::all, cols));
    for (const auto& m : inputs) w.inputs.push_back(m(Eigen::all, cols));
    return w;
  }
};

/// Every window of horizon+1 consecutive samples.
inline TrajectoryWindows make_windows(const std::vector<Trajectory>& trs, int horizon, double dt) {
  if (horizon < 1) throw std::invalid_argument("rollout horizon must be at least 1");
  if (!(dt > 0)) throw std::invalid_argument("rollout dt must be positive");
  std::vector<std::pair<const Trajectory*, std::size_t>> starts;
  for (const auto& t : trs) {
    for (std::size_t i = 1; i < t.size(); ++i)
      if (std::abs(t.t[i] - t.t[i - 1] - dt) > 1e-9 * std::max(1.0, dt))
        throw std::invalid_argument("trajectory is not sampled at the rollout dt");
    for (std::size_t i = 0; i + static_cast<std::size_t>(horizon) < t.size(); ++i) starts.emplace_back(&t, i);
  }
  TrajectoryWindows w{horizon, dt, {}, {}};
  if (starts.empty()) return w;
  const auto ns = starts[0].first->states[0].size(), ni = starts[0].first->inputs[0].size();
  const auto n = static_cast<Eigen::Index>(starts.size());
  for (int k = 0; k <= horizon; ++k) w.states.emplace_back(ns, n);
  for (int k = 0; k < horizon; ++k) w.inputs.emplace_back(ni, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& [tr, i0] = starts[static_cast<std::size_t>(c)];
    for (int k = 0; k <= horizon; ++k) w.states[k].col(c) = tr->states[i0 + k];
    for (int k = 0; k < horizon; ++k) w.inputs[k].col(c) = tr->inputs[i0 + k];
  }
  return w;
}

namespace detail {

inline Matrix stack(const Matrix& x, const Matrix& u) {
  Matrix z(x.rows() + u.rows(), x.cols());
  z << x, u;
  return z;
}

}  // namespace detail

/// Mean over windows and steps 1..H of |x_hat_k - x_k|^2. If grads is given,
/// it is overwritten with the parameter gradient.
inline double trajectory_loss(const nn::NetworkParams& net, const TrajectoryWindows& w, nn::Gradients* grads = nullptr) {
  if (w.horizon < 1) throw std::invalid_argument("rollout horizon must be at least 1");
  const Eigen::Index n = w.count();
  if (n == 0) throw std::invalid_argument("no trajectory windows");
  const int h = w.horizon;
  const double dt = w.dt;
  const Eigen::Index ns = w.states[0].rows();
  std::vector<std::array<nn::ForwardCache, 4>> caches(grads ? h : 0);
  std::vector<Matrix> xs{w.states[0]};
  std::vector<std::array<Matrix, 4>> ks(h);
  for (int k = 0; k < h; ++k) {
    const Matrix& x = xs.back();
    const Matrix& u = w.inputs[k];
    auto eval = [&](const Matrix& xin, int stage) {
      return nn::forward_batch(net, detail::stack(xin, u), grads ? &caches[k][stage] : nullptr);
    };
    ks[k][0] = eval(x, 0);
    ks[k][1] = eval(x + 0.5 * dt * ks[k][0], 1);
    ks[k][2] = eval(x + 0.5 * dt * ks[k][1], 2);
    ks[k][3] = eval(x + dt * ks[k][2], 3);
    Matrix next = x + dt / 6.0 * (ks[k][0] + 2.0 * ks[k][1] + 2.0 * ks[k][2] + ks[k][3]);
    if (!next.allFinite()) {
      for (Eigen::Index c = 0; c < n; ++c)
        if (!next.col(c).allFinite())
          throw DivergedRolloutError("diverged rollout in window " + std::to_string(c) + " at step " + std::to_string(k + 1));
    }
    xs.push_back(std::move(next));
  }
  const double scale = 1.0 / (static_cast<double>(n) * h);
  double loss = 0.0;
  for (int k = 1; k <= h; ++k) loss += (xs[k] - w.states[k]).squaredNorm();
  loss *= scale;
  if (!grads) return loss;

  *grads = nn::Gradients::zeros_like(net);
  Matrix gx = Matrix::Zero(ns, n);
  for (int k = h; k-- > 0;) {
    gx += 2.0 * scale * (xs[k + 1] - w.states[k + 1]);
    // gx is dL/dx_{k+1}; push it through one RK4 step
    Matrix gprev = gx;
    Matrix g4 = dt / 6.0 * gx;
    Matrix gz = nn::backward_batch(net, caches[k][3], g4, *grads).topRows(ns);
    gprev += gz;
    Matrix g3 = dt / 3.0 * gx + dt * gz;
    gz = nn::backward_batch(net, caches[k][2], g3, *grads).topRows(ns);
    gprev += gz;
    Matrix g2 = dt / 3.0 * gx + 0.5 * dt * gz;
    gz = nn::backward_batch(net, caches[k][1], g2, *grads).topRows(ns);
    gprev += gz;
    Matrix g1 = dt / 6.0 * gx + 0.5 * dt * gz;
    gz = nn::backward_batch(net, caches[k][0], g1, *grads).topRows(ns);
    gprev += gz;
    gx = std::move(gprev);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Regimes

enum class Regime { physics_only, hybrid, inverse };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::physics_only: return "physics_only";
    case Regime::hybrid: return "hybrid";
    case Regime::inverse: return "inverse";
  }
  return "physics_only";
}

inline Regime regime_from_string(std::string_view s) {
  if (s == "physics_only" || s == "1") return Regime::physics_only;
  if (s == "hybrid" || s == "2") return Regime::hybrid;
  if (s == "inverse" || s == "3") return Regime::inverse;
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

struct RegimeConfig {
  Regime regime = Regime::physics_only;
  double lambda_p = 1.0;
  double lambda_d = 1.0;
  int epochs = 300;
  int batch_size = 256;
  std::size_t collocation_count = 2048;
  std::size_t validation_count = 1024;
  int horizon = 5;
  double dt = 0.1;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;

  // Regime 1 ignores the data term.
  double effective_lambda_d() const { return regime == Regime::physics_only ? 0.0 : lambda_d; }

  void validate() const {
    if (lambda_p < 0 || lambda_d < 0) throw ConfigError("loss weights must be nonnegative");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (collocation_count < 1) throw ConfigError("collocation count must be at least 1");
    if (regime == Regime::inverse && horizon < 1) throw ConfigError("regime 3 needs a horizon >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  }
};

/// Collocation points with analytic derivatives, and the data for regimes 2/3.
struct TrainingData {
  LabeledSamples collocation;
  LabeledSamples validation;
  LabeledSamples samples;      // regime 2 (x, u, xdot_data)
  TrajectoryWindows windows;   // regime 3
};

struct EpochLoss {
  double total = 0.0;
  double physics = 0.0;
  double data = 0.0;
};

struct TrainReport {
  std::string architecture;
  Regime regime = Regime::physics_only;
  std::vector<EpochLoss> curve;
  EpochLoss initial;
  double validation_loss = 0.0;
  double grad_check_error = 0.0;
  nn::NetworkParams params;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline LabeledSamples columns(const LabeledSamples& s, const std::vector<Eigen::Index>& cols) {
  return {s.inputs(Eigen::all, cols), s.targets(Eigen::all, cols)};
}

inline std::vector<Eigen::Index> iota(Eigen::Index n) {
  std::vector<Eigen::Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Eigen::Index{0});
  return v;
}

}  // namespace detail

/// Composite loss lambda_p * L_physics + lambda_d * L_data on the given batches;
/// the data term is the derivative regression (regime 2) or the rollout loss
/// (regime 3). Writes the gradient when grads is non-null.
inline EpochLoss composite_loss(const nn::NetworkParams& net, const RegimeConfig& cfg, const LabeledSamples& phys,
                                const LabeledSamples* samples, const TrajectoryWindows* windows,
                                nn::Gradients* grads) {
  EpochLoss l;
  const double ld = cfg.effective_lambda_d();
  if (grads) *grads = nn::Gradients::zeros_like(net);
  if (cfg.lambda_p > 0 && phys.size() > 0) {
    if (grads) {
      nn::Gradients g;
      l.physics = nn::mlp_param_gradient(net, phys.inputs, phys.targets, g);
      g *= cfg.lambda_p;
      *grads += g;
    } else {
      l.physics = regression_loss(net, phys);
    }
  }
  if (ld > 0) {
    nn::Gradients g;
    if (cfg.regime == Regime::hybrid && samples && samples->size() > 0) {
      l.data = grads ? nn::mlp_param_gradient(net, samples->inputs, samples->targets, g) : regression_loss(net, *samples);
    } else if (cfg.regime == Regime::inverse && windows && windows->count() > 0) {
      l.data = trajectory_loss(net, *windows, grads ? &g : nullptr);
    }
    if (grads && !g.weights.empty()) {
      g *= ld;
      *grads += g;
    }
  }
  l.total = cfg.lambda_p * l.physics + ld * l.data;
  return l;
}

/// Max relative mismatch between the analytic gradient and central
/// differences on a few random parameters.
inline double gradient_spot_check(const nn::NetworkParams& net, const RegimeConfig& cfg, const LabeledSamples& phys,
                                  const LabeledSamples* samples, const TrajectoryWindows* windows, int count,
                                  std::uint64_t seed) {
  nn::Gradients g;
  composite_loss(net, cfg, phys, samples, windows, &g);
  const Vector analytic = nn::flatten(g);
  Vector theta = nn::flatten(net);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
  nn::NetworkParams q = net;
  double worst = 0.0;
  for (int k = 0; k < count; ++k) {
    const Eigen::Index i = pick(rng);
    const double orig = theta[i];
    const double h = 1e-6 * std::max(1.0, std::abs(orig));
    theta[i] = orig + h;
    nn::unflatten(theta, q);
    const double lp = composite_loss(q, cfg, phys, samples, windows, nullptr).total;
    theta[i] = orig - h;
    nn::unflatten(theta, q);
    const double lm = composite_loss(q, cfg, phys, samples, windows, nullptr).total;
    theta[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-4 * analytic.cwiseAbs().maxCoeff(), 1e-12});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

/// Minibatch Adam over the composite loss. One epoch is one pass over the
/// collocation set; data batches cycle alongside.
inline TrainReport train_regime(nn::NetworkParams net, const RegimeConfig& cfg, const TrainingData& data) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep;
  rep.architecture = nn::describe(net.layers);
  rep.regime = cfg.regime;
  rep.seed = cfg.seed;
  const double ld = cfg.effective_lambda_d();
  if (ld > 0 && cfg.regime == Regime::hybrid && data.samples.size() == 0)
    throw ConfigError("regime 2 needs derivative data");
  if (ld > 0 && cfg.regime == Regime::inverse && data.windows.count() == 0)
    throw ConfigError("regime 3 needs trajectory windows");
  const LabeledSamples* samples = cfg.regime == Regime::hybrid ? &data.samples : nullptr;
  const TrajectoryWindows* windows = cfg.regime == Regime::inverse ? &data.windows : nullptr;

  auto full_loss = [&](const nn::NetworkParams& p) { return composite_loss(p, cfg, data.collocation, samples, windows, nullptr); };
  std::mt19937_64 rng(cfg.seed);
  try {
    rep.initial = full_loss(net);
    {
      // spot check on small batches keeps it cheap
      const auto nb = std::min<Eigen::Index>(64, data.collocation.size());
      std::vector<Eigen::Index> cols(static_cast<std::size_t>(nb));
      std::iota(cols.begin(), cols.end(), Eigen::Index{0});
      const LabeledSamples pb = detail::columns(data.collocation, cols);
      LabeledSamples sb;
      TrajectoryWindows wb;
      if (samples && samples->size() > 0) {
        std::vector<Eigen::Index> sc(static_cast<std::size_t>(std::min<Eigen::Index>(64, samples->size())));
        std::iota(sc.begin(), sc.end(), Eigen::Index{0});
        sb = detail::columns(*samples, sc);
      }
      if (windows && windows->count() > 0) {
        std::vector<Eigen::Index> wc(static_cast<std::size_t>(std::min<Eigen::Index>(16, windows->count())));
        std::iota(wc.begin(), wc.end(), Eigen::Index{0});
        wb = windows->subset(wc);
      }
      rep.grad_check_error = gradient_spot_check(net, cfg, pb, samples ? &sb : nullptr, windows ? &wb : nullptr, 10,
                                                 mix_seed(cfg.seed, 99));
    }

    nn::AdamState adam = nn::AdamState::for_size(nn::flatten(net).size(), cfg.learning_rate);
    auto phys_order = detail::iota(data.collocation.size());
    auto data_order = detail::iota(samples ? samples->size() : (windows ? windows->count() : 0));
    std::size_t data_pos = data_order.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(phys_order.begin(), phys_order.end(), rng);
      for (std::size_t start = 0; start < phys_order.size(); start += bs) {
        const std::vector<Eigen::Index> pc(phys_order.begin() + static_cast<std::ptrdiff_t>(start),
                                           phys_order.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, phys_order.size())));
        const LabeledSamples pb = detail::columns(data.collocation, pc);
        LabeledSamples sb;
        TrajectoryWindows wb;
        if (ld > 0 && !data_order.empty()) {
          const std::size_t dbs = windows ? std::max<std::size_t>(1, bs / 8) : bs;
          std::vector<Eigen::Index> dc;
          for (std::size_t k = 0; k < std::min(dbs, data_order.size()); ++k) {
            if (data_pos >= data_order.size()) {
              std::shuffle(data_order.begin(), data_order.end(), rng);
              data_pos = 0;
            }
            dc.push_back(data_order[data_pos++]);
          }
          if (samples) sb = detail::columns(*samples, dc);
          if (windows) wb = windows->subset(dc);
        }
        nn::Gradients g;
        const EpochLoss bl = composite_loss(net, cfg, pb, samples ? &sb : nullptr, windows ? &wb : nullptr, &g);
        if (!std::isfinite(bl.total)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        nn::adam_step(net, g, adam);
      }
      const EpochLoss el = full_loss(net);
      if (!std::isfinite(el.total)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      rep.curve.push_back(el);
    }
    if (data.validation.size() > 0) {
      rep.validation_loss = cfg.lambda_p * regression_loss(net, data.validation);
      if (ld > 0) rep.validation_loss += ld * (rep.curve.empty() ? rep.initial.data : rep.curve.back().data);
    } else {
      rep.validation_loss = rep.curve.empty() ? rep.initial.total : rep.curve.back().total;
    }
  } catch (const NumericError& e) {
    rep.aborted = true;
    rep.abort_reason = e.what();
    rep.validation_loss = std::numeric_limits<double>::infinity();
  }
  rep.params = std::move(net);
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Architecture sweep

struct Candidate {
  std::vector<nn::LayerSpec> hidden;
  int epochs = -1;  // -1: use the regime config
};

inline std::vector<Candidate> default_sweep_space() {
  std::vector<Candidate> out;
  for (int w : {16, 32, 64})
    for (int d : {2, 3})
      for (auto a : {nn::Activation::tanh, nn::Activation::sigmoid, nn::Activation::mish})
        out.push_back({std::vector<nn::LayerSpec>(static_cast<std::size_t>(d), nn::LayerSpec{w, a}), -1});
  return out;
}

struct SweepEntry {
  std::size_t index = 0;
  int rank = 0;
  std::uint64_t seed = 0;
  std::size_t parameter_count = 0;
  TrainReport report;
};

/// Orders entries by validation loss, then parameter count, then candidate
/// index, and assigns ranks from 1.
inline std::vector<SweepEntry> rank_sweep(std::vector<SweepEntry> entries) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = entries[a];
    const auto& eb = entries[b];
    if (ea.report.validation_loss != eb.report.validation_loss) return ea.report.validation_loss < eb.report.validation_loss;
    if (ea.parameter_count != eb.parameter_count) return ea.parameter_count < eb.parameter_count;
    return ea.index < eb.index;
  });
  std::vector<SweepEntry> ranked;
  for (std::size_t r = 0; r < order.size(); ++r) {
    ranked.push_back(std::move(entries[order[r]]));
    ranked.back().rank = static_cast<int>(r) + 1;
  }
  return ranked;
}

/// Trains every candidate (up to `jobs` at once) and ranks them by validation
/// loss; ties go to fewer parameters, then to spec order.
inline std::vector<SweepEntry> architecture_sweep(const std::vector<Candidate>& candidates, const RegimeConfig& cfg,
                                                  const TrainingData& data, const Vector& input_lower,
                                                  const Vector& input_upper, int output_dim, unsigned jobs = 1) {
  if (candidates.empty()) throw ConfigError("architecture sweep needs at least one candidate");
  std::vector<SweepEntry> entries(candidates.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      SweepEntry& e = entries[i];
      e.index = i;
      e.seed = mix_seed(cfg.seed, i);
      nn::NetworkParams net = nn::make_mlp(static_cast<int>(input_lower.size()), candidates[i].hidden, output_dim, e.seed);
      nn::set_input_bounds(net, input_lower, input_upper);
      e.parameter_count = net.parameter_count();
      const std::string arch = nn::describe(net.layers);
      RegimeConfig c = cfg;
      c.seed = e.seed;
      if (candidates[i].epochs >= 0) c.epochs = candidates[i].epochs;
      try {
        e.report = train_regime(std::move(net), c, data);
      } catch (const std::exception& ex) {
        e.report.architecture = arch;
        e.report.aborted = true;
        e.report.abort_reason = ex.what();
        e.report.validation_loss = std::numeric_limits<double>::infinity();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(candidates.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  return rank_sweep(std::move(entries));
}

}  // namespace fisherpinn
