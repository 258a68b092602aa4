#pragma once

#include "fisherpinn/dynamics.hpp"
#include "fisherpinn/io.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fisherpinn {

struct ReferencePath {
  std::vector<std::array<double, 2>> waypoints;
  bool closed = false;

  void validate() const {
    if (waypoints.size() < 2) throw ConfigError("reference path needs at least two waypoints");
    for (std::size_t i = 0; i + 1 < waypoints.size(); ++i)
      if (waypoints[i] == waypoints[i + 1]) throw ConfigError("consecutive waypoints must be distinct");
  }
};

inline ReferencePath circular_path(double radius, int n, std::array<double, 2> center = {0.0, 0.0}) {
  if (!(radius > 0)) throw ConfigError("circle radius must be positive");
  if (n < 3) throw ConfigError("circular path needs at least 3 points");
  ReferencePath p;
  p.closed = true;
  p.waypoints.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n;
    p.waypoints.push_back({center[0] + radius * std::cos(th), center[1] + radius * std::sin(th)});
  }
  return p;
}

inline ReferencePath straight_path(std::array<double, 2> start, double heading, double length, int n) {
  if (n < 2 || !(length > 0)) throw ConfigError("straight path needs n >= 2 and positive length");
  ReferencePath p;
  for (int i = 0; i < n; ++i) {
    const double s = length * i / (n - 1);
    p.waypoints.push_back({start[0] + s * std::cos(heading), start[1] + s * std::sin(heading)});
  }
  return p;
}

/// Pure pursuit: steer toward the path point one look-ahead arc length past the
/// nearest waypoint.
inline double lookahead_steer(const KinematicState& s, const ReferencePath& path, double d_lookahead,
                              double wheelbase) {
  if (path.waypoints.empty()) throw ConfigError("empty reference path");
  if (!(d_lookahead > 0)) throw ConfigError("look-ahead distance must be positive");
  const auto& w = path.waypoints;
  const std::size_t n = w.size();
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::hypot(w[i][0] - s.x, w[i][1] - s.y);
    if (d < best) best = d, nearest = i;
  }
  std::size_t target = nearest;
  double arc = 0.0;
  for (std::size_t k = 0; k < n && arc < d_lookahead; ++k) {
    std::size_t next = target + 1;
    if (next == n) {
      if (!path.closed) break;
      next = 0;
    }
    arc += std::hypot(w[next][0] - w[target][0], w[next][1] - w[target][1]);
    target = next;
  }
  const double alpha = wrap_angle(std::atan2(w[target][1] - s.y, w[target][0] - s.x) - s.theta);
  const double delta = std::atan(2.0 * wheelbase * std::sin(alpha) / d_lookahead);
  return std::clamp(delta, -kMaxSteer, kMaxSteer);
}

struct SimulationConfig {
  double dt = 0.1;
  double total_time = 31.0;
  double wheelbase = 2.5;
  double lookahead = 3.0;
  double speed = 2.0;
  double radius = 20.0;
  int path_points = 1000;
  double derivative_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (!(total_time >= dt)) throw ConfigError("total_time must be at least dt");
    if (!(lookahead > 0)) throw ConfigError("lookahead must be positive");
    if (!(wheelbase > 0)) throw ConfigError("wheelbase must be positive");
    if (speed < 0) throw ConfigError("speed setpoint must be nonnegative");
    if (derivative_noise < 0) throw ConfigError("derivative noise must be nonnegative");
  }
  std::size_t sample_count() const { return static_cast<std::size_t>(std::llround(total_time / dt)) + 1; }
};

struct Trajectory {
  std::vector<std::string> state_names;
  std::vector<std::string> input_names;
  std::vector<double> t;
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  std::vector<Vector> derivatives;
  std::vector<std::string> disturbance;
  std::string exit_reason;  // empty when the rollout completed

  std::size_t size() const { return t.size(); }
  bool operator==(const Trajectory&) const = default;

  void push(double time, Vector x, Vector u, Vector xdot, std::string dist) {
    t.push_back(time);
    states.push_back(std::move(x));
    inputs.push_back(std::move(u));
    derivatives.push_back(std::move(xdot));
    disturbance.push_back(std::move(dist));
  }
};

inline const std::vector<std::string>& kinematic_state_names() {
  static const std::vector<std::string> n{"x", "y", "theta"};
  return n;
}
inline const std::vector<std::string>& kinematic_input_names() {
  static const std::vector<std::string> n{"v", "delta"};
  return n;
}
inline const std::vector<std::string>& dynamic_state_names() {
  static const std::vector<std::string> n{"x", "y", "theta", "vx", "vy", "omega"};
  return n;
}
inline const std::vector<std::string>& dynamic_input_names() {
  static const std::vector<std::string> n{"throttle", "delta"};
  return n;
}

/// Closed-loop kinematic rollout with the look-ahead controller at constant speed.
inline Trajectory simulate(const ReferencePath& path, const SimulationConfig& cfg, const KinematicState& initial) {
  cfg.validate();
  path.validate();
  VehicleParams vp;
  vp.L = cfg.wheelbase;
  Trajectory tr;
  tr.state_names = kinematic_state_names();
  tr.input_names = kinematic_input_names();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = cfg.sample_count();
  Vector x = initial.to_vector();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * cfg.dt;
    try {
      require_finite(x, "kinematic state");
      const KinematicState s = KinematicState::from_vector(x);
      const KinematicInput u{cfg.speed, lookahead_steer(s, path, cfg.lookahead, cfg.wheelbase)};
      Vector xdot = kinematic_rhs(s, u, vp);
      if (cfg.derivative_noise > 0)
        for (Eigen::Index k = 0; k < xdot.size(); ++k) xdot[k] += cfg.derivative_noise * noise(rng);
      tr.push(t, x, u.to_vector(), xdot, "none");
      if (i + 1 < n) {
        VectorField f = [&](const Vector& xs, const Vector& us) {
          return kinematic_rhs(KinematicState::from_vector(xs), KinematicInput::from_vector(us), vp);
        };
        x = rk4_step(f, x, u.to_vector(), cfg.dt);
      }
    } catch (const std::exception& e) {
      tr.exit_reason = "t=" + io::format_double(t) + ": " + e.what();
      break;
    }
  }
  return tr;
}

/// Table I circular experiment: start on the circle at (R, 0), tangent heading.
inline Trajectory simulate_circle(const SimulationConfig& cfg) {
  return simulate(circular_path(cfg.radius, cfg.path_points), cfg, {cfg.radius, 0.0, std::numbers::pi / 2});
}

inline double cross_track_rms(const Trajectory& tr, double radius, double t_min, std::array<double, 2> center = {0, 0}) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (!(tr.t[i] > t_min)) continue;
    const double e = std::hypot(tr.states[i][0] - center[0], tr.states[i][1] - center[1]) - radius;
    acc += e * e;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no samples after t_min");
  return std::sqrt(acc / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Box-bounded splitting and the mixed straight/curved dataset

struct Box {
  Vector lower;
  Vector upper;
  bool contains(const Vector& v) const {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (v[i] < lower[i] || v[i] > upper[i]) return false;
    return true;
  }
};

/// Maximal runs of consecutive samples whose (state, input) lies in the box.
/// Heading (state index 2) is wrapped to (-pi, pi] before the test.
inline std::vector<Trajectory> split_to_box(const Trajectory& tr, const Box& box, std::size_t min_len) {
  std::vector<Trajectory> runs;
  Trajectory cur;
  auto flush = [&] {
    if (cur.size() >= min_len && cur.size() > 0) runs.push_back(cur);
    cur = Trajectory{};
  };
  for (std::size_t i = 0; i < tr.size(); ++i) {
    Vector x = tr.states[i];
    x[2] = wrap_angle(x[2]);
    Vector z(x.size() + tr.inputs[i].size());
    z << x, tr.inputs[i];
    if (!box.contains(z)) {
      flush();
      continue;
    }
    if (cur.size() == 0) {
      cur.state_names = tr.state_names;
      cur.input_names = tr.input_names;
    }
    cur.push(tr.t[i], x, tr.inputs[i], tr.derivatives[i], tr.disturbance[i]);
  }
  flush();
  return runs;
}

struct MixedDataConfig {
  int straight_count = 6;
  int arc_count = 8;
  double segment_time = 6.0;
  double min_speed = 0.5;
  double max_speed = 5.0;
  double max_arc_steer = 0.3;
  std::size_t min_run = 6;
};

/// Open-loop rollout with constant input.
inline Trajectory constant_input_rollout(const KinematicState& start, const KinematicInput& u, double dt, std::size_t n,
                                         const VehicleParams& vp) {
  Trajectory tr;
  tr.state_names = kinematic_state_names();
  tr.input_names = kinematic_input_names();
  VectorField f = [&](const Vector& xs, const Vector& us) {
    return kinematic_rhs(KinematicState::from_vector(xs), KinematicInput::from_vector(us), vp);
  };
  Vector x = start.to_vector();
  for (std::size_t i = 0; i < n; ++i) {
    tr.push(static_cast<double>(i) * dt, x, u.to_vector(), f(x, u.to_vector()), "none");
    if (i + 1 < n) x = rk4_step(f, x, u.to_vector(), dt);
  }
  return tr;
}

/// Straight segments at sampled speeds, the circular rollout and constant-steer
/// arcs, each cut to the box. The circle is centered at (0, R) so its lowest
/// stretch passes through the box with small heading.
inline std::vector<Trajectory> build_mixed_dataset(const SimulationConfig& cfg, const MixedDataConfig& mix,
                                                   const Box& box, std::uint64_t seed) {
  cfg.validate();
  VehicleParams vp;
  vp.L = cfg.wheelbase;
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const auto n = static_cast<std::size_t>(std::llround(mix.segment_time / cfg.dt)) + 1;
  const double th_max = std::min(box.upper[2], -box.lower[2]);
  std::vector<Trajectory> out;
  auto add = [&](const Trajectory& tr) {
    for (auto& r : split_to_box(tr, box, mix.min_run)) out.push_back(std::move(r));
  };

  for (int k = 0; k < mix.straight_count; ++k) {
    const double v = uni(mix.min_speed, mix.max_speed);
    const double th = uni(-0.9 * th_max, 0.9 * th_max);
    const KinematicState s{uni(box.lower[0], 0.0), uni(0.5 * box.lower[1], 0.5 * box.upper[1]), th};
    add(constant_input_rollout(s, {v, 0.0}, cfg.dt, n, vp));
  }

  SimulationConfig circ = cfg;
  circ.derivative_noise = 0.0;
  add(simulate(circular_path(cfg.radius, cfg.path_points, {0.0, cfg.radius}), circ, {0.0, 0.0, 0.0}));

  for (int k = 0; k < mix.arc_count; ++k) {
    const double v = uni(mix.min_speed, mix.max_speed);
    const double d = uni(-mix.max_arc_steer, mix.max_arc_steer);
    const KinematicState s{uni(-20.0, 20.0), uni(0.5 * box.lower[1], 0.5 * box.upper[1]),
                           d > 0 ? -0.9 * th_max : 0.9 * th_max};
    add(constant_input_rollout(s, {v, d}, cfg.dt, n, vp));
  }

  if (cfg.derivative_noise > 0) {
    std::normal_distribution<double> noise(0.0, cfg.derivative_noise);
    for (auto& tr : out)
      for (auto& xd : tr.derivatives)
        for (Eigen::Index i = 0; i < xd.size(); ++i) xd[i] += noise(rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic-model excitation data (discrete map, random smooth inputs)

struct ExcitationConfig {
  double duration = 20.0;
  int trajectories = 10;
  double vx_low = 1.0;
  double vx_high = 3.0;
  double steer_amplitude = 0.35;
  double steer_freq_low = 0.1;
  double steer_freq_high = 1.0;
  double throttle_dither = 0.15;
  double speed_gain = 0.5;
  double target_hold = 2.0;

  void validate() const {
    if (!(duration > 0) || trajectories < 1) throw ConfigError("excitation needs positive duration and >= 1 trajectory");
    if (!(vx_low > 0 && vx_high >= vx_low)) throw ConfigError("excitation speed range invalid");
    if (!(steer_amplitude >= 0 && steer_amplitude < kMaxSteer)) throw ConfigError("steer amplitude out of range");
  }
};

inline std::string disturbance_label(const DynamicModel& mdl) {
  if (mdl.disturbances.empty()) return "none";
  std::string s;
  for (const auto& d : mdl.disturbances) {
    if (!s.empty()) s += "+";
    s += to_string(d.kind());
  }
  return s;
}

/// One excitation rollout. Throttle tracks a piecewise-constant random speed
/// target with a small dither; steering is a sum of three random sinusoids.
inline Trajectory simulate_dynamic(const DynamicModel& mdl, const ExcitationConfig& ex, std::uint64_t seed) {
  mdl.validate();
  ex.validate();
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const double ts = mdl.vehicle.Ts;
  const auto n = static_cast<std::size_t>(std::llround(ex.duration / ts)) + 1;

  std::array<double, 3> amp{}, freq{}, phase{};
  double amp_sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    amp[k] = uni(0.2, 1.0);
    freq[k] = uni(ex.steer_freq_low, ex.steer_freq_high);
    phase[k] = uni(0.0, 2.0 * std::numbers::pi);
    amp_sum += amp[k];
  }
  const double dither_freq = uni(0.5, 2.0), dither_phase = uni(0.0, 2.0 * std::numbers::pi);
  const auto& d = mdl.drivetrain;
  auto hold = [&](double v) { return (d.Cm2 * v + d.Cr0 + d.Cd * v * v) / d.Cm1; };

  Trajectory tr;
  tr.state_names = dynamic_state_names();
  tr.input_names = dynamic_input_names();
  const std::string label = disturbance_label(mdl);
  double target = uni(ex.vx_low, ex.vx_high);
  DynamicState s{0.0, 0.0, 0.0, target, 0.0, 0.0};
  const auto hold_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ex.target_hold / ts)));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * ts;
    if (i > 0 && i % hold_steps == 0) target = uni(ex.vx_low, ex.vx_high);
    double steer = 0.0;
    for (int k = 0; k < 3; ++k) steer += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t + phase[k]);
    steer *= ex.steer_amplitude / amp_sum;
    double throttle = hold(target) + ex.speed_gain * (target - s.vx) +
                      ex.throttle_dither * std::sin(2.0 * std::numbers::pi * dither_freq * t + dither_phase);
    throttle = std::clamp(throttle, 0.0, 1.0);
    const DynamicInput u{throttle, steer};
    try {
      Vector xdot = dynamic_rhs(s, u, mdl, t);
      tr.push(t, s.to_vector(), u.to_vector(), std::move(xdot), label);
      if (i + 1 < n) s = dynamic_discrete_step(s, u, mdl, t);
    } catch (const std::exception& e) {
      tr.exit_reason = "t=" + io::format_double(t) + ": " + e.what();
      break;
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Dataset files

inline std::string trajectory_to_csv(const Trajectory& tr) {
  std::vector<std::string> header{"t"};
  for (const auto& n : tr.state_names) header.push_back(n);
  for (const auto& n : tr.input_names) header.push_back(n);
  for (const auto& n : tr.state_names) header.push_back("d_" + n);
  header.emplace_back("disturbance_kind");
  std::string out = io::join(header) + "\n";
  for (std::size_t i = 0; i < tr.size(); ++i) {
    std::vector<std::string> cells{io::format_double(tr.t[i])};
    for (const Vector* v : {&tr.states[i], &tr.inputs[i], &tr.derivatives[i]})
      for (Eigen::Index k = 0; k < v->size(); ++k) cells.push_back(io::format_double((*v)[k]));
    cells.push_back(tr.disturbance[i]);
    out += io::join(cells) + "\n";
  }
  return out;
}

inline Trajectory trajectory_from_csv(std::istream& in) {
  const io::CsvTable tab = io::parse_csv(in);
  const auto& h = tab.header;
  if (h.size() < 3 || h.front() != "t" || h.back() != "disturbance_kind")
    throw io::ParseError("dataset header must start with 't' and end with 'disturbance_kind'", 1);
  Trajectory tr;
  std::size_t col = 1;
  while (col < h.size() - 1 && h[col].rfind("d_", 0) != 0) ++col;
  const std::size_t derivs = h.size() - 1 - col;
  const std::size_t ns = derivs;
  if (ns == 0 || col < 1 + ns) throw io::ParseError("dataset header has no derivative columns", 1);
  for (std::size_t k = 0; k < ns; ++k) {
    tr.state_names.push_back(h[1 + k]);
    if (h[col + k] != "d_" + h[1 + k]) throw io::ParseError("derivative column '" + h[col + k] + "' out of order", 1);
  }
  for (std::size_t k = 1 + ns; k < col; ++k) tr.input_names.push_back(h[k]);
  const std::size_t ni = tr.input_names.size();
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::size_t line = tab.line_numbers[r];
    Vector x(static_cast<Eigen::Index>(ns)), u(static_cast<Eigen::Index>(ni)), xd(static_cast<Eigen::Index>(ns));
    for (std::size_t k = 0; k < ns; ++k) x[static_cast<Eigen::Index>(k)] = io::parse_double(row[1 + k], line);
    for (std::size_t k = 0; k < ni; ++k) u[static_cast<Eigen::Index>(k)] = io::parse_double(row[1 + ns + k], line);
    for (std::size_t k = 0; k < ns; ++k) xd[static_cast<Eigen::Index>(k)] = io::parse_double(row[col + k], line);
    tr.push(io::parse_double(row[0], line), std::move(x), std::move(u), std::move(xd), row.back());
  }
  return tr;
}

inline void write_dataset(const Trajectory& tr, const std::filesystem::path& path) {
  io::write_file(path, trajectory_to_csv(tr));
}

inline Trajectory read_dataset(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  try {
    return trajectory_from_csv(in);
  } catch (const io::ParseError& e) {
    throw io::ParseError("dataset '" + path.string() + "': " + e.what());
  }
}

}  // namespace fisherpinn
