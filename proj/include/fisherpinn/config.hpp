#pragma once

// Experiment configuration: a TOML subset (sections, key = value, arrays,
// [[array]] tables) read through CLI11's TOML reader, then resolved into
// typed settings. Unknown keys are errors so typos do not pass silently.

#include "fisherpinn/datagen.hpp"
#include "fisherpinn/dynamics.hpp"
#include "fisherpinn/estimator.hpp"
#include "fisherpinn/fidelity.hpp"
#include "fisherpinn/io.hpp"
#include "fisherpinn/training.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fisherpinn::config {

using io::json;

// Raw tree: objects for sections, arrays of objects for [[name]] tables and
// arrays of strings for values (a scalar is a one-element array).
inline json parse_toml(const std::string& text) {
  std::set<std::string> table_arrays;
  static const std::regex header(R"(^\s*\[\[\s*([A-Za-z0-9_.\-]+)\s*\]\]\s*(#.*)?$)");
  {
    std::istringstream lines(text);
    std::string line;
    std::smatch m;
    while (std::getline(lines, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (std::regex_match(line, m, header)) table_arrays.insert(m[1].str());
    }
  }
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  json root = json::object();
  auto dotted = [](const std::vector<std::string>& parts) {
    std::string s;
    for (const auto& p : parts) s += (s.empty() ? "" : ".") + p;
    return s;
  };
  // Resolves a parent path to its object, descending into the last element of
  // table arrays.
  auto node_for = [&](const std::vector<std::string>& parents) -> json& {
    json* n = &root;
    std::vector<std::string> prefix;
    for (const auto& p : parents) {
      prefix.push_back(p);
      const bool is_array = table_arrays.count(dotted(prefix)) > 0;
      if (!n->contains(p)) (*n)[p] = is_array ? json::array({json::object()}) : json::object();
      n = &(*n)[p];
      if (is_array) n = &n->back();
      if (!n->is_object()) throw ConfigError("config key '" + dotted(prefix) + "' is both a value and a section");
    }
    return *n;
  };
  std::set<std::string> opened;
  for (const auto& it : items) {
    if (it.name == "++") {
      const std::string path = dotted(it.parents);
      if (table_arrays.count(path)) {
        // each [[name]] header after the first starts a new element
        if (opened.count(path)) {
          std::vector<std::string> up(it.parents.begin(), it.parents.end() - 1);
          node_for(up)[it.parents.back()].push_back(json::object());
        }
        opened.insert(path);
      }
      node_for(it.parents);
      continue;
    }
    if (it.name == "--") continue;
    json& n = node_for(it.parents);
    if (n.contains(it.name)) throw ConfigError("duplicate config key '" + it.fullname() + "'");
    n[it.name] = it.inputs;
  }
  return root;
}

inline json load_toml(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_toml(io::read_file(path));
}

/// Typed access to one section. Every key read is recorded so that leftovers
/// can be reported as unknown.
class Reader {
 public:
  Reader(const json* node, std::string path, std::set<std::string>* used)
      : node_(node), path_(std::move(path)), used_(used) {}

  bool has(const std::string& key) const { return node_ && node_->contains(key); }

  Reader section(const std::string& key) const {
    mark(key);
    if (!has(key)) return {nullptr, full(key), used_};
    const json& n = node_->at(key);
    if (!n.is_object()) throw ConfigError("'" + full(key) + "' must be a section");
    return {&n, full(key), used_};
  }

  std::vector<Reader> tables(const std::string& key) const {
    mark(key);
    std::vector<Reader> out;
    if (!has(key)) return out;
    const json& n = node_->at(key);
    if (n.is_object()) {
      out.emplace_back(&n, full(key) + "[0]", used_);
    } else {
      if (!n.is_array() || n.empty() || !n[0].is_object()) throw ConfigError("'" + full(key) + "' must be a table list");
      for (std::size_t i = 0; i < n.size(); ++i) out.emplace_back(&n[i], full(key) + "[" + std::to_string(i) + "]", used_);
    }
    return out;
  }

  double number(const std::string& key, double def) const {
    auto v = scalar(key);
    return v ? to_double(*v, key) : def;
  }

  long long integer(const std::string& key, long long def) const {
    auto v = scalar(key);
    if (!v) return def;
    long long out = 0;
    const char* end = v->data() + v->size();
    auto [p, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("'" + full(key) + "' must be an integer, got '" + *v + "'");
    return out;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) const {
    auto v = scalar(key);
    if (!v) return def;
    std::uint64_t out = 0;
    const char* end = v->data() + v->size();
    auto [p, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || p != end)
      throw ConfigError("'" + full(key) + "' must be a nonnegative integer, got '" + *v + "'");
    return out;
  }

  bool boolean(const std::string& key, bool def) const {
    auto v = scalar(key);
    if (!v) return def;
    if (*v == "true") return true;
    if (*v == "false") return false;
    throw ConfigError("'" + full(key) + "' must be true or false, got '" + *v + "'");
  }

  std::string string(const std::string& key, const std::string& def) const {
    auto v = scalar(key);
    return v ? *v : def;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) const {
    if (!present(key)) return def;
    std::vector<double> out;
    for (const auto& s : values(key)) out.push_back(to_double(s, key));
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> def) const {
    if (!present(key)) return def;
    return values(key);
  }

  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  void mark(const std::string& key) const {
    if (used_) used_->insert(full(key));
  }
  bool present(const std::string& key) const {
    mark(key);
    return has(key);
  }
  std::vector<std::string> values(const std::string& key) const {
    const json& n = node_->at(key);
    if (!n.is_array() || (!n.empty() && !n[0].is_string())) throw ConfigError("'" + full(key) + "' must be a value, not a section");
    return n.get<std::vector<std::string>>();
  }
  std::optional<std::string> scalar(const std::string& key) const {
    if (!present(key)) return std::nullopt;
    auto v = values(key);
    if (v.size() != 1) throw ConfigError("'" + full(key) + "' must be a single value");
    return v[0];
  }
  double to_double(const std::string& s, const std::string& key) const {
    try {
      return io::parse_double(s);
    } catch (const io::ParseError&) {
      throw ConfigError("'" + full(key) + "' must be a number, got '" + s + "'");
    }
  }

  const json* node_;
  std::string path_;
  std::set<std::string>* used_;
};

/// Throws naming every key of the raw tree that was never read.
inline void check_unknown_keys(const json& root, const std::set<std::string>& used) {
  std::vector<std::string> unknown;
  auto walk = [&](auto&& self, const json& n, const std::string& path) -> void {
    for (auto it = n.begin(); it != n.end(); ++it) {
      const std::string p = path.empty() ? it.key() : path + "." + it.key();
      if (!used.count(p)) {
        unknown.push_back(p);
        continue;
      }
      if (it->is_object()) {
        self(self, *it, p);
      } else if (it->is_array() && !it->empty() && (*it)[0].is_object()) {
        for (std::size_t i = 0; i < it->size(); ++i) self(self, (*it)[i], p + "[" + std::to_string(i) + "]");
      }
    }
  };
  walk(walk, root, "");
  if (!unknown.empty()) {
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ConfigError(msg);
  }
}

// ---------------------------------------------------------------------------
// Resolved experiment settings

enum class ExperimentKind { kinematic_regimes, dynamic_disturbances, fisher_field, custom };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kinematic_regimes: return "kinematic_regimes";
    case ExperimentKind::dynamic_disturbances: return "dynamic_disturbances";
    case ExperimentKind::fisher_field: return "fisher_field";
    case ExperimentKind::custom: return "custom";
  }
  return "custom";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::kinematic_regimes, ExperimentKind::dynamic_disturbances, ExperimentKind::fisher_field,
                 ExperimentKind::custom})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s +
                    "' (expected kinematic_regimes, dynamic_disturbances, fisher_field or custom)");
}

struct TrainSettings {
  RegimeConfig regime;  // regime field ignored; see regimes
  std::vector<Regime> regimes{Regime::physics_only};
  std::vector<Candidate> architectures = default_sweep_space();
  bool default_architectures = true;
  int checkpoints = 5;  // best-ranked checkpoints kept per regime
  std::string resume;   // checkpoint used as the initial network
};

struct CompareSettings {
  std::string checkpoint;
  bool bypass = false;
  int grid_points = 6;
  Tolerances tolerances;
};

struct DisturbSettings {
  ExcitationConfig excitation;
  EstimatorConfig estimator;
  double guard_low = 0.5;
  double guard_high = 1.5;
  int fisher_stride = 10;
  int vy_bins = 5;
  bool baseline = false;
};

struct FieldSettings {
  std::string model = "kinematic";  // kinematic, dynamic or network
  std::string checkpoint;
  std::string points = "grid";  // grid, random or dataset
  int grid_points = 6;
  int count = 1000;
  std::string dataset;
  std::size_t stride = 1;
  FieldPolicy policy;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::custom;
  std::optional<std::uint64_t> seed;
  std::string output;
  unsigned jobs = 1;

  SimulationConfig simulation;
  MixedDataConfig mixed;
  CollocationBounds collocation = CollocationBounds::kinematic_default();
  TrainSettings train;
  CompareSettings compare;

  DynamicModel model;
  std::vector<DisturbanceConfig> disturbances;
  DisturbSettings disturb;

  FieldSettings field;

  std::uint64_t master_seed() const {
    if (!seed) throw ConfigError("a seed is required: set 'seed' in the config or pass --seed");
    return *seed;
  }
  VehicleParams kinematic_vehicle() const {
    VehicleParams p;
    p.L = simulation.wheelbase;
    return p;
  }
};

namespace detail {

inline Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline int to_int(const Reader& r, const std::string& key, int def) {
  const long long v = r.integer(key, def);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("'" + r.full(key) + "' out of range");
  return static_cast<int>(v);
}

inline std::size_t to_count(const Reader& r, const std::string& key, std::size_t def) {
  const long long v = r.integer(key, static_cast<long long>(def));
  if (v < 0) throw ConfigError("'" + r.full(key) + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

inline Candidate parse_architecture(const std::string& s) {
  Candidate c;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find('-', start), s.size());
    const std::string tok = s.substr(start, end - start);
    const std::size_t digit = tok.find_first_of("0123456789");
    if (tok.empty() || digit == 0 || digit == std::string::npos)
      throw ConfigError("architecture '" + s + "': expected layers like tanh32-tanh32");
    int width = 0;
    const std::string w = tok.substr(digit);
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), width);
    if (ec != std::errc() || p != w.data() + w.size() || width < 1)
      throw ConfigError("architecture '" + s + "': bad width in '" + tok + "'");
    try {
      c.hidden.push_back({width, nn::activation_from_string(tok.substr(0, digit))});
    } catch (const std::invalid_argument& e) {
      throw ConfigError("architecture '" + s + "': " + e.what());
    }
    start = end + 1;
  }
  return c;
}

inline DisturbanceConfig read_disturbance(const Reader& r) {
  const std::string kind = r.string("kind", "");
  if (kind.empty()) throw ConfigError("'" + r.full("kind") + "' is required");
  DisturbanceConfig d;
  switch (disturbance_kind_from_string(kind)) {
    case DisturbanceKind::none: d.params = NoDisturbance{}; break;
    case DisturbanceKind::wind: {
      WindDisturbance w;
      w.rho = r.number("rho", 1.2);
      w.area = r.number("area", 0.01);
      w.Cw = r.number("Cw", 0.8);
      w.vw = r.number("vw", 3.0);
      d.params = w;
      break;
    }
    case DisturbanceKind::bank: d.params = BankDisturbance{r.number("beta", 0.1)}; break;
    case DisturbanceKind::bump: {
      BumpDisturbance b;
      b.ks = r.number("ks", 3.0);
      b.cs = r.number("cs", 0.05);
      b.z_amplitude = r.number("z_amplitude", 0.01);
      b.z_frequency = r.number("z_frequency", 2.0);
      d.params = b;
      break;
    }
    case DisturbanceKind::roll: {
      RollDisturbance o;
      o.k_phi = r.number("k_phi", 1.0);
      o.c_phi = r.number("c_phi", 0.0);
      o.stiffness_sensitivity = r.number("stiffness_sensitivity", 1.0);
      d.params = o;
      break;
    }
    case DisturbanceKind::tire_temperature: {
      TireTemperatureDisturbance t;
      t.mu0 = r.number("mu0", 1.0);
      t.kT = r.number("kT", 0.1);
      t.T0 = r.number("T0", 20.0);
      t.T_start = r.number("T_start", 25.0);
      t.T_end = r.number("T_end", 60.0);
      t.tau_heat = r.number("tau_heat", 10.0);
      d.params = t;
      break;
    }
  }
  d.validate();
  return d;
}

inline void read_tire(const Reader& r, PacejkaCoefficients& c) {
  c.B = r.number("B", c.B);
  c.C = r.number("C", c.C);
  c.D = r.number("D", c.D);
  c.E = r.number("E", c.E);
  c.G = r.number("G", c.G);
  c.K = r.number("K", c.K);
}

inline FieldPolicy read_policy(const Reader& r) {
  FieldPolicy p;
  const std::string name = r.string("policy", "flow_aligned");
  if (name == "flow_aligned") {
    p.policy = DirectionPolicy::flow_aligned;
  } else if (name == "fixed") {
    p.policy = DirectionPolicy::fixed;
    const auto dir = r.numbers("direction", {});
    if (dir.empty()) throw ConfigError("'" + r.full("direction") + "' is required for the fixed policy");
    p.fixed_direction = to_vector(dir);
  } else if (name == "basis_axis") {
    p.policy = DirectionPolicy::basis_axis;
    p.axis = to_int(r, "axis", 0);
  } else {
    throw ConfigError("unknown direction policy '" + name + "' (expected flow_aligned, fixed or basis_axis)");
  }
  p.flow_floor = r.number("flow_floor", kFlowFloor);
  return p;
}

}  // namespace detail

/// Resolves a raw tree into settings, filling defaults and validating.
inline ExperimentConfig resolve(const json& raw) {
  std::set<std::string> used;
  const Reader top(&raw, "", &used);
  ExperimentConfig c;
  c.kind = experiment_kind_from_string(top.string("kind", "custom"));
  if (top.has("seed")) c.seed = top.unsigned_integer("seed", 0);
  c.output = top.string("output", "");
  const long long jobs = top.integer("jobs", 1);
  if (jobs < 1) throw ConfigError("'jobs' must be at least 1");
  c.jobs = static_cast<unsigned>(jobs);

  {
    const Reader r = top.section("simulation");
    auto& s = c.simulation;
    s.dt = r.number("dt", s.dt);
    s.total_time = r.number("total_time", s.total_time);
    s.wheelbase = r.number("wheelbase", s.wheelbase);
    s.lookahead = r.number("lookahead", s.lookahead);
    s.speed = r.number("speed", s.speed);
    s.radius = r.number("radius", s.radius);
    s.path_points = detail::to_int(r, "path_points", s.path_points);
    s.derivative_noise = r.number("derivative_noise", s.derivative_noise);
    s.validate();
  }
  {
    const Reader r = top.section("mixed");
    auto& m = c.mixed;
    m.straight_count = detail::to_int(r, "straight_count", m.straight_count);
    m.arc_count = detail::to_int(r, "arc_count", m.arc_count);
    m.segment_time = r.number("segment_time", m.segment_time);
    m.min_speed = r.number("min_speed", m.min_speed);
    m.max_speed = r.number("max_speed", m.max_speed);
    m.max_arc_steer = r.number("max_arc_steer", m.max_arc_steer);
    m.min_run = detail::to_count(r, "min_run", m.min_run);
    if (m.straight_count < 0 || m.arc_count < 0) throw ConfigError("mixed segment counts must be nonnegative");
  }
  {
    const Reader r = top.section("collocation");
    auto& b = c.collocation;
    b.lower = detail::to_vector(r.numbers("lower", detail::to_std(b.lower)));
    b.upper = detail::to_vector(r.numbers("upper", detail::to_std(b.upper)));
    b.validate();
    auto& t = c.train.regime;
    t.collocation_count = detail::to_count(r, "count", t.collocation_count);
    t.validation_count = detail::to_count(r, "validation_count", t.validation_count);
    if (t.collocation_count == 0) throw ConfigError("'collocation.count' must be at least 1 (got 0)");
    if (t.validation_count == 0) throw ConfigError("'collocation.validation_count' must be at least 1 (got 0)");
  }
  {
    const Reader r = top.section("training");
    auto& t = c.train;
    t.regimes.clear();
    for (const auto& s : r.strings("regimes", {"physics_only"})) t.regimes.push_back(regime_from_string(s));
    if (t.regimes.empty()) throw ConfigError("'training.regimes' must list at least one regime");
    auto& g = t.regime;
    g.lambda_p = r.number("lambda_p", g.lambda_p);
    g.lambda_d = r.number("lambda_d", g.lambda_d);
    g.epochs = detail::to_int(r, "epochs", g.epochs);
    g.batch_size = detail::to_int(r, "batch_size", g.batch_size);
    g.horizon = detail::to_int(r, "horizon", g.horizon);
    g.learning_rate = r.number("learning_rate", g.learning_rate);
    g.dt = c.simulation.dt;
    if (r.has("architectures")) {
      t.architectures.clear();
      t.default_architectures = false;
      for (const auto& a : r.strings("architectures", {})) {
        Candidate cand = detail::parse_architecture(a);
        t.architectures.push_back(std::move(cand));
      }
      if (t.architectures.empty()) throw ConfigError("'training.architectures' must not be empty");
    }
    t.checkpoints = detail::to_int(r, "checkpoints", t.checkpoints);
    t.resume = r.string("resume", "");
    g.validate();
  }
  {
    const Reader r = top.section("compare");
    auto& m = c.compare;
    m.checkpoint = r.string("checkpoint", "");
    m.bypass = r.boolean("bypass", false);
    m.grid_points = detail::to_int(r, "grid_points", m.grid_points);
    if (m.grid_points < 2) throw ConfigError("'compare.grid_points' must be at least 2");
    m.tolerances.eps_d = r.number("eps_d", m.tolerances.eps_d);
    m.tolerances.eps_p = r.number("eps_p", m.tolerances.eps_p);
    m.tolerances.eps = r.number("eps", m.tolerances.eps);
    if (m.tolerances.eps_d < 0 || m.tolerances.eps_p < 0 || m.tolerances.eps < 0)
      throw ConfigError("tolerances must be nonnegative");
  }
  {
    const Reader r = top.section("model");
    auto& m = c.model;
    const Reader v = r.section("vehicle");
    m.vehicle.m = v.number("m", m.vehicle.m);
    m.vehicle.Iz = v.number("Iz", m.vehicle.Iz);
    m.vehicle.lf = v.number("lf", m.vehicle.lf);
    m.vehicle.lr = v.number("lr", m.vehicle.lr);
    m.vehicle.L = v.number("L", m.vehicle.lf + m.vehicle.lr);
    m.vehicle.Ts = v.number("Ts", m.vehicle.Ts);
    const Reader tires = r.section("tires");
    detail::read_tire(tires.section("front"), m.tires.front);
    detail::read_tire(tires.section("rear"), m.tires.rear);
    const Reader d = r.section("drivetrain");
    m.drivetrain.Cm1 = d.number("Cm1", m.drivetrain.Cm1);
    m.drivetrain.Cm2 = d.number("Cm2", m.drivetrain.Cm2);
    m.drivetrain.Cr0 = d.number("Cr0", m.drivetrain.Cr0);
    m.drivetrain.Cd = d.number("Cd", m.drivetrain.Cd);
    m.vx_min = r.number("vx_min", m.vx_min);
    m.validate();
  }
  for (const auto& r : top.tables("disturbance")) c.disturbances.push_back(detail::read_disturbance(r));
  {
    const Reader r = top.section("excitation");
    auto& e = c.disturb.excitation;
    e.duration = r.number("duration", e.duration);
    e.trajectories = detail::to_int(r, "trajectories", e.trajectories);
    e.vx_low = r.number("vx_low", e.vx_low);
    e.vx_high = r.number("vx_high", e.vx_high);
    e.steer_amplitude = r.number("steer_amplitude", e.steer_amplitude);
    e.steer_freq_low = r.number("steer_freq_low", e.steer_freq_low);
    e.steer_freq_high = r.number("steer_freq_high", e.steer_freq_high);
    e.throttle_dither = r.number("throttle_dither", e.throttle_dither);
    e.speed_gain = r.number("speed_gain", e.speed_gain);
    e.target_hold = r.number("target_hold", e.target_hold);
    e.validate();
  }
  {
    const Reader r = top.section("estimator");
    auto& d = c.disturb;
    auto& e = d.estimator;
    e.epochs = 30;
    e.tau = detail::to_int(r, "tau", e.tau);
    e.hidden = detail::to_int(r, "hidden", e.hidden);
    e.dense = detail::to_int(r, "dense", e.dense);
    e.learning_rate = r.number("learning_rate", e.learning_rate);
    e.epochs = detail::to_int(r, "epochs", e.epochs);
    e.batch_size = detail::to_int(r, "batch_size", e.batch_size);
    d.guard_low = r.number("guard_low", d.guard_low);
    d.guard_high = r.number("guard_high", d.guard_high);
    if (!(d.guard_low < d.guard_high)) throw ConfigError("'estimator.guard_low' must be below 'estimator.guard_high'");
    e.bounds = scaled_guard_bounds(c.model.coefficients(), d.guard_low, d.guard_high);
    e.validate();
  }
  {
    const Reader r = top.section("disturb");
    auto& d = c.disturb;
    d.fisher_stride = detail::to_int(r, "fisher_stride", d.fisher_stride);
    d.vy_bins = detail::to_int(r, "vy_bins", d.vy_bins);
    d.baseline = r.boolean("baseline", d.baseline);
    if (d.fisher_stride < 1 || d.vy_bins < 1) throw ConfigError("'disturb.fisher_stride' and 'disturb.vy_bins' must be >= 1");
  }
  {
    const Reader r = top.section("fisher_field");
    auto& f = c.field;
    f.model = r.string("model", f.model);
    if (f.model != "kinematic" && f.model != "dynamic" && f.model != "network")
      throw ConfigError("unknown fisher_field.model '" + f.model + "' (expected kinematic, dynamic or network)");
    f.checkpoint = r.string("checkpoint", "");
    if (f.model == "network" && f.checkpoint.empty())
      throw ConfigError("'fisher_field.checkpoint' is required when fisher_field.model = \"network\"");
    f.points = r.string("points", f.points);
    if (f.points != "grid" && f.points != "random" && f.points != "dataset")
      throw ConfigError("unknown fisher_field.points '" + f.points + "' (expected grid, random or dataset)");
    f.grid_points = detail::to_int(r, "grid_points", f.grid_points);
    f.count = detail::to_int(r, "count", f.count);
    f.dataset = r.string("dataset", "");
    f.stride = detail::to_count(r, "stride", f.stride);
    if (f.points == "dataset" && f.dataset.empty())
      throw ConfigError("'fisher_field.dataset' is required when fisher_field.points = \"dataset\"");
    if (f.grid_points < 2 || f.count < 1 || f.stride < 1) throw ConfigError("fisher_field point counts must be positive");
    f.policy = detail::read_policy(r);
  }
  check_unknown_keys(raw, used);
  return c;
}

inline ExperimentConfig load(const std::filesystem::path& path) { return resolve(load_toml(path)); }

namespace detail {

inline json tire_json(const PacejkaCoefficients& c) {
  return {{"B", c.B}, {"C", c.C}, {"D", c.D}, {"E", c.E}, {"G", c.G}, {"K", c.K}};
}

inline json disturbance_json(const DisturbanceConfig& d) {
  json j{{"kind", std::string(to_string(d.kind()))}};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, WindDisturbance>) {
          j.update({{"rho", p.rho}, {"area", p.area}, {"Cw", p.Cw}, {"vw", p.vw}});
        } else if constexpr (std::is_same_v<T, BankDisturbance>) {
          j["beta"] = p.beta;
        } else if constexpr (std::is_same_v<T, BumpDisturbance>) {
          j.update({{"ks", p.ks}, {"cs", p.cs}, {"z_amplitude", p.z_amplitude}, {"z_frequency", p.z_frequency}});
        } else if constexpr (std::is_same_v<T, RollDisturbance>) {
          j.update({{"k_phi", p.k_phi}, {"c_phi", p.c_phi}, {"stiffness_sensitivity", p.stiffness_sensitivity}});
        } else if constexpr (std::is_same_v<T, TireTemperatureDisturbance>) {
          j.update({{"mu0", p.mu0}, {"kT", p.kT}, {"T0", p.T0}, {"T_start", p.T_start}, {"T_end", p.T_end},
                    {"tau_heat", p.tau_heat}});
        }
      },
      d.params);
  return j;
}

}  // namespace detail

/// Full resolved configuration, defaults included, in the same layout as the
/// config file.
inline json to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["output"] = c.output;
  j["jobs"] = c.jobs;
  const auto& s = c.simulation;
  j["simulation"] = {{"dt", s.dt},           {"total_time", s.total_time}, {"wheelbase", s.wheelbase},
                     {"lookahead", s.lookahead}, {"speed", s.speed},       {"radius", s.radius},
                     {"path_points", s.path_points}, {"derivative_noise", s.derivative_noise}};
  const auto& m = c.mixed;
  j["mixed"] = {{"straight_count", m.straight_count}, {"arc_count", m.arc_count},   {"segment_time", m.segment_time},
                {"min_speed", m.min_speed},           {"max_speed", m.max_speed},   {"max_arc_steer", m.max_arc_steer},
                {"min_run", m.min_run}};
  j["collocation"] = {{"lower", detail::to_std(c.collocation.lower)},
                      {"upper", detail::to_std(c.collocation.upper)},
                      {"count", c.train.regime.collocation_count},
                      {"validation_count", c.train.regime.validation_count}};
  const auto& g = c.train.regime;
  std::vector<std::string> regimes, archs;
  for (auto r : c.train.regimes) regimes.push_back(to_string(r));
  for (const auto& a : c.train.architectures) {
    std::vector<nn::LayerSpec> layers = a.hidden;
    layers.push_back({1, nn::Activation::linear});
    archs.push_back(nn::describe(layers));
  }
  j["training"] = {{"regimes", regimes},          {"lambda_p", g.lambda_p},   {"lambda_d", g.lambda_d},
                   {"epochs", g.epochs},          {"batch_size", g.batch_size}, {"horizon", g.horizon},
                   {"learning_rate", g.learning_rate}, {"architectures", archs}, {"checkpoints", c.train.checkpoints},
                   {"resume", c.train.resume}};
  const auto& cm = c.compare;
  j["compare"] = {{"checkpoint", cm.checkpoint},   {"bypass", cm.bypass},           {"grid_points", cm.grid_points},
                  {"eps_d", cm.tolerances.eps_d}, {"eps_p", cm.tolerances.eps_p}, {"eps", cm.tolerances.eps}};
  const auto& v = c.model.vehicle;
  const auto& d = c.model.drivetrain;
  j["model"] = {{"vehicle", {{"m", v.m}, {"Iz", v.Iz}, {"lf", v.lf}, {"lr", v.lr}, {"L", v.L}, {"Ts", v.Ts}}},
                {"tires", {{"front", detail::tire_json(c.model.tires.front)}, {"rear", detail::tire_json(c.model.tires.rear)}}},
                {"drivetrain", {{"Cm1", d.Cm1}, {"Cm2", d.Cm2}, {"Cr0", d.Cr0}, {"Cd", d.Cd}}},
                {"vx_min", c.model.vx_min}};
  j["disturbance"] = json::array();
  for (const auto& x : c.disturbances) j["disturbance"].push_back(detail::disturbance_json(x));
  const auto& e = c.disturb.excitation;
  j["excitation"] = {{"duration", e.duration},           {"trajectories", e.trajectories},
                     {"vx_low", e.vx_low},               {"vx_high", e.vx_high},
                     {"steer_amplitude", e.steer_amplitude}, {"steer_freq_low", e.steer_freq_low},
                     {"steer_freq_high", e.steer_freq_high}, {"throttle_dither", e.throttle_dither},
                     {"speed_gain", e.speed_gain},       {"target_hold", e.target_hold}};
  const auto& es = c.disturb.estimator;
  j["estimator"] = {{"tau", es.tau},           {"hidden", es.hidden},         {"dense", es.dense},
                    {"learning_rate", es.learning_rate}, {"epochs", es.epochs}, {"batch_size", es.batch_size},
                    {"guard_low", c.disturb.guard_low}, {"guard_high", c.disturb.guard_high}};
  j["disturb"] = {{"fisher_stride", c.disturb.fisher_stride}, {"vy_bins", c.disturb.vy_bins}, {"baseline", c.disturb.baseline}};
  const auto& f = c.field;
  json fj = {{"model", f.model},     {"checkpoint", f.checkpoint}, {"points", f.points}, {"grid_points", f.grid_points},
             {"count", f.count},     {"dataset", f.dataset},       {"stride", f.stride},
             {"policy", to_string(f.policy.policy)}, {"flow_floor", f.policy.flow_floor}};
  if (f.policy.policy == DirectionPolicy::fixed) fj["direction"] = detail::to_std(f.policy.fixed_direction);
  if (f.policy.policy == DirectionPolicy::basis_axis) fj["axis"] = f.policy.axis;
  j["fisher_field"] = fj;
  return j;
}

}  // namespace fisherpinn::config
