#pragma once

#include "fisherpinn/numerics.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace fisherpinn {

/// Model evaluated outside its valid envelope (e.g. vx below the slip-angle guard).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kGravity = 9.81;
inline constexpr double kMaxSteer = 0.5236;

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

// ---------------------------------------------------------------------------
// Kinematic bicycle (rear-axle reference point)

struct KinematicState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vector to_vector() const { return Vector{{x, y, theta}}; }
  static KinematicState from_vector(const Vector& v) { return {v[0], v[1], v[2]}; }
};

struct KinematicInput {
  double v = 0.0;
  double delta = 0.0;

  Vector to_vector() const { return Vector{{v, delta}}; }
  static KinematicInput from_vector(const Vector& u) { return {u[0], u[1]}; }
};

struct VehicleParams {
  double m = 0.041;
  double Iz = 27.8e-6;
  double lf = 0.029;
  double lr = 0.033;
  double L = 2.5;    // wheelbase of the kinematic model
  double Ts = 0.01;  // discrete step of the dynamic model

  void validate() const {
    if (!(m > 0 && Iz > 0 && lf > 0 && lr > 0 && L > 0 && Ts > 0))
      throw ConfigError("vehicle parameters must all be positive");
  }
};

inline void check_steer(double delta) {
  if (!(std::abs(delta) < std::numbers::pi / 2))
    throw DomainError("steering angle must satisfy |delta| < pi/2");
}

inline Vector kinematic_rhs(const KinematicState& s, const KinematicInput& u, const VehicleParams& p) {
  check_steer(u.delta);
  return Vector{{u.v * std::cos(s.theta), u.v * std::sin(s.theta), u.v * std::tan(u.delta) / p.L}};
}

inline Matrix kinematic_jacobian(const KinematicState& s, const KinematicInput& u, const VehicleParams& p) {
  check_steer(u.delta);
  (void)p;
  Matrix a = Matrix::Zero(3, 3);
  a(0, 2) = -u.v * std::sin(s.theta);
  a(1, 2) = u.v * std::cos(s.theta);
  return a;
}

// ---------------------------------------------------------------------------
// Tire and drivetrain force laws

struct PacejkaCoefficients {
  double B = 1.0;
  double C = 1.0;
  double D = 0.0;
  double E = 0.0;
  double G = 1.0;
  double K = 0.0;

  void validate() const {
    if (!(B > 0 && C > 0 && D >= 0)) throw ConfigError("Pacejka coefficients require B > 0, C > 0, D >= 0");
  }
};

struct TireSet {
  PacejkaCoefficients front{5.579, 1.2, 0.192, -0.083, 1.0, 0.0};
  PacejkaCoefficients rear{5.3852, 1.2691, 0.1737, -0.019, 1.0, 0.0};
};

struct DrivetrainCoefficients {
  double Cm1 = 0.287;
  double Cm2 = 0.0545;
  double Cr0 = 0.0518;
  double Cd = 0.00035;

  void validate() const {
    if (!(Cm1 >= 0 && Cm2 >= 0 && Cr0 >= 0 && Cd >= 0))
      throw ConfigError("drivetrain coefficients must be nonnegative");
  }
};

namespace detail {
struct PacejkaTerms {
  double phi;      // argument of the outer arctan
  double outer;    // C * atan(phi)
  double dphi_da;  // d phi / d alpha
};

inline PacejkaTerms pacejka_terms(double alpha, const PacejkaCoefficients& c) {
  const double ba = c.B * alpha;
  const double bag = ba * c.G;
  const double phi = ba - c.E * (ba - std::atan(bag));
  const double dphi = c.B - c.E * (c.B - c.B * c.G / (1.0 + bag * bag));
  return {phi, c.C * std::atan(phi), dphi};
}
}  // namespace detail

/// F = K + D sin(C atan(B a - E (B a - atan(B a G)))).
inline double pacejka_lateral_force(double alpha, const PacejkaCoefficients& c) {
  const auto t = detail::pacejka_terms(alpha, c);
  return c.K + c.D * std::sin(t.outer);
}

inline double pacejka_derivative(double alpha, const PacejkaCoefficients& c) {
  const auto t = detail::pacejka_terms(alpha, c);
  return c.D * std::cos(t.outer) * c.C / (1.0 + t.phi * t.phi) * t.dphi_da;
}

/// Partials of the tire force with respect to (B, C, D, E).
inline std::array<double, 4> pacejka_coefficient_gradient(double alpha, const PacejkaCoefficients& c) {
  const auto t = detail::pacejka_terms(alpha, c);
  const double ba = c.B * alpha;
  const double bag = ba * c.G;
  const double cosw = std::cos(t.outer);
  const double datan = c.C / (1.0 + t.phi * t.phi);
  const double dphi_dB = alpha - c.E * (alpha - alpha * c.G / (1.0 + bag * bag));
  const double dphi_dE = -(ba - std::atan(bag));
  return {c.D * cosw * datan * dphi_dB, c.D * cosw * std::atan(t.phi), std::sin(t.outer),
          c.D * cosw * datan * dphi_dE};
}

inline double longitudinal_force(double throttle, double vx, const DrivetrainCoefficients& d) {
  return (d.Cm1 * throttle - d.Cm2 * vx) - d.Cr0 - d.Cd * vx * vx;
}

// ---------------------------------------------------------------------------
// Dynamic single-track model

struct DynamicState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double vx = 1.0;
  double vy = 0.0;
  double omega = 0.0;

  Vector to_vector() const { return Vector{{x, y, theta, vx, vy, omega}}; }
  static DynamicState from_vector(const Vector& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }
};

struct DynamicInput {
  double throttle = 0.0;
  double delta = 0.0;

  Vector to_vector() const { return Vector{{throttle, delta}}; }
  static DynamicInput from_vector(const Vector& u) { return {u[0], u[1]}; }
};

inline constexpr double kDefaultVxMin = 0.5;

struct SlipAngles {
  double front;
  double rear;
};

inline SlipAngles slip_angles(const DynamicState& s, const DynamicInput& u, const VehicleParams& p,
                              double vx_min = kDefaultVxMin) {
  if (!(s.vx > vx_min)) throw DomainError("slip angles undefined: vx must exceed " + std::to_string(vx_min));
  return {u.delta - std::atan((s.vy + p.lf * s.omega) / s.vx), -std::atan((s.vy - p.lr * s.omega) / s.vx)};
}

// ---------------------------------------------------------------------------
// Unmodeled disturbances

struct WindDisturbance {
  double rho = 1.2;
  double area = 1.0;
  double Cw = 0.8;
  double vw = 0.0;
};

struct BankDisturbance {
  double beta = 0.0;
};

struct BumpDisturbance {
  double ks = 0.0;
  double cs = 0.0;
  double z_amplitude = 0.0;
  double z_frequency = 1.0;
};

struct RollDisturbance {
  double k_phi = 1.0;
  double c_phi = 0.0;
  double stiffness_sensitivity = 0.0;
};

struct TireTemperatureDisturbance {
  double mu0 = 1.0;
  double kT = 0.1;
  double T0 = 20.0;
  double T_start = 60.0;  // tire temperature at t = 0
  double T_end = 60.0;    // asymptotic temperature
  double tau_heat = 10.0; // warm-up time constant, seconds

  double temperature(double t) const { return T_end + (T_start - T_end) * std::exp(-t / tau_heat); }
};

struct NoDisturbance {};

enum class DisturbanceKind { none, wind, bank, bump, roll, tire_temperature };

inline std::string_view to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::none: return "none";
    case DisturbanceKind::wind: return "wind";
    case DisturbanceKind::bank: return "bank";
    case DisturbanceKind::bump: return "bump";
    case DisturbanceKind::roll: return "roll";
    case DisturbanceKind::tire_temperature: return "tire_temperature";
  }
  return "none";
}

inline DisturbanceKind disturbance_kind_from_string(std::string_view s) {
  for (auto k : {DisturbanceKind::none, DisturbanceKind::wind, DisturbanceKind::bank, DisturbanceKind::bump,
                 DisturbanceKind::roll, DisturbanceKind::tire_temperature}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown disturbance kind '" + std::string(s) + "'");
}

struct DisturbanceConfig {
  std::variant<NoDisturbance, WindDisturbance, BankDisturbance, BumpDisturbance, RollDisturbance,
               TireTemperatureDisturbance>
      params;

  DisturbanceKind kind() const { return static_cast<DisturbanceKind>(params.index()); }

  void validate() const {
    auto nonneg = [](std::initializer_list<double> xs) {
      for (double x : xs)
        if (!(x >= 0.0)) throw ConfigError("disturbance parameters must be nonnegative");
    };
    std::visit(
        [&](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, WindDisturbance>) nonneg({d.rho, d.area, d.Cw});
          if constexpr (std::is_same_v<T, BumpDisturbance>) nonneg({d.ks, d.cs, d.z_amplitude, d.z_frequency});
          if constexpr (std::is_same_v<T, RollDisturbance>) {
            nonneg({d.c_phi, d.stiffness_sensitivity});
            if (!(d.k_phi > 0)) throw ConfigError("roll stiffness k_phi must be positive");
          }
          if constexpr (std::is_same_v<T, TireTemperatureDisturbance>) {
            nonneg({d.mu0, d.kT});
            if (!(d.tau_heat > 0)) throw ConfigError("tau_heat must be positive");
          }
        },
        params);
  }
};

/// Contribution of one disturbance at a state: an additive lateral force and a
/// multiplicative grip scale on the tire peak factors, with their state partials.
struct DisturbanceEffect {
  double lateral_force = 0.0;
  double dforce_dvy = 0.0;
  double grip_scale = 1.0;
  double dscale_dvx = 0.0;
  double dscale_domega = 0.0;
};

inline DisturbanceEffect evaluate_disturbance(const DisturbanceConfig& cfg, const DynamicState& s, double t,
                                              const VehicleParams& p) {
  DisturbanceEffect e;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, WindDisturbance>) {
          // Crosswind speed relative to the body's lateral motion.
          const double k = 0.5 * d.rho * d.area * d.Cw;
          const double rel = d.vw - s.vy;
          e.lateral_force = k * rel * std::abs(rel);
          e.dforce_dvy = -2.0 * k * std::abs(rel);
        } else if constexpr (std::is_same_v<T, BankDisturbance>) {
          e.lateral_force = p.m * kGravity * std::sin(d.beta);
        } else if constexpr (std::is_same_v<T, BumpDisturbance>) {
          const double w = 2.0 * std::numbers::pi * d.z_frequency;
          const double z = d.z_amplitude * std::sin(w * t);
          const double zdot = d.z_amplitude * w * std::cos(w * t);
          e.lateral_force = d.ks * z + d.cs * zdot;
        } else if constexpr (std::is_same_v<T, RollDisturbance>) {
          // Quasi-static roll angle from lateral acceleration vx * omega.
          const double phi = p.m * s.vx * s.omega / d.k_phi;
          const double scale = 1.0 - d.stiffness_sensitivity * std::abs(phi);
          if (scale > 0.0) {
            e.grip_scale = scale;
            const double sgn = (phi > 0) - (phi < 0);
            e.dscale_dvx = -d.stiffness_sensitivity * sgn * p.m * s.omega / d.k_phi;
            e.dscale_domega = -d.stiffness_sensitivity * sgn * p.m * s.vx / d.k_phi;
          } else {
            e.grip_scale = 0.0;
          }
        } else if constexpr (std::is_same_v<T, TireTemperatureDisturbance>) {
          const double mu = d.mu0 * (1.0 - std::exp(-d.kT * (d.temperature(t) - d.T0)));
          e.grip_scale = d.mu0 > 0 ? std::max(0.0, mu / d.mu0) : 0.0;
        }
      },
      cfg.params);
  return e;
}

/// Lateral force in newtons for force kinds; grip scale factor for roll and
/// tire-temperature kinds.
inline double disturbance_lateral_force(const DisturbanceConfig& cfg, const DynamicState& s, double t,
                                        const VehicleParams& p) {
  const auto e = evaluate_disturbance(cfg, s, t, p);
  switch (cfg.kind()) {
    case DisturbanceKind::roll:
    case DisturbanceKind::tire_temperature: return e.grip_scale;
    default: return e.lateral_force;
  }
}

/// Coefficients an estimator may identify, in canonical order.
enum class Coefficient { Bf, Cf, Df, Ef, Br, Cr, Dr, Er, Cm1, Cm2, Cr0, Cd, Iz };
inline constexpr std::size_t kNumCoefficients = 13;

inline constexpr std::array<std::string_view, kNumCoefficients> kCoefficientNames = {
    "Bf", "Cf", "Df", "Ef", "Br", "Cr", "Dr", "Er", "Cm1", "Cm2", "Cr0", "Cd", "Iz"};

struct DynamicModel {
  VehicleParams vehicle;
  TireSet tires;
  DrivetrainCoefficients drivetrain;
  std::vector<DisturbanceConfig> disturbances;
  double vx_min = kDefaultVxMin;

  void validate() const {
    vehicle.validate();
    tires.front.validate();
    tires.rear.validate();
    drivetrain.validate();
    for (const auto& d : disturbances) d.validate();
  }

  std::array<double, kNumCoefficients> coefficients() const {
    const auto& f = tires.front;
    const auto& r = tires.rear;
    const auto& d = drivetrain;
    return {f.B, f.C, f.D, f.E, r.B, r.C, r.D, r.E, d.Cm1, d.Cm2, d.Cr0, d.Cd, vehicle.Iz};
  }

  void set_coefficients(const std::array<double, kNumCoefficients>& c) {
    tires.front.B = c[0];
    tires.front.C = c[1];
    tires.front.D = c[2];
    tires.front.E = c[3];
    tires.rear.B = c[4];
    tires.rear.C = c[5];
    tires.rear.D = c[6];
    tires.rear.E = c[7];
    drivetrain.Cm1 = c[8];
    drivetrain.Cm2 = c[9];
    drivetrain.Cr0 = c[10];
    drivetrain.Cd = c[11];
    vehicle.Iz = c[12];
  }
};

namespace detail {

struct DynamicForces {
  SlipAngles alpha;
  double ffy, fry, frx, fdist;
  double grip;
  // partials
  double dffy_dalpha, dfry_dalpha;
  double grip_dvx = 0.0, grip_domega = 0.0;
  double fdist_dvy = 0.0;
};

inline DynamicForces dynamic_forces(const DynamicState& s, const DynamicInput& u, const DynamicModel& mdl,
                                    double t) {
  DynamicForces f{};
  f.alpha = slip_angles(s, u, mdl.vehicle, mdl.vx_min);
  f.grip = 1.0;
  f.fdist = 0.0;
  std::vector<DisturbanceEffect> scales;
  for (const auto& d : mdl.disturbances) {
    const auto e = evaluate_disturbance(d, s, t, mdl.vehicle);
    f.fdist += e.lateral_force;
    f.fdist_dvy += e.dforce_dvy;
    if (e.grip_scale != 1.0 || e.dscale_dvx != 0.0 || e.dscale_domega != 0.0) scales.push_back(e);
  }
  for (std::size_t i = 0; i < scales.size(); ++i) {
    f.grip *= scales[i].grip_scale;
    double others = 1.0;
    for (std::size_t j = 0; j < scales.size(); ++j)
      if (j != i) others *= scales[j].grip_scale;
    f.grip_dvx += scales[i].dscale_dvx * others;
    f.grip_domega += scales[i].dscale_domega * others;
  }
  const auto& tf = mdl.tires.front;
  const auto& tr = mdl.tires.rear;
  f.ffy = tf.K + f.grip * (pacejka_lateral_force(f.alpha.front, tf) - tf.K);
  f.fry = tr.K + f.grip * (pacejka_lateral_force(f.alpha.rear, tr) - tr.K);
  f.dffy_dalpha = f.grip * pacejka_derivative(f.alpha.front, tf);
  f.dfry_dalpha = f.grip * pacejka_derivative(f.alpha.rear, tr);
  f.frx = longitudinal_force(u.throttle, s.vx, mdl.drivetrain);
  return f;
}

}  // namespace detail

/// Continuous-time right-hand side (x', y', theta', vx', vy', omega').
inline Vector dynamic_rhs(const DynamicState& s, const DynamicInput& u, const DynamicModel& mdl, double t = 0.0) {
  const auto f = detail::dynamic_forces(s, u, mdl, t);
  const auto& p = mdl.vehicle;
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  const double cd = std::cos(u.delta), sd = std::sin(u.delta);
  return Vector{{s.vx * c - s.vy * sn, s.vx * sn + s.vy * c, s.omega,
                 (f.frx - f.ffy * sd + p.m * s.vy * s.omega) / p.m,
                 (f.fry + f.ffy * cd - p.m * s.vx * s.omega + f.fdist) / p.m,
                 (f.ffy * p.lf * cd - f.fry * p.lr) / p.Iz}};
}

/// Analytic state Jacobian of dynamic_rhs over (x, y, theta, vx, vy, omega).
inline Matrix dynamic_jacobian(const DynamicState& s, const DynamicInput& u, const DynamicModel& mdl,
                               double t = 0.0) {
  const auto f = detail::dynamic_forces(s, u, mdl, t);
  const auto& p = mdl.vehicle;
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  const double cd = std::cos(u.delta), sd = std::sin(u.delta);

  // Slip-angle partials w.r.t. (vx, vy, omega).
  const double a = (s.vy + p.lf * s.omega) / s.vx;
  const double b = (s.vy - p.lr * s.omega) / s.vx;
  const double ia = 1.0 / (1.0 + a * a);
  const double ib = 1.0 / (1.0 + b * b);
  const std::array<double, 3> daf{a / s.vx * ia, -ia / s.vx, -p.lf * ia / s.vx};
  const std::array<double, 3> dar{b / s.vx * ib, -ib / s.vx, p.lr * ib / s.vx};

  const auto& tf = mdl.tires.front;
  const auto& tr = mdl.tires.rear;
  const double ffy_raw = pacejka_lateral_force(f.alpha.front, tf) - tf.K;
  const double fry_raw = pacejka_lateral_force(f.alpha.rear, tr) - tr.K;
  const std::array<double, 3> dgrip{f.grip_dvx, 0.0, f.grip_domega};

  std::array<double, 3> dffy{}, dfry{};
  for (int k = 0; k < 3; ++k) {
    dffy[k] = f.dffy_dalpha * daf[k] + ffy_raw * dgrip[k];
    dfry[k] = f.dfry_dalpha * dar[k] + fry_raw * dgrip[k];
  }
  const double dfrx_dvx = -mdl.drivetrain.Cm2 - 2.0 * mdl.drivetrain.Cd * s.vx;

  Matrix j = Matrix::Zero(6, 6);
  j(0, 2) = -s.vx * sn - s.vy * c;
  j(0, 3) = c;
  j(0, 4) = -sn;
  j(1, 2) = s.vx * c - s.vy * sn;
  j(1, 3) = sn;
  j(1, 4) = c;
  j(2, 5) = 1.0;

  j(3, 3) = (dfrx_dvx - sd * dffy[0]) / p.m;
  j(3, 4) = -sd * dffy[1] / p.m + s.omega;
  j(3, 5) = -sd * dffy[2] / p.m + s.vy;

  j(4, 3) = (dfry[0] + cd * dffy[0]) / p.m - s.omega;
  j(4, 4) = (dfry[1] + cd * dffy[1] + f.fdist_dvy) / p.m;
  j(4, 5) = (dfry[2] + cd * dffy[2]) / p.m - s.vx;

  for (int k = 0; k < 3; ++k) j(5, 3 + k) = (p.lf * cd * dffy[k] - p.lr * dfry[k]) / p.Iz;
  return j;
}

/// Partials of (vx', vy', omega') with respect to the identifiable coefficients
/// in kCoefficientNames order.
inline Matrix dynamic_rhs_coefficient_gradient(const DynamicState& s, const DynamicInput& u, const DynamicModel& mdl,
                                               double t = 0.0) {
  const auto f = detail::dynamic_forces(s, u, mdl, t);
  const auto& p = mdl.vehicle;
  const double cd = std::cos(u.delta), sd = std::sin(u.delta);
  auto gf = pacejka_coefficient_gradient(f.alpha.front, mdl.tires.front);
  auto gr = pacejka_coefficient_gradient(f.alpha.rear, mdl.tires.rear);
  Matrix g = Matrix::Zero(3, static_cast<Eigen::Index>(kNumCoefficients));
  for (int k = 0; k < 4; ++k) {
    const double dff = f.grip * gf[k];
    const double dfr = f.grip * gr[k];
    g(0, k) = -sd * dff / p.m;
    g(1, k) = cd * dff / p.m;
    g(2, k) = p.lf * cd * dff / p.Iz;
    g(1, 4 + k) = dfr / p.m;
    g(2, 4 + k) = -p.lr * dfr / p.Iz;
  }
  g(0, 8) = u.throttle / p.m;
  g(0, 9) = -s.vx / p.m;
  g(0, 10) = -1.0 / p.m;
  g(0, 11) = -s.vx * s.vx / p.m;
  g(2, 12) = -(f.ffy * p.lf * cd - f.fry * p.lr) / (p.Iz * p.Iz);
  return g;
}

/// One step of the discrete-time model: state + Ts * rhs.
inline DynamicState dynamic_discrete_step(const DynamicState& s, const DynamicInput& u, const DynamicModel& mdl,
                                          double t = 0.0) {
  const Vector next = s.to_vector() + mdl.vehicle.Ts * dynamic_rhs(s, u, mdl, t);
  require_finite(next, "dynamic discrete step");
  return DynamicState::from_vector(next);
}

/// Box of states/inputs used for random in-envelope sampling of the dynamic model.
struct DynamicEnvelope {
  std::array<double, 2> vx{1.0, 3.0};
  std::array<double, 2> vy{-0.3, 0.3};
  std::array<double, 2> omega{-3.0, 3.0};
  std::array<double, 2> throttle{0.0, 1.0};
  std::array<double, 2> delta{-0.35, 0.35};
};

}  // namespace fisherpinn
