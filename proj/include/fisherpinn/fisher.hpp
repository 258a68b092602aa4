#pragma once

#include "fisherpinn/numerics.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisherpinn {

/// Fisher information is undefined along the flow at a fixed point.
class EquilibriumError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kFlowFloor = 1e-8;

enum class DirectionPolicy { flow_aligned, fixed, basis_axis };

inline std::string to_string(DirectionPolicy p) {
  switch (p) {
    case DirectionPolicy::flow_aligned: return "flow_aligned";
    case DirectionPolicy::fixed: return "fixed";
    case DirectionPolicy::basis_axis: return "basis_axis";
  }
  return "flow_aligned";
}

/// Unit perturbation direction du together with how it was chosen.
struct PerturbationDirection {
  Vector du;
  DirectionPolicy policy = DirectionPolicy::fixed;
  int axis = -1;

  static PerturbationDirection fixed(const Vector& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("perturbation direction must be nonzero");
    return {v / n, DirectionPolicy::fixed, -1};
  }

  static PerturbationDirection basis(Eigen::Index dim, int axis) {
    if (axis < 0 || axis >= dim) throw DimensionError("basis axis out of range");
    return {Vector::Unit(dim, axis), DirectionPolicy::basis_axis, axis};
  }
};

namespace detail {
inline void check_square(const Matrix& a, const Vector& du) {
  if (a.rows() != a.cols()) throw DimensionError("Jacobian must be square");
  if (a.cols() != du.size()) throw DimensionError("perturbation dimension does not match matrix");
}
}  // namespace detail

/// <X>_rho = du^T X du for the pure state rho = du du^T.
inline double expectation(const Matrix& x, const PerturbationDirection& d) {
  detail::check_square(x, d.du);
  return d.du.dot(x * d.du);
}

struct LogDerivative {
  Matrix a_bar;  // A - <A> I
  Matrix l;      // 2 A_bar
};

inline LogDerivative log_derivative(const Matrix& a, const PerturbationDirection& d) {
  const double mean = expectation(a, d);
  Matrix a_bar = a - mean * Matrix::Identity(a.rows(), a.cols());
  Matrix l = 2.0 * a_bar;
  return {std::move(a_bar), std::move(l)};
}

/// g = 4 (<A^T A> - <A>^2), clamped at zero against round-off.
inline double classical_fisher(const Matrix& a, const PerturbationDirection& d) {
  detail::check_square(a, d.du);
  const Vector adu = a * d.du;
  const double mean = d.du.dot(adu);
  return std::max(0.0, 4.0 * (adu.squaredNorm() - mean * mean));
}

inline PerturbationDirection flow_direction(const Vector& xdot, double flow_floor = kFlowFloor) {
  const double n = xdot.norm();
  if (!(n > flow_floor)) throw EquilibriumError("flow speed below floor: Fisher information undefined along the flow");
  return {xdot / n, DirectionPolicy::flow_aligned, -1};
}

/// 4 kappa^2 |xdot|^2 computed from the phase-space curvature of the flow.
inline double curvature_fisher(const Matrix& a, const Vector& xdot, double flow_floor = kFlowFloor) {
  if (a.rows() != a.cols() || a.cols() != xdot.size()) throw DimensionError("curvature_fisher: dimension mismatch");
  const double speed = xdot.norm();
  if (!(speed > flow_floor)) throw EquilibriumError("flow speed below floor: curvature undefined");
  const Vector u = xdot / speed;
  const Vector accel = a * xdot;
  const Vector normal = accel - u.dot(accel) * u;
  const double kappa = normal.norm() / (speed * speed);
  return 4.0 * kappa * kappa * speed * speed;
}

// ---------------------------------------------------------------------------
// Fields

struct FisherSample {
  Vector state;
  Vector input;
  double g = 0.0;
  double sigma_max_sq = 0.0;
  PerturbationDirection direction;
  bool skipped = false;
  std::string skip_reason;
};

/// Closed intervals and sampling scheme the field was evaluated on.
struct DomainDescriptor {
  std::vector<std::string> coordinate_names;
  std::vector<double> lower;
  std::vector<double> upper;
  std::string scheme;  // "grid", "dataset", "random", ...
  double volume = 1.0;
};

struct FisherField {
  std::vector<FisherSample> samples;
  DomainDescriptor domain;
  DirectionPolicy policy = DirectionPolicy::flow_aligned;

  std::size_t size() const { return samples.size(); }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += !s.skipped;
    return n;
  }
};

struct StatePoint {
  Vector state;
  Vector input;
  double t = 0.0;
};

/// A differentiable system: right-hand side and state Jacobian.
struct SystemModel {
  std::function<Vector(const Vector& x, const Vector& u, double t)> rhs;
  std::function<Matrix(const Vector& x, const Vector& u, double t)> jacobian;
};

struct FieldPolicy {
  DirectionPolicy policy = DirectionPolicy::flow_aligned;
  Vector fixed_direction;  // for DirectionPolicy::fixed
  int axis = 0;            // for DirectionPolicy::basis_axis
  double flow_floor = kFlowFloor;
};

inline FisherSample evaluate_sample(const SystemModel& sys, const StatePoint& pt, const FieldPolicy& policy) {
  FisherSample s;
  s.state = pt.state;
  s.input = pt.input;
  try {
    const Matrix a = sys.jacobian(pt.state, pt.input, pt.t);
    if (!a.allFinite()) throw NumericError("non-finite Jacobian");
    switch (policy.policy) {
      case DirectionPolicy::flow_aligned:
        s.direction = flow_direction(sys.rhs(pt.state, pt.input, pt.t), policy.flow_floor);
        break;
      case DirectionPolicy::fixed: s.direction = PerturbationDirection::fixed(policy.fixed_direction); break;
      case DirectionPolicy::basis_axis:
        s.direction = PerturbationDirection::basis(pt.state.size(), policy.axis);
        break;
    }
    s.g = classical_fisher(a, s.direction);
    const double smax = largest_singular_value(a);
    s.sigma_max_sq = smax * smax;
  } catch (const EquilibriumError& e) {
    s.skipped = true;
    s.skip_reason = "equilibrium";
  } catch (const std::domain_error& e) {
    s.skipped = true;
    s.skip_reason = std::string("envelope: ") + e.what();
  } catch (const NumericError& e) {
    s.skipped = true;
    s.skip_reason = std::string("numeric: ") + e.what();
  }
  if (s.skipped) {
    s.direction.policy = policy.policy;
    s.g = 0.0;
    s.sigma_max_sq = 0.0;
  }
  return s;
}

/// Evaluates g over a point list. Per-point failures are recorded as skipped
/// samples in order; the field always has one sample per point.
inline FisherField evaluate_field(const SystemModel& sys, const std::vector<StatePoint>& points,
                                  const FieldPolicy& policy = {}, DomainDescriptor domain = {}) {
  FisherField field;
  field.policy = policy.policy;
  field.domain = std::move(domain);
  field.samples.reserve(points.size());
  for (const auto& pt : points) field.samples.push_back(evaluate_sample(sys, pt, policy));
  return field;
}

}  // namespace fisherpinn
