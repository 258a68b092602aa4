#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace fisherpinn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a function evaluation produces NaN or infinity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Vector field F(x, u) with the input held fixed.
using VectorField = std::function<Vector(const Vector&, const Vector&)>;

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite value in ") + what);
}

inline constexpr double kDefaultFdStep = 1e-5;

/// Central-difference Jacobian of f with respect to x. The step for column j
/// is h * max(1, |x_j|).
inline Matrix central_difference_jacobian(const VectorField& f, const Vector& x, const Vector& u,
                                          double h = kDefaultFdStep) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  const Vector f0 = f(x, u);
  require_finite(f0, "finite-difference base evaluation");
  Matrix jac(f0.size(), x.size());
  Vector xp = x;
  Vector xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hj = h * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + hj;
    xm[j] = x[j] - hj;
    const Vector fp = f(xp, u);
    const Vector fm = f(xm, u);
    require_finite(fp, "finite-difference evaluation");
    require_finite(fm, "finite-difference evaluation");
    // Use the representable step actually taken.
    jac.col(j) = (fp - fm) / (xp[j] - xm[j]);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return jac;
}

/// Classical fourth-order Runge-Kutta step with u held constant.
inline Vector rk4_step(const VectorField& f, const Vector& x, const Vector& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
  const Vector k1 = f(x, u);
  require_finite(k1, "rk4 stage 1");
  const Vector k2 = f(x + 0.5 * dt * k1, u);
  require_finite(k2, "rk4 stage 2");
  const Vector k3 = f(x + 0.5 * dt * k2, u);
  require_finite(k3, "rk4 stage 3");
  const Vector k4 = f(x + dt * k3, u);
  require_finite(k4, "rk4 stage 4");
  Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  require_finite(next, "rk4 update");
  return next;
}

struct PowerIterationOptions {
  int max_iterations = 500;
  double tolerance = 1e-12;
};

/// Dominant singular value by power iteration on A^T A, started from the
/// normalized all-ones vector.
inline double largest_singular_value(const Matrix& a, PowerIterationOptions opts = {}) {
  if (a.size() == 0) return 0.0;
  const Matrix ata = a.transpose() * a;
  const double scale = ata.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  const Matrix m = ata / scale;

  Vector v = Vector::Ones(m.cols()).normalized();
  double lambda = v.dot(m * v);
  for (int it = 0; it < opts.max_iterations; ++it) {
    Vector w = m * v;
    double norm = w.norm();
    if (norm == 0.0) {
      // Start vector lies in the null space; restart on a basis axis.
      bool restarted = false;
      for (Eigen::Index k = 0; k < m.cols() && !restarted; ++k) {
        Vector e = Vector::Unit(m.cols(), k);
        w = m * e;
        if (w.norm() > 0.0) restarted = true;
      }
      if (!restarted) return 0.0;
      norm = w.norm();
    }
    v = w / norm;
    const double next = v.dot(m * v);
    const bool converged = std::abs(next - lambda) <= opts.tolerance * std::max(1.0, std::abs(next));
    lambda = next;
    if (converged) break;
  }
  return std::sqrt(std::max(0.0, lambda) * scale);
}

}  // namespace fisherpinn
