#pragma once

// Comparing a learned model with the true system: Fisher-field discrepancy,
// the Jacobian-norm baseline, the well-trained verdict and bias tables.

#include "fisherpinn/dynamics.hpp"
#include "fisherpinn/estimator.hpp"
#include "fisherpinn/fisher.hpp"
#include "fisherpinn/io.hpp"
#include "fisherpinn/nn.hpp"
#include "fisherpinn/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisherpinn {

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Systems

inline SystemModel kinematic_system(const VehicleParams& p) {
  return {[p](const Vector& x, const Vector& u, double) {
            return kinematic_rhs(KinematicState::from_vector(x), KinematicInput::from_vector(u), p);
          },
          [p](const Vector& x, const Vector& u, double) {
            return kinematic_jacobian(KinematicState::from_vector(x), KinematicInput::from_vector(u), p);
          }};
}

inline SystemModel dynamic_system(const DynamicModel& m) {
  return {[m](const Vector& x, const Vector& u, double t) {
            return dynamic_rhs(DynamicState::from_vector(x), DynamicInput::from_vector(u), m, t);
          },
          [m](const Vector& x, const Vector& u, double t) {
            return dynamic_jacobian(DynamicState::from_vector(x), DynamicInput::from_vector(u), m, t);
          }};
}

/// Learned dynamics x' = F_hat(x, u); the Jacobian covers the state block only.
inline SystemModel network_system(const nn::NetworkParams& net, int state_dim) {
  if (state_dim < 1 || state_dim > net.input_dim || net.output_dim != state_dim)
    throw DimensionError("network does not map (state, input) to a state derivative of dimension " +
                         std::to_string(state_dim));
  std::vector<int> idx(static_cast<std::size_t>(state_dim));
  std::iota(idx.begin(), idx.end(), 0);
  auto stacked = [net](const Vector& x, const Vector& u) {
    if (x.size() + u.size() != net.input_dim) throw DimensionError("state/input size does not match network");
    Vector z(x.size() + u.size());
    z << x, u;
    return z;
  };
  return {[net, stacked](const Vector& x, const Vector& u, double) { return nn::mlp_forward(net, stacked(x, u)); },
          [net, stacked, idx](const Vector& x, const Vector& u, double) {
            return nn::mlp_input_jacobian(net, stacked(x, u), idx);
          }};
}

// ---------------------------------------------------------------------------
// Evaluation domains

/// Uniform grid over (theta, v, delta) with x = y = 0. The kinematic field does
/// not depend on position, so the x, y extent is left out of the volume.
inline std::vector<StatePoint> kinematic_grid(const CollocationBounds& b, int per_dim, DomainDescriptor* domain = nullptr) {
  b.validate();
  if (b.state_dim != 3 || b.input_dim() != 2) throw ConfigError("kinematic grid needs 3 state and 2 input bounds");
  if (per_dim < 1) throw ConfigError("grid needs at least one point per dimension");
  auto axis = [&](int k) {
    std::vector<double> v;
    for (int i = 0; i < per_dim; ++i)
      v.push_back(per_dim == 1 ? 0.5 * (b.lower[k] + b.upper[k])
                               : b.lower[k] + (b.upper[k] - b.lower[k]) * i / (per_dim - 1));
    return v;
  };
  const auto th = axis(2), v = axis(3), d = axis(4);
  std::vector<StatePoint> pts;
  for (double a : th)
    for (double s : v)
      for (double c : d) pts.push_back({Vector{{0.0, 0.0, a}}, Vector{{s, c}}, 0.0});
  if (domain) {
    domain->coordinate_names = {"x", "y", "theta", "v", "delta"};
    domain->lower = {0.0, 0.0, b.lower[2], b.lower[3], b.lower[4]};
    domain->upper = {0.0, 0.0, b.upper[2], b.upper[3], b.upper[4]};
    domain->scheme = "grid";
    domain->volume = (b.upper[2] - b.lower[2]) * (b.upper[3] - b.lower[3]) * (b.upper[4] - b.lower[4]);
  }
  return pts;
}

/// Every recorded sample of the trajectories, in order.
inline std::vector<StatePoint> trajectory_points(const std::vector<Trajectory>& trs, std::size_t stride = 1) {
  std::vector<StatePoint> pts;
  for (const auto& tr : trs)
    for (std::size_t i = 0; i < tr.size(); i += std::max<std::size_t>(1, stride))
      pts.push_back({tr.states[i], tr.inputs[i], tr.t[i]});
  return pts;
}

// ---------------------------------------------------------------------------
// Discrepancy

using DiscrepancyMetric = std::function<double(double g_true, double g_learned)>;

inline double squared_difference(double a, double b) { return (a - b) * (a - b); }

struct Discrepancy {
  double e_fi = 0.0;
  double e_fi_relative = 0.0;
  std::size_t valid_count = 0;
};

inline void check_aligned(const FisherField& a, const FisherField& b) {
  if (a.size() != b.size()) throw AlignmentError("fields have different lengths");
  if (a.policy != b.policy) throw AlignmentError("fields use different direction policies");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.samples[i].state != b.samples[i].state || a.samples[i].input != b.samples[i].input)
      throw AlignmentError("fields differ at point " + std::to_string(i));
}

/// e_fi = V * mean d(g_true, g_learned) over points valid in both fields;
/// relative form sum d / sum g_true^2 (0/0 -> 0).
inline Discrepancy fisher_discrepancy(const FisherField& truth, const FisherField& learned,
                                      const DiscrepancyMetric& d = squared_difference) {
  check_aligned(truth, learned);
  Discrepancy out;
  double sum = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& a = truth.samples[i];
    const auto& b = learned.samples[i];
    if (a.skipped || b.skipped) continue;
    sum += d(a.g, b.g);
    norm += a.g * a.g;
    ++out.valid_count;
  }
  if (out.valid_count == 0) return out;
  out.e_fi = truth.domain.volume * sum / static_cast<double>(out.valid_count);
  out.e_fi_relative = sum == 0.0 ? 0.0 : sum / norm;
  return out;
}

struct JacobianBaseline {
  double mean_frobenius = 0.0;
  std::size_t valid_count = 0;
  std::size_t skipped = 0;
};

/// Mean Frobenius norm of A - A_hat; points where either Jacobian cannot be
/// evaluated are counted as skipped.
inline JacobianBaseline jacobian_baseline(const SystemModel& truth, const SystemModel& learned,
                                          const std::vector<StatePoint>& points) {
  JacobianBaseline out;
  double sum = 0.0;
  for (const auto& p : points) {
    try {
      const Matrix a = truth.jacobian(p.state, p.input, p.t);
      const Matrix b = learned.jacobian(p.state, p.input, p.t);
      if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("Jacobian shapes differ");
      const double n = (a - b).norm();
      if (!std::isfinite(n)) throw NumericError("non-finite Jacobian");
      sum += n;
      ++out.valid_count;
    } catch (const std::domain_error&) {
      ++out.skipped;
    } catch (const NumericError&) {
      ++out.skipped;
    }
  }
  if (out.valid_count) out.mean_frobenius = sum / static_cast<double>(out.valid_count);
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory error

/// Relative H-step rollout error of a learned model on recorded trajectories:
/// sqrt(sum |x_hat_k - x_k|^2 / sum |x_k - x_0|^2) over all windows, k = 1..H.
inline double trajectory_error(const nn::NetworkParams& net, const TrajectoryWindows& w) {
  if (w.count() == 0) throw DataError("no trajectory windows");
  const double mse = trajectory_loss(net, w);
  double scale = 0.0;
  for (int k = 1; k <= w.horizon; ++k) scale += (w.states[k] - w.states[0]).squaredNorm();
  scale /= static_cast<double>(w.count()) * w.horizon;
  if (scale == 0.0) return mse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(mse / scale);
}

// ---------------------------------------------------------------------------
// Verdict

struct Tolerances {
  double eps_d = 1e-2;
  double eps_p = 1e-3;
  double eps = 0.05;
};

struct Verdict {
  bool pass = false;
  double trajectory_error = 0.0;
  double physics_residual = 0.0;
  double e_fi_relative = 0.0;
  Tolerances tolerances;
  std::vector<std::string> failing;
};

inline Verdict well_trained_verdict(double traj_err, double physics_resid, double e_fi_relative, const Tolerances& tol = {}) {
  if (traj_err < 0 || physics_resid < 0 || e_fi_relative < 0)
    throw std::invalid_argument("verdict inputs must be nonnegative");
  Verdict v{false, traj_err, physics_resid, e_fi_relative, tol, {}};
  // NaN fails every comparison, so it lands in `failing` as well
  if (!(traj_err < tol.eps_d)) v.failing.emplace_back("trajectory_error");
  if (!(physics_resid < tol.eps_p)) v.failing.emplace_back("physics_residual");
  if (!(e_fi_relative < tol.eps)) v.failing.emplace_back("fisher_discrepancy");
  v.pass = v.failing.empty();
  return v;
}

// ---------------------------------------------------------------------------
// Parameter bias

struct BiasRow {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;
  double truth = 0.0;
  double relative_deviation() const {
    return truth != 0.0 ? std::abs(mean - truth) / std::abs(truth) : std::abs(mean - truth);
  }
};

struct ParameterBiasTable {
  std::vector<BiasRow> rows;

  /// Rows sorted by relative deviation, largest first; ties keep table order.
  std::vector<BiasRow> most_deviated(std::size_t k = std::numeric_limits<std::size_t>::max()) const {
    std::vector<BiasRow> out = rows;
    std::stable_sort(out.begin(), out.end(),
                     [](const BiasRow& a, const BiasRow& b) { return a.relative_deviation() > b.relative_deviation(); });
    if (out.size() > k) out.resize(k);
    return out;
  }
};

/// `samples` holds one row per coefficient and one column per record.
inline ParameterBiasTable parameter_bias_table(const std::vector<std::string>& names, const Matrix& samples,
                                               const std::vector<double>& truth) {
  if (static_cast<std::size_t>(samples.rows()) != names.size() || truth.size() != names.size())
    throw DimensionError("bias table: names, samples and truth disagree in size");
  if (samples.cols() < 2) throw DataError("bias table needs at least two records per coefficient");
  ParameterBiasTable t;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double mean = samples.row(r).mean();
    const double var = (samples.row(r).array() - mean).square().mean();
    t.rows.push_back({names[i], mean, std::sqrt(var), truth[i]});
  }
  return t;
}

inline ParameterBiasTable parameter_bias_table(const std::vector<CoefficientRecord>& records,
                                               const std::array<double, kNumCoefficients>& truth) {
  if (records.empty()) throw DataError("bias table needs coefficient records");
  Matrix s(static_cast<Eigen::Index>(kNumCoefficients), static_cast<Eigen::Index>(records.size()));
  for (std::size_t c = 0; c < records.size(); ++c)
    for (std::size_t i = 0; i < kNumCoefficients; ++i)
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = records[c].phi[i];
  return parameter_bias_table(std::vector<std::string>(kCoefficientNames.begin(), kCoefficientNames.end()), s,
                              std::vector<double>(truth.begin(), truth.end()));
}

inline std::string bias_table_to_csv(const ParameterBiasTable& t) {
  std::string out = "coefficient,mean,std,true,relative_deviation\n";
  for (const auto& r : t.rows)
    out += io::join({r.name, io::format_double(r.mean), io::format_double(r.stddev), io::format_double(r.truth),
                     io::format_double(r.relative_deviation())}) +
           "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Per-sample comparison

struct ComparisonRow {
  std::size_t index = 0;
  double g_true = 0.0;
  double g_learned = 0.0;
  double difference = 0.0;
};

/// One row per point valid in both fields; index is the point's position.
inline std::vector<ComparisonRow> comparison_curves(const FisherField& truth, const FisherField& learned) {
  check_aligned(truth, learned);
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& a = truth.samples[i];
    const auto& b = learned.samples[i];
    if (a.skipped || b.skipped) continue;
    rows.push_back({i, a.g, b.g, a.g - b.g});
  }
  return rows;
}

inline std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "index,g_true,g_learned,difference\n";
  for (const auto& r : rows)
    out += io::join({std::to_string(r.index), io::format_double(r.g_true), io::format_double(r.g_learned),
                     io::format_double(r.difference)}) +
           "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct FidelityReport {
  Discrepancy discrepancy;
  JacobianBaseline jacobian;
  std::vector<ComparisonRow> per_sample;
  Verdict verdict;
};

inline FidelityReport compare_fields(const SystemModel& truth, const SystemModel& learned,
                                     const std::vector<StatePoint>& points, const DomainDescriptor& domain,
                                     double traj_err, double physics_resid, const Tolerances& tol = {},
                                     FisherField* true_out = nullptr, FisherField* learned_out = nullptr) {
  const FisherField ft = evaluate_field(truth, points, {}, domain);
  const FisherField fl = evaluate_field(learned, points, {}, domain);
  FidelityReport r;
  r.discrepancy = fisher_discrepancy(ft, fl);
  r.jacobian = jacobian_baseline(truth, learned, points);
  r.per_sample = comparison_curves(ft, fl);
  r.verdict = well_trained_verdict(traj_err, physics_resid, r.discrepancy.e_fi_relative, tol);
  if (true_out) *true_out = ft;
  if (learned_out) *learned_out = fl;
  return r;
}

inline io::json verdict_to_json(const Verdict& v) {
  return {{"pass", v.pass},
          {"trajectory_error", v.trajectory_error},
          {"physics_residual", v.physics_residual},
          {"e_fi_relative", v.e_fi_relative},
          {"tolerances", {{"eps_d", v.tolerances.eps_d}, {"eps_p", v.tolerances.eps_p}, {"eps", v.tolerances.eps}}},
          {"failing", v.failing}};
}

inline io::json report_to_json(const FidelityReport& r) {
  return {{"format", "fisherpinn.fidelity_report"},
          {"version", 1},
          {"e_fi", r.discrepancy.e_fi},
          {"e_fi_relative", r.discrepancy.e_fi_relative},
          {"valid_count", r.discrepancy.valid_count},
          {"jacobian_baseline", r.jacobian.mean_frobenius},
          {"jacobian_skipped", r.jacobian.skipped},
          {"verdict", verdict_to_json(r.verdict)}};
}

}  // namespace fisherpinn
