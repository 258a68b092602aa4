#include "fisherpinn/dynamics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace fisherpinn;
using fisherpinn::testing::relative_frobenius;
using fisherpinn::testing::uniform;

namespace {

DynamicModel force_free_model() {
  DynamicModel m;
  m.vehicle = {1000.0, 1500.0, 1.5, 1.5, 3.0, 0.01};
  m.tires.front = {1.0, 1.0, 0.0, 0.0, 1.0, 0.0};
  m.tires.rear = {1.0, 1.0, 0.0, 0.0, 1.0, 0.0};
  m.drivetrain = {0.0, 0.0, 0.0, 0.0};
  return m;
}

DynamicState random_dynamic_state(std::mt19937_64& rng, const DynamicEnvelope& env = {}) {
  return {uniform(rng, -50, 50),          uniform(rng, -50, 50),          uniform(rng, -3.1, 3.1),
          uniform(rng, env.vx[0], env.vx[1]), uniform(rng, env.vy[0], env.vy[1]), uniform(rng, env.omega[0], env.omega[1])};
}

DynamicInput random_dynamic_input(std::mt19937_64& rng, const DynamicEnvelope& env = {}) {
  return {uniform(rng, env.throttle[0], env.throttle[1]), uniform(rng, env.delta[0], env.delta[1])};
}

DisturbanceConfig wind(double vw, double rho = 1.2, double area = 1.0, double cw = 0.8) {
  return {WindDisturbance{rho, area, cw, vw}};
}

Matrix fd_dynamic_jacobian(const DynamicState& s, const DynamicInput& u, const DynamicModel& m, double t) {
  VectorField f = [&](const Vector& x, const Vector& in) {
    return dynamic_rhs(DynamicState::from_vector(x), DynamicInput::from_vector(in), m, t);
  };
  return central_difference_jacobian(f, s.to_vector(), u.to_vector());
}

}  // namespace

TEST(Kinematic, StraightLine) {
  const VehicleParams p;
  const Vector f = kinematic_rhs({0, 0, 0}, {1.0, 0.0}, p);
  EXPECT_NEAR(f[0], 1.0, 1e-15);
  EXPECT_NEAR(f[1], 0.0, 1e-15);
  EXPECT_NEAR(f[2], 0.0, 1e-15);
}

TEST(Kinematic, HeadingSymmetryAndTurnRate) {
  const VehicleParams p;
  const Vector f = kinematic_rhs({0, 0, std::numbers::pi / 2}, {2.0, 0.0}, p);
  EXPECT_NEAR(f[0], 0.0, 1e-12);
  EXPECT_NEAR(f[1], 2.0, 1e-12);
  EXPECT_NEAR(kinematic_rhs({0, 0, 0}, {5.0, 0.5236}, p)[2], 1.1547038034527626, 1e-12);
}

TEST(Kinematic, SteeringDomainError) {
  const VehicleParams p;
  EXPECT_THROW(kinematic_rhs({}, {1.0, std::numbers::pi / 2}, p), DomainError);
  EXPECT_THROW(kinematic_jacobian({}, {1.0, -2.0}, p), DomainError);
}

TEST(Kinematic, JacobianStructure) {
  const VehicleParams p;
  Matrix expected = Matrix::Zero(3, 3);
  expected(1, 2) = 1.0;
  EXPECT_EQ(kinematic_jacobian({0, 0, 0}, {1.0, 0.2}, p), expected);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const KinematicState s{uniform(rng, -100, 100), uniform(rng, -10, 10), uniform(rng, -3, 3)};
    const KinematicInput u{uniform(rng, 0, 5), uniform(rng, -0.5236, 0.5236)};
    const Matrix a = kinematic_jacobian(s, u, p);
    EXPECT_TRUE(a.col(0).isZero(0.0));
    EXPECT_TRUE(a.col(1).isZero(0.0));
    VectorField f = [&](const Vector& x, const Vector& in) {
      return kinematic_rhs(KinematicState::from_vector(x), KinematicInput::from_vector(in), p);
    };
    EXPECT_LT(relative_frobenius(a, central_difference_jacobian(f, s.to_vector(), u.to_vector())), 1e-6);
    // planar speed equals v for every heading
    const Vector rhs = kinematic_rhs(s, u, p);
    EXPECT_NEAR(rhs.head(2).norm(), u.v, 1e-12);
  }
}

TEST(Pacejka, ZeroSlipGivesOffset) {
  PacejkaCoefficients c{5.579, 1.2, 0.192, -0.083, 1.7, 0.05};
  EXPECT_EQ(pacejka_lateral_force(0.0, c), 0.05);
}

TEST(Pacejka, ReducedFormValue) {
  PacejkaCoefficients c{5.579, 1.2, 1.0, 0.0, 1.0, 0.0};
  // sin(1.2 atan(0.5579)) evaluated independently
  EXPECT_NEAR(pacejka_lateral_force(0.1, c), 0.5734131176203262, 1e-12);
}

TEST(Pacejka, OddSymmetryWithUnitGain) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    PacejkaCoefficients c{uniform(rng, 1, 10), uniform(rng, 0.5, 2), uniform(rng, 0, 2), uniform(rng, -1, 0.5), 1.0, 0.0};
    const double a = uniform(rng, -0.5, 0.5);
    EXPECT_NEAR(pacejka_lateral_force(-a, c), -pacejka_lateral_force(a, c), 1e-14);
  }
}

TEST(Pacejka, DerivativeAtOriginAndFiniteDifference) {
  PacejkaCoefficients c{5.579, 1.2, 0.192, -0.4, 1.0, 0.0};
  EXPECT_NEAR(pacejka_derivative(0.0, c), c.B * c.C * c.D, 1e-14);

  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    PacejkaCoefficients r{uniform(rng, 1, 10), uniform(rng, 0.5, 2), uniform(rng, 0.1, 2), uniform(rng, -1, 0.5),
                          uniform(rng, 0.5, 2), uniform(rng, -0.1, 0.1)};
    const double a = uniform(rng, -0.4, 0.4);
    const double h = 1e-6;
    const double fd = (pacejka_lateral_force(a + h, r) - pacejka_lateral_force(a - h, r)) / (2 * h);
    const double an = pacejka_derivative(a, r);
    EXPECT_NEAR(an, fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
  PacejkaCoefficients zero{5.0, 1.2, 0.0, 0.3, 1.0, 0.0};
  EXPECT_EQ(pacejka_derivative(0.2, zero), 0.0);
}

TEST(Pacejka, CoefficientGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    PacejkaCoefficients c{uniform(rng, 2, 8), uniform(rng, 0.8, 1.6), uniform(rng, 0.1, 0.3), uniform(rng, -0.5, 0.2),
                          1.0, 0.0};
    const double a = uniform(rng, -0.4, 0.4);
    const auto g = pacejka_coefficient_gradient(a, c);
    double* fields[4] = {&c.B, &c.C, &c.D, &c.E};
    for (int k = 0; k < 4; ++k) {
      const double orig = *fields[k];
      const double h = 1e-6;
      *fields[k] = orig + h;
      const double fp = pacejka_lateral_force(a, c);
      *fields[k] = orig - h;
      const double fm = pacejka_lateral_force(a, c);
      *fields[k] = orig;
      EXPECT_NEAR(g[k], (fp - fm) / (2 * h), 1e-7);
    }
  }
}

TEST(SlipAngles, Examples) {
  VehicleParams p;
  auto s0 = slip_angles({0, 0, 0, 5, 0, 0}, {0, 0}, p);
  EXPECT_EQ(s0.front, 0.0);
  EXPECT_EQ(s0.rear, 0.0);
  auto s1 = slip_angles({0, 0, 0, 5, 0, 0}, {0, 0.1}, p);
  EXPECT_NEAR(s1.front, 0.1, 1e-15);
  EXPECT_EQ(s1.rear, 0.0);
  p.lf = 1.5;
  p.lr = 1.5;
  auto s2 = slip_angles({0, 0, 0, 10, 1, 0.5}, {0, 0}, p);
  EXPECT_NEAR(s2.front, -std::atan(0.175), 1e-15);
  EXPECT_NEAR(s2.front, -0.1733, 1e-4);
  EXPECT_NEAR(s2.rear, -std::atan(0.025), 1e-15);
  EXPECT_THROW(slip_angles({0, 0, 0, 0.5, 0, 0}, {0, 0}, p), DomainError);
}

TEST(LongitudinalForce, Examples) {
  DrivetrainCoefficients d{100, 1, 5, 0.1};
  EXPECT_EQ(longitudinal_force(0.0, 0.0, d), -5.0);
  EXPECT_NEAR(longitudinal_force(0.5, 10.0, d), 25.0, 1e-12);
  EXPECT_EQ(longitudinal_force(0.7, 3.0, DrivetrainCoefficients{0, 0, 0, 0}), 0.0);
}

TEST(DynamicRhs, ForceFreeCoasting) {
  const auto m = force_free_model();
  const DynamicState s{1, 2, 0.4, 7.0, 0.0, 0.0};
  const Vector f = dynamic_rhs(s, {0.0, 0.0}, m);
  EXPECT_NEAR(f[0], 7.0 * std::cos(0.4), 1e-14);
  EXPECT_NEAR(f[1], 7.0 * std::sin(0.4), 1e-14);
  for (int i = 2; i < 6; ++i) EXPECT_EQ(f[i], 0.0);
}

TEST(DynamicRhs, ForceFreeRotationPreservesSpeed) {
  const auto m = force_free_model();
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const DynamicState s{0, 0, uniform(rng, -3, 3), uniform(rng, 1, 20), uniform(rng, -2, 2), uniform(rng, -1, 1)};
    const Vector f = dynamic_rhs(s, {uniform(rng, 0, 1), 0.0}, m);
    EXPECT_NEAR(f[3] * s.vx + f[4] * s.vy, 0.0, 1e-12);
  }
}

TEST(DynamicRhs, BankAndWindOffsets) {
  auto m = force_free_model();
  const DynamicState s{0, 0, 0, 5.0, 0.0, 0.0};
  const Vector base = dynamic_rhs(s, {0, 0}, m);

  m.disturbances = {DisturbanceConfig{BankDisturbance{0.1}}};
  EXPECT_NEAR(dynamic_rhs(s, {0, 0}, m)[4] - base[4], 9.81 * std::sin(0.1), 1e-12);
  EXPECT_NEAR(dynamic_rhs(s, {0, 0}, m)[4] - base[4], 0.9794, 1e-4);

  m.disturbances = {wind(10.0)};
  EXPECT_NEAR(dynamic_rhs(s, {0, 0}, m)[4] - base[4], 0.048, 1e-12);
}

TEST(DynamicRhs, DisturbanceCompositionIsAdditive) {
  DynamicModel m;
  std::mt19937_64 rng(8);
  const std::vector<DisturbanceConfig> pool = {wind(3.0, 1.2, 0.01, 0.9), DisturbanceConfig{BankDisturbance{0.05}},
                                               DisturbanceConfig{BumpDisturbance{20.0, 0.5, 0.002, 3.0}}};
  for (int trial = 0; trial < 100; ++trial) {
    const DynamicState s = random_dynamic_state(rng);
    const DynamicInput u = random_dynamic_input(rng);
    const double t = uniform(rng, 0, 10);
    const auto& d1 = pool[trial % 3];
    const auto& d2 = pool[(trial + 1) % 3];
    m.disturbances = {};
    const Vector none = dynamic_rhs(s, u, m, t);
    m.disturbances = {d1};
    const Vector r1 = dynamic_rhs(s, u, m, t);
    m.disturbances = {d2};
    const Vector r2 = dynamic_rhs(s, u, m, t);
    m.disturbances = {d1, d2};
    const Vector both = dynamic_rhs(s, u, m, t);
    EXPECT_LT(((both - none) - ((r1 - none) + (r2 - none))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DynamicJacobian, StructuralRows) {
  DynamicModel m;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Matrix a = dynamic_jacobian(random_dynamic_state(rng), random_dynamic_input(rng), m);
    Eigen::RowVectorXd row3(6);
    row3 << 0, 0, 0, 0, 0, 1;
    EXPECT_EQ(a.row(2), row3);
    EXPECT_TRUE(a.col(0).isZero(0.0));
    EXPECT_TRUE(a.col(1).isZero(0.0));
  }
}

TEST(DynamicJacobian, MatchesFiniteDifferencesWithAndWithoutDisturbances) {
  std::mt19937_64 rng(17);
  DynamicModel plain;
  DynamicModel disturbed;
  disturbed.disturbances = {wind(2.0, 1.2, 0.004, 0.9), DisturbanceConfig{BankDisturbance{0.08}},
                            DisturbanceConfig{BumpDisturbance{30.0, 0.3, 0.001, 2.0}},
                            DisturbanceConfig{RollDisturbance{0.5, 0.05, 0.5}},
                            DisturbanceConfig{TireTemperatureDisturbance{1.0, 0.08, 20.0, 35.0, 80.0, 8.0}}};
  for (int i = 0; i < 1000; ++i) {
    const DynamicState s = random_dynamic_state(rng);
    const DynamicInput u = random_dynamic_input(rng);
    const double t = uniform(rng, 0, 20);
    for (const DynamicModel* m : {&plain, &disturbed}) {
      const Matrix a = dynamic_jacobian(s, u, *m, t);
      EXPECT_LT(relative_frobenius(a, fd_dynamic_jacobian(s, u, *m, t)), 1e-5) << "point " << i;
    }
  }
}

TEST(DynamicJacobian, CoefficientGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(23);
  DynamicModel m;
  for (int i = 0; i < 100; ++i) {
    const DynamicState s = random_dynamic_state(rng);
    const DynamicInput u = random_dynamic_input(rng);
    const Matrix g = dynamic_rhs_coefficient_gradient(s, u, m);
    auto coeffs = m.coefficients();
    for (std::size_t k = 0; k < kNumCoefficients; ++k) {
      DynamicModel mp = m, mm = m;
      auto cp = coeffs, cm = coeffs;
      const double h = 1e-6 * std::max(1e-3, std::abs(coeffs[k]));
      cp[k] += h;
      cm[k] -= h;
      mp.set_coefficients(cp);
      mm.set_coefficients(cm);
      const Vector fd = (dynamic_rhs(s, u, mp) - dynamic_rhs(s, u, mm)).tail(3) / (2 * h);
      EXPECT_LT((g.col(static_cast<Eigen::Index>(k)) - fd).norm(), 1e-5 * std::max(1.0, fd.norm()))
          << kCoefficientNames[k];
    }
  }
}

TEST(Disturbance, LateralForceExamples) {
  VehicleParams p;
  const DynamicState s{0, 0, 0, 2.0, 0.0, 0.0};
  EXPECT_EQ(disturbance_lateral_force({BankDisturbance{0.0}}, s, 1.0, p), 0.0);
  // bump at the sine peak: t = 1/(4f)
  const double f = 2.0;
  EXPECT_NEAR(disturbance_lateral_force({BumpDisturbance{1000.0, 0.0, 0.01, f}}, s, 1.0 / (4 * f), p), 10.0, 1e-12);
  // tire temperature at T0: no grip
  TireTemperatureDisturbance temp{1.0, 0.1, 20.0, 20.0, 20.0, 5.0};
  EXPECT_EQ(disturbance_lateral_force({temp}, s, 3.0, p), 0.0);
  temp.T_start = temp.T_end = 30.0;
  EXPECT_NEAR(disturbance_lateral_force({temp}, s, 3.0, p), 1.0 - std::exp(-1.0), 1e-15);
}

TEST(Disturbance, KindParsing) {
  EXPECT_EQ(disturbance_kind_from_string("wind"), DisturbanceKind::wind);
  EXPECT_EQ(disturbance_kind_from_string("tire_temperature"), DisturbanceKind::tire_temperature);
  EXPECT_THROW(disturbance_kind_from_string("tornado"), ConfigError);
  DisturbanceConfig bad{WindDisturbance{-1.0, 1.0, 1.0, 1.0}};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(DiscreteStep, EulerIncrement) {
  DynamicModel m;
  const DynamicState s{0, 0, 0.2, 2.0, 0.05, 0.4};
  const DynamicInput u{0.3, 0.1};
  const Vector expected = s.to_vector() + m.vehicle.Ts * dynamic_rhs(s, u, m);
  EXPECT_EQ(dynamic_discrete_step(s, u, m).to_vector(), expected);
}
