#include "fisherpinn/training.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fisherpinn;
using fisherpinn::testing::random_matrix;

namespace {

// dx/dt = A x + B u; representable exactly by a single linear layer.
struct LinearSystem {
  Matrix a{{-0.5, 1.0}, {-1.0, -0.2}};
  Matrix b{{0.3}, {0.7}};

  Vector rhs(const Vector& x, const Vector& u) const { return a * x + b * u; }

  nn::NetworkParams as_network() const {
    auto net = nn::make_mlp(3, {}, 2, 0);
    net.weights[0] << a, b;
    net.biases[0].setZero();
    return net;
  }

  // Exact flow for a constant input via the augmented matrix exponential.
  Vector flow(const Vector& x, const Vector& u, double t) const {
    Matrix m = Matrix::Zero(3, 3);
    m.topLeftCorner(2, 2) = a * t;
    m.topRightCorner(2, 1) = b * t;
    Matrix e = Matrix::Identity(3, 3), term = Matrix::Identity(3, 3);
    for (int k = 1; k < 40; ++k) {
      term = term * m / k;
      e += term;
    }
    Vector z(3);
    z << x, u;
    return (e * z).head(2);
  }
};

Trajectory linear_trajectory(const LinearSystem& sys, Vector x, double dt, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Trajectory tr;
  tr.state_names = {"a", "b"};
  tr.input_names = {"u"};
  for (int i = 0; i < n; ++i) {
    const Vector u{{std::sin(0.3 * i) + 0.1 * fisherpinn::testing::uniform(rng, -1, 1)}};
    tr.push(i * dt, x, u, sys.rhs(x, u), "none");
    x = sys.flow(x, u, dt);
  }
  return tr;
}

TrainingData linear_data(const LinearSystem& sys, std::size_t n, std::uint64_t seed) {
  CollocationBounds b{2, Vector{{-2, -2, -1}}, Vector{{2, 2, 1}}};
  RhsFunction f = [&](const Vector& x, const Vector& u) { return sys.rhs(x, u); };
  TrainingData d;
  d.collocation = label_points(sample_collocation(b, n, seed), f);
  d.validation = label_points(sample_collocation(b, 128, seed + 1), f);
  return d;
}

}  // namespace

TEST(Collocation, DegenerateBoundsGiveThePoint) {
  CollocationBounds b{3, Vector{{1, 2, 3, 4, 5}}, Vector{{1, 2, 3, 4, 5}}};
  const auto pts = sample_collocation(b, 1, 7);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].state, (Vector{{1, 2, 3}}));
  EXPECT_EQ(pts[0].input, (Vector{{4, 5}}));
  EXPECT_THROW(sample_collocation(b, 0, 7), ConfigError);
}

TEST(Collocation, UniformStatistics) {
  const auto b = CollocationBounds::kinematic_default();
  const std::size_t n = 10000;
  const auto pts = sample_collocation(b, n, 3);
  for (int k = 0; k < 5; ++k) {
    double lo = 1e300, hi = -1e300, mean = 0;
    for (const auto& p : pts) {
      const double v = k < 3 ? p.state[k] : p.input[k - 3];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mean += v / n;
    }
    const double width = b.upper[k] - b.lower[k];
    EXPECT_GE(lo, b.lower[k]);
    EXPECT_LE(hi, b.upper[k]);
    const double sigma = width / std::sqrt(12.0 * n);
    EXPECT_LT(std::abs(mean - 0.5 * (b.lower[k] + b.upper[k])), 3 * sigma) << "coordinate " << k;
  }
}

TEST(Collocation, Deterministic) {
  const auto b = CollocationBounds::kinematic_default();
  const auto a = sample_collocation(b, 100, 5), c = sample_collocation(b, 100, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].state, c[i].state);
    EXPECT_EQ(a[i].input, c[i].input);
  }
}

TEST(PhysicsLoss, Examples) {
  LinearSystem sys;
  RhsFunction f = [&](const Vector& x, const Vector& u) { return sys.rhs(x, u); };
  CollocationBounds b{2, Vector{{-2, -2, -1}}, Vector{{2, 2, 1}}};
  const auto pts = sample_collocation(b, 50, 1);
  EXPECT_LT(physics_loss(sys.as_network(), pts, f), 1e-28);

  // zero net on points where |F| = 1
  auto zero = nn::make_mlp(3, {{4, nn::Activation::tanh}}, 2, 1);
  for (auto& w : zero.weights) w.setZero();
  RhsFunction unit = [](const Vector& x, const Vector&) { return Vector{{std::cos(x[0]), std::sin(x[0])}}; };
  EXPECT_DOUBLE_EQ(physics_loss(zero, pts, unit), 1.0);

  const auto net = nn::make_mlp(3, {{8, nn::Activation::tanh}}, 2, 9);
  double brute = 0;
  for (const auto& p : pts) {
    Vector in(3);
    in << p.state, p.input;
    brute += (nn::mlp_forward(net, in) - sys.rhs(p.state, p.input)).squaredNorm();
  }
  EXPECT_NEAR(physics_loss(net, pts, f), brute / pts.size(), 1e-12);
}

TEST(DataLoss, Examples) {
  auto zero = nn::make_mlp(1, {}, 1, 0);
  zero.weights[0].setZero();
  LabeledSamples one{Matrix{{0.5}}, Matrix{{2.0}}};
  EXPECT_DOUBLE_EQ(data_loss(zero, one), 4.0);

  const auto net = nn::make_mlp(3, {{6, nn::Activation::sigmoid}}, 2, 4);
  std::mt19937_64 rng(2);
  LabeledSamples all{random_matrix(rng, 3, 30), random_matrix(rng, 2, 30)};
  LabeledSamples exact{all.inputs, nn::forward_batch(net, all.inputs)};
  EXPECT_EQ(data_loss(net, exact), 0.0);
  LabeledSamples first{all.inputs.leftCols(12), all.targets.leftCols(12)};
  LabeledSamples second{all.inputs.rightCols(18), all.targets.rightCols(18)};
  EXPECT_NEAR(data_loss(net, all), (12 * data_loss(net, first) + 18 * data_loss(net, second)) / 30, 1e-14);
}

TEST(TrajectoryLoss, TrueDynamicsAtTruncationLevel) {
  LinearSystem sys;
  const auto tr = linear_trajectory(sys, Vector{{1.0, -0.5}}, 0.1, 40, 3);
  const auto w = make_windows({tr}, 5, 0.1);
  EXPECT_EQ(w.count(), 35);
  // input varies between samples but is held over each step, so the data are an exact ZOH flow
  EXPECT_LT(trajectory_loss(sys.as_network(), w), 1e-10);
  EXPECT_THROW(make_windows({tr}, 0, 0.1), std::invalid_argument);
  EXPECT_THROW(make_windows({tr}, 5, 0.2), std::invalid_argument);
}

TEST(TrajectoryLoss, ConstantStateZeroNet) {
  Trajectory tr;
  for (int i = 0; i < 10; ++i) tr.push(0.1 * i, Vector{{3.0, -1.0}}, Vector{{0.2}}, Vector::Zero(2), "none");
  auto zero = nn::make_mlp(3, {{4, nn::Activation::tanh}}, 2, 5);
  for (auto& m : zero.weights) m.setZero();
  EXPECT_EQ(trajectory_loss(zero, make_windows({tr}, 3, 0.1)), 0.0);
}

TEST(TrajectoryLoss, GradientMatchesFiniteDifferences) {
  LinearSystem sys;
  const auto tr = linear_trajectory(sys, Vector{{0.5, 0.5}}, 0.1, 12, 4);
  const auto w = make_windows({tr}, 4, 0.1);
  auto net = nn::make_mlp(3, {{6, nn::Activation::tanh}, {5, nn::Activation::mish}}, 2, 8);
  nn::Gradients g;
  trajectory_loss(net, w, &g);
  const Vector analytic = nn::flatten(g);
  Vector theta = nn::flatten(net);
  auto q = net;
  for (Eigen::Index i = 0; i < theta.size(); i += 3) {
    const double h = 1e-6, orig = theta[i];
    theta[i] = orig + h;
    nn::unflatten(theta, q);
    const double lp = trajectory_loss(q, w);
    theta[i] = orig - h;
    nn::unflatten(theta, q);
    const double lm = trajectory_loss(q, w);
    theta[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    EXPECT_NEAR(analytic[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "param " << i;
  }
}

TEST(TrainRegime, LinearTargetConverges) {
  LinearSystem sys;
  const auto data = linear_data(sys, 256, 1);
  auto net = nn::make_mlp(3, {}, 2, 3);
  RegimeConfig cfg;
  cfg.epochs = 2000;
  cfg.batch_size = 256;
  cfg.learning_rate = 1e-2;
  cfg.lambda_d = 0.0;
  const auto rep = train_regime(net, cfg, data);
  ASSERT_FALSE(rep.aborted) << rep.abort_reason;
  EXPECT_EQ(rep.curve.size(), 2000u);
  EXPECT_LT(rep.curve.back().physics, 1e-6);
  // regime 1: the total is exactly the physics term
  EXPECT_EQ(rep.curve.back().total, rep.curve.back().physics);
  EXPECT_EQ(rep.curve.back().data, 0.0);
  EXPECT_LT(rep.grad_check_error, 1e-4);
}

TEST(TrainRegime, ZeroEpochsKeepsParams) {
  LinearSystem sys;
  const auto data = linear_data(sys, 64, 2);
  const auto net = nn::make_mlp(3, {{8, nn::Activation::tanh}}, 2, 3);
  RegimeConfig cfg;
  cfg.epochs = 0;
  const auto rep = train_regime(net, cfg, data);
  EXPECT_TRUE(rep.curve.empty());
  EXPECT_EQ(nn::flatten(rep.params), nn::flatten(net));
  EXPECT_DOUBLE_EQ(rep.initial.physics, physics_loss(net, sample_collocation({2, Vector{{-2, -2, -1}}, Vector{{2, 2, 1}}}, 64, 2),
                                                     [&](const Vector& x, const Vector& u) { return sys.rhs(x, u); }));
}

TEST(TrainRegime, AllRegimesPassGradientSpotCheckAndAreDeterministic) {
  LinearSystem sys;
  auto data = linear_data(sys, 128, 3);
  const auto tr = linear_trajectory(sys, Vector{{1.0, 0.0}}, 0.1, 30, 6);
  data.samples = samples_from_trajectories({tr});
  data.windows = make_windows({tr}, 5, 0.1);
  for (Regime r : {Regime::physics_only, Regime::hybrid, Regime::inverse}) {
    RegimeConfig cfg;
    cfg.regime = r;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.seed = 17;
    const auto net = nn::make_mlp(3, {{8, nn::Activation::tanh}}, 2, 3);
    const auto a = train_regime(net, cfg, data);
    const auto b = train_regime(net, cfg, data);
    ASSERT_FALSE(a.aborted) << a.abort_reason;
    EXPECT_LT(a.grad_check_error, 1e-4) << to_string(r);
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      EXPECT_EQ(a.curve[i].total, b.curve[i].total);
      EXPECT_GE(a.curve[i].physics, 0.0);
      EXPECT_GE(a.curve[i].data, 0.0);
    }
    EXPECT_EQ(nn::flatten(a.params), nn::flatten(b.params));
    if (r != Regime::physics_only) {
      EXPECT_GT(a.curve.back().data, 0.0);
    }
  }
}

TEST(TrainRegime, MissingDataIsAConfigError) {
  LinearSystem sys;
  const auto data = linear_data(sys, 32, 3);
  RegimeConfig cfg;
  cfg.regime = Regime::hybrid;
  EXPECT_THROW(train_regime(nn::make_mlp(3, {}, 2, 0), cfg, data), ConfigError);
  cfg.regime = Regime::inverse;
  EXPECT_THROW(train_regime(nn::make_mlp(3, {}, 2, 0), cfg, data), ConfigError);
}

TEST(Sweep, SingleCandidateRanksFirst) {
  LinearSystem sys;
  const auto data = linear_data(sys, 64, 4);
  RegimeConfig cfg;
  cfg.epochs = 3;
  const auto out = architecture_sweep({{{{4, nn::Activation::tanh}}, -1}}, cfg, data, Vector{{-2, -2, -1}},
                                      Vector{{2, 2, 1}}, 2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].rank, 1);
}

TEST(Sweep, TrainedCandidateBeatsUntrained) {
  LinearSystem sys;
  const auto data = linear_data(sys, 256, 5);
  RegimeConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 1e-2;
  std::vector<Candidate> cands{{{{8, nn::Activation::tanh}}, 0}, {{{8, nn::Activation::tanh}}, -1}};
  const auto out = architecture_sweep(cands, cfg, data, Vector{{-2, -2, -1}}, Vector{{2, 2, 1}}, 2, 2);
  EXPECT_EQ(out[0].index, 1u);
  EXPECT_EQ(out[1].report.curve.size(), 0u);
  EXPECT_EQ(out[0].seed, mix_seed(0, 1));
}

TEST(Sweep, TiesBrokenByParameterCountThenOrder) {
  std::vector<SweepEntry> e(4);
  const double losses[] = {0.5, 0.1, 0.1, 0.1};
  const std::size_t params[] = {10, 30, 20, 20};
  for (std::size_t i = 0; i < 4; ++i) {
    e[i].index = i;
    e[i].parameter_count = params[i];
    e[i].report.validation_loss = losses[i];
  }
  const auto r = rank_sweep(e);
  EXPECT_EQ(r[0].index, 2u);
  EXPECT_EQ(r[1].index, 3u);
  EXPECT_EQ(r[2].index, 1u);
  EXPECT_EQ(r[3].index, 0u);
  EXPECT_EQ(r[3].rank, 4);
}

TEST(Sweep, DefaultSpaceHasEighteenCandidates) { EXPECT_EQ(default_sweep_space().size(), 18u); }
