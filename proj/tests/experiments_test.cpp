#include "fisherpinn/experiments.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fisherpinn;
namespace fs = std::filesystem;
namespace ex = fisherpinn::experiments;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("fisherpinn_" + name)) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

config::ExperimentConfig cfg_from(const std::string& toml) { return config::resolve(config::parse_toml(toml)); }

// Every regular file under root, relative path -> bytes.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
  return out;
}

const char* kSmallDisturb = R"(
seed = 3
[excitation]
duration = 3.0
trajectories = 2
[estimator]
epochs = 2
hidden = 6
dense = 6
[disturb]
baseline = true
fisher_stride = 5
[[disturbance]]
kind = "wind"
[[disturbance]]
kind = "bank"
beta = 0.0
)";

}  // namespace

TEST(GenData, TableOneCircleAndIdempotence) {
  TempDir a("gen_a"), b("gen_b");
  std::ostringstream log;
  const auto cfg = cfg_from("seed = 5\n[collocation]\ncount = 64\nvalidation_count = 32\n");
  const auto r = ex::cmd_gen_data(cfg, a.path(), log);
  EXPECT_EQ(r.circle_samples, 311u);
  EXPECT_GT(r.mixed_segments, 0u);
  const Trajectory circle = read_dataset(a.path() / "data" / "circle.csv");
  EXPECT_EQ(circle.size(), 311u);
  EXPECT_DOUBLE_EQ(circle.t.back(), 31.0);
  const auto col = ex::samples_from_csv(a.path() / "data" / "collocation.csv");
  EXPECT_EQ(col.size(), 64);

  const auto m = io::read_json(a.path() / "data" / "manifest.json");
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["config"]["collocation"]["count"], 64);
  EXPECT_EQ(m["config"]["simulation"]["total_time"], 31.0);

  const auto first = snapshot(a.path());
  ex::cmd_gen_data(cfg, a.path(), log);
  EXPECT_EQ(snapshot(a.path()), first);
  ex::cmd_gen_data(cfg, b.path(), log);
  EXPECT_EQ(snapshot(b.path()), first);
}

TEST(Train, MissingDatasetNamesExpectedPath) {
  TempDir d("train_missing");
  std::ostringstream log;
  try {
    ex::cmd_train(cfg_from("seed = 1\n"), d.path(), log);
    FAIL();
  } catch (const io::IoError& e) {
    EXPECT_NE(std::string(e.what()).find((d.path() / "data" / "collocation.csv").string()), std::string::npos);
  }
}

TEST(Train, ZeroEpochsReportInitialLossesAndRank) {
  TempDir d("train_zero");
  std::ostringstream log;
  const auto cfg = cfg_from(
      "seed = 2\n[collocation]\ncount = 64\nvalidation_count = 32\n"
      "[training]\nepochs = 0\narchitectures = [\"tanh8\", \"mish4-mish4\"]\ncheckpoints = 1\n");
  ex::cmd_gen_data(cfg, d.path(), log);
  const auto res = ex::cmd_train(cfg, d.path(), log);
  ASSERT_EQ(res.size(), 1u);
  ASSERT_EQ(res[0].entries.size(), 2u);
  const fs::path dir = d.path() / "train" / "physics_only";
  const auto rep = io::read_json(dir / "arch_00_tanh8_report.json");
  EXPECT_EQ(rep["epochs"], 0);
  EXPECT_EQ(rep["initial"], rep["final"]);
  EXPECT_EQ(io::read_file(dir / "arch_01_mish4-mish4_curve.csv").find("1,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "rank_01_checkpoint.json"));
  EXPECT_FALSE(fs::exists(dir / "rank_02_checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(d.path() / "train" / "manifest.json"));
}

TEST(Train, CorruptResumeCheckpointIsParseError) {
  TempDir d("train_resume");
  io::write_file(d.path() / "bad.json", "{\"format\": \"fisherpinn.network\", \"version\": 7}");
  std::ostringstream log;
  auto cfg = cfg_from("seed = 2\n[collocation]\ncount = 16\nvalidation_count = 8\n[training]\nepochs = 0\n");
  ex::cmd_gen_data(cfg, d.path(), log);
  cfg.train.resume = (d.path() / "bad.json").string();
  EXPECT_THROW(ex::cmd_train(cfg, d.path(), log), io::ParseError);
}

TEST(Compare, BypassIsExactAndUntrainedFails) {
  TempDir d("compare");
  std::ostringstream log;
  auto cfg = cfg_from("seed = 1\n[compare]\nbypass = true\n[collocation]\nvalidation_count = 64\n");
  auto r = ex::cmd_compare(cfg, "", d.path(), log);
  EXPECT_EQ(r.report.discrepancy.e_fi, 0.0);
  EXPECT_TRUE(r.report.verdict.pass);
  EXPECT_NE(log.str().find("verdict: PASS"), std::string::npos);
  for (const char* f : {"report.json", "curves.csv", "field_true.csv", "field_learned.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(d.path() / "compare" / f)) << f;

  auto net = nn::make_mlp(5, {{8, nn::Activation::tanh}}, 3, 9);
  nn::set_input_bounds(net, cfg.collocation.lower, cfg.collocation.upper);
  io::save_checkpoint(d.path() / "untrained.json", net);
  cfg.compare.bypass = false;
  log.str("");
  r = ex::cmd_compare(cfg, (d.path() / "untrained.json").string(), d.path(), log);
  EXPECT_FALSE(r.report.verdict.pass);
  EXPECT_NE(log.str().find("verdict: FAIL"), std::string::npos);
  EXPECT_NE(log.str().find("fisher_discrepancy"), std::string::npos);

  io::save_checkpoint(d.path() / "wrong.json", nn::make_mlp(4, {{8, nn::Activation::tanh}}, 3, 9));
  EXPECT_THROW(ex::cmd_compare(cfg, (d.path() / "wrong.json").string(), d.path(), log), DimensionError);
  EXPECT_THROW(ex::cmd_compare(cfg, "", d.path(), log), ConfigError);
}

TEST(Disturb, EmptyListRejected) {
  TempDir d("disturb_empty");
  std::ostringstream log;
  EXPECT_THROW(ex::cmd_disturb(cfg_from("seed = 1\n"), d.path(), log), ConfigError);
}

TEST(Disturb, BundleDeterministicAndZeroBankMatchesBaseline) {
  TempDir a("disturb_a"), b("disturb_b");
  std::ostringstream log;
  const auto cfg = cfg_from(kSmallDisturb);
  const auto res = ex::cmd_disturb(cfg, a.path(), log);
  ASSERT_EQ(res.size(), 3u);
  const fs::path wind = a.path() / "disturb" / "00_wind";
  for (const char* f : {"bias_table.csv", "comparison.csv", "vy_bins.csv", "coefficients.csv", "loss_curve.csv",
                        "summary.json", "manifest.json", "trajectory_000.csv"})
    EXPECT_TRUE(fs::exists(wind / f)) << f;
  // bias table lists every coefficient
  std::istringstream in(io::read_file(wind / "bias_table.csv"));
  EXPECT_EQ(io::parse_csv(in).rows.size(), kNumCoefficients);
  for (const auto& s : res) EXPECT_EQ(s.estimator.guard_violations, 0u) << s.name;

  EXPECT_EQ(io::read_file(a.path() / "disturb" / "baseline" / "bias_table.csv"),
            io::read_file(a.path() / "disturb" / "01_bank" / "bias_table.csv"));

  ex::cmd_disturb(cfg, b.path(), log);
  EXPECT_EQ(snapshot(a.path()), snapshot(b.path()));
}

TEST(FisherField, KinematicGridAndDynamicRandom) {
  TempDir d("field");
  std::ostringstream log;
  auto f = ex::cmd_fisher_field(cfg_from("seed = 1\n"), d.path(), log);
  EXPECT_EQ(f.samples.size(), 216u);
  f = ex::cmd_fisher_field(cfg_from("seed = 1\n[fisher_field]\nmodel = \"dynamic\"\npoints = \"random\"\ncount = 50\n"),
                           d.path(), log);
  EXPECT_EQ(f.samples.size(), 50u);
  EXPECT_EQ(f.samples[0].state.size(), 6);
  EXPECT_TRUE(fs::exists(d.path() / "fisher_field" / "field.json"));
  EXPECT_THROW(ex::cmd_fisher_field(cfg_from("seed = 1\n[fisher_field]\nmodel = \"dynamic\"\n"), d.path(), log),
               ConfigError);
}

TEST(VyBins, EqualCountQuantiles) {
  std::vector<ex::ComparisonPoint> pts;
  for (int i = 0; i < 10; ++i) {
    ex::ComparisonPoint p;
    p.state = Vector::Zero(6);
    p.state[4] = (i % 2 ? -1.0 : 1.0) * i;  // |vy| = i
    p.g_true = i;
    p.g_learned = 0;
    pts.push_back(p);
  }
  pts[3].skipped = true;
  const auto bins = ex::vy_quantile_bins(pts, 3);
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[0].count + bins[1].count + bins[2].count, 9u);
  EXPECT_EQ(bins[0].count, 3u);
  EXPECT_DOUBLE_EQ(bins[0].mean_abs_difference, (0.0 + 1 + 2) / 3);
  // the skipped |vy| = 3 drops out: {0,1,2} {4,5,6} {7,8,9}
  EXPECT_DOUBLE_EQ(bins[1].low, 4.0);
  EXPECT_DOUBLE_EQ(bins[2].low, 7.0);
  EXPECT_DOUBLE_EQ(bins[2].mean_abs_difference, 8.0);
}
