#include "fisherpinn/config.hpp"

#include <gtest/gtest.h>

using namespace fisherpinn;
using config::resolve;
using config::parse_toml;

TEST(ParseToml, SectionsArraysAndTableLists) {
  const auto j = parse_toml(R"(
seed = 7  # trailing comment
kind = "dynamic_disturbances"
[model.vehicle]
m = 0.05
[model.tires.front]
B = 6
[model]
vx_min = 0.4
[training]
regimes = ["physics_only", "inverse"]
[[disturbance]]
kind = "wind"
vw = 2.5
[[disturbance]]
kind = "bank"
)");
  EXPECT_EQ(j["seed"], io::json::array({"7"}));
  EXPECT_EQ(j["model"]["vehicle"]["m"][0], "0.05");
  EXPECT_EQ(j["model"]["tires"]["front"]["B"][0], "6");
  EXPECT_EQ(j["model"]["vx_min"][0], "0.4");
  EXPECT_EQ(j["training"]["regimes"].size(), 2u);
  ASSERT_TRUE(j["disturbance"].is_array());
  ASSERT_EQ(j["disturbance"].size(), 2u);
  EXPECT_EQ(j["disturbance"][1]["kind"][0], "bank");

  const auto c = resolve(j);
  EXPECT_EQ(c.master_seed(), 7u);
  EXPECT_EQ(c.kind, config::ExperimentKind::dynamic_disturbances);
  EXPECT_DOUBLE_EQ(c.model.vehicle.m, 0.05);
  EXPECT_DOUBLE_EQ(c.model.tires.front.B, 6.0);
  EXPECT_DOUBLE_EQ(c.model.vx_min, 0.4);
  ASSERT_EQ(c.train.regimes.size(), 2u);
  EXPECT_EQ(c.train.regimes[1], Regime::inverse);
  ASSERT_EQ(c.disturbances.size(), 2u);
  EXPECT_EQ(c.disturbances[0].kind(), DisturbanceKind::wind);
  EXPECT_DOUBLE_EQ(std::get<WindDisturbance>(c.disturbances[0].params).vw, 2.5);
  EXPECT_EQ(c.disturbances[1].kind(), DisturbanceKind::bank);
}

TEST(ParseToml, SingleTableListEntry) {
  const auto c = resolve(parse_toml("seed = 1\n[[disturbance]]\nkind = \"roll\"\n"));
  ASSERT_EQ(c.disturbances.size(), 1u);
  EXPECT_EQ(c.disturbances[0].kind(), DisturbanceKind::roll);
}

TEST(Resolve, DefaultsAreEchoed) {
  const auto c = resolve(io::json::object());
  EXPECT_FALSE(c.seed.has_value());
  EXPECT_THROW(c.master_seed(), ConfigError);
  EXPECT_EQ(c.simulation.sample_count(), 311u);
  EXPECT_EQ(c.train.architectures.size(), 18u);
  const auto j = config::to_json(c);
  EXPECT_EQ(j["simulation"]["total_time"], 31.0);
  EXPECT_EQ(j["collocation"]["count"], 2048);
  EXPECT_EQ(j["training"]["architectures"].size(), 18u);
  EXPECT_EQ(j["training"]["architectures"][0], "tanh16-tanh16");
  EXPECT_EQ(j["model"]["tires"]["rear"]["D"], 0.1737);
  EXPECT_EQ(j["estimator"]["guard_low"], 0.5);
  EXPECT_TRUE(j["disturbance"].is_array());
  EXPECT_TRUE(j["seed"].is_null());
}

TEST(Resolve, EchoIsStableUnderReparse) {
  // resolving the echoed values again gives the same echo
  const auto a = resolve(parse_toml("seed = 4\n[training]\narchitectures = [\"mish8-tanh4\"]\nepochs = 12\n"));
  const auto ja = config::to_json(a);
  const auto b = resolve(parse_toml("seed = 4\n[training]\narchitectures = [\"mish8-tanh4\"]\nepochs = 12\n"));
  EXPECT_EQ(ja, config::to_json(b));
  EXPECT_EQ(ja["training"]["architectures"][0], "mish8-tanh4");
  EXPECT_EQ(ja["training"]["epochs"], 12);
}

TEST(Resolve, ArchitectureStrings) {
  const auto c = config::detail::parse_architecture("tanh32-mish16-sigmoid8");
  ASSERT_EQ(c.hidden.size(), 3u);
  EXPECT_EQ(c.hidden[1].width, 16);
  EXPECT_EQ(c.hidden[1].activation, nn::Activation::mish);
  for (const char* bad : {"", "tanh", "32", "tanh32-", "softmax4", "tanh0", "tanh3x"})
    EXPECT_THROW(config::detail::parse_architecture(bad), ConfigError) << bad;
}

namespace {

std::string error_of(const std::string& toml) {
  try {
    resolve(parse_toml(toml));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Resolve, ActionableErrors) {
  EXPECT_NE(error_of("[colocation]\ncount = 4\n").find("colocation"), std::string::npos);
  EXPECT_NE(error_of("[simulation]\nspeeed = 1\n").find("simulation.speeed"), std::string::npos);
  EXPECT_NE(error_of("[collocation]\ncount = 0\n").find("collocation.count"), std::string::npos);
  EXPECT_NE(error_of("[simulation]\ndt = fast\n").find("simulation.dt"), std::string::npos);
  EXPECT_NE(error_of("[training]\nepochs = 2.5\n").find("training.epochs"), std::string::npos);
  EXPECT_NE(error_of("[training]\nregimes = [\"quantum\"]\n").find("quantum"), std::string::npos);
  EXPECT_NE(error_of("[[disturbance]]\nkind = \"hail\"\n").find("hail"), std::string::npos);
  EXPECT_NE(error_of("[[disturbance]]\nvw = 1\n").find("disturbance[0].kind"), std::string::npos);
  EXPECT_NE(error_of("[[disturbance]]\nkind = \"wind\"\nrho = -1\n").find("nonnegative"), std::string::npos);
  EXPECT_NE(error_of("[[disturbance]]\nkind = \"bank\"\nvw = 3\n").find("disturbance[0].vw"), std::string::npos);
  EXPECT_NE(error_of("kind = \"other\"\n").find("experiment kind"), std::string::npos);
  EXPECT_NE(error_of("[collocation]\nlower = [1, 2]\n").find("dimension"), std::string::npos);
  EXPECT_NE(error_of("[estimator]\nguard_low = 2\n").find("guard_low"), std::string::npos);
  EXPECT_NE(error_of("[fisher_field]\nmodel = \"network\"\n").find("checkpoint"), std::string::npos);
  EXPECT_NE(error_of("[fisher_field]\npolicy = \"fixed\"\n").find("direction"), std::string::npos);
  EXPECT_NE(error_of("seed = -3\n").find("seed"), std::string::npos);
  EXPECT_EQ(error_of("seed = 3\n"), "");
}

TEST(Resolve, DirectionPolicies) {
  auto c = resolve(parse_toml("[fisher_field]\npolicy = \"fixed\"\ndirection = [1, 0, 0]\n"));
  EXPECT_EQ(c.field.policy.policy, DirectionPolicy::fixed);
  EXPECT_EQ(c.field.policy.fixed_direction.size(), 3);
  c = resolve(parse_toml("[fisher_field]\npolicy = \"basis_axis\"\naxis = 2\n"));
  EXPECT_EQ(c.field.policy.axis, 2);
  EXPECT_EQ(config::to_json(c)["fisher_field"]["axis"], 2);
}

TEST(LoadToml, MissingFileNamesPath) {
  try {
    config::load("/nonexistent/dir/cfg.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/cfg.toml"), std::string::npos);
  }
}
