#include "fisherpinn/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

using namespace fisherpinn;

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<double>(i % 40) - 20.0);
    EXPECT_EQ(io::parse_double(io::format_double(v)), v);
  }
  for (double v : {0.0, -0.0, 1.0 / 3, 5e-324, std::numeric_limits<double>::max()})
    EXPECT_EQ(io::parse_double(io::format_double(v)), v);
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(2.0), "2");
}

TEST(ParseDouble, RejectsGarbage) {
  EXPECT_THROW(io::parse_double("1.5x"), io::ParseError);
  EXPECT_THROW(io::parse_double(""), io::ParseError);
  EXPECT_THROW(io::parse_double("abc", 7), io::ParseError);
  EXPECT_DOUBLE_EQ(io::parse_double(" +2.5\r"), 2.5);
  try {
    io::parse_double("nope", 7);
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
}

TEST(Csv, SplitAndParse) {
  EXPECT_EQ(io::split("a,,b"), (std::vector<std::string>{"a", "", "b"}));
  std::istringstream in("a,b\n1,2\n\n3,4\r\n");
  const auto t = io::parse_csv(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
  EXPECT_EQ(t.line_numbers[1], 4u);
  EXPECT_EQ(t.column("b"), 1);
  EXPECT_EQ(t.column("c"), -1);
  std::istringstream empty("");
  EXPECT_THROW(io::parse_csv(empty), io::ParseError);
}

namespace {

FisherField small_field() {
  FisherField f;
  f.domain = {{"theta", "v", "delta"}, {-1, 0, -0.5}, {1, 5, 0.5}, "grid", 5.0};
  FisherSample a;
  a.state = Vector{{0.25}};
  a.input = Vector{{1.0, 0.1}};
  a.g = 1.0 / 3;
  a.sigma_max_sq = 0.5;
  FisherSample b = a;
  b.skipped = true;
  b.skip_reason = "equilibrium";
  b.g = 0;
  f.samples = {a, b};
  return f;
}

}  // namespace

TEST(FieldOutput, CsvColumns) {
  const std::string csv = io::field_to_csv(small_field());
  EXPECT_EQ(csv, "theta,v,delta,g,sigma_max_sq,skip_flag\n0.25,1,0.1,0.3333333333333333,0.5,0\n0.25,1,0.1,0,0.5,1\n");
}

TEST(FieldOutput, JsonHasDomainAndCounts) {
  const auto j = io::field_to_json(small_field());
  EXPECT_EQ(j["sample_count"], 2);
  EXPECT_EQ(j["valid_count"], 1);
  EXPECT_EQ(j["domain"]["volume"], 5.0);
  EXPECT_EQ(j["samples"][1]["skip_reason"], "equilibrium");
  EXPECT_FALSE(j["samples"][0].contains("skip_reason"));
}

TEST(Checkpoint, RoundTripBitExact) {
  auto net = nn::make_mlp(5, {{16, nn::Activation::tanh}, {8, nn::Activation::mish}}, 3, 42);
  nn::set_input_bounds(net, Vector{{-100, -10, -0.5, 0, -0.5}}, Vector{{100, 10, 0.5, 5, 0.5}});
  const auto dir = std::filesystem::temp_directory_path() / "fisherpinn_io_test";
  const auto path = dir / "net.json";
  io::save_checkpoint(path, net);
  const auto back = io::load_checkpoint(path);
  EXPECT_EQ(back.layers, net.layers);
  EXPECT_EQ(nn::flatten(back), nn::flatten(net));
  EXPECT_EQ(back.input_offset, net.input_offset);
  EXPECT_EQ(back.input_scale, net.input_scale);
  // save -> load -> save gives the same bytes
  io::save_checkpoint(dir / "net2.json", back);
  EXPECT_EQ(io::read_file(path), io::read_file(dir / "net2.json"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptInputsAreParseErrors) {
  const auto net = nn::make_mlp(2, {{4, nn::Activation::tanh}}, 1, 1);
  auto j = io::network_to_json(net);
  auto wrong_version = j;
  wrong_version["version"] = 99;
  EXPECT_THROW(io::network_from_json(wrong_version), io::ParseError);
  auto bad_shape = j;
  bad_shape["layers"][0]["weights"][0].push_back(1.0);
  EXPECT_THROW(io::network_from_json(bad_shape), io::ParseError);
  auto bad_act = j;
  bad_act["layers"][0]["activation"] = "softmax";
  EXPECT_THROW(io::network_from_json(bad_act), io::ParseError);
  EXPECT_THROW(io::network_from_json(io::json::parse("{\"format\":\"other\"}")), io::ParseError);

  const auto dir = std::filesystem::temp_directory_path() / "fisherpinn_io_corrupt";
  io::write_file(dir / "broken.json", "{\"format\": \"fisherpinn.network\", ");
  EXPECT_THROW(io::load_checkpoint(dir / "broken.json"), io::ParseError);
  EXPECT_THROW(io::load_checkpoint(dir / "missing.json"), io::IoError);
  std::filesystem::remove_all(dir);
}
