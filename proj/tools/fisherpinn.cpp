#include "fisherpinn/experiments.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace fisherpinn;
namespace fs = std::filesystem;

namespace {

constexpr const char* kOutputEnv = "FISHERPINN_OUTPUT_ROOT";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 0;
  std::string checkpoint;
};

config::ExperimentConfig resolve(const Options& o) {
  config::ExperimentConfig c = o.config.empty() ? config::resolve(io::json::object()) : config::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.jobs > 0) c.jobs = o.jobs;
  c.master_seed();
  return c;
}

fs::path output_root(const Options& o, const config::ExperimentConfig& c) {
  if (!o.out.empty()) return o.out;
  if (!c.output.empty()) return c.output;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return "fisherpinn-out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher-information fidelity of physics-informed neural dynamics models"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (TOML)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed, overrides the config");
    sub->add_option("--out", o.out, std::string("output root (default: config 'output', then $") + kOutputEnv +
                                        ", then ./fisherpinn-out)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* gen = app.add_subcommand("gen-data", "write the circular trajectory, mixed trajectories and collocation sets");
  auto* train = app.add_subcommand("train", "architecture sweep for each configured regime");
  auto* compare = app.add_subcommand("compare", "Fisher fidelity of a checkpoint against the kinematic model");
  auto* disturb = app.add_subcommand("disturb", "disturbance studies on the dynamic model");
  auto* field = app.add_subcommand("fisher-field", "evaluate a Fisher field");
  for (auto* s : {gen, train, compare, disturb, field}) common(s);
  compare->add_option("--checkpoint", o.checkpoint, "network checkpoint (overrides compare.checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const auto cfg = resolve(o);
    const fs::path out = output_root(o, cfg);
    if (gen->parsed()) {
      experiments::cmd_gen_data(cfg, out, std::cout);
    } else if (train->parsed()) {
      experiments::cmd_train(cfg, out, std::cout);
    } else if (compare->parsed()) {
      const auto r = experiments::cmd_compare(cfg, o.checkpoint, out, std::cout);
      return r.report.verdict.pass ? 0 : 2;
    } else if (disturb->parsed()) {
      experiments::cmd_disturb(cfg, out, std::cout);
    } else if (field->parsed()) {
      experiments::cmd_fisher_field(cfg, out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
