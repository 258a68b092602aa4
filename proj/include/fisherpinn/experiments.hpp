#pragma once

// Command implementations behind the CLI. Each command writes its artifacts
// plus a manifest.json echoing the resolved configuration; all file content
// depends only on (config, seed).

#include "fisherpinn/config.hpp"
#include "fisherpinn/estimator.hpp"
#include "fisherpinn/fidelity.hpp"
#include "fisherpinn/io.hpp"
#include "fisherpinn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace fisherpinn::experiments {

namespace fs = std::filesystem;
using io::json;
using config::ExperimentConfig;

// Stream offsets for seeds derived from the master seed.
inline constexpr std::uint64_t kSeedCollocation = 10;
inline constexpr std::uint64_t kSeedValidation = 11;
inline constexpr std::uint64_t kSeedMixed = 12;
inline constexpr std::uint64_t kSeedCircle = 13;
inline constexpr std::uint64_t kSeedSweep = 14;
inline constexpr std::uint64_t kSeedFieldPoints = 20;
inline constexpr std::uint64_t kSeedExcitation = 1000;
inline constexpr std::uint64_t kSeedEstimator = 2000;

inline std::string padded(std::size_t i, int width = 2) {
  std::string s = std::to_string(i);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

inline void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                           const json& extra = json::object()) {
  std::vector<std::string> files;
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().filename() != "manifest.json") files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  json m{{"format", "fisherpinn.manifest"},
         {"version", 1},
         {"command", command},
         {"seed", cfg.master_seed()},
         {"config", config::to_json(cfg)},
         {"files", files}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = *it;
  io::write_json(dir / "manifest.json", m);
}

// ---------------------------------------------------------------------------
// Kinematic data

inline RhsFunction kinematic_rhs_function(const VehicleParams& vp) {
  return [vp](const Vector& x, const Vector& u) {
    return kinematic_rhs(KinematicState::from_vector(x), KinematicInput::from_vector(u), vp);
  };
}

inline std::string samples_to_csv(const LabeledSamples& s) {
  std::string out = "x,y,theta,v,delta,xdot,ydot,thetadot\n";
  for (Eigen::Index c = 0; c < s.size(); ++c) {
    std::vector<std::string> cells;
    for (Eigen::Index r = 0; r < s.inputs.rows(); ++r) cells.push_back(io::format_double(s.inputs(r, c)));
    for (Eigen::Index r = 0; r < s.targets.rows(); ++r) cells.push_back(io::format_double(s.targets(r, c)));
    out += io::join(cells) + "\n";
  }
  return out;
}

inline LabeledSamples samples_from_csv(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  const io::CsvTable t = io::parse_csv(in);
  if (t.header.size() != 8) throw io::ParseError(path.string() + ": expected 8 columns (5 inputs, 3 derivatives)");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  LabeledSamples s{Matrix(5, n), Matrix(3, n)};
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& row = t.rows[static_cast<std::size_t>(c)];
    const std::size_t line = t.line_numbers[static_cast<std::size_t>(c)];
    if (row.size() != 8) throw io::ParseError(path.string() + ": wrong column count", line);
    for (Eigen::Index r = 0; r < 5; ++r) s.inputs(r, c) = io::parse_double(row[static_cast<std::size_t>(r)], line);
    for (Eigen::Index r = 0; r < 3; ++r) s.targets(r, c) = io::parse_double(row[static_cast<std::size_t>(5 + r)], line);
  }
  return s;
}

/// All kinematic data derived from (config, seed); gen-data writes exactly this.
struct KinematicData {
  Trajectory circle;
  std::vector<Trajectory> mixed;
  LabeledSamples collocation;
  LabeledSamples validation;
};

inline KinematicData make_kinematic_data(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.master_seed();
  const RhsFunction f = kinematic_rhs_function(cfg.kinematic_vehicle());
  KinematicData d;
  SimulationConfig sim = cfg.simulation;
  sim.seed = mix_seed(seed, kSeedCircle);
  d.circle = simulate_circle(sim);
  d.mixed = build_mixed_dataset(sim, cfg.mixed, cfg.collocation.box(), mix_seed(seed, kSeedMixed));
  d.collocation =
      label_points(sample_collocation(cfg.collocation, cfg.train.regime.collocation_count, mix_seed(seed, kSeedCollocation)), f);
  d.validation =
      label_points(sample_collocation(cfg.collocation, cfg.train.regime.validation_count, mix_seed(seed, kSeedValidation)), f);
  return d;
}

struct GenDataResult {
  fs::path dir;
  std::size_t circle_samples = 0;
  std::size_t mixed_segments = 0;
};

inline GenDataResult cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const KinematicData d = make_kinematic_data(cfg);
  GenDataResult r{out / "data", d.circle.size(), d.mixed.size()};
  if (fs::exists(r.dir))
    for (const auto& e : fs::directory_iterator(r.dir))
      if (e.path().filename().string().rfind("mixed_", 0) == 0) fs::remove(e.path());
  write_dataset(d.circle, r.dir / "circle.csv");
  for (std::size_t i = 0; i < d.mixed.size(); ++i) write_dataset(d.mixed[i], r.dir / ("mixed_" + padded(i, 3) + ".csv"));
  io::write_file(r.dir / "collocation.csv", samples_to_csv(d.collocation));
  io::write_file(r.dir / "validation.csv", samples_to_csv(d.validation));
  write_manifest(r.dir, "gen-data", cfg,
                 {{"circle_samples", d.circle.size()},
                  {"circle_exit_reason", d.circle.exit_reason},
                  {"mixed_segments", d.mixed.size()},
                  {"collocation_points", d.collocation.size()},
                  {"validation_points", d.validation.size()}});
  log << "gen-data: circle " << d.circle.size() << " samples, " << d.mixed.size() << " mixed segments, "
      << d.collocation.size() << " collocation points -> " << r.dir.string() << "\n";
  return r;
}

inline fs::path require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw io::IoError("missing " + what + ": expected '" + p.string() + "' (run gen-data with the same --out first)");
  return p;
}

inline std::vector<Trajectory> read_mixed(const fs::path& dir) {
  require_file(dir / "mixed_000.csv", "trajectory dataset");
  std::vector<Trajectory> out;
  for (std::size_t i = 0; fs::exists(dir / ("mixed_" + padded(i, 3) + ".csv")); ++i)
    out.push_back(read_dataset(dir / ("mixed_" + padded(i, 3) + ".csv")));
  return out;
}

// ---------------------------------------------------------------------------
// Training

inline json train_report_to_json(const SweepEntry& e) {
  const TrainReport& r = e.report;
  auto loss = [](const EpochLoss& l) { return json{{"total", l.total}, {"physics", l.physics}, {"data", l.data}}; };
  return {{"format", "fisherpinn.train_report"},
          {"version", 1},
          {"index", e.index},
          {"rank", e.rank},
          {"architecture", r.architecture},
          {"regime", to_string(r.regime)},
          {"seed", e.seed},
          {"parameter_count", e.parameter_count},
          {"epochs", r.curve.size()},
          {"initial", loss(r.initial)},
          {"final", r.curve.empty() ? loss(r.initial) : loss(r.curve.back())},
          {"validation_loss", r.validation_loss},
          {"grad_check_error", r.grad_check_error},
          {"aborted", r.aborted},
          {"abort_reason", r.abort_reason}};
}

inline std::string curve_to_csv(const TrainReport& r) {
  std::string out = "epoch,total,physics,data\n";
  auto row = [&](std::size_t epoch, const EpochLoss& l) {
    out += std::to_string(epoch) + "," + io::format_double(l.total) + "," + io::format_double(l.physics) + "," +
           io::format_double(l.data) + "\n";
  };
  row(0, r.initial);
  for (std::size_t i = 0; i < r.curve.size(); ++i) row(i + 1, r.curve[i]);
  return out;
}

struct RegimeResult {
  Regime regime = Regime::physics_only;
  std::vector<SweepEntry> entries;  // ranked
  fs::path dir;
};

inline TrainingData load_training_data(const ExperimentConfig& cfg, const fs::path& data_dir, bool needs_trajectories) {
  TrainingData d;
  d.collocation = samples_from_csv(require_file(data_dir / "collocation.csv", "collocation dataset"));
  d.validation = samples_from_csv(require_file(data_dir / "validation.csv", "validation dataset"));
  if (needs_trajectories) {
    const auto trs = read_mixed(data_dir);
    d.samples = samples_from_trajectories(trs);
    d.windows = make_windows(trs, cfg.train.regime.horizon, cfg.simulation.dt);
  }
  return d;
}

inline std::vector<RegimeResult> cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const std::uint64_t seed = cfg.master_seed();
  bool needs_trajectories = false;
  for (auto r : cfg.train.regimes) needs_trajectories |= r != Regime::physics_only;
  const TrainingData data = load_training_data(cfg, out / "data", needs_trajectories);
  std::optional<nn::NetworkParams> resume;
  if (!cfg.train.resume.empty()) {
    resume = io::load_checkpoint(cfg.train.resume);
    if (resume->input_dim != 5 || resume->output_dim != 3)
      throw DimensionError("resume checkpoint has " + std::to_string(resume->input_dim) + " inputs and " +
                           std::to_string(resume->output_dim) + " outputs; the kinematic model needs 5 and 3");
  }
  const fs::path root = out / "train";
  std::vector<RegimeResult> results;
  json summary = json::array();
  for (Regime regime : cfg.train.regimes) {
    RegimeConfig rc = cfg.train.regime;
    rc.regime = regime;
    rc.seed = mix_seed(seed, kSeedSweep);
    RegimeResult res;
    res.regime = regime;
    res.dir = root / to_string(regime);
    if (resume) {
      SweepEntry e;
      e.seed = rc.seed;
      e.parameter_count = resume->parameter_count();
      e.report = train_regime(*resume, rc, data);
      res.entries = rank_sweep({std::move(e)});
    } else {
      res.entries = architecture_sweep(cfg.train.architectures, rc, data, cfg.collocation.lower, cfg.collocation.upper, 3,
                                       cfg.jobs);
    }
    if (fs::exists(res.dir)) fs::remove_all(res.dir);
    std::string ranking = "rank,index,architecture,parameter_count,validation_loss,final_loss,grad_check_error,aborted\n";
    for (const auto& e : res.entries) {
      const std::string stem = "arch_" + padded(e.index) + "_" + e.report.architecture;
      io::write_json(res.dir / (stem + "_report.json"), train_report_to_json(e));
      io::write_file(res.dir / (stem + "_curve.csv"), curve_to_csv(e.report));
      if (e.rank <= cfg.train.checkpoints && !e.report.params.layers.empty())
        io::save_checkpoint(res.dir / ("rank_" + padded(static_cast<std::size_t>(e.rank)) + "_checkpoint.json"), e.report.params);
      const double final_loss = e.report.curve.empty() ? e.report.initial.total : e.report.curve.back().total;
      ranking += std::to_string(e.rank) + "," + std::to_string(e.index) + "," + e.report.architecture + "," +
                 std::to_string(e.parameter_count) + "," + io::format_double(e.report.validation_loss) + "," +
                 io::format_double(final_loss) + "," + io::format_double(e.report.grad_check_error) + "," +
                 (e.report.aborted ? "1" : "0") + "\n";
    }
    io::write_file(res.dir / "ranking.csv", ranking);
    write_manifest(res.dir, "train", cfg, {{"regime", to_string(regime)}, {"architectures", res.entries.size()}});
    const auto& best = res.entries.front();
    log << "train " << to_string(regime) << ": " << res.entries.size() << " architectures, best " << best.report.architecture
        << " validation loss " << io::format_double(best.report.validation_loss) << "\n";
    summary.push_back({{"regime", to_string(regime)},
                       {"best_architecture", best.report.architecture},
                       {"best_validation_loss", best.report.validation_loss},
                       {"best_checkpoint", (fs::path(to_string(regime)) / "rank_01_checkpoint.json").generic_string()}});
    results.push_back(std::move(res));
  }
  io::write_json(root / "summary.json", {{"format", "fisherpinn.train_summary"}, {"version", 1}, {"regimes", summary}});
  write_manifest(root, "train", cfg);
  return results;
}

// ---------------------------------------------------------------------------
// Fidelity comparison on the kinematic grid

struct CompareResult {
  FidelityReport report;
  fs::path dir;
};

inline void check_kinematic_checkpoint(const nn::NetworkParams& net) {
  if (net.input_dim != 5 || net.output_dim != 3)
    throw DimensionError("incompatible checkpoint: network maps " + std::to_string(net.input_dim) + " inputs to " +
                         std::to_string(net.output_dim) + " outputs, the kinematic model needs (x, y, theta, v, delta) -> 3");
}

/// Evaluates a network (or, in bypass mode, the analytic model itself)
/// against the kinematic model and writes the report bundle.
inline CompareResult compare_network(const ExperimentConfig& cfg, const nn::NetworkParams* net, const fs::path& out,
                                     std::ostream& log) {
  const VehicleParams vp = cfg.kinematic_vehicle();
  const SystemModel truth = kinematic_system(vp);
  DomainDescriptor dom;
  const auto pts = kinematic_grid(cfg.collocation, cfg.compare.grid_points, &dom);
  double traj_err = 0.0, resid = 0.0;
  SystemModel learned = truth;
  if (net) {
    check_kinematic_checkpoint(*net);
    // same data gen-data writes for this (config, seed)
    const KinematicData d = make_kinematic_data(cfg);
    traj_err = trajectory_error(*net, make_windows(d.mixed, cfg.train.regime.horizon, cfg.simulation.dt));
    resid = regression_loss(*net, d.validation);
    learned = network_system(*net, 3);
  }
  CompareResult r;
  r.dir = out / "compare";
  FisherField ft, fl;
  r.report = compare_fields(truth, learned, pts, dom, traj_err, resid, cfg.compare.tolerances, &ft, &fl);
  json rep = report_to_json(r.report);
  rep["bypass"] = net == nullptr;
  rep["grid_points_per_dim"] = cfg.compare.grid_points;
  rep["domain"] = io::domain_to_json(dom);
  io::write_json(r.dir / "report.json", rep);
  io::write_file(r.dir / "curves.csv", comparison_to_csv(r.report.per_sample));
  io::write_file(r.dir / "field_true.csv", io::field_to_csv(ft));
  io::write_file(r.dir / "field_learned.csv", io::field_to_csv(fl));
  write_manifest(r.dir, "compare", cfg);
  const Verdict& v = r.report.verdict;
  log << "verdict: " << (v.pass ? "PASS" : "FAIL") << " trajectory_error=" << io::format_double(v.trajectory_error)
      << " physics_residual=" << io::format_double(v.physics_residual)
      << " e_fi_relative=" << io::format_double(v.e_fi_relative);
  if (!v.failing.empty()) {
    log << " failing=";
    for (std::size_t i = 0; i < v.failing.size(); ++i) log << (i ? "," : "") << v.failing[i];
  }
  log << "\n";
  return r;
}

inline CompareResult cmd_compare(const ExperimentConfig& cfg, const std::string& checkpoint, const fs::path& out,
                                 std::ostream& log) {
  if (cfg.compare.bypass) return compare_network(cfg, nullptr, out, log);
  const std::string path = checkpoint.empty() ? cfg.compare.checkpoint : checkpoint;
  if (path.empty()) throw ConfigError("compare needs a checkpoint: pass --checkpoint or set compare.checkpoint (or compare.bypass = true)");
  const nn::NetworkParams net = io::load_checkpoint(path);
  return compare_network(cfg, &net, out, log);
}

// ---------------------------------------------------------------------------
// Disturbance studies

struct VyBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
  double mean_abs_difference = 0.0;
};

struct StudyResult {
  std::string name;
  DisturbanceConfig disturbance;
  EstimatorReport estimator;
  ParameterBiasTable bias;
  std::vector<VyBin> bins;
  Discrepancy discrepancy;
  fs::path dir;
};

struct ComparisonPoint {
  Eigen::Index window = 0;
  int trajectory = 0;
  double t = 0.0;
  Vector state;
  double g_true = 0.0;
  double g_learned = 0.0;
  bool skipped = false;
};

/// Equal-count bins over |vy| of the valid points, with the mean absolute
/// Fisher difference in each.
inline std::vector<VyBin> vy_quantile_bins(const std::vector<ComparisonPoint>& pts, int nbins) {
  std::vector<std::pair<double, double>> v;
  for (const auto& p : pts)
    if (!p.skipped) v.emplace_back(std::abs(p.state[4]), std::abs(p.g_true - p.g_learned));
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<VyBin> bins;
  if (v.empty()) return bins;
  const std::size_t n = v.size();
  for (int b = 0; b < nbins; ++b) {
    const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(nbins);
    const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(nbins);
    VyBin bin;
    if (hi > lo) {
      bin.low = v[lo].first;
      bin.high = v[hi - 1].first;
      bin.count = hi - lo;
      double acc = 0.0;
      for (std::size_t i = lo; i < hi; ++i) acc += v[i].second;
      bin.mean_abs_difference = acc / static_cast<double>(hi - lo);
    }
    bins.push_back(bin);
  }
  return bins;
}

inline std::vector<Trajectory> excitation_data(const DynamicModel& truth, const ExcitationConfig& ex, std::uint64_t seed) {
  std::vector<Trajectory> trs;
  for (int k = 0; k < ex.trajectories; ++k)
    trs.push_back(simulate_dynamic(truth, ex, mix_seed(seed, kSeedExcitation + static_cast<std::uint64_t>(k))));
  return trs;
}

/// One study: disturbed data, estimator against the undisturbed nominal model,
/// per-window Fisher comparison and the bias table. Seeds do not depend on the
/// disturbance, so studies are paired.
inline StudyResult run_study(const ExperimentConfig& cfg, const std::string& name, const DisturbanceConfig& dist,
                             const fs::path& dir) {
  const std::uint64_t seed = cfg.master_seed();
  DynamicModel nominal = cfg.model;
  nominal.disturbances.clear();
  DynamicModel truth = nominal;
  if (dist.kind() != DisturbanceKind::none) truth.disturbances.push_back(dist);

  StudyResult s;
  s.name = name;
  s.disturbance = dist;
  s.dir = dir;
  const auto trs = excitation_data(truth, cfg.disturb.excitation, seed);
  EstimatorConfig ec = cfg.disturb.estimator;
  ec.seed = mix_seed(seed, kSeedEstimator);
  s.estimator = train_coefficient_estimator(ec, trs, nominal);
  s.bias = parameter_bias_table(s.estimator.records, nominal.coefficients());

  const EstimatorWindows w = make_estimator_windows(trs, ec.tau);
  const SystemModel true_sys = dynamic_system(truth);
  std::vector<ComparisonPoint> pts;
  for (Eigen::Index c = 0; c < w.count(); c += cfg.disturb.fisher_stride) {
    const auto& rec = s.estimator.records[static_cast<std::size_t>(c)];
    Vector phi(static_cast<Eigen::Index>(kNumCoefficients));
    for (std::size_t i = 0; i < kNumCoefficients; ++i) phi[static_cast<Eigen::Index>(i)] = rec.phi[i];
    const StatePoint sp{w.state.col(c), w.input.col(c), w.t[static_cast<std::size_t>(c)]};
    const FisherSample gt = evaluate_sample(true_sys, sp, {});
    const FisherSample gl = evaluate_sample(dynamic_system(with_coefficients(nominal, phi)), sp, {});
    pts.push_back({c, w.trajectory[static_cast<std::size_t>(c)], sp.t, sp.state, gt.g, gl.g, gt.skipped || gl.skipped});
  }
  s.bins = vy_quantile_bins(pts, cfg.disturb.vy_bins);
  double sum = 0.0, norm = 0.0;
  for (const auto& p : pts) {
    if (p.skipped) continue;
    sum += (p.g_true - p.g_learned) * (p.g_true - p.g_learned);
    norm += p.g_true * p.g_true;
    ++s.discrepancy.valid_count;
  }
  if (s.discrepancy.valid_count > 0) s.discrepancy.e_fi = sum / static_cast<double>(s.discrepancy.valid_count);
  s.discrepancy.e_fi_relative = norm > 0 ? sum / norm : 0.0;

  if (fs::exists(dir)) fs::remove_all(dir);
  for (std::size_t k = 0; k < trs.size(); ++k) write_dataset(trs[k], dir / ("trajectory_" + padded(k, 3) + ".csv"));
  {
    std::string csv = "index,trajectory,t,vx,vy,omega,g_true,g_learned,difference,skip_flag\n";
    for (const auto& p : pts) {
      csv += std::to_string(p.window) + "," + std::to_string(p.trajectory) + "," + io::format_double(p.t) + "," +
             io::format_double(p.state[3]) + "," + io::format_double(p.state[4]) + "," + io::format_double(p.state[5]) +
             "," + io::format_double(p.g_true) + "," + io::format_double(p.g_learned) + "," +
             io::format_double(p.g_true - p.g_learned) + "," + (p.skipped ? "1" : "0") + "\n";
    }
    io::write_file(dir / "comparison.csv", csv);
  }
  {
    std::string csv = "bin,vy_low,vy_high,count,mean_abs_difference\n";
    for (std::size_t b = 0; b < s.bins.size(); ++b)
      csv += std::to_string(b) + "," + io::format_double(s.bins[b].low) + "," + io::format_double(s.bins[b].high) + "," +
             std::to_string(s.bins[b].count) + "," + io::format_double(s.bins[b].mean_abs_difference) + "\n";
    io::write_file(dir / "vy_bins.csv", csv);
  }
  {
    std::string header = "trajectory,t";
    for (auto n : kCoefficientNames) header += "," + std::string(n);
    std::string csv = header + "\n";
    for (const auto& r : s.estimator.records) {
      csv += std::to_string(r.trajectory) + "," + io::format_double(r.t);
      for (double v : r.phi) csv += "," + io::format_double(v);
      csv += "\n";
    }
    io::write_file(dir / "coefficients.csv", csv);
  }
  {
    std::string csv = "epoch,loss\n0," + io::format_double(s.estimator.initial_loss) + "\n";
    for (std::size_t i = 0; i < s.estimator.loss_curve.size(); ++i)
      csv += std::to_string(i + 1) + "," + io::format_double(s.estimator.loss_curve[i]) + "\n";
    io::write_file(dir / "loss_curve.csv", csv);
  }
  io::write_file(dir / "bias_table.csv", bias_table_to_csv(s.bias));
  json top = json::array();
  for (const auto& r : s.bias.most_deviated(6)) top.push_back(r.name);
  json bins = json::array();
  for (const auto& b : s.bins)
    bins.push_back({{"vy_low", b.low}, {"vy_high", b.high}, {"count", b.count}, {"mean_abs_difference", b.mean_abs_difference}});
  io::write_json(dir / "summary.json",
                 {{"format", "fisherpinn.disturbance_study"},
                  {"version", 1},
                  {"name", name},
                  {"disturbance", config::detail::disturbance_json(dist)},
                  {"initial_loss", s.estimator.initial_loss},
                  {"final_loss", s.estimator.loss_curve.empty() ? s.estimator.initial_loss : s.estimator.loss_curve.back()},
                  {"diverged", s.estimator.diverged},
                  {"diverge_reason", s.estimator.diverge_reason},
                  {"guard_violations", s.estimator.guard_violations},
                  {"estimates", s.estimator.records.size()},
                  {"comparison_points", pts.size()},
                  {"e_fi", s.discrepancy.e_fi},
                  {"e_fi_relative", s.discrepancy.e_fi_relative},
                  {"most_deviated", top},
                  {"vy_bins", bins}});
  write_manifest(dir, "disturb", cfg, {{"study", name}});
  return s;
}

inline std::vector<StudyResult> cmd_disturb(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.disturbances.empty())
    throw ConfigError("disturb needs at least one [[disturbance]] entry in the config");
  std::vector<std::pair<std::string, DisturbanceConfig>> studies;
  if (cfg.disturb.baseline) studies.emplace_back("baseline", DisturbanceConfig{});
  for (std::size_t i = 0; i < cfg.disturbances.size(); ++i)
    studies.emplace_back(padded(i) + "_" + std::string(to_string(cfg.disturbances[i].kind())), cfg.disturbances[i]);
  const fs::path root = out / "disturb";
  std::vector<StudyResult> results(studies.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(studies.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < studies.size(); i = next++) {
      try {
        results[i] = run_study(cfg, studies[i].first, studies[i].second, root / studies[i].first);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(studies.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw std::runtime_error("study " + studies[i].first + ": " + errors[i]);

  json summary = json::array();
  for (const auto& s : results) {
    json top = json::array();
    for (const auto& r : s.bias.most_deviated(6)) top.push_back(r.name);
    summary.push_back({{"name", s.name}, {"guard_violations", s.estimator.guard_violations},
                       {"e_fi_relative", s.discrepancy.e_fi_relative}, {"most_deviated", top}});
    log << "disturb " << s.name << ": final loss "
        << io::format_double(s.estimator.loss_curve.empty() ? s.estimator.initial_loss : s.estimator.loss_curve.back())
        << ", guard violations " << s.estimator.guard_violations << ", most deviated";
    for (const auto& t : top) log << " " << t.get<std::string>();
    log << "\n";
  }
  io::write_json(root / "summary.json", {{"format", "fisherpinn.disturb_summary"}, {"version", 1}, {"studies", summary}});
  write_manifest(root, "disturb", cfg);
  return results;
}

// ---------------------------------------------------------------------------
// Standalone Fisher fields

inline std::vector<StatePoint> random_points(const Vector& lower, const Vector& upper, int state_dim, int count,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StatePoint> pts;
  for (int k = 0; k < count; ++k) {
    Vector z(lower.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std::uniform_real_distribution<double>(lower[i], upper[i])(rng);
    pts.push_back({z.head(state_dim), z.tail(z.size() - state_dim), 0.0});
  }
  return pts;
}

inline FisherField cmd_fisher_field(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto& f = cfg.field;
  SystemModel sys;
  int state_dim = 3;
  Vector lower = cfg.collocation.lower, upper = cfg.collocation.upper;
  if (f.model == "kinematic") {
    sys = kinematic_system(cfg.kinematic_vehicle());
  } else if (f.model == "dynamic") {
    DynamicModel m = cfg.model;
    m.disturbances = cfg.disturbances;
    sys = dynamic_system(m);
    state_dim = 6;
    // x, y, theta, vx, vy, omega, throttle, delta
    lower = Vector{{-10, -10, -std::numbers::pi, 1.0, -0.3, -3.0, 0.0, -0.35}};
    upper = Vector{{10, 10, std::numbers::pi, 3.0, 0.3, 3.0, 1.0, 0.35}};
  } else {
    const nn::NetworkParams net = io::load_checkpoint(f.checkpoint);
    state_dim = net.output_dim;
    if (net.input_dim <= state_dim)
      throw DimensionError("checkpoint maps " + std::to_string(net.input_dim) + " inputs to " +
                           std::to_string(net.output_dim) + " outputs; expected state + input -> state derivative");
    sys = network_system(net, state_dim);
    if (net.input_dim != lower.size()) {
      lower = -Vector::Ones(net.input_dim);
      upper = Vector::Ones(net.input_dim);
    }
  }
  std::vector<StatePoint> pts;
  DomainDescriptor dom;
  if (f.points == "grid") {
    if (state_dim != 3 || lower.size() != 5)
      throw ConfigError("fisher_field.points = \"grid\" is defined on the kinematic (theta, v, delta) domain; use random or dataset");
    CollocationBounds b{3, lower, upper};
    pts = kinematic_grid(b, f.grid_points, &dom);
  } else if (f.points == "random") {
    pts = random_points(lower, upper, state_dim, f.count, mix_seed(cfg.master_seed(), kSeedFieldPoints));
    dom.scheme = "random";
    dom.volume = 1.0;
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      dom.lower.push_back(lower[i]);
      dom.upper.push_back(upper[i]);
      dom.volume *= upper[i] - lower[i];
    }
  } else {
    const Trajectory tr = read_dataset(require_file(f.dataset, "dataset"));
    if (static_cast<int>(tr.state_names.size()) != state_dim)
      throw DimensionError("dataset '" + f.dataset + "' has " + std::to_string(tr.state_names.size()) +
                           " state columns, the model has " + std::to_string(state_dim));
    pts = trajectory_points({tr}, f.stride);
    dom.scheme = "dataset";
    dom.coordinate_names = tr.state_names;
    dom.coordinate_names.insert(dom.coordinate_names.end(), tr.input_names.begin(), tr.input_names.end());
  }
  const FisherField field = evaluate_field(sys, pts, f.policy, dom);
  const fs::path dir = out / "fisher_field";
  io::write_file(dir / "field.csv", io::field_to_csv(field));
  io::write_json(dir / "field.json", io::field_to_json(field));
  write_manifest(dir, "fisher-field", cfg);
  std::size_t valid = 0;
  for (const auto& s : field.samples) valid += !s.skipped;
  log << "fisher-field: " << field.samples.size() << " points (" << valid << " valid) -> " << dir.string() << "\n";
  return field;
}

}  // namespace fisherpinn::experiments
