#pragma once

// Command-line front end: `simulate`, `null-check`, `shrink` and `replay`.
//
// Exit codes: 0 success, 2 usage or validation failure, 3 mathematical
// precondition failure (e.g. p == n for the shrinkage formula).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hdtest/csv.hpp"
#include "hdtest/detectors.hpp"
#include "hdtest/shrinkage.hpp"
#include "hdtest/simulation.hpp"
#include "hdtest/spectral.hpp"

namespace hdtest::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kIoFailure = 1, kUsage = 2, kPrecondition = 3 };

using nlohmann::json;

// Parse failures map to kUsage; everything else propagates by type.
class UsageError : public StructuralError {
 public:
  using StructuralError::StructuralError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ostringstream buf;
  writer(buf);
  write_text_atomic(path, buf.str());
}

inline std::vector<DetectorKind> parse_detector_list(const std::string& spec) {
  std::vector<DetectorKind> kinds;
  if (spec == "all") return {kAllDetectors.begin(), kAllDetectors.end()};
  std::stringstream ss(spec);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    const auto kind = parse_detector(name);
    if (!kind) throw UsageError("unknown detector '" + name + "'");
    if (std::find(kinds.begin(), kinds.end(), *kind) == kinds.end()) kinds.push_back(*kind);
  }
  if (kinds.empty()) throw UsageError("no detectors selected");
  return kinds;
}

inline unsigned env_threads() {
  const char* raw = std::getenv("HDTEST_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1) {
    throw UsageError(std::string("HDTEST_THREADS must be a positive integer, got '") + raw + "'");
  }
  return static_cast<unsigned>(v);
}

inline json vector_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline const char* base_name(BaseDistribution b) {
  return b == BaseDistribution::Uniform ? "uniform" : "gaussian";
}

inline json config_json(const SimulationConfig& c) {
  json dets = json::array();
  for (DetectorKind k : c.detectors) dets.push_back(std::string(to_string(k)));
  return json{{"p", c.p},
              {"n1", c.n1},
              {"n2", c.n2},
              {"cov_order", c.cov_order},
              {"trials", c.trials},
              {"radius", c.radius},
              {"seed", c.seed},
              {"detectors", dets},
              {"base_dist", base_name(c.base)},
              {"gamma", c.gamma()},
              {"gamma1", c.gamma1()},
              {"gamma2", c.gamma2()}};
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  double seconds = 0.0;

  json to_json() const {
    return json{{"command", command},  {"argv", argv},
                {"config", config},    {"seed", seed},
                {"tool_version", kToolVersion}, {"outputs", outputs},
                {"wall_clock_seconds", seconds}};
  }
};

struct SimulateOptions {
  Index p = 200;
  Index n1 = 150;
  Index n2 = 150;
  int cov_order = 0;
  Index trials = 2000;
  std::uint64_t seed = 1;
  double radius = 1.0;
  std::string detectors = "all";
  std::string out_dir;
  std::string base_dist = "uniform";

  SimulationConfig to_config() const {
    SimulationConfig c;
    c.p = p;
    c.n1 = n1;
    c.n2 = n2;
    c.cov_order = cov_order;
    c.trials = trials;
    c.seed = seed;
    c.radius = radius;
    c.detectors = parse_detector_list(detectors);
    c.base = base_dist == "gaussian" ? BaseDistribution::Gaussian : BaseDistribution::Uniform;
    c.threads = env_threads();
    c.validate();
    return c;
  }
};

inline void add_sim_flags(CLI::App* cmd, SimulateOptions& o) {
  cmd->add_option("--p", o.p, "dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--n1", o.n1, "group 1 sample count")->check(CLI::Range(Index{2}, Index{1} << 40));
  cmd->add_option("--n2", o.n2, "group 2 sample count")->check(CLI::Range(Index{2}, Index{1} << 40));
  cmd->add_option("--cov-order", o.cov_order, "order P of the R_P covariance")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--trials", o.trials, "trials per hypothesis")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--out-dir", o.out_dir, "output directory")->required();
  cmd->add_option("--base-dist", o.base_dist, "noise distribution")
      ->check(CLI::IsMember({"uniform", "gaussian"}));
}

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path path(dir);
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  return path;
}

inline void cmd_simulate(const SimulateOptions& o, Manifest& manifest, std::ostream& out) {
  const SimulationConfig config = o.to_config();
  const auto dir = prepare_dir(o.out_dir);
  const ScoreTable table = run_trials(config);
  if (table.model.truncated) {
    out << "warning: p <= 40, spike block truncated to " << config.p << " entries\n";
  }

  write_file(dir / "scores.csv", [&](std::ostream& s) { write_scores_csv(s, table); });
  manifest.outputs.push_back((dir / "scores.csv").string());

  json detectors = json::array();
  for (const auto& col : table.columns) {
    const RocCurve roc = roc_curve(col.h0, col.h1);
    const auto file = dir / ("roc_" + std::string(to_string(col.kind)) + ".csv");
    write_file(file, [&](std::ostream& s) { write_roc_csv(s, roc); });
    manifest.outputs.push_back(file.string());
    detectors.push_back(json{{"detector", std::string(to_string(col.kind))},
                             {"auc", roc.auc},
                             {"trials", config.trials},
                             {"seed", config.seed}});
    out << to_string(col.kind) << " auc " << csv::format_double(roc.auc) << '\n';
  }
  json absent = json::array();
  for (const auto& a : table.absent) {
    absent.push_back(json{{"detector", std::string(to_string(a.kind))}, {"reason", a.reason}});
    out << to_string(a.kind) << " absent: " << a.reason << '\n';
  }
  const json summary{{"command", "simulate"},
                     {"config", config_json(config)},
                     {"covariance_diag", vector_json(table.model.diag)},
                     {"covariance_seed", table.model.seed},
                     {"covariance_truncated", table.model.truncated},
                     {"detectors", detectors},
                     {"absent", absent}};
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  manifest.outputs.push_back((dir / "summary.json").string());
  manifest.config = config_json(config);
  manifest.seed = config.seed;
}

inline void cmd_null_check(const SimulateOptions& o, Manifest& manifest, std::ostream& out) {
  SimulateOptions opts = o;
  opts.detectors = "lw";
  const SimulationConfig config = opts.to_config();
  if (config.p == config.n1 + config.n2 - 2) {
    throw UnsupportedAspectRatio("null-check: p == n1 + n2 - 2 is not supported");
  }
  const auto dir = prepare_dir(o.out_dir);
  const std::vector<double> z = null_z_scores(config);
  const NormalityStats stats = normality_check(z);

  write_file(dir / "z_samples.csv", [&](std::ostream& s) {
    s << "trial,z\n";
    for (std::size_t t = 0; t < z.size(); ++t) s << t << ',' << csv::format_double(z[t]) << '\n';
  });
  write_file(dir / "z_hist.csv", [&](std::ostream& s) {
    s << "bin_lo,bin_hi,count,density,normal_density\n";
    for (const auto& b : histogram(z, 50, -5.0, 5.0)) {
      s << csv::format_double(b.lo) << ',' << csv::format_double(b.hi) << ',' << b.count << ','
        << csv::format_double(b.density) << ',' << csv::format_double(b.normal_density) << '\n';
    }
  });
  json cfg = config_json(config);
  cfg.erase("detectors");
  const json summary{{"command", "null-check"},
                     {"config", cfg},
                     {"mean", stats.mean},
                     {"variance", stats.variance},
                     {"ks", stats.ks}};
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  for (const char* f : {"z_samples.csv", "z_hist.csv", "summary.json"}) {
    manifest.outputs.push_back((dir / f).string());
  }
  manifest.config = cfg;
  manifest.seed = config.seed;
  out << "mean " << csv::format_double(stats.mean) << "\nvariance "
      << csv::format_double(stats.variance) << "\nks " << csv::format_double(stats.ks) << '\n';
}

struct ShrinkOptions {
  std::string matrix;
  Index n = 0;
  std::string out_prefix;
};

inline double condition_number(const Vector& eig) {
  const double lo = eig.minCoeff();
  return lo > 0.0 ? eig.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

inline std::string shrink_manifest_path(const std::string& prefix) {
  return prefix + "manifest.json";
}

inline void cmd_shrink(const ShrinkOptions& o, Manifest& manifest, std::ostream& out) {
  Matrix raw;
  try {
    raw = csv::read_matrix_file(o.matrix);
  } catch (const StructuralError& e) {
    throw UsageError(e.what());
  }
  const SymMatrix m = [&] {
    try {
      return SymMatrix(std::move(raw));
    } catch (const StructuralError& e) {
      throw UsageError(e.what());
    }
  }();
  const Index p = m.dimension();
  const SpectralDecomposition decomp = spectral_decompose(m);
  const ShrinkageEstimate est = lw_covariance(decomp, o.n, p);

  const std::filesystem::path dhat_path = o.out_prefix + "dhat.csv";
  const std::filesystem::path rlw_path = o.out_prefix + "rlw.csv";
  if (dhat_path.has_parent_path()) prepare_dir(dhat_path.parent_path().string());
  write_file(dhat_path, [&](std::ostream& s) { csv::write_vector(s, est.dhat); });
  const Matrix dense = est.dense();
  const Matrix symmetric = 0.5 * (dense + dense.transpose());
  write_file(rlw_path, [&](std::ostream& s) { csv::write_matrix(s, symmetric); });
  manifest.outputs = {dhat_path.string(), rlw_path.string()};
  manifest.config = json{{"matrix", o.matrix}, {"n", o.n}, {"p", p}};
  out << "input condition number " << csv::format_double(condition_number(decomp.eigenvalues))
      << "\nshrunk condition number " << csv::format_double(est.condition_number()) << '\n';
}

inline std::vector<std::string> read_manifest_argv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest " + path);
  json j;
  try {
    in >> j;
    return j.at("argv").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw UsageError("malformed manifest " + path + ": " + e.what());
  }
}

}  // namespace detail

/// args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"High-dimensional two-sample mean testing"};
  app.name("hdtest");
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo ROC experiment");
  add_sim_flags(simulate, sim);
  simulate->add_option("--radius", sim.radius, "mean-shift norm under H1")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--detectors", sim.detectors,
                       "comma list of hotelling,lw,bs96,cq10,lappw,oracle (or all)");

  SimulateOptions null_opts;
  null_opts.n1 = 200;
  null_opts.n2 = 200;
  null_opts.cov_order = 4;
  null_opts.trials = 1000;
  auto* null_check = app.add_subcommand("null-check", "null distribution of the proposed Z");
  add_sim_flags(null_check, null_opts);

  ShrinkOptions shrink;
  auto* shrink_cmd = app.add_subcommand("shrink", "shrink the eigenvalues of a covariance CSV");
  shrink_cmd->add_option("--matrix", shrink.matrix, "symmetric matrix CSV")->required();
  shrink_cmd->add_option("--n", shrink.n, "effective sample size")
      ->required()
      ->check(CLI::PositiveNumber);
  shrink_cmd->add_option("--out-prefix", shrink.out_prefix, "prefix for output files")
      ->required();

  std::string manifest_in;
  std::string replay_dir;
  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("--manifest", manifest_in, "manifest.json")->required();
  replay->add_option("--out-dir", replay_dir, "override the recorded output location");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    app.exit(e, out, err);
    return kUsage;
  }

  if (replay->parsed()) {
    std::vector<std::string> recorded;
    try {
      recorded = read_manifest_argv(manifest_in);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << '\n';
      return kUsage;
    }
    if (!replay_dir.empty()) {
      const bool is_shrink = !recorded.empty() && recorded.front() == "shrink";
      const std::string flag = is_shrink ? "--out-prefix" : "--out-dir";
      for (std::size_t i = 0; i + 1 < recorded.size(); ++i) {
        if (recorded[i] == flag) {
          recorded[i + 1] = is_shrink ? (std::filesystem::path(replay_dir) /
                                         std::filesystem::path(recorded[i + 1]).filename())
                                            .string()
                                      : replay_dir;
        }
      }
    }
    if (!recorded.empty() && recorded.front() == "replay") {
      err << "error: manifest records a replay\n";
      return kUsage;
    }
    return run(recorded, out, err);
  }

  const auto start = std::chrono::steady_clock::now();
  Manifest manifest;
  manifest.argv = args;
  std::filesystem::path manifest_path;
  try {
    if (simulate->parsed()) {
      manifest.command = "simulate";
      cmd_simulate(sim, manifest, out);
      manifest_path = std::filesystem::path(sim.out_dir) / "manifest.json";
    } else if (null_check->parsed()) {
      manifest.command = "null-check";
      cmd_null_check(null_opts, manifest, out);
      manifest_path = std::filesystem::path(null_opts.out_dir) / "manifest.json";
    } else {
      manifest.command = "shrink";
      cmd_shrink(shrink, manifest, out);
      manifest_path = shrink_manifest_path(shrink.out_prefix);
    }
    manifest.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text_atomic(manifest_path, manifest.to_json().dump(2) + "\n");
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoFailure;
  }
  return kOk;
}

}  // namespace hdtest::cli
