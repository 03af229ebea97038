// Command line front end: cross-validated experiments, synthetic data,
// hierarchy summaries and per-level variance diagnostics.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlgibbs/errors.hpp"
#include "mlgibbs/harness.hpp"
#include "mlgibbs/io.hpp"

namespace {

using mlgibbs::Index;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mlgibbs::ConfigError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw mlgibbs::ConfigError("cannot write '" + path + "'");
  out << text;
}

// Options of `run` keep their raw text and are applied through the same
// JSON keys a config file uses, so both paths share one parser.
struct RunFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, bool> switches;
  std::string config;

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    options[key] = app->add_option("--" + key, values[key], help);
  }
  void add_flag(CLI::App* app, const std::string& key, const std::string& help) {
    switches[key] = false;
    options[key] = app->add_flag("--" + key, switches[key], help);
  }

  json overrides() const {
    static const char* text_keys[] = {"data",     "targets", "format", "sampler", "schedule",
                                      "alloc",    "trace",   "report", "coarse-range"};
    json j = json::object();
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (switches.count(key)) {
        j[key] = switches.at(key);
        continue;
      }
      const std::string& v = values.at(key);
      bool is_text = false;
      for (const char* k : text_keys) is_text = is_text || key == k;
      if (is_text) {
        j[key] = v;
      } else {
        try {
          j[key] = json::parse(v);
        } catch (const json::exception&) {
          throw mlgibbs::ConfigError("--" + key + ": not a number: '" + v + "'");
        }
      }
    }
    return j;
  }
};

void add_coarse_options(CLI::App* app, Index& levels, std::string& range, Index& fixed) {
  app->add_option("--levels", levels, "Number of levels including the input matrix");
  app->add_option("--coarse-range", range, "Target width range of the coarsest level, min,max");
  app->add_option("--fixed", fixed, "Number of leading fixed-effect columns");
}

std::pair<Index, Index> parse_range(const std::string& text) {
  mlgibbs::ExperimentConfig c;
  c = mlgibbs::config_from_json(json{{"coarse-range", text}}.dump(), c);
  return {c.coarse_min, c.coarse_max};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-level and multilevel noise-injection Gibbs samplers"};
  app.require_subcommand(1);

  // run
  RunFlags run;
  CLI::App* run_cmd = app.add_subcommand("run", "Cross-validated sampling experiment");
  run_cmd->add_option("--config", run.config, "JSON file with the same keys as the flags");
  run.add(run_cmd, "data", "Data matrix (.mtx MatrixMarket or dense CSV)");
  run.add(run_cmd, "targets", "Observed targets, one per row; synthetic when omitted");
  run.add(run_cmd, "format", "auto, mtx or csv");
  run.add(run_cmd, "sampler", "gibbs, ml, mlcss or mlcsp");
  run.add_flag(run_cmd, "precond", "Two-level preconditioned CG");
  run.add(run_cmd, "levels", "Number of levels including the input matrix");
  run.add(run_cmd, "coarse-range", "Target width range of the coarsest level, min,max");
  run.add(run_cmd, "samples", "Total samples per chain (default 2200)");
  run.add(run_cmd, "burnin", "Burn-in samples (default 200)");
  run.add(run_cmd, "schedule", "consecutive, vcycle:k or wcycle:k");
  run.add(run_cmd, "alloc", "equal, cost or var");
  run.add(run_cmd, "pilot", "Pilot samples per level for --alloc var (default 50)");
  run.add(run_cmd, "pilot-burnin", "Burn-in of the pilot run (default 20)");
  run.add(run_cmd, "level-change-burn", "Sweeps discarded after each level change");
  run.add(run_cmd, "folds", "Cross-validation folds (default 5)");
  run.add(run_cmd, "seed", "Random seed");
  run.add(run_cmd, "cg-tol", "Relative CG tolerance (default 1e-8)");
  run.add(run_cmd, "cg-max-iter", "CG iteration cap; 0 means twice the width");
  run.add_flag(run_cmd, "cold-start", "Start every solve from zero");
  run.add(run_cmd, "max-coarse-width", "Largest coarse space the preconditioner densifies");
  run.add(run_cmd, "fixed", "Number of leading fixed-effect columns");
  for (const char* p : {"alpha-e", "beta-e", "alpha-v", "beta-v", "alpha-u", "beta-u"})
    run.add(run_cmd, p, "Gamma prior parameter");
  run.add(run_cmd, "coef-var", "Variance of synthetic coefficients (default 10)");
  run.add(run_cmd, "noise-var", "Variance of synthetic noise (default 1000)");
  run.add(run_cmd, "threads", "Parallel folds; default from MLGIBBS_NUM_THREADS");
  run.add(run_cmd, "trace", "Write per-sweep precisions to this CSV");
  run.add(run_cmd, "report", "Write the JSON report here");

  // generate
  mlgibbs::SyntheticMatrixOptions gen;
  std::uint64_t gen_seed = 1;
  std::string gen_out, gen_targets, gen_truth;
  double gen_coef = 10.0, gen_noise = 1000.0;
  CLI::App* gen_cmd = app.add_subcommand("generate", "Write a synthetic clustered sparse matrix");
  gen_cmd->add_option("--rows", gen.rows);
  gen_cmd->add_option("--cols", gen.cols);
  gen_cmd->add_option("--fill", gen.fill, "Fraction of nonzero rows per column");
  gen_cmd->add_option("--group-size", gen.group_size, "Near-duplicate columns per group");
  gen_cmd->add_option("--jitter", gen.jitter, "Relative spread inside a group");
  gen_cmd->add_option("--scale", gen.scale, "Magnitude of the entries");
  gen_cmd->add_option("--seed", gen_seed);
  gen_cmd->add_option("--out", gen_out, "MatrixMarket output")->required();
  gen_cmd->add_option("--targets", gen_targets, "Also write y = X b + e here");
  gen_cmd->add_option("--truth", gen_truth, "Also write b here");
  gen_cmd->add_option("--coef-var", gen_coef);
  gen_cmd->add_option("--noise-var", gen_noise);

  // hierarchy
  std::string h_data, h_format = "auto", h_range = "100,500", h_out;
  Index h_levels = 3, h_fixed = 0;
  CLI::App* h_cmd = app.add_subcommand("hierarchy", "Build the level hierarchy and summarize it");
  h_cmd->add_option("--data", h_data)->required();
  h_cmd->add_option("--format", h_format);
  add_coarse_options(h_cmd, h_levels, h_range, h_fixed);
  h_cmd->add_option("--out", h_out, "JSON output (default stdout)");

  // variance
  std::string v_data, v_targets, v_format = "auto", v_range = "100,500", v_out;
  Index v_levels = 3, v_fixed = 0;
  mlgibbs::LevelVarianceOptions v_opts;
  bool v_precond = false;
  CLI::App* v_cmd =
      app.add_subcommand("variance", "Per-level variance of predictions and coupled differences");
  v_cmd->add_option("--data", v_data)->required();
  v_cmd->add_option("--targets", v_targets, "Observed targets; synthetic when omitted");
  v_cmd->add_option("--format", v_format);
  add_coarse_options(v_cmd, v_levels, v_range, v_fixed);
  v_cmd->add_option("--draws", v_opts.draws, "Kept draws per level (default 500)");
  v_cmd->add_option("--burnin", v_opts.burn_in, "Burn-in per level (default 50)");
  v_cmd->add_option("--probes", v_opts.probes, "Tracked observations (default 20)");
  v_cmd->add_option("--seed", v_opts.seed);
  v_cmd->add_option("--cg-tol", v_opts.solver.tol);
  v_cmd->add_flag("--precond", v_precond);
  v_cmd->add_option("--out", v_out, "CSV output (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      mlgibbs::ExperimentConfig config;
      if (!run.config.empty()) config = mlgibbs::config_from_json(read_file(run.config));
      config = mlgibbs::config_from_json(run.overrides().dump(), config);
      const mlgibbs::MetricsReport report = mlgibbs::run_experiment(config);
      std::cout << mlgibbs::report_table(report);
      if (!config.report.empty()) write_text(config.report, mlgibbs::report_json(report) + "\n");
      return report.failed == 0 ? 0 : 3;
    }
    if (*gen_cmd) {
      mlgibbs::RandomStream stream(gen_seed);
      mlgibbs::RandomStream matrix_stream = stream.split(0);
      const mlgibbs::SparseMatrix X = mlgibbs::synthetic_matrix(gen, matrix_stream);
      mlgibbs::write_matrix_market(gen_out, X);
      if (!gen_targets.empty() || !gen_truth.empty()) {
        mlgibbs::RandomStream target_stream = stream.split(1);
        const auto syn = mlgibbs::synthesize_targets(X, target_stream, gen_coef, gen_noise);
        if (!gen_targets.empty()) mlgibbs::write_vector(gen_targets, syn.y);
        if (!gen_truth.empty()) mlgibbs::write_vector(gen_truth, syn.b_true);
      }
      std::cout << X.rows() << " x " << X.cols() << ", " << X.nnz() << " nonzeros\n";
      return 0;
    }
    if (*h_cmd) {
      const auto X = mlgibbs::load_matrix(h_data, mlgibbs::parse_matrix_format(h_format));
      mlgibbs::HierarchyOptions opts;
      opts.group_boundary = h_fixed;
      std::tie(opts.coarse_min, opts.coarse_max) = parse_range(h_range);
      opts.max_levels = h_levels;
      write_text(h_out, mlgibbs::hierarchy_json(mlgibbs::build_hierarchy(X, opts)) + "\n");
      return 0;
    }
    if (*v_cmd) {
      const auto X = mlgibbs::load_matrix(v_data, mlgibbs::parse_matrix_format(v_format));
      mlgibbs::Vector y;
      if (!v_targets.empty()) {
        y = mlgibbs::load_vector(v_targets);
      } else {
        mlgibbs::RandomStream s = mlgibbs::RandomStream(v_opts.seed).split(0);
        y = mlgibbs::synthesize_targets(X, s).y;
      }
      mlgibbs::HierarchyOptions opts;
      opts.group_boundary = v_fixed;
      std::tie(opts.coarse_min, opts.coarse_max) = parse_range(v_range);
      opts.max_levels = v_levels;
      const auto h = mlgibbs::build_hierarchy(X, opts);
      v_opts.solver.preconditioned = v_precond;
      const mlgibbs::MixedModelSpec spec{v_fixed, X.cols() - v_fixed, {}};
      const auto rep = mlgibbs::level_variance_report(h, y, spec, v_opts);
      write_text(v_out, mlgibbs::level_variance_csv(rep));
      return 0;
    }
  } catch (const mlgibbs::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const mlgibbs::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
