// mdfr: dataset generation, single experiments, grid search, the fixed-point
// pipeline, and report tables.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdfr/config.hpp"
#include "mdfr/dynsys.hpp"
#include "mdfr/errors.hpp"
#include "mdfr/harness.hpp"
#include "mdfr/report.hpp"

namespace fs = std::filesystem;
using namespace mdfr;
using namespace mdfr::harness;

namespace {

struct CommonArgs {
  std::string config;
  std::string out = "out";
  std::string seeds;
  unsigned jobs = 1;
  std::string dataset;
  std::string model;
  std::size_t horizon = 0;
  std::size_t samples = 0;
  std::size_t train = 0;
  std::size_t washout = 0;
  std::size_t nodes = 0;
  std::optional<std::uint64_t> data_seed;
  std::string a, alpha, beta, gamma, eta, p, a_shifts, b_shifts;
  std::optional<double> b;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonArgs& c) {
  app->add_option("--config", c.config, "Experiment config file");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--seeds", c.seeds, "Mask seeds, comma separated (default 1,2,3,4,5)");
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--dataset", c.dataset,
                  "lorenz:x|y|z, rossler:x|y|z, chen:x|y|z, narma10, dst:YEAR, csv:PATH[:COL]");
  app->add_option("--model", c.model, "mg_dfr, identity_dfr, tanh_dfr or fxp_identity_dfr");
  app->add_option("--horizon", c.horizon, "Prediction horizon in samples");
  app->add_option("--samples", c.samples, "Input/target pairs");
  app->add_option("--train", c.train, "Training pairs");
  app->add_option("--washout", c.washout, "Discarded initial states");
  app->add_option("--nodes", c.nodes, "Virtual nodes");
  app->add_option("--data-seed", c.data_seed, "NARMA10 input seed");
  app->add_option("--a", c.a, "A values (list or logspace(lo,hi,n))");
  app->add_option("--alpha", c.alpha, "tanh alpha values");
  app->add_option("--beta", c.beta, "Ridge beta values");
  app->add_option("--gamma", c.gamma, "MG input gain values");
  app->add_option("--eta", c.eta, "MG feedback gain values");
  app->add_option("--p", c.p, "MG exponent values");
  app->add_option("--a-shifts", c.a_shifts, "fxp A shift sets, e.g. 4,5,11;3,5,8");
  app->add_option("--b-shifts", c.b_shifts, "fxp B shift set");
  app->add_option("--b", c.b, "Feedback coefficient B");
  app->add_flag("--quiet", c.quiet, "No per-task log lines");
}

ExperimentSpec build_spec(const CommonArgs& c, ModelKind default_model) {
  ExperimentSpec spec;
  if (!c.config.empty()) {
    spec = from_config(config::ConfigFile::load(c.config));
  } else {
    spec.model = default_model;
  }
  const bool reselect = !c.dataset.empty() || !c.model.empty();
  if (!c.dataset.empty()) {
    const DatasetSpec parsed = DatasetSpec::parse(c.dataset);
    spec.dataset.kind = parsed.kind;
    spec.dataset.component = parsed.component;
    spec.dataset.year = parsed.year;
    spec.dataset.path = parsed.path;
    spec.dataset.column = parsed.column;
  }
  if (!c.model.empty()) {
    spec.model = parse_model(c.model);
  }
  if (c.config.empty() || reselect) {
    if (!spec.use_published_point()) {
      spec.grid = ParamGrid::single(ParamPoint{});
      spec.grid.a.clear();
      spec.grid.beta.clear();
    }
  }
  if (c.horizon) spec.dataset.horizon = c.horizon;
  if (c.samples) spec.dataset.samples = c.samples;
  if (c.train) spec.dataset.train = c.train;
  if (c.data_seed) spec.dataset.seed = *c.data_seed;
  if (c.washout) spec.washout = c.washout;
  if (c.nodes) spec.nodes = c.nodes;
  if (c.b) spec.b = *c.b;
  if (c.jobs > 1) spec.jobs = c.jobs;
  if (!c.seeds.empty()) spec.seeds = config::parse_seed_list(c.seeds, "--seeds");
  const auto list = [](const std::string& text, const char* flag, std::vector<double>& dst) {
    if (!text.empty()) {
      dst = config::parse_real_list(text, flag);
    }
  };
  list(c.a, "--a", spec.grid.a);
  list(c.alpha, "--alpha", spec.grid.alpha);
  list(c.beta, "--beta", spec.grid.beta);
  list(c.gamma, "--gamma", spec.grid.gamma);
  list(c.eta, "--eta", spec.grid.eta);
  list(c.p, "--p", spec.grid.p);
  if (!c.a_shifts.empty()) spec.grid.a_shifts = config::parse_shift_list(c.a_shifts, "--a-shifts");
  if (!c.b_shifts.empty()) spec.b_shifts = config::parse_shift_set(c.b_shifts, "--b-shifts");
  return spec;
}

int exit_code(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    if (!r.ok()) {
      return 1;
    }
  }
  return 0;
}

void print_summary(const std::vector<ResultRow>& rows) {
  for (const auto& s : report::summarize(rows)) {
    std::printf("%s %s point %zu: rmse mean %.4e min %.4e, mae mean %.4e, nrmse mean %.4g "
                "(%zu ok, %zu failed)\n",
                s.dataset.c_str(), s.model.c_str(), s.point, s.rmse_mean, s.rmse_min, s.mae_mean,
                s.nrmse_mean, s.ok, s.failed);
  }
}

int cmd_gen(const std::string& selector, const CommonArgs& c, const std::string& file) {
  DatasetSpec d = DatasetSpec::parse(selector);
  if (c.horizon) d.horizon = c.horizon;
  if (c.samples) d.samples = c.samples;
  if (c.train) d.train = c.train;
  if (c.data_seed) d.seed = *c.data_seed;
  const Dataset ds = build_dataset(d);
  const fs::path path = file.empty() ? fs::path(c.out) / (ds.name + ".csv") : fs::path(file);
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  write_series_csv(ds.series, path.string());
  std::fprintf(stderr, "%s: %zu pairs, train %zu, input scale %.10g, target scale %.10g -> %s\n",
               ds.name.c_str(), ds.series.size(), ds.series.split_index, ds.series.norm_scale,
               ds.series.target_scale, path.string().c_str());
  return 0;
}

int cmd_run(const ExperimentSpec& spec, const CommonArgs& c, bool predictions, bool weights,
            const std::string& trace) {
  const fs::path out(c.out);
  fs::create_directories(out);
  RunOutputs ro;
  ro.results_csv = (out / "results.csv").string();
  if (predictions) ro.predictions_dir = (out / "predictions").string();
  if (weights) ro.weights_dir = (out / "weights").string();
  ro.trace_path = trace;
  ro.log = c.quiet ? nullptr : &std::cerr;
  const Dataset ds = build_dataset(spec.dataset);
  write_series_csv(ds.series, (out / ("dataset_" + ds.name + ".csv")).string());
  run_experiment(spec, ro);
  const auto rows = read_results(ro.results_csv);
  report::write_report(rows, out);
  print_summary(rows);
  return exit_code(rows);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular delayed-feedback reservoir experiments"};
  app.require_subcommand(1);

  CommonArgs run_args, grid_args, fxp_args, gen_args;

  auto* gen = app.add_subcommand("gen", "Generate a normalized dataset as k,u,d CSV");
  std::string gen_selector = "lorenz:x";
  std::string gen_file;
  gen->add_option("--dataset", gen_selector, "Dataset selector")->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output directory")->capture_default_str();
  gen->add_option("--file", gen_file, "Output file (overrides --out)");
  gen->add_option("--horizon", gen_args.horizon, "Prediction horizon");
  gen->add_option("--samples", gen_args.samples, "Pairs");
  gen->add_option("--train", gen_args.train, "Training pairs");
  gen->add_option("--data-seed", gen_args.data_seed, "NARMA10 input seed");

  auto* run = app.add_subcommand("run", "Score parameter points on the test split");
  add_common(run, run_args);
  bool run_predictions = false, run_weights = false;
  run->add_flag("--predictions", run_predictions, "Write per-task prediction series");
  run->add_flag("--weights", run_weights, "Write per-task readout weights");

  auto* grid = app.add_subcommand("grid", "Grid search on a validation tail, then test");
  add_common(grid, grid_args);
  bool default_grid_flag = false;
  grid->add_flag("--default-grid", default_grid_flag,
                 "Search the built-in log-spaced ranges for A, alpha and beta");

  auto* fxpc = app.add_subcommand("fxp", "Fixed-point identity reservoir pipeline");
  add_common(fxpc, fxp_args);
  int reservoir_bits = 0, output_bits = 0, frac_bits = -2;
  std::string trace;
  bool fxp_predictions = false;
  fxpc->add_option("--reservoir-bits", reservoir_bits, "Reservoir word width r");
  fxpc->add_option("--output-bits", output_bits, "Output word width o");
  fxpc->add_option("--frac-bits", frac_bits, "Readout fractional bits (-1: auto)");
  fxpc->add_option("--trace", trace, "Write k,n,value node trace of the first task");
  fxpc->add_flag("--predictions", fxp_predictions, "Write per-task prediction series");

  auto* rep = app.add_subcommand("report", "Summarize result CSVs");
  std::vector<std::string> inputs;
  std::string rep_out = "report";
  rep->add_option("results", inputs, "Result CSV files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", rep_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen(gen_selector, gen_args, gen_file);
    }
    if (run->parsed()) {
      const auto spec = build_spec(run_args, ModelKind::tanh_dfr);
      return cmd_run(spec, run_args, run_predictions, run_weights, "");
    }
    if (fxpc->parsed()) {
      if (fxp_args.dataset.empty() && fxp_args.config.empty()) {
        fxp_args.dataset = "narma10";
      }
      auto spec = build_spec(fxp_args, ModelKind::fxp_identity_dfr);
      spec.model = ModelKind::fxp_identity_dfr;
      if (spec.grid.beta.empty() || spec.grid.a_shifts.empty()) {
        spec.use_published_point();
      }
      if (reservoir_bits) spec.format.reservoir_bits = reservoir_bits;
      if (output_bits) spec.format.output_bits = output_bits;
      if (frac_bits != -2) spec.weight_frac_bits = frac_bits;
      spec.validate();
      return cmd_run(spec, fxp_args, fxp_predictions, false, trace);
    }
    if (grid->parsed()) {
      auto spec = build_spec(grid_args, ModelKind::tanh_dfr);
      if (default_grid_flag) {
        ParamPoint base;
        const auto& g = spec.grid;
        if (!g.gamma.empty()) base.gamma = g.gamma.front();
        if (!g.eta.empty()) base.eta = g.eta.front();
        if (!g.p.empty()) base.p = g.p.front();
        if (!g.a_shifts.empty()) base.a_shifts = g.a_shifts.front();
        spec.grid = default_grid(base);
      }
      const fs::path out(grid_args.out);
      fs::create_directories(out);
      GridOutputs go;
      go.grid_csv = (out / "grid.csv").string();
      go.best_csv = (out / "best.csv").string();
      go.predictions_dir = (out / "predictions").string();
      go.weights_dir = (out / "weights").string();
      go.log = grid_args.quiet ? nullptr : &std::cerr;
      const auto result = grid_search(spec, go);
      std::printf("best point %zu (%s): mean validation rmse %.4e\n", result.best_index,
                  format_params(spec, result.best).c_str(), result.validation_rmse);
      const auto rows = read_results(go.best_csv);
      report::write_report(rows, out);
      print_summary(rows);
      return exit_code(rows);
    }
    if (rep->parsed()) {
      std::vector<ResultRow> rows;
      for (const auto& path : inputs) {
        auto r = read_results(path);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      report::write_report(rows, rep_out);
      print_summary(rows);
      return exit_code(rows);
    }
  } catch (const DatasetUnavailable& e) {
    std::fprintf(stderr, "warning: %s; skipping\n", e.what());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
