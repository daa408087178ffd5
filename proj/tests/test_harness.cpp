#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mdfr/errors.hpp"
#include "mdfr/harness.hpp"
#include "mdfr/readout.hpp"
#include "mdfr/reservoir.hpp"

using namespace mdfr;
using namespace mdfr::harness;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("mdfr_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A small, fast tanh experiment on Lorenz x.
ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.dataset = DatasetSpec::parse("lorenz:x");
  spec.dataset.samples = 1500;
  spec.model = ModelKind::tanh_dfr;
  spec.nodes = 20;
  spec.washout = 50;
  spec.seeds = {1, 2};
  spec.grid = ParamGrid::single(ParamPoint{});
  spec.grid.a = {0.05, 0.1};
  spec.grid.alpha = {10};
  spec.grid.beta = {1e-8, 1e-5};
  return spec;
}

} // namespace

TEST(Harness, ModelNames) {
  EXPECT_EQ(parse_model("mg"), ModelKind::mg_dfr);
  EXPECT_EQ(parse_model("identity_dfr"), ModelKind::identity_dfr);
  EXPECT_EQ(parse_model("tanh"), ModelKind::tanh_dfr);
  EXPECT_EQ(parse_model("fxp"), ModelKind::fxp_identity_dfr);
  EXPECT_EQ(to_string(ModelKind::fxp_identity_dfr), "fxp_identity_dfr");
  EXPECT_THROW(parse_model("sigmoid"), InvalidArgument);
}

TEST(Harness, DatasetSelectors) {
  EXPECT_EQ(DatasetSpec::parse("lorenz:x").name(), "lorenz_x");
  EXPECT_EQ(DatasetSpec::parse("rossler:z").name(), "rossler_z");
  EXPECT_EQ(DatasetSpec::parse("chen:x").name(), "chen_x");
  EXPECT_EQ(DatasetSpec::parse("narma10").name(), "narma10");
  EXPECT_EQ(DatasetSpec::parse("dst:2021").name(), "dst_2021");
  const auto csv = DatasetSpec::parse("csv:/data/my series.csv:2");
  EXPECT_EQ(csv.path, "/data/my series.csv");
  EXPECT_EQ(csv.column, 2u);
  EXPECT_EQ(csv.name(), "csv_my_series");
  EXPECT_EQ(DatasetSpec::parse("csv:x.csv").column, mdfr::last_column);
  EXPECT_THROW(DatasetSpec::parse("lorenz"), InvalidArgument);
  EXPECT_THROW(DatasetSpec::parse("lorenz:w"), InvalidArgument);
  EXPECT_THROW(DatasetSpec::parse("narma10:1"), InvalidArgument);
  EXPECT_THROW(DatasetSpec::parse("dst:abc"), InvalidArgument);
  EXPECT_THROW(DatasetSpec::parse("henon"), InvalidArgument);
}

TEST(Harness, OdeDatasetShape) {
  DatasetSpec d = DatasetSpec::parse("chen:x");
  d.samples = 1000;
  d.horizon = 3;
  const auto ds = build_dataset(d);
  EXPECT_EQ(ds.series.size(), 1000u);
  EXPECT_EQ(ds.series.split_index, 750u);
  EXPECT_EQ(ds.domain, MetricDomain::normalized);
  EXPECT_EQ(max_abs(std::span<const double>(ds.series.inputs.data(), 750)), 1.0);
  // target k is input k + horizon
  for (std::size_t k = 0; k + 3 < ds.series.size(); ++k) {
    EXPECT_EQ(ds.series.targets[k], ds.series.inputs[k + 3]);
  }
  const auto raw = generate(OdeSystem::chen(), 0.01, 1003, 0);
  EXPECT_NEAR(ds.series.inputs[10] * ds.series.norm_scale, raw[10], 1e-12);
}

TEST(Harness, NarmaDatasetScaling) {
  DatasetSpec d = DatasetSpec::parse("narma10");
  d.samples = 1000;
  const auto ds = build_dataset(d);
  EXPECT_TRUE(ds.narma);
  EXPECT_EQ(ds.series.size(), 1000u);
  const std::span<const double> u(ds.series.inputs.data(), 750);
  const std::span<const double> t(ds.series.targets.data(), 750);
  EXPECT_EQ(max_abs(u), 1.0);
  EXPECT_EQ(max_abs(t), 1.0);
  const auto raw = narma10_generate(1, 1000);
  EXPECT_NEAR(ds.series.targets[5] * ds.series.target_scale, raw.series.targets[5], 1e-15);
  d.horizon = 2;
  EXPECT_THROW(build_dataset(d), InvalidArgument);
}

TEST(Harness, DstDataFromEnvironment) {
  TempDir dir;
  ::setenv(data_env_var, dir.path().c_str(), 1);
  DatasetSpec d = DatasetSpec::parse("dst:2013");
  d.samples = 400;
  EXPECT_THROW(build_dataset(d), DatasetUnavailable);
  {
    std::ofstream out(dir / "dst2013.csv");
    out.precision(17);
    out << "hour,dst\n";
    for (int k = 0; k < 600; ++k) out << k << "," << -20.0 + 15.0 * std::sin(0.1 * k) << "\n";
  }
  const auto ds = build_dataset(d);
  EXPECT_EQ(ds.name, "dst_2013");
  EXPECT_EQ(ds.domain, MetricDomain::original);
  EXPECT_EQ(ds.series.size(), 400u);
  // the last value of the file is the last target
  EXPECT_NEAR(ds.series.targets.back() * ds.series.target_scale, -20.0 + 15.0 * std::sin(59.9),
              1e-12);
  ::unsetenv(data_env_var);
  EXPECT_THROW(build_dataset(d), DatasetUnavailable);
}

TEST(Harness, CsvDataset) {
  TempDir dir;
  {
    std::ofstream out(dir / "wave.csv");
    for (int k = 0; k < 500; ++k) out << k << "," << std::cos(0.05 * k) << "\n";
  }
  const auto ds = build_dataset(DatasetSpec::parse("csv:" + (dir / "wave.csv").string()));
  EXPECT_EQ(ds.name, "csv_wave");
  EXPECT_EQ(ds.series.size(), 499u);
  EXPECT_EQ(ds.series.split_index, 499u * 3 / 4);
}

TEST(Harness, PointsOrderBetaInnermost) {
  const auto spec = small_spec();
  const auto pts = spec.points();
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[0].a, 0.05);
  EXPECT_EQ(pts[0].beta, 1e-8);
  EXPECT_EQ(pts[1].a, 0.05);
  EXPECT_EQ(pts[1].beta, 1e-5);
  EXPECT_EQ(pts[2].a, 0.1);
  EXPECT_EQ(pts[3].beta, 1e-5);
  EXPECT_EQ(default_grid().a.size() * default_grid().alpha.size() * default_grid().beta.size(),
            25u * 17u * 25u);
}

TEST(Harness, EmptyGridIsAnError) {
  auto spec = small_spec();
  spec.grid.beta.clear();
  EXPECT_THROW(spec.validate(), InvalidArgument);
  EXPECT_THROW(run_experiment(spec), InvalidArgument);
  spec = small_spec();
  spec.seeds.clear();
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(Harness, PhaseRanges) {
  auto spec = small_spec();
  const auto ds = build_dataset(spec.dataset);
  const auto t = phase_ranges(spec, ds, Phase::test);
  EXPECT_EQ(t.fit_begin, 50u);
  EXPECT_EQ(t.fit_end, 1125u);
  EXPECT_EQ(t.score_begin, 1125u);
  EXPECT_EQ(t.score_end, 1500u);
  const auto v = phase_ranges(spec, ds, Phase::validation);
  EXPECT_EQ(v.fit_begin, 50u);
  EXPECT_EQ(v.score_end, 1125u);
  EXPECT_EQ(v.score_end - v.score_begin, 215u); // floor(0.2 * 1075)
  EXPECT_EQ(v.fit_end, v.score_begin);
  spec.washout = 1125;
  EXPECT_THROW(phase_ranges(spec, ds, Phase::test), InvalidArgument);
}

TEST(Harness, EffectiveBeta) {
  auto spec = small_spec();
  Dataset ds;
  ds.series.norm_scale = 4.0;
  ParamPoint pt;
  pt.beta = 1.0;
  EXPECT_EQ(effective_beta(spec, ds, pt), 1.0 / 16.0);
  spec.model = ModelKind::fxp_identity_dfr;
  EXPECT_EQ(effective_beta(spec, ds, pt), (16384.0 / 4.0) * (16384.0 / 4.0));
  spec.model = ModelKind::mg_dfr;
  EXPECT_EQ(effective_beta(spec, ds, pt), 1.0);
  spec.model = ModelKind::tanh_dfr;
  spec.rescale_beta = false;
  EXPECT_EQ(effective_beta(spec, ds, pt), 1.0);
}

TEST(Harness, RowRoundTrip) {
  ResultRow r;
  r.dataset = "lorenz_x";
  r.model = "tanh_dfr";
  r.point = 7;
  r.params = format_params(small_spec(), small_spec().points()[3]);
  r.seed = 4;
  r.rmse = 1.25e-5;
  r.mae = 1e-5;
  r.nrmse = 0.5;
  r.saturations = 3;
  const auto back = parse_row(format_row(r));
  EXPECT_EQ(back.dataset, r.dataset);
  EXPECT_EQ(back.point, 7u);
  EXPECT_EQ(back.params, r.params);
  EXPECT_EQ(back.seed, 4u);
  EXPECT_EQ(back.rmse, r.rmse);
  EXPECT_EQ(back.saturations, 3u);
  EXPECT_EQ(row_param(back, 5), 10.0);   // alpha
  EXPECT_EQ(row_param(back, 6), 1e-5);   // beta
  EXPECT_FALSE(row_param(back, 7));      // gamma unused
  EXPECT_THROW(parse_row("a,b,c"), IngestionError);
  r.status = "failed: x, y";
  EXPECT_EQ(parse_row(format_row(r)).status, "failed: x; y");
}

TEST(Harness, OrderedParallelEmission) {
  std::vector<std::size_t> seen;
  for_each_ordered<std::size_t>(
      50, 3, [](std::size_t i) { return i * i; },
      [&](std::size_t i, std::size_t v) {
        EXPECT_EQ(v, i * i);
        seen.push_back(i);
      });
  ASSERT_EQ(seen.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(seen[i], i);
}

TEST(Harness, RunIsDeterministic) {
  TempDir dir;
  auto spec = small_spec();
  RunOutputs a, b, c;
  a.results_csv = (dir / "a.csv").string();
  b.results_csv = (dir / "b.csv").string();
  c.results_csv = (dir / "c.csv").string();
  const auto rows = run_experiment(spec, a);
  run_experiment(spec, b);
  spec.jobs = 3;
  run_experiment(spec, c);
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) EXPECT_TRUE(r.ok()) << r.status;
  EXPECT_EQ(slurp(a.results_csv), slurp(b.results_csv));
  EXPECT_EQ(slurp(a.results_csv), slurp(c.results_csv));
  EXPECT_EQ(read_results(a.results_csv).size(), 8u);
}

TEST(Harness, ResumeSkipsCompletedRows) {
  TempDir dir;
  const auto spec = small_spec();
  RunOutputs full, part;
  full.results_csv = (dir / "full.csv").string();
  part.results_csv = (dir / "part.csv").string();
  run_experiment(spec, full);
  {
    std::istringstream in(slurp(full.results_csv));
    std::ofstream out(part.results_csv);
    std::string line;
    for (int i = 0; i < 4 && std::getline(in, line); ++i) out << line << "\n";
  }
  const auto resumed = run_experiment(spec, part);
  EXPECT_EQ(resumed.size(), 5u);
  EXPECT_EQ(slurp(part.results_csv), slurp(full.results_csv));
  EXPECT_TRUE(run_experiment(spec, part).empty());
}

TEST(Harness, FailuresBecomeRows) {
  auto spec = small_spec();
  spec.model = ModelKind::mg_dfr;
  spec.grid = ParamGrid::single(ParamPoint{});
  spec.grid.p = {1.5}; // fractional exponent is undefined for negative inputs
  spec.grid.beta = {1e-8};
  spec.seeds = {1};
  const auto rows = run_experiment(spec);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].ok());
  EXPECT_EQ(rows[0].status.rfind("failed: ", 0), 0u);
  EXPECT_TRUE(std::isnan(rows[0].rmse));
}

TEST(Harness, OutputsPredictionsAndWeights) {
  TempDir dir;
  auto spec = small_spec();
  spec.grid = ParamGrid::single(ParamPoint{0.1, 10, 1e-6});
  spec.seeds = {3};
  RunOutputs out;
  out.predictions_dir = (dir / "pred").string();
  out.weights_dir = (dir / "w").string();
  const auto rows = run_experiment(spec, out);
  ASSERT_EQ(rows.size(), 1u);
  const auto stem = task_stem(rows[0]);
  EXPECT_EQ(stem, "lorenz_x_tanh_dfr_test_p0_s3");
  const auto pred = load_csv((dir / "pred" / (stem + ".csv")).string(), 3);
  EXPECT_EQ(pred.size(), 375u);
  double sq = 0;
  for (double e : pred) sq += e * e;
  EXPECT_NEAR(std::sqrt(sq / 375.0), rows[0].rmse, 1e-12 * rows[0].rmse);
  EXPECT_EQ(load_readout((dir / "w" / (stem + ".txt")).string()).dim(), 21u);
}

TEST(Harness, SinglePointGridReturnsThatPoint) {
  auto spec = small_spec();
  const ParamPoint only{0.07, 5, 1e-6};
  spec.grid = ParamGrid::single(only);
  const auto g = grid_search(spec);
  EXPECT_EQ(g.best_index, 0u);
  EXPECT_EQ(g.best.a, 0.07);
  EXPECT_EQ(g.best.alpha, 5.0);
  EXPECT_EQ(g.best.beta, 1e-6);
  EXPECT_EQ(g.validation_rows.size(), 2u);
  EXPECT_EQ(g.test_rows.size(), 2u);
}

TEST(Harness, GridPicksLowestValidationMean) {
  TempDir dir;
  auto spec = small_spec();
  GridOutputs out;
  out.grid_csv = (dir / "grid.csv").string();
  out.best_csv = (dir / "best.csv").string();
  const auto g = grid_search(spec, out);
  const auto summary = summarize_points(g.validation_rows);
  ASSERT_EQ(summary.size(), 4u);
  for (const auto& s : summary) EXPECT_GE(s.rmse_mean, g.validation_rmse);
  EXPECT_EQ(summary[g.best_index].rmse_mean, g.validation_rmse);
  for (const auto& r : g.test_rows) {
    EXPECT_EQ(r.phase, "test");
    EXPECT_EQ(r.point, g.best_index);
  }
  EXPECT_EQ(read_results(out.best_csv).size(), 2u);
  // rerunning reuses the validation file and selects the same point
  const auto again = grid_search(spec, out);
  EXPECT_EQ(again.best_index, g.best_index);
  EXPECT_EQ(read_results(out.grid_csv).size(), 8u);
}

// Scaling the tanh nonlinearity, the input gain and the augmentation
// constant by alpha, with beta' = alpha^2 beta, leaves predictions unchanged.
TEST(Harness, ScalingInvariancePredictions) {
  DatasetSpec d = DatasetSpec::parse("lorenz:x");
  d.samples = 1200;
  const auto ds = build_dataset(d);
  const std::span<const double> u(ds.series.inputs);
  const std::size_t washout = 50, split_at = ds.series.split_index;
  const std::vector<double> t(ds.series.targets.begin() + washout,
                              ds.series.targets.begin() + split_at);
  const auto mask = make_mask(30, 2);
  const LegacyParams base{0.6, 0.5, 0.2};
  const auto f = Nonlinearity::tanh(1.0);
  const double beta = 1e-6;
  const auto x = legacy_run<double>(u, base, f, mask, washout);
  const auto w = ridge_fit(x.columns(0, split_at - washout), t, beta);
  const auto y = predict(w, x.columns(split_at - washout, x.cols()));
  for (double alpha : {0.01, 0.3, 7.0, 250.0}) {
    LegacyParams scaled = base;
    scaled.gamma *= alpha;
    const auto xs = legacy_run<double>(u, scaled, scale_f(f, alpha), mask, washout, alpha);
    const auto ws = ridge_fit(xs.columns(0, split_at - washout), t, scale_beta(beta, alpha));
    const auto ys = predict(ws, xs.columns(split_at - washout, xs.cols()));
    for (std::size_t k = 0; k < y.size(); ++k) {
      EXPECT_NEAR(ys[k], y[k], 1e-8 * std::max(1.0, std::abs(y[k]))) << "alpha " << alpha;
    }
  }
}
