#pragma once

// Experiment engine: dataset construction, per-(point, seed) evaluation,
// ordered parallel execution, resumable result CSVs, and grid search.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mdfr/config.hpp"
#include "mdfr/dynsys.hpp"
#include "mdfr/errors.hpp"
#include "mdfr/fxp.hpp"
#include "mdfr/mask.hpp"
#include "mdfr/metrics.hpp"
#include "mdfr/nonlin.hpp"
#include "mdfr/presets.hpp"
#include "mdfr/readout.hpp"
#include "mdfr/reservoir.hpp"

namespace mdfr::harness {

using ModelKind = presets::Model;

inline std::string to_string(ModelKind m) {
  switch (m) {
  case ModelKind::mg_dfr:
    return "mg_dfr";
  case ModelKind::identity_dfr:
    return "identity_dfr";
  case ModelKind::tanh_dfr:
    return "tanh_dfr";
  case ModelKind::fxp_identity_dfr:
    return "fxp_identity_dfr";
  }
  return "?";
}

inline ModelKind parse_model(std::string_view s) {
  if (s == "mg_dfr" || s == "mg") {
    return ModelKind::mg_dfr;
  }
  if (s == "identity_dfr" || s == "identity") {
    return ModelKind::identity_dfr;
  }
  if (s == "tanh_dfr" || s == "tanh") {
    return ModelKind::tanh_dfr;
  }
  if (s == "fxp_identity_dfr" || s == "fxp") {
    return ModelKind::fxp_identity_dfr;
  }
  throw InvalidArgument("unknown model '" + std::string(s) +
                        "' (expected mg_dfr, identity_dfr, tanh_dfr or fxp_identity_dfr)");
}

// --- datasets --------------------------------------------------------------

enum class DatasetKind { lorenz, rossler, chen, narma10, dst, csv };
enum class MetricDomain { normalized, original };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::lorenz;
  char component = 'x';
  std::size_t samples = 0; // input/target pairs; 0 picks the kind's default
  std::size_t train = 0;   // training pairs; 0 picks the kind's default
  std::size_t horizon = 1;
  double dt = 0.01;
  std::uint64_t seed = 1; // NARMA10 input draw
  std::string path;       // csv
  std::size_t column = mdfr::last_column;
  int year = 2013;                      // dst
  std::optional<MetricDomain> domain;   // default: original for DST, else normalized

  /// "lorenz:x", "rossler:z", "chen:x", "narma10", "dst:2013", "csv:PATH[:COL]".
  static DatasetSpec parse(std::string_view selector) {
    DatasetSpec d;
    const auto colon = selector.find(':');
    const std::string_view head = selector.substr(0, colon);
    const std::string_view rest =
        colon == std::string_view::npos ? std::string_view{} : selector.substr(colon + 1);
    const auto need_component = [&](DatasetKind kind) {
      if (rest.size() != 1) {
        throw InvalidArgument("dataset '" + std::string(selector) +
                              "': expected a component x, y or z after ':'");
      }
      component_index(rest[0]);
      d.kind = kind;
      d.component = rest[0];
    };
    if (head == "lorenz") {
      need_component(DatasetKind::lorenz);
    } else if (head == "rossler") {
      need_component(DatasetKind::rossler);
    } else if (head == "chen") {
      need_component(DatasetKind::chen);
    } else if (head == "narma10") {
      if (!rest.empty()) {
        throw InvalidArgument("dataset 'narma10' takes no argument");
      }
      d.kind = DatasetKind::narma10;
    } else if (head == "dst") {
      double year = 0;
      if (!mdfr::detail::parse_double(rest, year) || year != std::floor(year)) {
        throw InvalidArgument("dataset '" + std::string(selector) + "': expected dst:YEAR");
      }
      d.kind = DatasetKind::dst;
      d.year = static_cast<int>(year);
    } else if (head == "csv") {
      if (rest.empty()) {
        throw InvalidArgument("dataset 'csv' needs a path: csv:PATH[:COLUMN]");
      }
      d.kind = DatasetKind::csv;
      const auto last = rest.rfind(':');
      double col = 0;
      if (last != std::string_view::npos && mdfr::detail::parse_double(rest.substr(last + 1), col) &&
          col >= 0 && col == std::floor(col)) {
        d.path = std::string(rest.substr(0, last));
        d.column = static_cast<std::size_t>(col);
      } else {
        d.path = std::string(rest);
      }
    } else {
      throw InvalidArgument("unknown dataset '" + std::string(selector) + "'");
    }
    return d;
  }

  static DatasetKind parse_kind(std::string_view s) {
    if (s == "lorenz") return DatasetKind::lorenz;
    if (s == "rossler") return DatasetKind::rossler;
    if (s == "chen") return DatasetKind::chen;
    if (s == "narma10") return DatasetKind::narma10;
    if (s == "dst") return DatasetKind::dst;
    if (s == "csv") return DatasetKind::csv;
    throw InvalidArgument("unknown dataset kind '" + std::string(s) + "'");
  }

  bool is_ode() const {
    return kind == DatasetKind::lorenz || kind == DatasetKind::rossler || kind == DatasetKind::chen;
  }

  std::size_t default_samples() const {
    return is_ode() ? 12000 : 4000;
  }

  std::size_t resolved_samples() const { return samples ? samples : default_samples(); }

  std::size_t resolved_train() const {
    if (train) {
      return train;
    }
    return resolved_samples() * 3 / 4;
  }

  MetricDomain resolved_domain() const {
    if (domain) {
      return *domain;
    }
    return kind == DatasetKind::dst ? MetricDomain::original : MetricDomain::normalized;
  }

  /// Stable identifier used in result files and for preset lookup.
  std::string name() const {
    switch (kind) {
    case DatasetKind::lorenz:
      return std::string("lorenz_") + component;
    case DatasetKind::rossler:
      return std::string("rossler_") + component;
    case DatasetKind::chen:
      return std::string("chen_") + component;
    case DatasetKind::narma10:
      return "narma10";
    case DatasetKind::dst:
      return "dst_" + std::to_string(year);
    case DatasetKind::csv: {
      std::string stem = std::filesystem::path(path).stem().string();
      for (auto& c : stem) {
        if (c == ',' || c == ' ') {
          c = '_';
        }
      }
      return "csv_" + stem;
    }
    }
    return "?";
  }
};

struct Dataset {
  std::string name;
  LabeledSeries series;
  MetricDomain domain = MetricDomain::normalized;
  bool narma = false;
};

inline constexpr const char* data_env_var = "MODULAR_DFR_DATA";

/// Path of the DST file for `year` under $MODULAR_DFR_DATA, or nullopt.
inline std::optional<std::filesystem::path> dst_path(int year) {
  const char* dir = std::getenv(data_env_var);
  if (!dir || !*dir) {
    return std::nullopt;
  }
  auto p = std::filesystem::path(dir) / ("dst" + std::to_string(year) + ".csv");
  if (!std::filesystem::exists(p)) {
    return std::nullopt;
  }
  return p;
}

/// Builds the labelled, normalized series. The normalization scale comes
/// from the training split only.
inline Dataset build_dataset(const DatasetSpec& spec) {
  Dataset ds;
  ds.name = spec.name();
  ds.domain = spec.resolved_domain();
  const std::size_t n = spec.resolved_samples();
  const std::size_t train = spec.resolved_train();
  const std::size_t h = spec.horizon;
  if (h < 1) {
    throw InvalidArgument("dataset: horizon must be >= 1");
  }
  switch (spec.kind) {
  case DatasetKind::lorenz:
  case DatasetKind::rossler:
  case DatasetKind::chen: {
    const OdeSystem sys = spec.kind == DatasetKind::lorenz    ? OdeSystem::lorenz()
                          : spec.kind == DatasetKind::rossler ? OdeSystem::rossler()
                                                              : OdeSystem::chen();
    const auto raw = generate(sys, spec.dt, n + h, component_index(spec.component));
    ds.series = normalize_by_training(split(raw, train, h));
    break;
  }
  case DatasetKind::narma10: {
    if (h != 1) {
      throw InvalidArgument("dataset narma10: the horizon is fixed at 1");
    }
    auto gen = narma10_generate(spec.seed, n);
    LabeledSeries s = std::move(gen.series);
    if (train < 1 || train >= s.size()) {
      throw InvalidArgument("dataset narma10: train length must lie strictly inside the series");
    }
    s.split_index = train;
    const double u_scale = max_abs(std::span<const double>(s.inputs.data(), train));
    const double d_scale = max_abs(std::span<const double>(s.targets.data(), train));
    if (!(u_scale > 0.0) || !(d_scale > 0.0)) {
      throw InvalidArgument("dataset narma10: degenerate training split");
    }
    for (auto& v : s.inputs) {
      v /= u_scale;
    }
    for (auto& v : s.targets) {
      v /= d_scale;
    }
    s.norm_scale = u_scale;
    s.target_scale = d_scale;
    ds.series = std::move(s);
    ds.narma = true;
    break;
  }
  case DatasetKind::dst: {
    const auto p = dst_path(spec.year);
    if (!p) {
      throw DatasetUnavailable("DST " + std::to_string(spec.year) + " data not found: set " +
                               data_env_var + " to a directory containing dst" +
                               std::to_string(spec.year) + ".csv");
    }
    const auto all = load_csv(p->string(), spec.column);
    ds.series = normalize_by_training(split(tail(all, n + h), train, h));
    break;
  }
  case DatasetKind::csv: {
    const auto all = load_csv(spec.path, spec.column);
    std::vector<double> raw = spec.samples ? tail(all, n + h) : all;
    const std::size_t tr = spec.train ? spec.train : (raw.size() - h) * 3 / 4;
    ds.series = normalize_by_training(split(raw, tr, h));
    break;
  }
  }
  return ds;
}

// --- parameters --------------------------------------------------------------

struct ParamPoint {
  double a = 0.0;
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 1.0;
  double eta = 1.0;
  double p = 1.0;
  fxp::ShiftSet a_shifts{{4, 5, 11}};
};

inline ParamPoint from_preset(const presets::OperatingPoint& op) {
  return {op.a, op.alpha, op.beta, op.gamma, op.eta, op.p, op.a_shifts};
}

struct ParamGrid {
  std::vector<double> a;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<double> eta;
  std::vector<double> p;
  std::vector<fxp::ShiftSet> a_shifts;

  static ParamGrid single(const ParamPoint& pt) {
    return {{pt.a}, {pt.alpha}, {pt.beta}, {pt.gamma}, {pt.eta}, {pt.p}, {pt.a_shifts}};
  }
};

namespace detail {

inline std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    out[static_cast<std::size_t>(i)] =
        std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)));
  }
  out.front() = lo;
  out.back() = n == 1 ? lo : hi;
  return out;
}

} // namespace detail

/// Default search ranges: A in [0.001, 0.2] (25), alpha in [1, 1e4] (17),
/// beta in [1e-20, 1e4] (25), all log-spaced. Other parameters keep the
/// values of `base`.
inline ParamGrid default_grid(const ParamPoint& base = {}) {
  ParamGrid g = ParamGrid::single(base);
  g.a = detail::logspace(0.001, 0.2, 25);
  g.alpha = detail::logspace(1.0, 1e4, 17);
  g.beta = detail::logspace(1e-20, 1e4, 25);
  return g;
}

// --- experiment spec ---------------------------------------------------------

struct ExperimentSpec {
  DatasetSpec dataset;
  ModelKind model = ModelKind::tanh_dfr;
  ParamGrid grid;
  double b = 0.82;
  double theta = 0.2;
  fxp::ShiftSet b_shifts{{1, 2, 4}};
  fxp::FxpFormat format{};
  int weight_frac_bits = -1; // -1: auto
  std::size_t nodes = 100;
  std::size_t washout = 100;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double validation_fraction = 0.2;
  bool rescale_beta = true; // (1/max|u|)^2, or (l/max|u|)^2 for fxp
  unsigned jobs = 1;

  /// Fills the grid from the published operating point for this dataset and
  /// model. Returns false when none exists.
  bool use_published_point() {
    const auto op = presets::operating_point(dataset.name(), model);
    if (!op) {
      return false;
    }
    grid = ParamGrid::single(from_preset(*op));
    return true;
  }

  void validate() const {
    if (seeds.empty()) {
      throw InvalidArgument("experiment: seed list is empty");
    }
    if (nodes < 1) {
      throw InvalidArgument("experiment: nodes must be >= 1");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw InvalidArgument("experiment: validation_fraction must lie in (0, 1)");
    }
    if (model == ModelKind::fxp_identity_dfr) {
      format.validate();
      b_shifts.validate(format.reservoir_bits);
      for (const auto& s : grid.a_shifts) {
        s.validate(format.reservoir_bits);
      }
    } else if (model == ModelKind::mg_dfr) {
      if (!(theta > 0.0)) {
        throw InvalidArgument("experiment: theta must be positive");
      }
    } else if (!(b >= 0.0 && b < 1.0)) {
      throw InvalidArgument("experiment: B must lie in [0, 1)");
    }
    if (points().empty()) {
      throw InvalidArgument("experiment: parameter grid is empty");
    }
  }

  /// Cartesian product of the grid axes the model uses, in a fixed order.
  std::vector<ParamPoint> points() const {
    std::vector<ParamPoint> out;
    ParamPoint pt;
    switch (model) {
    case ModelKind::mg_dfr:
      for (double g : grid.gamma)
        for (double e : grid.eta)
          for (double p : grid.p)
            for (double be : grid.beta) {
              pt.gamma = g;
              pt.eta = e;
              pt.p = p;
              pt.beta = be;
              out.push_back(pt);
            }
      break;
    case ModelKind::identity_dfr:
      for (double a : grid.a)
        for (double be : grid.beta) {
          pt.a = a;
          pt.beta = be;
          out.push_back(pt);
        }
      break;
    case ModelKind::tanh_dfr:
      for (double a : grid.a)
        for (double al : grid.alpha)
          for (double be : grid.beta) {
            pt.a = a;
            pt.alpha = al;
            pt.beta = be;
            out.push_back(pt);
          }
      break;
    case ModelKind::fxp_identity_dfr:
      for (const auto& s : grid.a_shifts)
        for (double be : grid.beta) {
          pt.a_shifts = s;
          pt.a = s.coefficient();
          pt.beta = be;
          out.push_back(pt);
        }
      break;
    }
    return out;
  }
};

// --- evaluation --------------------------------------------------------------

enum class Phase { test, validation };

struct Evaluation {
  Score score;
  std::vector<double> truth;
  std::vector<double> prediction;
  ReadoutModel<double> model;
  fxp::SaturationCounts saturation;
  int frac_bits = 0;
};

struct Ranges {
  std::size_t fit_begin, fit_end, score_begin, score_end;
};

inline Ranges phase_ranges(const ExperimentSpec& spec, const Dataset& ds, Phase phase) {
  const std::size_t split_at = ds.series.split_index;
  const std::size_t total = ds.series.size();
  if (spec.washout >= split_at) {
    throw InvalidArgument("experiment: washout must be shorter than the training split");
  }
  if (phase == Phase::test) {
    return {spec.washout, split_at, split_at, total};
  }
  const std::size_t usable = split_at - spec.washout;
  const auto hold = static_cast<std::size_t>(std::floor(spec.validation_fraction * usable));
  if (hold < 1 || hold >= usable) {
    throw InvalidArgument("experiment: validation tail is empty or covers the whole training split");
  }
  return {spec.washout, split_at - hold, split_at - hold, split_at};
}

/// Effective ridge parameter after the normalization correction.
inline double effective_beta(const ExperimentSpec& spec, const Dataset& ds, const ParamPoint& pt) {
  if (!spec.rescale_beta || spec.model == ModelKind::mg_dfr) {
    return pt.beta;
  }
  const double scale = ds.series.norm_scale;
  if (spec.model == ModelKind::fxp_identity_dfr) {
    const double r = static_cast<double>(spec.format.input_scale()) / scale;
    return pt.beta * r * r;
  }
  return pt.beta / (scale * scale);
}

/// Reservoir states for one (point, seed) over the causal prefix the phase
/// needs. Independent of beta.
struct Features {
  FeatureMatrix<double> x;  // floating-point models, and fxp features as reals
  fxp::FxpFeatures x_int;   // fxp only
  fxp::SaturationCounts saturation;
};

inline Features compute_features(const ExperimentSpec& spec, const Dataset& ds,
                                 const ParamPoint& pt, std::uint64_t seed, Phase phase,
                                 const fxp::TraceSink& trace = {}) {
  const Ranges r = phase_ranges(spec, ds, phase);
  const std::span<const double> u(ds.series.inputs.data(), r.score_end);
  const Mask mask = make_mask(spec.nodes, seed);
  Features f;
  switch (spec.model) {
  case ModelKind::fxp_identity_dfr: {
    const auto u_int = fxp::quantize_input(u, spec.format, f.saturation);
    fxp::FxpRunOptions opts;
    opts.washout = spec.washout;
    opts.trace = trace;
    f.x_int = fxp::fxp_run(u_int, mask, pt.a_shifts, spec.b_shifts, spec.format, f.saturation,
                           opts);
    f.x = fxp::to_feature_matrix(f.x_int);
    break;
  }
  case ModelKind::mg_dfr: {
    LegacyParams lp{pt.gamma, pt.eta, spec.theta};
    // NARMA10 operating points refer to the raw input range.
    if (ds.narma) {
      lp.gamma *= ds.series.norm_scale;
    }
    f.x = legacy_run(u, lp, Nonlinearity::mackey_glass(pt.p), mask, spec.washout);
    break;
  }
  case ModelKind::identity_dfr:
  case ModelKind::tanh_dfr: {
    ReservoirConfig cfg;
    cfg.n_nodes = spec.nodes;
    cfg.a_coeff = pt.a;
    cfg.b_coeff = spec.b;
    cfg.mask = mask;
    cfg.f = spec.model == ModelKind::tanh_dfr ? Nonlinearity::tanh(pt.alpha)
                                              : Nonlinearity::identity();
    f.x = run(u, cfg, spec.washout);
    break;
  }
  }
  return f;
}

/// Fits the readout with pt.beta on the phase's fit range and scores its
/// score range.
inline Evaluation fit_and_score(const ExperimentSpec& spec, const Dataset& ds, const Features& f,
                                const ParamPoint& pt, Phase phase) {
  const Ranges r = phase_ranges(spec, ds, phase);
  const std::size_t w = spec.washout;
  const double beta = effective_beta(spec, ds, pt);
  std::vector<double> t(ds.series.targets.begin() + static_cast<std::ptrdiff_t>(r.fit_begin),
                        ds.series.targets.begin() + static_cast<std::ptrdiff_t>(r.fit_end));

  Evaluation ev;
  ev.saturation = f.saturation;
  ev.truth.assign(ds.series.targets.begin() + static_cast<std::ptrdiff_t>(r.score_begin),
                  ds.series.targets.begin() + static_cast<std::ptrdiff_t>(r.score_end));
  if (spec.model == ModelKind::fxp_identity_dfr) {
    const double m = static_cast<double>(spec.format.output_scale());
    for (auto& v : t) {
      v *= m;
    }
    ev.model = ridge_fit(f.x.columns(r.fit_begin - w, r.fit_end - w), t, beta);
    const auto q = fxp::quantize_readout(ev.model, spec.format, spec.weight_frac_bits,
                                         ev.saturation);
    ev.frac_bits = q.frac_bits;
    ev.prediction = fxp::fxp_predict(q, f.x_int.columns(r.score_begin - w, r.score_end - w),
                                     spec.format, ev.saturation);
  } else {
    ev.model = ridge_fit(f.x.columns(r.fit_begin - w, r.fit_end - w), t, beta);
    ev.prediction = predict(ev.model, f.x.columns(r.score_begin - w, r.score_end - w));
  }

  if (ds.domain == MetricDomain::original) {
    for (auto& v : ev.truth) {
      v *= ds.series.target_scale;
    }
    for (auto& v : ev.prediction) {
      v *= ds.series.target_scale;
    }
  }
  ev.score = score(ev.truth, ev.prediction);
  if (!std::isfinite(ev.score.rmse) || !std::isfinite(ev.score.mae)) {
    throw NumericOverflow("prediction is not finite", 0, 0);
  }
  return ev;
}

/// One (point, seed) evaluation. Throws on singular systems, overflow and
/// invalid parameters.
inline Evaluation evaluate(const ExperimentSpec& spec, const Dataset& ds, const ParamPoint& pt,
                           std::uint64_t seed, Phase phase, const fxp::TraceSink& trace = {}) {
  return fit_and_score(spec, ds, compute_features(spec, ds, pt, seed, phase, trace), pt, phase);
}

// --- result rows ---------------------------------------------------------------

struct ResultRow {
  std::string dataset;
  std::string model;
  std::string phase = "test";
  std::size_t point = 0;
  std::string params; // formatted a,b,alpha,beta,gamma,eta,p,a_shifts,b_shifts
  std::uint64_t seed = 0;
  double rmse = std::nan("");
  double mae = std::nan("");
  double nrmse = std::nan("");
  std::string status = "ok";
  std::uint64_t saturations = 0;
  double wall_seconds = 0.0; // logged, not written

  bool ok() const { return status == "ok"; }
};

inline constexpr const char* result_header =
    "dataset,model,point,a,b,alpha,beta,gamma,eta,p,a_shifts,b_shifts,seed,rmse,mae,nrmse,status,"
    "saturations";

namespace detail {

inline std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_e(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

inline std::string sanitize(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '\r') {
      c = ';';
    }
  }
  return s;
}

} // namespace detail

/// Parameter columns; entries a model does not use stay empty.
inline std::string format_params(const ExperimentSpec& spec, const ParamPoint& pt) {
  using detail::fmt_g;
  const std::string e;
  switch (spec.model) {
  case ModelKind::mg_dfr: {
    const LegacyParams lp{pt.gamma, pt.eta, spec.theta};
    return fmt_g(lp.a_coeff()) + "," + fmt_g(lp.b_coeff()) + ",," + fmt_g(pt.beta) + "," +
           fmt_g(pt.gamma) + "," + fmt_g(pt.eta) + "," + fmt_g(pt.p) + ",,";
  }
  case ModelKind::identity_dfr:
    return fmt_g(pt.a) + "," + fmt_g(spec.b) + ",," + fmt_g(pt.beta) + ",,,,,";
  case ModelKind::tanh_dfr:
    return fmt_g(pt.a) + "," + fmt_g(spec.b) + "," + fmt_g(pt.alpha) + "," + fmt_g(pt.beta) +
           ",,,,,";
  case ModelKind::fxp_identity_dfr:
    return fmt_g(pt.a_shifts.coefficient()) + "," + fmt_g(spec.b_shifts.coefficient()) + ",," +
           fmt_g(pt.beta) + ",,,," + pt.a_shifts.describe() + "," + spec.b_shifts.describe();
  }
  return e;
}

/// Columns up to and including the seed; identifies a task for resume.
inline std::string row_key(const ResultRow& r) {
  return r.dataset + "," + r.model + "," + std::to_string(r.point) + "," + r.params + "," +
         std::to_string(r.seed);
}

inline std::string format_row(const ResultRow& r) {
  return row_key(r) + "," + detail::fmt_e(r.rmse) + "," + detail::fmt_e(r.mae) + "," +
         detail::fmt_e(r.nrmse) + "," + detail::sanitize(r.status) + "," +
         std::to_string(r.saturations);
}

/// Parses one data line of a result CSV.
inline ResultRow parse_row(const std::string& line, std::size_t line_no = 0) {
  const auto f = config::split_on(line, ',');
  if (f.size() != 18) {
    throw IngestionError("result row has " + std::to_string(f.size()) + " fields, expected 18",
                         line_no);
  }
  ResultRow r;
  r.dataset = std::string(f[0]);
  r.model = std::string(f[1]);
  const auto num = [&](std::string_view s) {
    double v = 0;
    if (s == "nan") {
      return std::nan("");
    }
    if (!mdfr::detail::parse_double(s, v)) {
      throw IngestionError("malformed number '" + std::string(s) + "' in result row", line_no);
    }
    return v;
  };
  r.point = static_cast<std::size_t>(num(f[2]));
  std::string params;
  for (std::size_t i = 3; i <= 11; ++i) {
    params += std::string(f[i]);
    if (i < 11) {
      params += ",";
    }
  }
  r.params = params;
  r.seed = static_cast<std::uint64_t>(num(f[12]));
  r.rmse = num(f[13]);
  r.mae = num(f[14]);
  r.nrmse = num(f[15]);
  r.status = std::string(f[16]);
  r.saturations = static_cast<std::uint64_t>(num(f[17]));
  return r;
}

/// Parameter value from the formatted column block (column index 3..11).
inline std::optional<double> row_param(const ResultRow& r, std::size_t column) {
  const auto f = config::split_on(r.params, ',');
  const std::size_t i = column - 3;
  if (i >= f.size() || f[i].empty()) {
    return std::nullopt;
  }
  double v = 0;
  if (!mdfr::detail::parse_double(f[i], v)) {
    return std::nullopt;
  }
  return v;
}

inline std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IngestionError("cannot open " + path);
  }
  std::string line;
  std::vector<ResultRow> rows;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (no == 1) {
      if (line != result_header) {
        throw IngestionError(path + ": not a result file (header mismatch)", 1);
      }
      continue;
    }
    if (line.empty()) {
      continue;
    }
    rows.push_back(parse_row(line, no));
  }
  return rows;
}

// --- ordered parallel execution ------------------------------------------------

/// Runs compute(i) for i in [0, n) on up to `jobs` threads and calls
/// emit(i, result) on the calling thread in index order.
template <typename Result, typename Compute, typename Emit>
void for_each_ordered(std::size_t n, unsigned jobs, Compute compute, Emit emit) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      emit(i, compute(i));
    }
    return;
  }
  std::vector<std::optional<Result>> slots(n);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        Result r = compute(i);
        {
          std::lock_guard lock(mu);
          slots[i] = std::move(r);
        }
        cv.notify_all();
      }
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return slots[i].has_value(); });
    Result r = std::move(*slots[i]);
    slots[i].reset();
    lock.unlock();
    emit(i, std::move(r));
  }
  for (auto& t : pool) {
    t.join();
  }
}

// --- run_experiment ----------------------------------------------------------

struct RunOutputs {
  std::string results_csv;     // appended to, resumable; empty: in memory only
  std::string predictions_dir; // per-task k,truth,prediction,abs_error files
  std::string weights_dir;     // per-task readout files
  std::string trace_path;      // fxp node trace of the first task
  std::ostream* log = nullptr;
};

inline void write_predictions(const std::string& path, std::span<const double> truth,
                              std::span<const double> prediction) {
  std::ofstream out(path);
  if (!out) {
    throw IngestionError("cannot open " + path + " for writing");
  }
  out << "k,truth,prediction,abs_error\n";
  char buf[128];
  for (std::size_t k = 0; k < truth.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", k, truth[k], prediction[k],
                  std::abs(truth[k] - prediction[k]));
    out << buf;
  }
}

inline std::string task_stem(const ResultRow& r) {
  return r.dataset + "_" + r.model + "_" + r.phase + "_p" + std::to_string(r.point) + "_s" +
         std::to_string(r.seed);
}

namespace detail {

struct TaskOutcome {
  ResultRow row;
  std::optional<Evaluation> eval;
};

inline std::set<std::string> completed_keys(const std::string& path) {
  std::set<std::string> keys;
  if (path.empty() || !std::filesystem::exists(path)) {
    return keys;
  }
  for (const auto& r : read_results(path)) {
    keys.insert(row_key(r));
  }
  return keys;
}

} // namespace detail

/// Scores every (point, seed) pair. Rows go to `out.results_csv` in task
/// order as they complete; rows already present there are skipped. Failed
/// evaluations produce rows with status "failed: ...". Returns the rows
/// scored in this call.
inline std::vector<ResultRow> run_tasks(const ExperimentSpec& spec, const Dataset& ds,
                                        const std::vector<std::pair<std::size_t, ParamPoint>>& pts,
                                        Phase phase, const RunOutputs& out) {
  spec.validate();
  struct Task {
    ResultRow row;
    ParamPoint pt;
  };
  const auto done = detail::completed_keys(out.results_csv);
  std::vector<Task> tasks;
  for (const auto& [index, pt] : pts) {
    for (const auto seed : spec.seeds) {
      Task t;
      t.row.dataset = ds.name;
      t.row.model = to_string(spec.model);
      t.row.phase = phase == Phase::test ? "test" : "validation";
      t.row.point = index;
      t.row.params = format_params(spec, pt);
      t.row.seed = seed;
      t.pt = pt;
      if (!done.count(row_key(t.row))) {
        tasks.push_back(std::move(t));
      }
    }
  }

  std::ofstream csv;
  if (!out.results_csv.empty()) {
    const bool fresh = !std::filesystem::exists(out.results_csv) ||
                       std::filesystem::file_size(out.results_csv) == 0;
    if (auto parent = std::filesystem::path(out.results_csv).parent_path(); !parent.empty()) {
      std::filesystem::create_directories(parent);
    }
    csv.open(out.results_csv, std::ios::app);
    if (!csv) {
      throw IngestionError("cannot open " + out.results_csv + " for writing");
    }
    if (fresh) {
      csv << result_header << "\n";
    }
  }
  for (const auto& dir : {out.predictions_dir, out.weights_dir}) {
    if (!dir.empty()) {
      std::filesystem::create_directories(dir);
    }
  }
  std::unique_ptr<fxp::TraceFile> trace;
  if (!out.trace_path.empty() && spec.model == ModelKind::fxp_identity_dfr && !tasks.empty()) {
    trace = std::make_unique<fxp::TraceFile>(out.trace_path);
  }

  // Tasks that differ only in beta share reservoir features: one unit of
  // work per (point without beta, seed), rows still emitted in task order.
  std::vector<std::vector<std::size_t>> units;
  {
    std::map<std::string, std::size_t> unit_of;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      ParamPoint base = tasks[i].pt;
      base.beta = 0.0;
      const std::string key = format_params(spec, base) + "|" + std::to_string(tasks[i].row.seed);
      const auto [it, inserted] = unit_of.emplace(key, units.size());
      if (inserted) {
        units.emplace_back();
      }
      units[it->second].push_back(i);
    }
  }

  const bool keep_eval = !out.predictions_dir.empty() || !out.weights_dir.empty();
  std::vector<ResultRow> rows;
  std::map<std::size_t, detail::TaskOutcome> pending;
  std::size_t next_emit = 0;
  const auto emit_one = [&](detail::TaskOutcome res) {
    if (csv.is_open()) {
      csv << format_row(res.row) << "\n";
      csv.flush();
    }
    if (res.eval && !out.predictions_dir.empty()) {
      write_predictions(out.predictions_dir + "/" + task_stem(res.row) + ".csv", res.eval->truth,
                        res.eval->prediction);
    }
    if (res.eval && !out.weights_dir.empty()) {
      save_readout(res.eval->model, out.weights_dir + "/" + task_stem(res.row) + ".txt");
    }
    if (out.log) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s %s point %zu seed %llu: rmse %.4e (%.2fs)%s\n",
                    res.row.dataset.c_str(), res.row.model.c_str(), res.row.point,
                    static_cast<unsigned long long>(res.row.seed), res.row.rmse,
                    res.row.wall_seconds, res.row.ok() ? "" : " FAILED");
      *out.log << buf;
      if (!res.row.ok()) {
        *out.log << "  " << res.row.status << "\n";
      }
    }
    rows.push_back(std::move(res.row));
  };

  using UnitResult = std::vector<std::pair<std::size_t, detail::TaskOutcome>>;
  for_each_ordered<UnitResult>(
      units.size(), spec.jobs,
      [&](std::size_t u) {
        UnitResult results;
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<Features> feats;
        std::string feature_error;
        try {
          fxp::TraceSink sink;
          if (u == 0 && trace) {
            sink = trace->sink();
          }
          const Task& first = tasks[units[u].front()];
          feats = compute_features(spec, ds, first.pt, first.row.seed, phase, sink);
        } catch (const std::exception& e) {
          feature_error = std::string("failed: ") + e.what();
        }
        const double feature_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const std::size_t i : units[u]) {
          detail::TaskOutcome res;
          res.row = tasks[i].row;
          const auto t1 = std::chrono::steady_clock::now();
          if (!feats) {
            res.row.status = feature_error;
          } else {
            try {
              auto ev = fit_and_score(spec, ds, *feats, tasks[i].pt, phase);
              res.row.rmse = ev.score.rmse;
              res.row.mae = ev.score.mae;
              res.row.nrmse = ev.score.nrmse;
              res.row.saturations = ev.saturation.total();
              if (keep_eval) {
                res.eval = std::move(ev);
              }
            } catch (const std::exception& e) {
              res.row.status = std::string("failed: ") + e.what();
            }
          }
          res.row.wall_seconds =
              feature_seconds +
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
          results.emplace_back(i, std::move(res));
        }
        return results;
      },
      [&](std::size_t, UnitResult results) {
        for (auto& [i, res] : results) {
          pending.emplace(i, std::move(res));
        }
        for (auto it = pending.find(next_emit); it != pending.end(); it = pending.find(next_emit)) {
          emit_one(std::move(it->second));
          pending.erase(it);
          ++next_emit;
        }
      });
  return rows;
}

/// Test-phase scoring of every grid point and seed.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const RunOutputs& out = {}) {
  spec.validate();
  const Dataset ds = build_dataset(spec.dataset);
  const auto pts = spec.points();
  std::vector<std::pair<std::size_t, ParamPoint>> indexed;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    indexed.emplace_back(i, pts[i]);
  }
  return run_tasks(spec, ds, indexed, Phase::test, out);
}

// --- aggregation and grid search ----------------------------------------------

struct PointSummary {
  std::size_t point = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double rmse_mean = std::nan("");
  double rmse_min = std::nan("");
  double mae_mean = std::nan("");
  double nrmse_mean = std::nan("");
};

/// Per-point aggregates in point order.
inline std::vector<PointSummary> summarize_points(const std::vector<ResultRow>& rows) {
  std::map<std::size_t, std::vector<const ResultRow*>> by_point;
  for (const auto& r : rows) {
    by_point[r.point].push_back(&r);
  }
  std::vector<PointSummary> out;
  for (const auto& [point, rs] : by_point) {
    PointSummary s;
    s.point = point;
    double sr = 0, sm = 0, sn = 0;
    for (const auto* r : rs) {
      if (!r->ok()) {
        ++s.failed;
        continue;
      }
      ++s.ok;
      sr += r->rmse;
      sm += r->mae;
      sn += r->nrmse;
      s.rmse_min = std::isnan(s.rmse_min) ? r->rmse : std::min(s.rmse_min, r->rmse);
    }
    if (s.ok) {
      s.rmse_mean = sr / static_cast<double>(s.ok);
      s.mae_mean = sm / static_cast<double>(s.ok);
      s.nrmse_mean = sn / static_cast<double>(s.ok);
    }
    out.push_back(s);
  }
  return out;
}

struct GridOutputs {
  std::string grid_csv; // validation rows, resumable
  std::string best_csv; // test rows of the selected point
  std::string predictions_dir;
  std::string weights_dir;
  std::ostream* log = nullptr;
};

struct GridResult {
  std::size_t best_index = 0;
  ParamPoint best;
  double validation_rmse = std::nan("");
  std::vector<ResultRow> validation_rows;
  std::vector<ResultRow> test_rows;
};

/// Selects the point with the lowest mean validation RMSE over all seeds
/// (points with any failed seed are ineligible; ties keep the lower index),
/// then scores it on the test split.
inline GridResult grid_search(const ExperimentSpec& spec, const GridOutputs& out = {}) {
  spec.validate();
  const Dataset ds = build_dataset(spec.dataset);
  const auto pts = spec.points();
  std::vector<std::pair<std::size_t, ParamPoint>> indexed;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    indexed.emplace_back(i, pts[i]);
  }
  GridResult result;
  RunOutputs vo;
  vo.results_csv = out.grid_csv;
  vo.log = out.log;
  result.validation_rows = run_tasks(spec, ds, indexed, Phase::validation, vo);
  if (!out.grid_csv.empty()) {
    // Select from the file so resumed and uninterrupted searches agree.
    result.validation_rows = read_results(out.grid_csv);
  }
  std::set<std::string> wanted;
  for (const auto& [i, pt] : indexed) {
    wanted.insert(format_params(spec, pt));
  }
  std::vector<ResultRow> relevant;
  for (const auto& r : result.validation_rows) {
    if (r.dataset == ds.name && r.model == to_string(spec.model) && wanted.count(r.params)) {
      relevant.push_back(r);
    }
  }
  bool found = false;
  for (const auto& s : summarize_points(relevant)) {
    if (s.failed || !s.ok || !std::isfinite(s.rmse_mean)) {
      continue;
    }
    if (!found || s.rmse_mean < result.validation_rmse) {
      found = true;
      result.best_index = s.point;
      result.validation_rmse = s.rmse_mean;
    }
  }
  if (!found) {
    throw InvalidArgument("grid_search: every grid point failed on at least one seed");
  }
  result.best = pts.at(result.best_index);

  RunOutputs to;
  to.results_csv = out.best_csv;
  to.predictions_dir = out.predictions_dir;
  to.weights_dir = out.weights_dir;
  to.log = out.log;
  if (!out.best_csv.empty() && std::filesystem::exists(out.best_csv)) {
    std::filesystem::remove(out.best_csv);
  }
  result.test_rows = run_tasks(spec, ds, {{result.best_index, result.best}}, Phase::test, to);
  return result;
}

// --- configuration -------------------------------------------------------------

/// Reads an experiment from a config file. Sections and keys:
///   [dataset] kind component samples train dt horizon seed path column year metric_domain
///   [model]   kind nodes b theta washout a alpha beta gamma eta p a_shifts b_shifts
///             reservoir_bits output_bits weight_frac_bits rescale_beta
///   [run]     seeds jobs validation_fraction
/// Parameter lists not given fall back to the published operating point.
inline ExperimentSpec from_config(const config::ConfigFile& cfg) {
  using namespace config;
  ExperimentSpec spec;
  const auto get = [&](const char* section, const char* key) { return cfg.find(section, key); };

  if (const auto* e = get("dataset", "kind")) {
    spec.dataset.kind = DatasetSpec::parse_kind(e->value);
  }
  if (const auto* e = get("dataset", "component")) {
    if (e->value.size() != 1) {
      throw InvalidArgument(cfg.where(*e) + ": component must be x, y or z");
    }
    component_index(e->value[0]);
    spec.dataset.component = e->value[0];
  }
  const auto size_key = [&](const char* section, const char* key, std::size_t& dst) {
    if (const auto* e = get(section, key)) {
      const long long v = parse_integer(e->value, cfg.where(*e));
      if (v < 0) {
        throw InvalidArgument(cfg.where(*e) + ": must be nonnegative");
      }
      dst = static_cast<std::size_t>(v);
    }
  };
  size_key("dataset", "samples", spec.dataset.samples);
  size_key("dataset", "train", spec.dataset.train);
  size_key("dataset", "horizon", spec.dataset.horizon);
  if (const auto* e = get("dataset", "dt")) {
    spec.dataset.dt = parse_real(e->value, cfg.where(*e));
  }
  if (const auto* e = get("dataset", "seed")) {
    spec.dataset.seed = parse_seed_list(e->value, cfg.where(*e)).at(0);
  }
  if (const auto* e = get("dataset", "path")) {
    spec.dataset.path = e->value;
  }
  if (const auto* e = get("dataset", "column")) {
    spec.dataset.column = e->value == "last"
                              ? mdfr::last_column
                              : static_cast<std::size_t>(parse_integer(e->value, cfg.where(*e)));
  }
  if (const auto* e = get("dataset", "year")) {
    spec.dataset.year = static_cast<int>(parse_integer(e->value, cfg.where(*e)));
  }
  if (const auto* e = get("dataset", "metric_domain")) {
    if (e->value == "original") {
      spec.dataset.domain = MetricDomain::original;
    } else if (e->value == "normalized") {
      spec.dataset.domain = MetricDomain::normalized;
    } else {
      throw InvalidArgument(cfg.where(*e) + ": metric_domain is 'original' or 'normalized'");
    }
  }

  if (const auto* e = get("model", "kind")) {
    spec.model = parse_model(e->value);
  }
  if (!spec.use_published_point()) {
    spec.grid = ParamGrid::single(ParamPoint{});
    spec.grid.a.clear();
    spec.grid.beta.clear();
  }
  size_key("model", "nodes", spec.nodes);
  size_key("model", "washout", spec.washout);
  if (const auto* e = get("model", "b")) {
    spec.b = parse_real(e->value, cfg.where(*e));
  }
  if (const auto* e = get("model", "theta")) {
    spec.theta = parse_real(e->value, cfg.where(*e));
  }
  const auto list_key = [&](const char* key, std::vector<double>& dst) {
    if (const auto* e = get("model", key)) {
      dst = parse_real_list(e->value, cfg.where(*e));
    }
  };
  list_key("a", spec.grid.a);
  list_key("alpha", spec.grid.alpha);
  list_key("beta", spec.grid.beta);
  list_key("gamma", spec.grid.gamma);
  list_key("eta", spec.grid.eta);
  list_key("p", spec.grid.p);
  const bool needs_a = spec.model == ModelKind::identity_dfr || spec.model == ModelKind::tanh_dfr;
  if (spec.grid.beta.empty() || (needs_a && spec.grid.a.empty())) {
    throw InvalidArgument(cfg.origin() + ": parameter grid is empty (no published point for " +
                          spec.dataset.name() + " / " + to_string(spec.model) + ")");
  }
  if (const auto* e = get("model", "a_shifts")) {
    spec.grid.a_shifts = parse_shift_list(e->value, cfg.where(*e));
  }
  if (const auto* e = get("model", "b_shifts")) {
    spec.b_shifts = parse_shift_set(e->value, cfg.where(*e));
  }
  if (const auto* e = get("model", "reservoir_bits")) {
    spec.format.reservoir_bits = static_cast<int>(parse_integer(e->value, cfg.where(*e)));
  }
  if (const auto* e = get("model", "output_bits")) {
    spec.format.output_bits = static_cast<int>(parse_integer(e->value, cfg.where(*e)));
  }
  if (const auto* e = get("model", "weight_frac_bits")) {
    spec.weight_frac_bits = static_cast<int>(parse_integer(e->value, cfg.where(*e)));
  }
  if (const auto* e = get("model", "rescale_beta")) {
    spec.rescale_beta = parse_bool(e->value, cfg.where(*e));
  }

  if (const auto* e = get("run", "seeds")) {
    spec.seeds = parse_seed_list(e->value, cfg.where(*e));
  }
  if (const auto* e = get("run", "jobs")) {
    const long long j = parse_integer(e->value, cfg.where(*e));
    spec.jobs = static_cast<unsigned>(std::max(1LL, j));
  }
  if (const auto* e = get("run", "validation_fraction")) {
    spec.validation_fraction = parse_real(e->value, cfg.where(*e));
  }
  cfg.check_all_used();
  spec.validate();
  return spec;
}

} // namespace mdfr::harness
