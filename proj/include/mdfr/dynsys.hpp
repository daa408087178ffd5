#pragma once

// Dataset production: RK4 integration of three chaotic flows, the NARMA10
// benchmark, CSV ingestion, normalisation and train/test pairing.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mdfr/errors.hpp"

namespace mdfr {

using Vec3 = std::array<double, 3>;

enum class OdeKind { lorenz, rossler, chen };

struct OdeSystem {
  OdeKind kind = OdeKind::lorenz;
  Vec3 params{10.0, 8.0 / 3.0, 28.0}; // (a, b, c)
  Vec3 initial{1.0, 0.0, 1.0};

  static OdeSystem lorenz() { return {OdeKind::lorenz, {10.0, 8.0 / 3.0, 28.0}, {1.0, 0.0, 1.0}}; }
  static OdeSystem rossler() { return {OdeKind::rossler, {0.15, 0.2, 10.0}, {1.0, 0.0, 1.0}}; }
  static OdeSystem chen() { return {OdeKind::chen, {40.0, 3.0, 28.0}, {-0.1, 0.5, -0.6}}; }

  Vec3 rhs(const Vec3& s) const {
    const auto [a, b, c] = params;
    const auto [x, y, z] = s;
    switch (kind) {
    case OdeKind::lorenz:
      return {-a * (x - y), -x * z + c * x - y, x * y - b * z};
    case OdeKind::rossler:
      return {-y - z, x + a * y, b + z * (x - c)};
    case OdeKind::chen:
      return {a * (y - x), (c - a) * x - x * z + c * y, x * y - b * z};
    }
    return {0.0, 0.0, 0.0};
  }
};

namespace detail {

inline Vec3 axpy(const Vec3& s, double h, const Vec3& k) {
  return {s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]};
}

} // namespace detail

/// One classical fourth-order Runge-Kutta step.
inline Vec3 rk4_step(const OdeSystem& sys, const Vec3& state, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw InvalidArgument("rk4_step: dt must be positive and finite");
  }
  const Vec3 k1 = sys.rhs(state);
  const Vec3 k2 = sys.rhs(detail::axpy(state, 0.5 * dt, k1));
  const Vec3 k3 = sys.rhs(detail::axpy(state, 0.5 * dt, k2));
  const Vec3 k4 = sys.rhs(detail::axpy(state, dt, k3));
  Vec3 next;
  for (int i = 0; i < 3; ++i) {
    next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!std::isfinite(next[i])) {
      throw NumericOverflow("rk4_step: state diverged", static_cast<std::size_t>(i), 0);
    }
  }
  return next;
}

/// n samples of one state component; sample 0 is the initial condition and
/// each further sample is one rk4_step later.
inline std::vector<double> generate(const OdeSystem& sys, double dt, std::size_t n, int component) {
  if (n < 1) {
    throw InvalidArgument("generate: n must be >= 1");
  }
  if (component < 0 || component > 2) {
    throw InvalidArgument("generate: component must be 0 (x), 1 (y) or 2 (z)");
  }
  std::vector<double> out;
  out.reserve(n);
  Vec3 s = sys.initial;
  out.push_back(s[static_cast<std::size_t>(component)]);
  for (std::size_t k = 1; k < n; ++k) {
    s = rk4_step(sys, s, dt);
    out.push_back(s[static_cast<std::size_t>(component)]);
  }
  return out;
}

inline int component_index(char c) {
  switch (c) {
  case 'x':
    return 0;
  case 'y':
    return 1;
  case 'z':
    return 2;
  default:
    throw InvalidArgument(std::string("unknown state component '") + c + "'");
  }
}

/// Aligned input/target pairs. Columns [0, split_index) train, the rest test.
struct LabeledSeries {
  std::vector<double> inputs;
  std::vector<double> targets;
  double norm_scale = 1.0;   // inputs = original inputs / norm_scale
  double target_scale = 1.0; // targets = original targets / target_scale
  std::size_t split_index = 0;

  std::size_t size() const noexcept { return inputs.size(); }
};

// --- NARMA10 -------------------------------------------------------------

inline constexpr std::size_t narma_order = 10;
inline constexpr std::size_t narma_warmup = 200;

/// Target sequence of the tenth-order NARMA system for the given inputs:
///   d(k+1) = 0.3 d(k) + 0.05 d(k) sum_{i=0}^{9} d(k-i) + 1.5 u(k-9) u(k) + 0.1
/// with zero initial history. Element k of the result is d(k+1), the value
/// that input u(k) first influences.
inline std::vector<double> narma10_targets(std::span<const double> u) {
  std::vector<double> d(u.size() + 1, 0.0);
  for (std::size_t k = 0; k < u.size(); ++k) {
    double window = 0.0;
    for (std::size_t i = 0; i < narma_order && i <= k; ++i) {
      window += d[k - i];
    }
    const double lagged = k >= narma_order - 1 ? u[k - (narma_order - 1)] : 0.0;
    d[k + 1] = 0.3 * d[k] + 0.05 * d[k] * window + 1.5 * lagged * u[k] + 0.1;
  }
  return {d.begin() + 1, d.end()};
}

struct NarmaSeries {
  LabeledSeries series;
  std::uint64_t seed_used = 0;
  int regenerations = 0;
};

namespace detail {

// splitmix64, used only to derive replacement seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace detail

/// NARMA10 instance of length n (after discarding narma_warmup samples).
/// Inputs are i.i.d. uniform on [0, 0.5): u = 0.5 * (draw >> 11) * 2^-53 with
/// draws from std::mt19937_64(seed). A diverging instance (|d| > 10) is
/// regenerated from splitmix64(seed); the substitution is reported in the
/// result. Split defaults to 3/4 of n.
inline NarmaSeries narma10_generate(std::uint64_t seed, std::size_t n) {
  if (n <= narma_warmup) {
    throw InvalidArgument("narma10_generate: n must exceed 200");
  }
  NarmaSeries result;
  std::uint64_t current = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 engine(current);
    std::vector<double> u(n + narma_warmup);
    for (auto& v : u) {
      v = 0.5 * std::ldexp(static_cast<double>(engine() >> 11), -53);
    }
    const std::vector<double> d = narma10_targets(u);
    const bool diverged = std::any_of(d.begin(), d.end(), [](double v) {
      return !std::isfinite(v) || std::abs(v) > 10.0;
    });
    if (!diverged) {
      result.series.inputs.assign(u.begin() + narma_warmup, u.end());
      result.series.targets.assign(d.begin() + narma_warmup, d.end());
      result.series.norm_scale = 1.0;
      result.series.split_index = n * 3 / 4;
      result.seed_used = current;
      result.regenerations = attempt;
      return result;
    }
    current = detail::splitmix64(current);
  }
  throw NumericOverflow("narma10_generate: recurrence diverged for 64 derived seeds", 0, 0);
}

// --- CSV, normalisation, pairing -----------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) {
    return false;
  }
  if (s.front() == '+') {
    s.remove_prefix(1);
  }
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return fields;
}

} // namespace detail

inline constexpr std::size_t last_column = static_cast<std::size_t>(-1);

/// Reads one numeric column (0-based, or last_column) of a comma-separated
/// file. Blank lines and lines starting with '#' are ignored; a first data
/// line whose cell is not numeric is taken as a header.
inline std::vector<double> load_csv(const std::string& path, std::size_t column) {
  std::ifstream in(path);
  if (!in) {
    throw IngestionError("cannot open " + path);
  }
  std::vector<double> values;
  std::string line;
  std::size_t row = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++row;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') {
      continue;
    }
    const auto fields = detail::split_fields(trimmed);
    const std::size_t col = column == last_column ? fields.size() - 1 : column;
    if (col >= fields.size()) {
      throw IngestionError(path + ": row " + std::to_string(row) + " has no column " +
                               std::to_string(column),
                           row);
    }
    double v = 0.0;
    if (!detail::parse_double(fields[col], v)) {
      if (first) {
        first = false;
        continue;
      }
      throw IngestionError(path + ": row " + std::to_string(row) + ": non-numeric cell '" +
                               std::string(detail::trim(fields[col])) + "'",
                           row);
    }
    first = false;
    values.push_back(v);
  }
  if (values.empty()) {
    throw IngestionError(path + ": no numeric rows");
  }
  return values;
}

/// Last n values.
inline std::vector<double> tail(std::span<const double> series, std::size_t n) {
  if (n > series.size()) {
    throw IngestionError("series has " + std::to_string(series.size()) + " values, need " +
                         std::to_string(n));
  }
  return {series.end() - static_cast<std::ptrdiff_t>(n), series.end()};
}

struct Normalized {
  std::vector<double> values;
  double scale = 1.0; // values = original / scale
};

inline double max_abs(std::span<const double> series) {
  double m = 0.0;
  for (double v : series) {
    m = std::max(m, std::abs(v));
  }
  return m;
}

/// Divides by max |u(k)| so the result lies in [-1, 1].
inline Normalized normalize(std::span<const double> series) {
  const double scale = max_abs(series);
  if (!(scale > 0.0)) {
    throw InvalidArgument("normalize: series is identically zero");
  }
  Normalized out{std::vector<double>(series.begin(), series.end()), scale};
  for (auto& v : out.values) {
    v /= scale;
  }
  return out;
}

/// Pairs (u(k), u(k + horizon)). The first train_len pairs form the
/// training split.
inline LabeledSeries split(std::span<const double> series, std::size_t train_len,
                           std::size_t horizon = 1) {
  if (horizon < 1) {
    throw InvalidArgument("split: horizon must be >= 1");
  }
  if (series.size() <= horizon) {
    throw IngestionError("split: series shorter than the prediction horizon");
  }
  const std::size_t pairs = series.size() - horizon;
  if (train_len < 1 || train_len >= pairs) {
    throw InvalidArgument("split: train length must lie strictly inside the series");
  }
  LabeledSeries out;
  out.inputs.assign(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(pairs));
  out.targets.assign(series.begin() + static_cast<std::ptrdiff_t>(horizon), series.end());
  out.split_index = train_len;
  return out;
}

/// Rescales inputs and targets by max |u| over the training inputs only and
/// records the scale.
inline LabeledSeries normalize_by_training(LabeledSeries s) {
  const std::span<const double> train(s.inputs.data(), s.split_index);
  const double scale = max_abs(train);
  if (!(scale > 0.0)) {
    throw InvalidArgument("normalize: training inputs are identically zero");
  }
  for (auto& v : s.inputs) {
    v /= scale;
  }
  for (auto& v : s.targets) {
    v /= scale;
  }
  s.norm_scale *= scale;
  s.target_scale *= scale;
  return s;
}

/// Writes `k,u,d` rows.
inline void write_series_csv(const LabeledSeries& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw IngestionError("cannot open " + path + " for writing");
  }
  out << "k,u,d\n";
  char buf[96];
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k, s.inputs[k], s.targets[k]);
    out << buf;
  }
}

} // namespace mdfr
