#pragma once

// Bit-exact integer model of the identity reservoir datapath: sign-inverting
// mask, shift-add constant multipliers, saturating adders, and an integer
// multiply-accumulate readout.
//
// Scaling conventions for an r-bit reservoir and an o-bit output layer:
//   input  1.0 -> l = 2^(r-2)
//   target 1.0 -> m = 2^(o-1)
// Signed words saturate at +/-(2^(bits-1) - 1).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mdfr/errors.hpp"
#include "mdfr/mask.hpp"
#include "mdfr/readout.hpp"
#include "mdfr/reservoir.hpp"

namespace mdfr::fxp {

using Word = std::int64_t;
using Wide = __int128;

struct FxpFormat {
  int reservoir_bits = 16;
  int output_bits = 21;

  void validate() const {
    if (reservoir_bits < 4 || reservoir_bits > 48) {
      throw InvalidArgument("fxp: reservoir_bits must lie in [4, 48]");
    }
    if (output_bits < reservoir_bits || output_bits > 63) {
      throw InvalidArgument("fxp: output_bits must lie in [reservoir_bits, 63]");
    }
  }

  Word input_scale() const { return Word{1} << (reservoir_bits - 2); }
  Word output_scale() const { return Word{1} << (output_bits - 1); }
  Word reservoir_max() const { return (Word{1} << (reservoir_bits - 1)) - 1; }
  Word output_max() const { return (Word{1} << (output_bits - 1)) - 1; }
};

/// Multiplication by 2^-s1 + 2^-s2 + 2^-s3 as three arithmetic right shifts.
struct ShiftSet {
  std::array<int, 3> shifts{1, 2, 4};

  double coefficient() const {
    double c = 0.0;
    for (int s : shifts) {
      c += std::ldexp(1.0, -s);
    }
    return c;
  }

  void validate(int word_bits) const {
    for (int s : shifts) {
      if (s < 0 || s >= word_bits) {
        throw InvalidArgument("fxp: shift amounts must lie in [0, reservoir_bits)");
      }
    }
    if (!(coefficient() < 1.0)) {
      throw InvalidArgument("fxp: shift set coefficient must be below 1");
    }
  }

  std::string describe() const {
    std::ostringstream os;
    os << "{" << shifts[0] << ";" << shifts[1] << ";" << shifts[2] << "}";
    return os.str();
  }

  bool operator==(const ShiftSet&) const = default;
};

/// Saturation events, per datapath stage.
struct SaturationCounts {
  std::uint64_t input = 0;
  std::uint64_t reservoir = 0;
  std::uint64_t weights = 0;
  std::uint64_t accumulator = 0;
  std::uint64_t output = 0;

  std::uint64_t total() const { return input + reservoir + weights + accumulator + output; }
};

namespace detail {

inline Word saturate(Wide v, Word max, std::uint64_t& counter) {
  if (v > max) {
    ++counter;
    return max;
  }
  if (v < -max) {
    ++counter;
    return -max;
  }
  return static_cast<Word>(v);
}

inline Word round_half_away(long double v) {
  return static_cast<Word>(v < 0 ? -std::floor(-v + 0.5L) : std::floor(v + 0.5L));
}

} // namespace detail

/// round(u * 2^(r-2)), half away from zero, saturated to the reservoir word.
inline std::vector<Word> quantize_input(std::span<const double> u, const FxpFormat& fmt,
                                        SaturationCounts& sat) {
  fmt.validate();
  const long double scale = static_cast<long double>(fmt.input_scale());
  std::vector<Word> out(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!std::isfinite(u[k])) {
      throw InvalidArgument("quantize_input: non-finite sample");
    }
    const long double scaled = static_cast<long double>(u[k]) * scale;
    const long double bound = static_cast<long double>(fmt.reservoir_max());
    if (scaled > bound + 1 || scaled < -bound - 1) {
      ++sat.input;
      out[k] = scaled > 0 ? fmt.reservoir_max() : -fmt.reservoir_max();
      continue;
    }
    out[k] = detail::saturate(detail::round_half_away(scaled), fmt.reservoir_max(), sat.input);
  }
  return out;
}

inline std::vector<Word> quantize_input(std::span<const double> u, const FxpFormat& fmt) {
  SaturationCounts sat;
  return quantize_input(u, fmt, sat);
}

/// (x >> s1) + (x >> s2) + (x >> s3), sign-preserving (floor) shifts.
constexpr Word shift_add_mul(Word x, const ShiftSet& s) {
  return (x >> s.shifts[0]) + (x >> s.shifts[1]) + (x >> s.shifts[2]);
}

/// Exact product by the shift-set coefficient, floored once. Used to check
/// convergence of the datapath towards the floating-point reservoir.
inline Word exact_mul(Word x, const ShiftSet& s) {
  const int top = std::max({s.shifts[0], s.shifts[1], s.shifts[2]});
  Wide k = 0;
  for (int sh : s.shifts) {
    k += Wide{1} << (top - sh);
  }
  const Wide p = static_cast<Wide>(x) * k;
  // Arithmetic shift on a signed 128-bit value floors.
  return static_cast<Word>(p >> top);
}

enum class Multiplier { shift_add, exact };

/// Integer features: N_x node rows plus an augmentation row holding l.
struct FxpFeatures {
  std::size_t n_nodes = 0;
  std::size_t cols = 0;
  Word bias = 0;
  std::vector<Word> data; // column-major, (n_nodes + 1) x cols

  std::size_t rows() const { return n_nodes + 1; }
  Word operator()(std::size_t row, std::size_t col) const { return data[col * rows() + row]; }
  std::span<const Word> column(std::size_t k) const { return {data.data() + k * rows(), rows()}; }

  /// Copy of columns [begin, end).
  FxpFeatures columns(std::size_t begin, std::size_t end) const {
    if (begin > end || end > cols) {
      throw InvalidArgument("FxpFeatures::columns: range out of bounds");
    }
    FxpFeatures out{n_nodes, end - begin, bias, {}};
    out.data.assign(data.begin() + static_cast<std::ptrdiff_t>(begin * rows()),
                    data.begin() + static_cast<std::ptrdiff_t>(end * rows()));
    return out;
  }

  bool operator==(const FxpFeatures&) const = default;
};

/// Per-node callback (k, n, value), with 1-based step and node indices.
using TraceSink = std::function<void(std::size_t, std::size_t, Word)>;

struct FxpRunOptions {
  std::size_t washout = 0;
  Multiplier multiplier = Multiplier::shift_add;
  TraceSink trace;
};

/// Integer identity reservoir. Per node:
///   new[n] = sat(B*(chain) + A*(sat(prev[n] + mask[n] * u)))
/// with chain = prev[N-1] for n = 0 and new[n-1] otherwise, and the two
/// constant products realised by shift-add multipliers.
inline FxpFeatures fxp_run(std::span<const Word> u, const Mask& mask, const ShiftSet& a_shifts,
                           const ShiftSet& b_shifts, const FxpFormat& fmt, SaturationCounts& sat,
                           const FxpRunOptions& opts = {}) {
  fmt.validate();
  a_shifts.validate(fmt.reservoir_bits);
  b_shifts.validate(fmt.reservoir_bits);
  if (mask.size() == 0) {
    throw InvalidArgument("fxp_run: empty mask");
  }
  if (u.empty()) {
    throw InvalidArgument("fxp_run: empty input series");
  }
  if (opts.washout >= u.size()) {
    throw InvalidArgument("fxp_run: washout must be smaller than the series length");
  }
  const std::size_t n_nodes = mask.size();
  const Word max = fmt.reservoir_max();
  const auto mul = [&](Word x, const ShiftSet& s) {
    return opts.multiplier == Multiplier::shift_add ? shift_add_mul(x, s) : exact_mul(x, s);
  };

  FxpFeatures out;
  out.n_nodes = n_nodes;
  out.cols = u.size() - opts.washout;
  out.bias = fmt.input_scale();
  out.data.assign(out.rows() * out.cols, 0);

  std::vector<Word> prev(n_nodes, 0);
  std::vector<Word> next(n_nodes, 0);
  for (std::size_t k = 0; k < u.size(); ++k) {
    Word chain = prev[n_nodes - 1];
    for (std::size_t n = 0; n < n_nodes; ++n) {
      const Word j = mask[n] > 0 ? u[k] : -u[k];
      const Word injected = detail::saturate(Wide{prev[n]} + j, max, sat.reservoir);
      const Wide sum = Wide{mul(chain, b_shifts)} + mul(injected, a_shifts);
      next[n] = detail::saturate(sum, max, sat.reservoir);
      chain = next[n];
      if (opts.trace) {
        opts.trace(k + 1, n + 1, next[n]);
      }
    }
    if (k >= opts.washout) {
      Word* col = out.data.data() + (k - opts.washout) * out.rows();
      std::copy(next.begin(), next.end(), col);
      col[n_nodes] = out.bias;
    }
    std::swap(prev, next);
  }
  return out;
}

inline FxpFeatures fxp_run(std::span<const Word> u, const Mask& mask, const ShiftSet& a_shifts,
                           const ShiftSet& b_shifts, const FxpFormat& fmt) {
  SaturationCounts sat;
  return fxp_run(u, mask, a_shifts, b_shifts, fmt, sat);
}

/// Features as reals in integer units (no rescaling), for offline training.
inline FeatureMatrix<double> to_feature_matrix(const FxpFeatures& x) {
  FeatureMatrix<double> out(x.n_nodes, x.cols, static_cast<double>(x.bias));
  for (std::size_t k = 0; k < x.cols; ++k) {
    auto col = out.column(k);
    const auto src = x.column(k);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      col[i] = static_cast<double>(src[i]);
    }
  }
  return out;
}

/// Writes a `k,n,value` trace file; returns a sink for FxpRunOptions::trace.
class TraceFile {
public:
  explicit TraceFile(const std::string& path) : out_(path) {
    if (!out_) {
      throw IngestionError("cannot open " + path + " for writing");
    }
    out_ << "k,n,value\n";
  }

  TraceSink sink() {
    return [this](std::size_t k, std::size_t n, Word v) { out_ << k << ',' << n << ',' << v << '\n'; };
  }

private:
  std::ofstream out_;
};

struct QuantizedReadout {
  std::vector<Word> weights;
  int frac_bits = 0;
};

/// round(w * 2^frac_bits), saturated to the output word. frac_bits < 0 selects
/// the largest value (up to 62) at which no weight saturates.
inline QuantizedReadout quantize_readout(const ReadoutModel<double>& model, const FxpFormat& fmt,
                                         int frac_bits, SaturationCounts& sat) {
  fmt.validate();
  if (model.weights.empty()) {
    throw InvalidArgument("quantize_readout: empty model");
  }
  double largest = 0.0;
  for (double w : model.weights) {
    if (!std::isfinite(w)) {
      throw InvalidArgument("quantize_readout: non-finite weight");
    }
    largest = std::max(largest, std::abs(w));
  }
  const long double limit = static_cast<long double>(fmt.output_max());
  if (frac_bits < 0) {
    frac_bits = 62;
    while (frac_bits > 0 &&
           std::abs(std::ldexp(static_cast<long double>(largest), frac_bits)) + 0.5L > limit) {
      --frac_bits;
    }
  }
  QuantizedReadout q;
  q.frac_bits = frac_bits;
  q.weights.resize(model.weights.size());
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    const long double scaled = std::ldexp(static_cast<long double>(model.weights[i]), frac_bits);
    if (std::abs(scaled) > limit + 0.5L) {
      ++saturated;
      ++sat.weights;
      q.weights[i] = scaled > 0 ? fmt.output_max() : -fmt.output_max();
    } else {
      q.weights[i] = detail::saturate(detail::round_half_away(scaled), fmt.output_max(), sat.weights);
    }
  }
  if (saturated == model.weights.size() && largest > 0.0) {
    throw QuantizationFailure("quantize_readout: every weight saturates at " +
                              std::to_string(frac_bits) + " fractional bits");
  }
  return q;
}

inline QuantizedReadout quantize_readout(const ReadoutModel<double>& model, const FxpFormat& fmt,
                                         int frac_bits = -1) {
  SaturationCounts sat;
  return quantize_readout(model, fmt, frac_bits, sat);
}

/// Integer multiply-accumulate in a 2*o-bit accumulator, shifted down by the
/// weight fractional bits into the o-bit output word, then divided by m to
/// return predictions in the normalised target domain.
inline std::vector<double> fxp_predict(const QuantizedReadout& w, const FxpFeatures& x,
                                       const FxpFormat& fmt, SaturationCounts& sat) {
  fmt.validate();
  if (w.weights.size() != x.rows()) {
    throw InvalidArgument("fxp_predict: weight length differs from feature dimension");
  }
  const int acc_bits = 2 * fmt.output_bits;
  const Wide acc_max = (Wide{1} << (acc_bits - 1)) - 1;
  const double m = static_cast<double>(fmt.output_scale());
  std::vector<double> y(x.cols);
  for (std::size_t k = 0; k < x.cols; ++k) {
    const auto col = x.column(k);
    Wide acc = 0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      acc += Wide{w.weights[i]} * col[i];
      if (acc > acc_max) {
        ++sat.accumulator;
        acc = acc_max;
      } else if (acc < -acc_max) {
        ++sat.accumulator;
        acc = -acc_max;
      }
    }
    const Wide shifted = acc >> w.frac_bits;
    const Word out = detail::saturate(shifted, fmt.output_max(), sat.output);
    y[k] = static_cast<double>(out) / m;
  }
  return y;
}

inline std::vector<double> fxp_predict(const QuantizedReadout& w, const FxpFeatures& x,
                                       const FxpFormat& fmt) {
  SaturationCounts sat;
  return fxp_predict(w, x, fmt, sat);
}

} // namespace mdfr::fxp
