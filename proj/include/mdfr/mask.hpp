#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mdfr/errors.hpp"

namespace mdfr {

/// Binary input mask. Entry n multiplies the held input sample for virtual
/// node n; every entry is exactly +1 or -1.
class Mask {
public:
  Mask() = default;

  /// Wraps explicit values; throws if any entry is not +1 or -1.
  explicit Mask(std::vector<int> values, std::uint64_t seed = 0) : seed_(seed) {
    if (values.empty()) {
      throw InvalidArgument("mask: must have at least one entry");
    }
    values_.reserve(values.size());
    for (int v : values) {
      if (v != 1 && v != -1) {
        throw InvalidArgument("mask: entries must be +1 or -1");
      }
      values_.push_back(static_cast<std::int8_t>(v));
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  int operator[](std::size_t n) const { return values_[n]; }
  std::span<const std::int8_t> values() const noexcept { return values_; }

  bool operator==(const Mask&) const = default;

private:
  std::vector<std::int8_t> values_;
  std::uint64_t seed_ = 0;
};

/// Deterministic mask from a seed. The generator is std::mt19937_64 (its
/// output sequence is fixed by the standard) seeded with `seed`; entry n is
/// +1 when the top bit of the n-th draw is set and -1 otherwise.
inline Mask make_mask(std::size_t n_nodes, std::uint64_t seed) {
  if (n_nodes == 0) {
    throw InvalidArgument("make_mask: n_nodes must be >= 1");
  }
  std::mt19937_64 engine(seed);
  std::vector<int> values(n_nodes);
  for (auto& v : values) {
    v = (engine() >> 63) != 0 ? 1 : -1;
  }
  return Mask(std::move(values), seed);
}

/// j = mask * u, element-wise.
template <typename Real = double>
std::vector<Real> apply_mask(const Mask& mask, Real u) {
  std::vector<Real> j(mask.size());
  for (std::size_t n = 0; n < mask.size(); ++n) {
    j[n] = mask[n] > 0 ? u : -u;
  }
  return j;
}

} // namespace mdfr
