#pragma once

// Line-oriented experiment configuration:
//
//   # comment
//   [section]
//   key = value
//
// Values are scalars, comma-separated lists, or generators
// logspace(lo, hi, n) / linspace(lo, hi, n). Shift sets are three integers
// separated by commas; several sets are separated by ';'.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mdfr/dynsys.hpp"
#include "mdfr/errors.hpp"
#include "mdfr/fxp.hpp"

namespace mdfr::config {

struct Entry {
  std::string value;
  std::size_t line = 0;
  mutable bool used = false;
};

class ConfigFile {
public:
  static ConfigFile parse(std::istream& in, const std::string& origin = "<config>") {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::string section;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      const auto hash = line.find('#');
      std::string_view body = mdfr::detail::trim(std::string_view(line).substr(0, hash));
      if (body.empty()) {
        continue;
      }
      if (body.front() == '[') {
        if (body.back() != ']' || body.size() < 3) {
          throw InvalidArgument(origin + ":" + std::to_string(row) + ": malformed section header");
        }
        section = std::string(mdfr::detail::trim(body.substr(1, body.size() - 2)));
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw InvalidArgument(origin + ":" + std::to_string(row) + ": expected key = value");
      }
      const std::string key(mdfr::detail::trim(body.substr(0, eq)));
      if (key.empty()) {
        throw InvalidArgument(origin + ":" + std::to_string(row) + ": empty key");
      }
      auto& slot = cfg.sections_[section][key];
      if (slot.line != 0) {
        throw InvalidArgument(origin + ":" + std::to_string(row) + ": duplicate key '" + key + "'");
      }
      slot.value = std::string(mdfr::detail::trim(body.substr(eq + 1)));
      slot.line = row;
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw IngestionError("cannot open config " + path);
    }
    return parse(in, path);
  }

  const Entry* find(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) {
      return nullptr;
    }
    const auto k = s->second.find(key);
    if (k == s->second.end()) {
      return nullptr;
    }
    k->second.used = true;
    return &k->second;
  }

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  /// Throws on any key that was never looked up (catches typos).
  void check_all_used() const {
    for (const auto& [section, keys] : sections_) {
      for (const auto& [key, entry] : keys) {
        if (!entry.used) {
          throw InvalidArgument(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" +
                                key + "' in section [" + section + "]");
        }
      }
    }
  }

  const std::string& origin() const { return origin_; }

  std::string where(const Entry& e) const { return origin_ + ":" + std::to_string(e.line); }

private:
  std::string origin_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
};

inline double parse_real(std::string_view text, const std::string& where) {
  double v = 0.0;
  if (!mdfr::detail::parse_double(text, v)) {
    throw InvalidArgument(where + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

inline long long parse_integer(std::string_view text, const std::string& where) {
  const double v = parse_real(text, where);
  if (std::floor(v) != v) {
    throw InvalidArgument(where + ": expected an integer, got '" + std::string(text) + "'");
  }
  return static_cast<long long>(v);
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(mdfr::detail::trim(s.substr(start, pos == s.npos ? s.npos : pos - start)));
    if (pos == s.npos) {
      break;
    }
    start = pos + 1;
  }
  return parts;
}

/// "v", "v1, v2, ...", "logspace(lo, hi, n)" or "linspace(lo, hi, n)".
inline std::vector<double> parse_real_list(std::string_view text, const std::string& where) {
  text = mdfr::detail::trim(text);
  for (const std::string_view fn : {std::string_view("logspace"), std::string_view("linspace")}) {
    if (text.substr(0, fn.size()) != fn) {
      continue;
    }
    auto rest = mdfr::detail::trim(text.substr(fn.size()));
    if (rest.size() < 2 || rest.front() != '(' || rest.back() != ')') {
      throw InvalidArgument(where + ": malformed " + std::string(fn) + "(lo, hi, n)");
    }
    const auto args = split_on(rest.substr(1, rest.size() - 2), ',');
    if (args.size() != 3) {
      throw InvalidArgument(where + ": " + std::string(fn) + " takes three arguments");
    }
    const double lo = parse_real(args[0], where);
    const double hi = parse_real(args[1], where);
    const long long n = parse_integer(args[2], where);
    if (n < 1) {
      throw InvalidArgument(where + ": point count must be >= 1");
    }
    const bool log = fn == "logspace";
    if (log && !(lo > 0.0 && hi > 0.0)) {
      throw InvalidArgument(where + ": logspace bounds must be positive");
    }
    std::vector<double> out(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      out[static_cast<std::size_t>(i)] =
          log ? std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)))
              : lo + t * (hi - lo);
    }
    // Pin the endpoints exactly.
    out.front() = lo;
    out.back() = n == 1 ? lo : hi;
    return out;
  }
  std::vector<double> out;
  for (const auto part : split_on(text, ',')) {
    out.push_back(parse_real(part, where));
  }
  return out;
}

inline fxp::ShiftSet parse_shift_set(std::string_view text, const std::string& where) {
  text = mdfr::detail::trim(text);
  if (!text.empty() && text.front() == '{' && text.back() == '}') {
    text = text.substr(1, text.size() - 2);
  }
  const auto parts = split_on(text, ',');
  if (parts.size() != 3) {
    throw InvalidArgument(where + ": a shift set has exactly three amounts");
  }
  fxp::ShiftSet s;
  for (std::size_t i = 0; i < 3; ++i) {
    s.shifts[i] = static_cast<int>(parse_integer(parts[i], where));
  }
  return s;
}

inline std::vector<fxp::ShiftSet> parse_shift_list(std::string_view text, const std::string& where) {
  std::vector<fxp::ShiftSet> out;
  for (const auto part : split_on(text, ';')) {
    out.push_back(parse_shift_set(part, where));
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(std::string_view text, const std::string& where) {
  std::vector<std::uint64_t> out;
  for (const auto part : split_on(text, ',')) {
    const long long v = parse_integer(part, where);
    if (v < 0) {
      throw InvalidArgument(where + ": seeds must be nonnegative");
    }
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

inline bool parse_bool(std::string_view text, const std::string& where) {
  text = mdfr::detail::trim(text);
  if (text == "true" || text == "yes" || text == "1" || text == "on") {
    return true;
  }
  if (text == "false" || text == "no" || text == "0" || text == "off") {
    return false;
  }
  throw InvalidArgument(where + ": expected a boolean, got '" + std::string(text) + "'");
}

} // namespace mdfr::config
