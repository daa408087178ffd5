#pragma once

// Summaries of result files: per-dataset/model score tables (mean and min
// over seeds), and log-ratio bar data against the published baseline.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mdfr/errors.hpp"
#include "mdfr/harness.hpp"
#include "mdfr/presets.hpp"

namespace mdfr::report {

/// log10(rmse_ref / rmse): positive when the reservoir beats the reference.
inline double log_ratio(double rmse_ref, double rmse) {
  if (!(rmse_ref > 0.0) || !(rmse > 0.0)) {
    throw InvalidArgument("log_ratio: RMSE values must be positive");
  }
  return std::log10(rmse_ref / rmse);
}

/// Published baseline RMSE for a dataset, if the dataset has one.
inline std::optional<double> moicbls_rmse(std::string_view dataset) {
  const auto* r = presets::reference_for(dataset);
  if (!r || r->moicbls == 0.0) {
    return std::nullopt;
  }
  return r->moicbls;
}

inline std::optional<double> published_rmse(std::string_view dataset, std::string_view model) {
  const auto* r = presets::reference_for(dataset);
  if (!r) {
    return std::nullopt;
  }
  if (model == "mg_dfr") return r->mg_dfr;
  if (model == "identity_dfr") return r->identity_dfr;
  if (model == "tanh_dfr") return r->tanh_dfr;
  return std::nullopt;
}

struct Summary {
  std::string dataset;
  std::string model;
  std::size_t point = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double rmse_mean = std::nan("");
  double rmse_min = std::nan("");
  double mae_mean = std::nan("");
  double mae_min = std::nan("");
  double nrmse_mean = std::nan("");
};

/// One summary per (dataset, model): the point with the lowest mean RMSE.
inline std::vector<Summary> summarize(const std::vector<harness::ResultRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::size_t>, Summary> acc;
  for (const auto& r : rows) {
    auto& s = acc[{r.dataset, r.model, r.point}];
    s.dataset = r.dataset;
    s.model = r.model;
    s.point = r.point;
    if (!r.ok()) {
      ++s.failed;
      continue;
    }
    const double n = static_cast<double>(s.ok);
    const auto running_mean = [n](double mean, double v) {
      return std::isnan(mean) ? v : (mean * n + v) / (n + 1.0);
    };
    s.rmse_mean = running_mean(s.rmse_mean, r.rmse);
    s.mae_mean = running_mean(s.mae_mean, r.mae);
    s.nrmse_mean = running_mean(s.nrmse_mean, r.nrmse);
    s.rmse_min = std::isnan(s.rmse_min) ? r.rmse : std::min(s.rmse_min, r.rmse);
    s.mae_min = std::isnan(s.mae_min) ? r.mae : std::min(s.mae_min, r.mae);
    ++s.ok;
  }
  std::map<std::pair<std::string, std::string>, Summary> best;
  for (const auto& [key, s] : acc) {
    const auto k = std::make_pair(s.dataset, s.model);
    auto it = best.find(k);
    if (it == best.end()) {
      best.emplace(k, s);
      continue;
    }
    const bool better = !std::isnan(s.rmse_mean) &&
                        (std::isnan(it->second.rmse_mean) || s.rmse_mean < it->second.rmse_mean);
    if (better) {
      it->second = s;
    }
  }
  std::vector<Summary> out;
  for (const auto& [k, s] : best) {
    out.push_back(s);
  }
  return out;
}

namespace detail {

inline std::string sci(double v) {
  if (std::isnan(v)) {
    return "-";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) {
    throw IngestionError("cannot open " + p.string() + " for writing");
  }
  return out;
}

} // namespace detail

/// summary.csv: dataset,model,point,ok,failed,rmse_mean,rmse_min,mae_mean,mae_min,nrmse_mean,published_rmse
inline void write_summary_csv(const std::vector<Summary>& s, const std::filesystem::path& p) {
  auto out = detail::open_out(p);
  out << "dataset,model,point,ok,failed,rmse_mean,rmse_min,mae_mean,mae_min,nrmse_mean,"
         "published_rmse\n";
  char buf[512];
  for (const auto& r : s) {
    const auto pub = published_rmse(r.dataset, r.model);
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%zu,%.10e,%.10e,%.10e,%.10e,%.10e,%s\n",
                  r.dataset.c_str(), r.model.c_str(), r.point, r.ok, r.failed, r.rmse_mean,
                  r.rmse_min, r.mae_mean, r.mae_min, r.nrmse_mean,
                  pub ? detail::sci(*pub).c_str() : "");
    out << buf;
  }
}

/// Markdown table with datasets as rows and models as column groups.
inline void write_table_md(const std::vector<Summary>& s, const std::filesystem::path& p) {
  auto out = detail::open_out(p);
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  std::map<std::pair<std::string, std::string>, const Summary*> cell;
  for (const auto& r : s) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) {
      models.push_back(r.model);
    }
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
    cell[{r.dataset, r.model}] = &r;
  }
  out << "| dataset | MOICBLS RMSE |";
  for (const auto& m : models) {
    out << " " << m << " RMSE mean | " << m << " RMSE min | " << m << " MAE mean | " << m
        << " published |";
  }
  out << "\n|---|---|";
  for (std::size_t i = 0; i < models.size(); ++i) {
    out << "---|---|---|---|";
  }
  out << "\n";
  for (const auto& d : datasets) {
    const auto ref = moicbls_rmse(d);
    out << "| " << d << " | " << (ref ? detail::sci(*ref) : "-") << " |";
    for (const auto& m : models) {
      const auto it = cell.find({d, m});
      const auto pub = published_rmse(d, m);
      if (it == cell.end()) {
        out << " - | - | - | - |";
        continue;
      }
      out << " " << detail::sci(it->second->rmse_mean) << " | "
          << detail::sci(it->second->rmse_min) << " | " << detail::sci(it->second->mae_mean)
          << " | " << (pub ? detail::sci(*pub) : "-") << " |";
    }
    out << "\n";
  }
}

/// log_ratio.csv: dataset,model,rmse,rmse_ref,log10_ratio, for datasets with a
/// published baseline.
inline void write_log_ratio_csv(const std::vector<Summary>& s, const std::filesystem::path& p) {
  auto out = detail::open_out(p);
  out << "dataset,model,rmse,rmse_ref,log10_ratio\n";
  char buf[256];
  for (const auto& r : s) {
    const auto ref = moicbls_rmse(r.dataset);
    if (!ref || !(r.rmse_mean > 0.0)) {
      continue;
    }
    std::snprintf(buf, sizeof buf, "%s,%s,%.10e,%.10e,%.6f\n", r.dataset.c_str(), r.model.c_str(),
                  r.rmse_mean, *ref, log_ratio(*ref, r.rmse_mean));
    out << buf;
  }
}

/// Writes summary.csv, table.md and log_ratio.csv into `dir`.
inline std::vector<Summary> write_report(const std::vector<harness::ResultRow>& rows,
                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto s = summarize(rows);
  write_summary_csv(s, dir / "summary.csv");
  write_table_md(s, dir / "table.md");
  write_log_ratio_csv(s, dir / "log_ratio.csv");
  return s;
}

} // namespace mdfr::report
