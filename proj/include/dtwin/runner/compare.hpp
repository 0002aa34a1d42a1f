#ifndef DTWIN_RUNNER_COMPARE_HPP
#define DTWIN_RUNNER_COMPARE_HPP

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtwin/errors.hpp"
#include "dtwin/runner/csv.hpp"

namespace dtwin::runner {

struct VariantSummary {
  std::string variant;
  CsvTable table;
};

struct ComparisonRow {
  std::string parameter;
  std::string variant;
  int individuals = 0;
  int with_truth = 0;
  int covered = 0;
  double mean_width = 0.0;
  double width_ratio = std::numeric_limits<double>::quiet_NaN();  // vs indep_delta
};

/// Variant name from a `summary_<variant>.csv` path.
inline std::string variant_from_path(const std::string& path) {
  const std::string stem = std::filesystem::path(path).stem().string();
  const std::string prefix = "summary_";
  if (stem.rfind(prefix, 0) != 0 || stem.size() == prefix.size()) {
    throw config_error("expected summary_<variant>.csv, got '" + path + "'");
  }
  return stem.substr(prefix.size());
}

/// Expand directories to the summary files they contain, sorted by name.
inline std::vector<std::string> summary_files(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (std::filesystem::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : std::filesystem::directory_iterator(in)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("summary_", 0) == 0 && e.path().extension() == ".csv") {
          found.push_back(e.path().string());
        }
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(in);
    }
  }
  return out;
}

inline std::vector<VariantSummary> load_summaries(const std::vector<std::string>& files) {
  std::vector<VariantSummary> out;
  for (const auto& f : files) {
    try {
      out.push_back({variant_from_path(f), read_csv(f)});
    } catch (const config_error&) {
      throw;
    } catch (const std::exception& e) {
      throw config_error(f + ": " + e.what());
    }
  }
  return out;
}

/**
 * Coverage counts and mean 95% interval widths per parameter and variant,
 * with width ratios against indep_delta. Throws config_error when the
 * summaries disagree on a true value.
 */
inline std::vector<ComparisonRow> compare(const std::vector<VariantSummary>& summaries) {
  if (summaries.size() < 2) throw config_error("compare needs at least two summaries");
  std::map<std::pair<std::string, std::string>, std::pair<std::string, std::string>> truth;
  std::vector<std::string> params;
  std::vector<ComparisonRow> rows;

  for (const auto& s : summaries) {
    const CsvTable& t = s.table;
    std::size_t ci, cp, clo, chi, ct, cc;
    try {
      ci = t.column("individual");
      cp = t.column("parameter");
      clo = t.column("q2.5");
      chi = t.column("q97.5");
      ct = t.column("truth");
      cc = t.column("covered");
    } catch (const std::exception& e) {
      throw config_error("summary_" + s.variant + ".csv: " + e.what());
    }
    std::map<std::string, ComparisonRow> per;
    for (const auto& r : t.rows) {
      const auto key = std::make_pair(r[ci], r[cp]);
      auto [it, fresh] = truth.try_emplace(key, r[ct], s.variant);
      if (!fresh && it->second.first != r[ct]) {
        throw config_error("mismatched truth for individual " + r[ci] + " parameter " + r[cp] +
                           ": " + it->second.second + " has '" + it->second.first + "', " +
                           s.variant + " has '" + r[ct] + "'");
      }
      ComparisonRow& row = per[r[cp]];
      if (row.individuals == 0) {
        row.parameter = r[cp];
        row.variant = s.variant;
        if (std::find(params.begin(), params.end(), r[cp]) == params.end()) params.push_back(r[cp]);
      }
      ++row.individuals;
      row.mean_width += parse_double(r[chi]) - parse_double(r[clo]);
      if (!r[ct].empty()) {
        ++row.with_truth;
        row.covered += r[cc] == "true";
      }
    }
    for (auto& [name, row] : per) {
      row.mean_width /= row.individuals;
      rows.push_back(row);
    }
  }

  for (auto& row : rows) {
    for (const auto& ref : rows) {
      if (ref.variant == "indep_delta" && ref.parameter == row.parameter) {
        row.width_ratio = row.mean_width / ref.mean_width;
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    const auto ia = std::find(params.begin(), params.end(), a.parameter) - params.begin();
    const auto ib = std::find(params.begin(), params.end(), b.parameter) - params.begin();
    return ia < ib;
  });
  return rows;
}

inline const ComparisonRow* find_row(const std::vector<ComparisonRow>& rows,
                                     const std::string& parameter, const std::string& variant) {
  for (const auto& r : rows)
    if (r.parameter == parameter && r.variant == variant) return &r;
  return nullptr;
}

inline CsvTable comparison_table(const std::vector<ComparisonRow>& rows) {
  CsvTable t{{"parameter", "variant", "individuals", "with_truth", "covered", "mean_width",
              "width_ratio_vs_indep_delta"},
             {}};
  for (const auto& r : rows) {
    t.rows.push_back({r.parameter, r.variant, std::to_string(r.individuals),
                      std::to_string(r.with_truth), std::to_string(r.covered),
                      format_double(r.mean_width), format_double(r.width_ratio)});
  }
  return t;
}

}  // namespace dtwin::runner

#endif  // DTWIN_RUNNER_COMPARE_HPP
