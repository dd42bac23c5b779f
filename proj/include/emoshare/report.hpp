#pragma once

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "emoshare/evaluation.hpp"

namespace emoshare {

// Plain table with left-aligned first column, right-aligned numbers.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }

  std::string aligned() const {
    std::vector<std::size_t> width(header.size(), 0);
    auto widen = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
    };
    widen(header);
    for (const auto& r : rows) widen(r);
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      std::string out;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const std::string pad(width[i] - r[i].size(), ' ');
        if (i > 0) out += "  ";
        out += i < 2 ? r[i] + pad : pad + r[i];
      }
      while (!out.empty() && out.back() == ' ') out.pop_back();
      os << out << '\n';
    };
    line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    for (const auto& r : rows) line(r);
    return os.str();
  }
};

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string signed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f", v);
  return buf;
}

// Per-emotion rho for every (kind, architecture) cell, plus the baseline row.
inline TextTable rho_grid(const std::vector<EvaluationReport>& cells, const BaselineTable* baseline = nullptr) {
  TextTable t;
  t.header = {"features", "model"};
  for (auto e : all_emotions()) t.header.emplace_back(e.name());
  t.header.emplace_back("Average");
  for (const auto& c : cells) {
    std::vector<std::string> row = {c.feature_kind.name(), to_string(c.architecture)};
    for (double v : c.per_emotion_rho) row.push_back(fixed3(v));
    row.push_back(fixed3(c.average_rho));
    t.rows.push_back(std::move(row));
  }
  if (baseline) {
    std::vector<std::string> row = {baseline->name, ""};
    for (double v : baseline->rho) row.push_back(fixed3(v));
    row.push_back(fixed3(baseline->average()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct SummaryRow {
  std::string features;
  std::string model;  // architecture, or "best" under best_per_emotion
  double average_rho = 0.0;
  double baseline_average = 0.0;
  double percent_change = 0.0;
};

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

// Average rho against the baseline average. per_arch gives one row per
// cell; best_per_emotion takes, per feature kind, the best architecture
// for each emotion before averaging. Percent change uses the averages as
// printed (3 decimals) so every row is self-consistent.
inline std::vector<SummaryRow> summarize(const std::vector<EvaluationReport>& cells, const BaselineTable& baseline,
                                         Aggregation rule) {
  std::vector<SummaryRow> rows;
  const double b = baseline.average();
  auto row = [&](std::string features, std::string model, double a) {
    return SummaryRow{std::move(features), std::move(model), a, b, percent_change(round3(a), round3(b))};
  };
  if (rule == Aggregation::per_arch) {
    for (const auto& c : cells) rows.push_back(row(c.feature_kind.name(), to_string(c.architecture), c.average_rho));
    return rows;
  }
  std::vector<std::string> kinds;
  for (const auto& c : cells)
    if (std::find(kinds.begin(), kinds.end(), c.feature_kind.name()) == kinds.end()) kinds.push_back(c.feature_kind.name());
  for (const auto& k : kinds) {
    std::vector<EmotionValues> per;
    for (const auto& c : cells)
      if (c.feature_kind.name() == k) per.push_back(c.per_emotion_rho);
    const double a = mean_of(best_per_emotion(per));
    rows.push_back(row(k, "best", a));
  }
  return rows;
}

inline TextTable summary_table(const std::vector<SummaryRow>& rows, Aggregation rule) {
  TextTable t;
  t.header = {"features", "model", "average_rho", "baseline_average_rho", "percent_change"};
  for (const auto& r : rows)
    t.rows.push_back({r.features, r.model, fixed3(r.average_rho), fixed3(r.baseline_average), signed1(r.percent_change)});
  t.rows.push_back({"aggregation: " + to_string(rule), "", "", "", ""});
  return t;
}

}  // namespace emoshare
