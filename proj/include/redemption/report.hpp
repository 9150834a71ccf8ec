#pragma once

// Structured (JSON) and aligned-text renderings of results. Correlations
// are stored in [-1, 1] and displayed x100 with two decimals; scores are
// displayed with four decimals.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "redemption/ablation.hpp"
#include "redemption/calibration.hpp"
#include "redemption/fusion.hpp"
#include "redemption/rank_stats.hpp"

namespace redemption {

inline constexpr std::string_view kToolName = "redemption";
inline constexpr std::string_view kToolVersion = "0.1.0";

using ojson = nlohmann::ordered_json;

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

inline std::string fmt_percent(double tau) { return fmt("%.2f", tau * 100.0); }
inline std::string fmt_score(double v) { return fmt("%.4f", v); }
inline std::string fmt_weight(double v) { return fmt("%.2f", v); }

/// "58.40 ± 0.43, CI [57.60, 59.20]"
inline std::string render_bootstrap(const BootstrapSummary& s) {
  return fmt_percent(s.mean) + " ± " + fmt_percent(s.std_dev) + ", CI [" + fmt_percent(s.ci_low) + ", " +
         fmt_percent(s.ci_high) + "]";
}

// ---------------------------------------------------------------------------
// JSON

inline ojson to_json(const FusionWeights& w) {
  ojson j;
  j["alpha"] = w.alpha();
  j["beta"] = w.beta();
  j["gamma"] = w.gamma();
  j["lambda"] = w.lambda();
  j["numerators"] = {w.numerators()[0], w.numerators()[1], w.numerators()[2]};
  j["weight_den"] = w.weight_den();
  j["lambda_num"] = w.lambda_num();
  j["lambda_den"] = w.lambda_den();
  return j;
}

inline FusionWeights weights_from_json(const nlohmann::json& j) {
  const auto n = j.at("numerators").get<std::array<std::int64_t, 3>>();
  return FusionWeights(n, j.at("weight_den").get<std::int64_t>(), j.at("lambda_num").get<std::int64_t>(),
                       j.at("lambda_den").get<std::int64_t>());
}

inline ojson to_json(const BootstrapSummary& s) {
  ojson j;
  j["runs"] = s.runs;
  j["variant"] = std::string(to_string(s.variant));
  j["seed"] = s.seed;
  j["mean"] = s.mean;
  j["std_dev"] = s.std_dev;
  j["ci_low"] = s.ci_low;
  j["ci_high"] = s.ci_high;
  return j;
}

inline BootstrapSummary bootstrap_from_json(const nlohmann::json& j) {
  BootstrapSummary s;
  s.runs = j.at("runs").get<std::size_t>();
  s.variant = parse_tau_variant(j.at("variant").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.mean = j.at("mean").get<double>();
  s.std_dev = j.at("std_dev").get<double>();
  s.ci_low = j.at("ci_low").get<double>();
  s.ci_high = j.at("ci_high").get<double>();
  return s;
}

inline ojson to_json(const TauResult& r) {
  ojson j;
  j["tau"] = r.tau;
  j["variant"] = std::string(to_string(r.variant));
  j["n"] = r.n;
  j["concordant"] = r.concordant;
  j["discordant"] = r.discordant;
  j["ties_x"] = r.ties_x;
  j["ties_y"] = r.ties_y;
  j["ties_xy"] = r.ties_xy;
  j["m"] = r.m;
  return j;
}

inline ojson to_json(const CalibrationResult& r, bool include_trace) {
  ojson j;
  j["channels"] = selection_name(r.selection);
  j["best"] = to_json(r.best);
  j["best_tau"] = r.best_tau;
  j["p_value"] = r.p_value;
  j["significant"] = r.significant;
  j["mean_score"] = r.mean_score;
  j["best_counts"] = to_json(r.best_result);
  ojson sens = ojson::array();
  for (const auto& nb : r.sensitivity.neighbors) {
    ojson e;
    e["move"] = nb.move;
    e["weights"] = to_json(nb.weights);
    e["tau"] = nb.tau;
    e["delta"] = nb.delta;
    sens.push_back(e);
  }
  j["sensitivity"] = {{"neighbors", sens},
                      {"skipped", r.sensitivity.skipped},
                      {"max_degradation", r.sensitivity.max_degradation}};
  j["grid_points"] = r.grid_trace.size();
  if (include_trace) {
    ojson trace = ojson::array();
    for (const auto& g : r.grid_trace) trace.push_back({{"weights", to_json(g.weights)}, {"tau", g.tau}});
    j["grid_trace"] = trace;
  }
  return j;
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
  CalibrationResult r;
  r.selection = parse_selection(j.at("channels").get<std::string>());
  r.best = weights_from_json(j.at("best"));
  r.best_tau = j.at("best_tau").get<double>();
  r.p_value = j.at("p_value").get<double>();
  r.significant = j.at("significant").get<bool>();
  r.mean_score = j.value("mean_score", 0.0);
  for (const auto& e : j.at("sensitivity").at("neighbors"))
    r.sensitivity.neighbors.push_back(
        {weights_from_json(e.at("weights")), e.at("tau").get<double>(), e.at("delta").get<double>(),
         e.at("move").get<std::string>()});
  r.sensitivity.max_degradation = j.at("sensitivity").value("max_degradation", 0.0);
  return r;
}

inline ojson to_json(const AblationRow& row) {
  ojson j;
  j["label"] = row.label;
  j["combination"] = selection_name(row.combination);
  j["weights"] = to_json(row.weights);
  j["tau"] = row.tau;
  j["p_value"] = row.p_value;
  j["mean_score"] = row.mean_score;
  j["bootstrap"] = row.bootstrap ? to_json(*row.bootstrap) : ojson(nullptr);
  return j;
}

inline AblationRow ablation_row_from_json(const nlohmann::json& j) {
  AblationRow row;
  row.label = j.at("label").get<std::string>();
  row.combination = parse_selection(j.at("combination").get<std::string>());
  row.weights = weights_from_json(j.at("weights"));
  row.tau = j.at("tau").get<double>();
  row.p_value = j.value("p_value", 1.0);
  row.mean_score = j.at("mean_score").get<double>();
  if (auto it = j.find("bootstrap"); it != j.end() && !it->is_null()) row.bootstrap = bootstrap_from_json(*it);
  return row;
}

// ---------------------------------------------------------------------------
// Aligned text tables

class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  [[nodiscard]] std::string str() const {
    std::vector<std::size_t> width(header_.size(), 0);
    auto measure = [&](const std::vector<std::string>& r) {
      for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], display_width(r[c]));
    };
    measure(header_);
    for (const auto& r : rows_) measure(r);
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        const std::string cell = c < r.size() ? r[c] : "";
        out << cell;
        if (c + 1 < width.size()) out << std::string(width[c] - display_width(cell) + 2, ' ');
      }
      out << '\n';
    };
    line(header_);
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    out << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
    for (const auto& r : rows_) line(r);
    return out.str();
  }

 private:
  // Counts UTF-8 code points so "±" and Greek letters align.
  static std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s)
      if ((c & 0xC0) != 0x80) ++n;
    return n;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Columns (α, β, γ, λ, τ, p): the best point, then each sensitivity neighbour.
inline std::string render_calibration_table(const CalibrationResult& r) {
  TextTable t({"point", "α", "β", "γ", "λ", "τ (%)", "p"});
  auto row = [&](const std::string& label, const FusionWeights& w, double tau, const std::string& p) {
    t.add({label, fmt_weight(w.alpha()), fmt_weight(w.beta()), fmt_weight(w.gamma()), fmt_weight(w.lambda()),
           fmt_percent(tau), p});
  };
  row("best", r.best, r.best_tau, fmt("%.3g", r.p_value));
  for (const auto& nb : r.sensitivity.neighbors) row(nb.move, nb.weights, nb.tau, "");
  return t.str();
}

inline std::string render_bootstrap_table(const std::vector<std::pair<std::string, BootstrapSummary>>& rows) {
  TextTable t({"Metric", "Mean (%)", "Std Dev (%)", "95% CI"});
  for (const auto& [name, s] : rows)
    t.add({name, fmt_percent(s.mean), fmt_percent(s.std_dev),
           "[" + fmt_percent(s.ci_low) + ", " + fmt_percent(s.ci_high) + "]"});
  return t.str();
}

/// Combination / weights / lambda / tau / mean score / std dev columns.
inline std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  TextTable t({"Combination", "Weights (α,β,γ)", "λ", "Kendall τ (%)", "Mean Score",
               "Std Dev (%)", "95% CI"});
  for (const auto& r : rows) {
    const auto& w = r.weights;
    t.add({r.label, fmt_weight(w.alpha()) + ", " + fmt_weight(w.beta()) + ", " + fmt_weight(w.gamma()),
           fmt_weight(w.lambda()), fmt_percent(r.tau), fmt_score(r.mean_score),
           r.bootstrap ? fmt_percent(r.bootstrap->std_dev) : "-",
           r.bootstrap ? "[" + fmt_percent(r.bootstrap->ci_low) + ", " + fmt_percent(r.bootstrap->ci_high) + "]"
                       : "-"});
  }
  return t.str();
}

}  // namespace redemption
