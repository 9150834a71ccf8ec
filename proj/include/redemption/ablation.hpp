#pragma once

// Aggregation-strategy ablation (lambda = 0 / 1 / free) and the exhaustive
// three-channel combination sweep.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "redemption/calibration.hpp"
#include "redemption/channels.hpp"
#include "redemption/rank_stats.hpp"

namespace redemption {

struct AblationRow {
  std::string label;  // "hybrid" / "additive" / "multiplicative", or the combination
  Selection combination{};
  FusionWeights weights;
  double tau = 0.0;
  double p_value = 1.0;
  double mean_score = 0.0;
  std::optional<BootstrapSummary> bootstrap;
};

struct AblationOptions {
  CalibrationOptions calibration;
  /// When set, each row carries a bootstrap of tau at its best weights.
  std::optional<std::size_t> bootstrap_runs;
  std::uint64_t seed = 0;
};

namespace detail {
inline AblationRow make_row(std::string label, const RatedPanel& rp, const CalibrationResult& cal,
                            const AblationOptions& opts) {
  AblationRow row;
  row.label = std::move(label);
  row.combination = rp.panel.selection;
  row.weights = cal.best;
  row.tau = cal.best_tau;
  row.p_value = cal.p_value;
  row.mean_score = cal.mean_score;
  if (opts.bootstrap_runs) {
    std::vector<double> scores;
    score_panel(rp.panel, cal.best, scores);
    row.bootstrap =
        bootstrap_tau(scores, rp.ratings, *opts.bootstrap_runs, opts.seed, TauVariant::tau_c, opts.calibration.workers);
  }
  return row;
}
}  // namespace detail

/// Rows in order: hybrid (lambda free), additive (lambda = 1),
/// multiplicative (lambda = 0). Hybrid tau >= both by grid containment.
inline std::array<AblationRow, 3> strategy_ablation(const ChannelSet& channels, const Selection& selection,
                                                    const std::map<std::string, double>& ratings,
                                                    const GridSpec& spec, const AblationOptions& opts = {}) {
  const RatedPanel rp = rated_panel(channels, selection, ratings);
  const auto hybrid = calibrate(rp, spec, opts.calibration);
  const auto additive = calibrate(rp, spec.with_fixed_lambda(Fraction(1, 1)), opts.calibration);
  const auto multiplicative = calibrate(rp, spec.with_fixed_lambda(Fraction(0, 1)), opts.calibration);
  return {detail::make_row("hybrid", rp, hybrid, opts), detail::make_row("additive", rp, additive, opts),
          detail::make_row("multiplicative", rp, multiplicative, opts)};
}

/// Orders channels canonically (mid, gte, dino, bert, lpips, clip) and
/// drops duplicates.
inline std::vector<Channel> canonical_pool(std::vector<Channel> pool) {
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  return pool;
}

inline std::string combination_label(const Selection& s) {
  return std::string(to_string(s[0])) + "+" + std::string(to_string(s[1])) + "+" + std::string(to_string(s[2]));
}

/// Calibrates every 3-subset of the pool (weights positional in canonical
/// order). Rows sorted by tau descending, then subset lexicographic.
inline std::vector<AblationRow> combination_sweep(const std::vector<Channel>& pool_in, const ChannelSet& channels,
                                                  const std::map<std::string, double>& ratings,
                                                  const GridSpec& spec, const AblationOptions& opts = {}) {
  const auto pool = canonical_pool(pool_in);
  if (pool.size() < 3) throw InputError("combination sweep needs a pool of at least 3 distinct channels");
  for (auto c : pool)
    if (!channels.count(c)) throw MissingDataError("channel '" + std::string(to_string(c)) + "' not built");

  std::vector<Selection> subsets;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j)
      for (std::size_t k = j + 1; k < pool.size(); ++k) subsets.push_back({pool[i], pool[j], pool[k]});

  std::vector<AblationRow> rows;
  rows.reserve(subsets.size());
  for (const auto& sel : subsets) {
    const RatedPanel rp = rated_panel(channels, sel, ratings);
    rows.push_back(detail::make_row(combination_label(sel), rp, calibrate(rp, spec, opts.calibration), opts));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
    if (a.tau != b.tau) return a.tau > b.tau;
    return a.combination < b.combination;
  });
  return rows;
}

}  // namespace redemption
