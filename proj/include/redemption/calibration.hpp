#pragma once

// Constrained grid search for the fusion weights maximizing Kendall tau-c
// against human ratings, plus the one-step sensitivity neighbourhood.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "redemption/error.hpp"
#include "redemption/fraction.hpp"
#include "redemption/fusion.hpp"
#include "redemption/parallel.hpp"
#include "redemption/rank_stats.hpp"

namespace redemption {

struct GridSpec {
  Fraction weight_step{1, 20};
  Fraction min_weight{3, 20};
  Fraction lambda_step{1, 10};
  Fraction lambda_min{0, 1};
  Fraction lambda_max{1, 1};

  /// Same spec with lambda pinned to `value`.
  [[nodiscard]] GridSpec with_fixed_lambda(Fraction value) const {
    GridSpec s = *this;
    s.lambda_min = s.lambda_max = value;
    return s;
  }
};

/// Integer view of a validated GridSpec.
struct GridUnits {
  std::int64_t weight_den = 0;   // 1 / weight_step
  std::int64_t min_units = 0;    // min_weight in weight steps
  std::int64_t lambda_den = 0;   // 1 / lambda_step
  std::int64_t lambda_lo = 0;    // lambda range in lambda steps
  std::int64_t lambda_hi = 0;
};

inline GridUnits grid_units(const GridSpec& spec) {
  auto reciprocal = [](const Fraction& step, const char* what) {
    if (step.num <= 0 || step.num != 1)
      throw InfeasibleSpecError(std::string(what) + " " + to_string(step) + " must be 1/k for an integer k");
    return step.den;
  };
  GridUnits u;
  u.weight_den = reciprocal(spec.weight_step, "weight step");
  u.lambda_den = reciprocal(spec.lambda_step, "lambda step");
  u.min_units = spec.min_weight.numerator_over(u.weight_den);
  if (spec.min_weight.num < 0 || u.min_units < 0)
    throw InfeasibleSpecError("min weight " + to_string(spec.min_weight) + " is not a multiple of the weight step");
  if (3 * u.min_units > u.weight_den)
    throw InfeasibleSpecError("min weight " + std::to_string(spec.min_weight.value()) +
                              " is infeasible: three weights of at least that size exceed 1");
  u.lambda_lo = spec.lambda_min.numerator_over(u.lambda_den);
  u.lambda_hi = spec.lambda_max.numerator_over(u.lambda_den);
  if (spec.lambda_min.num < 0 || u.lambda_lo < 0 || u.lambda_hi < 0 || u.lambda_hi > u.lambda_den ||
      u.lambda_lo > u.lambda_hi)
    throw InfeasibleSpecError("lambda range must lie on the lambda grid within [0, 1]");
  return u;
}

/// All (alpha, beta, gamma) compositions with each weight >= min_weight,
/// crossed with every lambda, in lexicographic (alpha, beta, gamma, lambda) order.
inline std::vector<FusionWeights> enumerate_grid(const GridSpec& spec) {
  const GridUnits u = grid_units(spec);
  std::vector<FusionWeights> out;
  for (std::int64_t a = u.min_units; a <= u.weight_den; ++a)
    for (std::int64_t b = u.min_units; a + b <= u.weight_den; ++b) {
      const std::int64_t c = u.weight_den - a - b;
      if (c < u.min_units) continue;
      for (std::int64_t l = u.lambda_lo; l <= u.lambda_hi; ++l) out.emplace_back(std::array{a, b, c}, u.weight_den, l, u.lambda_den);
    }
  if (out.empty()) throw InfeasibleSpecError("grid spec admits no weight triple");
  return out;
}

struct GridPoint {
  FusionWeights weights;
  double tau = 0.0;
};

struct Neighbor {
  FusionWeights weights;
  double tau = 0.0;
  double delta = 0.0;  // tau - best_tau
  std::string move;    // e.g. "lambda+1", "alpha->gamma"
};

struct SensitivityReport {
  std::vector<Neighbor> neighbors;
  std::vector<std::string> skipped;  // infeasible moves
  double max_degradation = 0.0;      // max(best_tau - tau) over neighbors, >= 0
};

struct CalibrationResult {
  Selection selection{};
  FusionWeights best;
  double best_tau = 0.0;
  TauResult best_result;
  double p_value = 1.0;
  bool significant = false;
  std::vector<GridPoint> grid_trace;
  SensitivityReport sensitivity;
  double mean_score = 0.0;  // mean RS at the best weights
};

struct CalibrationOptions {
  PValueMethod p_method = NormalApprox{};
  double alpha_level = 0.05;
  unsigned workers = 1;
};

/// Squashed panel restricted to rated samples, with ratings aligned.
struct RatedPanel {
  SquashedPanel panel;
  std::vector<double> ratings;
};

inline RatedPanel rated_panel(const ChannelSet& channels, const Selection& selection,
                              const std::map<std::string, double>& ratings) {
  SquashedPanel full = squash_channels(channels, selection);
  RatedPanel out;
  out.panel.selection = selection;
  for (std::size_t i = 0; i < full.sample_ids.size(); ++i) {
    auto it = ratings.find(full.sample_ids[i]);
    if (it == ratings.end()) continue;
    out.panel.sample_ids.push_back(full.sample_ids[i]);
    out.panel.z.push_back(full.z[i]);
    out.panel.log_z.push_back(full.log_z[i]);
    out.ratings.push_back(it->second);
  }
  if (out.ratings.size() < 2) throw DegenerateDataError("calibration needs at least 2 rated samples");
  const auto [lo, hi] = std::minmax_element(out.ratings.begin(), out.ratings.end());
  if (*lo == *hi) throw DegenerateDataError("calibration needs at least 2 distinct human ratings");
  return out;
}

inline double tau_at(const RatedPanel& rp, const FusionWeights& w, std::vector<double>& scratch,
                     TauVariant variant = TauVariant::tau_c) {
  score_panel(rp.panel, w, scratch);
  return kendall_tau(scratch, rp.ratings, variant).tau;
}

/// Neighbours one grid step from `best`: lambda +-1 step, and one weight
/// step moved between each ordered pair of (alpha, beta, gamma).
inline SensitivityReport sensitivity(const RatedPanel& rp, const FusionWeights& best, double best_tau,
                                     const GridSpec& spec) {
  const GridUnits u = grid_units(spec);
  if (best.weight_den() != u.weight_den || best.lambda_den() != u.lambda_den)
    throw InputError("sensitivity: best weights are not on the grid");
  SensitivityReport rep;
  std::vector<double> scratch;
  auto visit = [&](const std::array<std::int64_t, 3>& w, std::int64_t l, std::string move) {
    for (auto v : w)
      if (v < u.min_units) {
        rep.skipped.push_back(move + " (weight below minimum)");
        return;
      }
    if (l < u.lambda_lo || l > u.lambda_hi) {
      rep.skipped.push_back(move + " (lambda outside range)");
      return;
    }
    FusionWeights fw(w, u.weight_den, l, u.lambda_den);
    const double t = tau_at(rp, fw, scratch);
    rep.neighbors.push_back({fw, t, t - best_tau, std::move(move)});
    rep.max_degradation = std::max(rep.max_degradation, best_tau - t);
  };
  const auto& w0 = best.numerators();
  visit(w0, best.lambda_num() - 1, "lambda-1");
  visit(w0, best.lambda_num() + 1, "lambda+1");
  static constexpr std::array<const char*, 3> names{"alpha", "beta", "gamma"};
  for (std::size_t from = 0; from < 3; ++from)
    for (std::size_t to = 0; to < 3; ++to) {
      if (from == to) continue;
      auto w = w0;
      --w[from];
      ++w[to];
      visit(w, best.lambda_num(), std::string(names[from]) + "->" + names[to]);
    }
  return rep;
}

/// Evaluates tau-c at every grid point; the best is the maximum tau with
/// ties going to the lexicographically smallest (alpha, beta, gamma, lambda).
inline CalibrationResult calibrate(const RatedPanel& rp, const GridSpec& spec, const CalibrationOptions& opts = {}) {
  const auto grid = enumerate_grid(spec);
  std::vector<double> taus(grid.size());
  parallel_for(grid.size(), opts.workers, [&](std::size_t i) {
    thread_local std::vector<double> scratch;
    taus[i] = tau_at(rp, grid[i], scratch);
  });

  CalibrationResult res;
  res.selection = rp.panel.selection;
  res.grid_trace.reserve(grid.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    res.grid_trace.push_back({grid[i], taus[i]});
    if (taus[i] > taus[best] || (taus[i] == taus[best] && grid[i] < grid[best])) best = i;
  }
  res.best = grid[best];
  res.best_tau = taus[best];

  std::vector<double> scores;
  score_panel(rp.panel, res.best, scores);
  res.best_result = kendall_tau(scores, rp.ratings, TauVariant::tau_c);
  res.p_value = tau_p_value(scores, rp.ratings, res.best_result, opts.p_method);
  res.significant = res.p_value < opts.alpha_level;
  double sum = 0.0;
  for (double s : scores) sum += s;
  res.mean_score = sum / static_cast<double>(scores.size());
  res.sensitivity = sensitivity(rp, res.best, res.best_tau, spec);
  return res;
}

inline CalibrationResult calibrate(const ChannelSet& channels, const Selection& selection,
                                   const std::map<std::string, double>& ratings, const GridSpec& spec,
                                   const CalibrationOptions& opts = {}) {
  return calibrate(rated_panel(channels, selection, ratings), spec, opts);
}

}  // namespace redemption
