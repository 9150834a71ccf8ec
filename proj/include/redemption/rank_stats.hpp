#pragma once

// Kendall rank correlation (tau-c and tau-b), significance, bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "redemption/error.hpp"
#include "redemption/parallel.hpp"

namespace redemption {

enum class TauVariant { tau_c, tau_b };

inline std::string_view to_string(TauVariant v) { return v == TauVariant::tau_c ? "tau_c" : "tau_b"; }

inline TauVariant parse_tau_variant(std::string_view s) {
  if (s == "tau_c") return TauVariant::tau_c;
  if (s == "tau_b") return TauVariant::tau_b;
  throw InputError("unknown tau variant '" + std::string(s) + "' (expected tau_c or tau_b)");
}

/// Pair counts partition n(n-1)/2 exactly:
///   concordant + discordant + ties_x + ties_y + ties_xy.
struct TauResult {
  double tau = 0.0;
  TauVariant variant = TauVariant::tau_c;
  std::int64_t n = 0;
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t ties_x = 0;   // tied in x only
  std::int64_t ties_y = 0;   // tied in y only
  std::int64_t ties_xy = 0;  // tied in both
  std::int64_t distinct_x = 0;
  std::int64_t distinct_y = 0;
  std::int64_t m = 0;  // min(distinct_x, distinct_y)

  [[nodiscard]] std::int64_t total_pairs() const { return n * (n - 1) / 2; }
};

namespace detail {

inline std::int64_t tie_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Sorts `v` ascending and returns the number of strict inversions.
inline std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf) {
  const std::size_t n = v.size();
  buf.resize(n);
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return swaps;
}

inline double tau_from_counts(const TauResult& r) {
  const double s = static_cast<double>(r.concordant - r.discordant);
  if (r.variant == TauVariant::tau_c) {
    const double n = static_cast<double>(r.n), m = static_cast<double>(r.m);
    return 2.0 * m * s / (n * n * (m - 1.0));
  }
  const std::int64_t n0 = r.total_pairs();
  const std::int64_t n1 = r.ties_x + r.ties_xy, n2 = r.ties_y + r.ties_xy;
  return s / std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

}  // namespace detail

/// O(n log n) Kendall tau (Knight's merge-count algorithm).
inline TauResult kendall_tau(std::span<const double> x, std::span<const double> y,
                             TauVariant variant = TauVariant::tau_c) {
  if (x.size() != y.size())
    throw InputError("kendall_tau: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) +
                     ")");
  const std::size_t n = x.size();
  if (n < 2) throw DegenerateDataError("kendall_tau: need at least 2 observations");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError("kendall_tau: non-finite value");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  TauResult r;
  r.variant = variant;
  r.n = static_cast<std::int64_t>(n);
  std::int64_t n1 = 0, n3 = 0;
  {
    std::int64_t run_x = 1, run_xy = 1;
    r.distinct_x = 1;
    for (std::size_t i = 1; i < n; ++i) {
      const auto a = order[i - 1], b = order[i];
      if (x[a] == x[b]) {
        ++run_x;
        if (y[a] == y[b])
          ++run_xy;
        else {
          n3 += detail::tie_pairs(run_xy);
          run_xy = 1;
        }
      } else {
        n1 += detail::tie_pairs(run_x);
        n3 += detail::tie_pairs(run_xy);
        run_x = run_xy = 1;
        ++r.distinct_x;
      }
    }
    n1 += detail::tie_pairs(run_x);
    n3 += detail::tie_pairs(run_xy);
  }

  std::vector<double> ys(n), buf;
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::int64_t discordant = detail::merge_count(ys, buf);

  std::int64_t n2 = 0;
  {
    std::int64_t run = 1;
    r.distinct_y = 1;
    for (std::size_t i = 1; i < n; ++i) {
      if (ys[i] == ys[i - 1])
        ++run;
      else {
        n2 += detail::tie_pairs(run);
        run = 1;
        ++r.distinct_y;
      }
    }
    n2 += detail::tie_pairs(run);
  }

  if (r.distinct_x < 2 || r.distinct_y < 2)
    throw DegenerateDataError("kendall_tau: constant input (needs at least 2 distinct values in each argument)");

  const std::int64_t n0 = r.total_pairs();
  r.discordant = discordant;
  r.concordant = n0 - n1 - n2 + n3 - discordant;
  r.ties_x = n1 - n3;
  r.ties_y = n2 - n3;
  r.ties_xy = n3;
  r.m = std::min(r.distinct_x, r.distinct_y);
  r.tau = detail::tau_from_counts(r);
  return r;
}

/// Two-sided p-value from the normal approximation
/// z = 3 (n_c - n_d) / sqrt(n (n - 1) (2n + 5) / 2).
struct NormalApprox {};

/// Add-one smoothed permutation test over `iters` shuffles of y.
struct Permutation {
  std::size_t iters = 999;
  std::uint64_t seed = 0;
};

using PValueMethod = std::variant<NormalApprox, Permutation>;

inline double tau_p_value(const TauResult& r) {
  if (r.n < 4) throw DegenerateDataError("normal approximation needs n >= 4, got " + std::to_string(r.n));
  const double n = static_cast<double>(r.n);
  const double s = static_cast<double>(r.concordant - r.discordant);
  const double z = 3.0 * s / std::sqrt(n * (n - 1.0) * (2.0 * n + 5.0) / 2.0);
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

inline double tau_p_value(std::span<const double> x, std::span<const double> y, const TauResult& observed,
                          const Permutation& perm) {
  if (observed.n < 2) throw DegenerateDataError("permutation test needs n >= 2");
  if (perm.iters == 0) throw InputError("permutation test needs at least one iteration");
  std::mt19937_64 rng(perm.seed);
  std::vector<double> shuffled(y.begin(), y.end());
  const double target = std::abs(observed.tau) * (1.0 - 1e-12);
  std::size_t extreme = 0;
  for (std::size_t it = 0; it < perm.iters; ++it) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (std::abs(kendall_tau(x, shuffled, observed.variant).tau) >= target) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(perm.iters + 1);
}

inline double tau_p_value(std::span<const double> x, std::span<const double> y, const TauResult& observed,
                          const PValueMethod& method) {
  if (std::holds_alternative<NormalApprox>(method)) return tau_p_value(observed);
  return tau_p_value(x, y, observed, std::get<Permutation>(method));
}

// ---------------------------------------------------------------------------

struct BootstrapSummary {
  std::size_t runs = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t seed = 0;
  TauVariant variant = TauVariant::tau_c;
};

inline constexpr int kMaxRedraws = 100;

/// SplitMix64 finalizer; derives an independent stream seed per run.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Linear-interpolation percentile of sorted data, q in [0, 1].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InputError("percentile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Resamples (score, rating) pairs jointly with replacement `runs` times.
/// Run r draws from mt19937_64 seeded with splitmix64(seed ^ splitmix64(r)),
/// so results do not depend on worker count or scheduling. A resample with
/// a constant column is redrawn, at most 100 times per run.
inline BootstrapSummary bootstrap_tau(std::span<const double> scores, std::span<const double> ratings,
                                      std::size_t runs, std::uint64_t seed, TauVariant variant = TauVariant::tau_c,
                                      unsigned workers = 1) {
  if (scores.size() != ratings.size()) throw InputError("bootstrap_tau: length mismatch");
  if (runs == 0) throw InputError("bootstrap_tau: runs must be >= 1");
  const std::size_t n = scores.size();
  if (n < 2) throw DegenerateDataError("bootstrap_tau: need at least 2 observations");

  std::vector<double> taus(runs);
  parallel_for(runs, workers, [&](std::size_t run) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(run))));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> xs(n), ys(n);
    for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = pick(rng);
        xs[i] = scores[j];
        ys[i] = ratings[j];
      }
      const bool constant = std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs[0]; }) ||
                            std::all_of(ys.begin(), ys.end(), [&](double v) { return v == ys[0]; });
      if (!constant) {
        taus[run] = kendall_tau(xs, ys, variant).tau;
        return;
      }
    }
    throw DegenerateDataError("bootstrap_tau: run " + std::to_string(run) + " drew a constant column " +
                              std::to_string(kMaxRedraws) + " times");
  });

  BootstrapSummary s;
  s.runs = runs;
  s.seed = seed;
  s.variant = variant;
  double sum = 0.0;
  for (double t : taus) sum += t;
  s.mean = sum / static_cast<double>(runs);
  if (runs > 1) {
    double ss = 0.0;
    for (double t : taus) ss += (t - s.mean) * (t - s.mean);
    s.std_dev = std::sqrt(ss / static_cast<double>(runs - 1));
  }
  std::sort(taus.begin(), taus.end());
  s.ci_low = percentile_sorted(taus, 0.025);
  s.ci_high = percentile_sorted(taus, 0.975);
  return s;
}

}  // namespace redemption
