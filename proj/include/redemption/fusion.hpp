#pragma once

// Squash normalization and the hybrid arithmetic/geometric aggregation.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "redemption/channels.hpp"
#include "redemption/error.hpp"
#include "redemption/fraction.hpp"

namespace redemption {

/// x -> ((x / (1 + |x|)) + 1) / 2, mapping R into (0, 1).
inline double squash(double x) {
  if (!std::isfinite(x)) throw InputError("squash: non-finite input");
  return (x / (1.0 + std::abs(x)) + 1.0) / 2.0;
}

/// Weights (alpha, beta, gamma) as integer numerators over `weight_den`
/// and lambda as a numerator over `lambda_den`. The weight numerators sum
/// to `weight_den` exactly.
class FusionWeights {
 public:
  FusionWeights() = default;

  FusionWeights(std::array<std::int64_t, 3> weights, std::int64_t weight_den, std::int64_t lambda_num,
                std::int64_t lambda_den)
      : w_(weights), wden_(weight_den), lnum_(lambda_num), lden_(lambda_den) {
    if (wden_ <= 0 || lden_ <= 0) throw InputError("fusion weights: denominators must be positive");
    if (w_[0] < 0 || w_[1] < 0 || w_[2] < 0) throw InputError("fusion weights: negative weight");
    if (w_[0] + w_[1] + w_[2] != wden_)
      throw InputError("fusion weights: numerators " + std::to_string(w_[0]) + "+" + std::to_string(w_[1]) + "+" +
                       std::to_string(w_[2]) + " do not sum to " + std::to_string(wden_));
    if (lnum_ < 0 || lnum_ > lden_) throw InputError("fusion weights: lambda outside [0, 1]");
  }

  /// Default (0.15, 0.35, 0.50; lambda 0.8).
  static FusionWeights defaults() { return FusionWeights({3, 7, 10}, 20, 8, 10); }

  /// Aligns exact fractions onto denominators `weight_den` / `lambda_den`.
  static FusionWeights from_fractions(const std::array<Fraction, 3>& w, const Fraction& lambda,
                                      std::int64_t weight_den = 20, std::int64_t lambda_den = 10) {
    std::array<std::int64_t, 3> nums{};
    for (std::size_t i = 0; i < 3; ++i) {
      nums[i] = w[i].numerator_over(weight_den);
      if (nums[i] < 0)
        throw InputError("weight " + std::to_string(w[i].value()) + " is not a multiple of 1/" +
                         std::to_string(weight_den));
    }
    const auto l = lambda.numerator_over(lambda_den);
    if (l < 0) throw InputError("lambda " + std::to_string(lambda.value()) + " is not a multiple of 1/" +
                                std::to_string(lambda_den));
    return FusionWeights(nums, weight_den, l, lambda_den);
  }

  [[nodiscard]] double alpha() const { return weight(0); }
  [[nodiscard]] double beta() const { return weight(1); }
  [[nodiscard]] double gamma() const { return weight(2); }
  [[nodiscard]] double weight(std::size_t i) const {
    return static_cast<double>(w_[i]) / static_cast<double>(wden_);
  }
  [[nodiscard]] double lambda() const { return static_cast<double>(lnum_) / static_cast<double>(lden_); }

  [[nodiscard]] const std::array<std::int64_t, 3>& numerators() const { return w_; }
  [[nodiscard]] std::int64_t weight_den() const { return wden_; }
  [[nodiscard]] std::int64_t lambda_num() const { return lnum_; }
  [[nodiscard]] std::int64_t lambda_den() const { return lden_; }

  /// (alpha, beta, gamma, lambda) as exact fractions, for lexicographic order.
  [[nodiscard]] std::array<Fraction, 4> as_fractions() const {
    return {Fraction(w_[0], wden_), Fraction(w_[1], wden_), Fraction(w_[2], wden_), Fraction(lnum_, lden_)};
  }

  friend bool operator==(const FusionWeights& a, const FusionWeights& b) {
    return a.as_fractions() == b.as_fractions();
  }
  friend bool operator<(const FusionWeights& a, const FusionWeights& b) {
    return a.as_fractions() < b.as_fractions();
  }

 private:
  std::array<std::int64_t, 3> w_{3, 7, 10};
  std::int64_t wden_ = 20;
  std::int64_t lnum_ = 8;
  std::int64_t lden_ = 10;
};

/// Parses "a,b,c,lambda" with exact decimals onto the 1/20 and 1/10 grids.
inline FusionWeights parse_weights(std::string_view csv, std::int64_t weight_den = 20, std::int64_t lambda_den = 10) {
  std::vector<Fraction> parts;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto end = std::min(csv.find(',', start), csv.size());
    parts.push_back(parse_fraction(trim(csv.substr(start, end - start))));
    start = end + 1;
  }
  if (parts.size() != 4) throw InputError("--weights expects alpha,beta,gamma,lambda");
  return FusionWeights::from_fractions({parts[0], parts[1], parts[2]}, parts[3], weight_den, lambda_den);
}

inline std::string format_weights(const FusionWeights& w) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(%.2f, %.2f, %.2f; lambda %.2f)", w.alpha(), w.beta(), w.gamma(), w.lambda());
  return buf;
}

using Triple = std::array<double, 3>;

inline void check_unit_open(const Triple& z) {
  for (double v : z)
    if (!std::isfinite(v) || v <= 0.0 || v >= 1.0)
      throw InputError("redemption_score: component " + std::to_string(v) + " outside (0, 1)");
}

/// alpha z1 + beta z2 + gamma z3.
inline double linear_component(const Triple& z, const FusionWeights& w) {
  return w.alpha() * z[0] + w.beta() * z[1] + w.gamma() * z[2];
}

/// z1^alpha z2^beta z3^gamma, evaluated as exp(sum w_i ln z_i).
inline double geometric_component(const Triple& z, const FusionWeights& w) {
  return std::exp(w.alpha() * std::log(z[0]) + w.beta() * std::log(z[1]) + w.gamma() * std::log(z[2]));
}

/// lambda * L + (1 - lambda) * M.
inline double redemption_score(const Triple& z, const FusionWeights& w) {
  check_unit_open(z);
  const double lam = w.lambda();
  return lam * linear_component(z, w) + (1.0 - lam) * geometric_component(z, w);
}

using Selection = std::array<Channel, 3>;

inline Selection default_selection() { return {Channel::mid, Channel::dino, Channel::gte}; }

inline std::string selection_name(const Selection& s) {
  return std::string(to_string(s[0])) + "," + std::string(to_string(s[1])) + "," + std::string(to_string(s[2]));
}

inline Selection parse_selection(std::string_view csv) {
  const auto list = parse_channel_list(csv);
  if (list.size() != 3) throw InputError("channel selection must name exactly three channels");
  if (list[0] == list[1] || list[0] == list[2] || list[1] == list[2])
    throw InputError("channel selection must name three distinct channels");
  return {list[0], list[1], list[2]};
}

/// Squashed channel values for one selection, aligned by sample.
struct SquashedPanel {
  Selection selection{};
  std::vector<std::string> sample_ids;
  std::vector<Triple> z;
  std::vector<Triple> log_z;
};

/// Squashes the selected channels, aligning later channels to the first
/// channel's sample order. Throws on any coverage gap.
inline SquashedPanel squash_channels(const ChannelSet& channels, const Selection& selection) {
  SquashedPanel p;
  p.selection = selection;
  std::array<const ChannelVector*, 3> cv{};
  for (std::size_t k = 0; k < 3; ++k) {
    auto it = channels.find(selection[k]);
    if (it == channels.end()) throw MissingDataError("channel '" + std::string(to_string(selection[k])) + "' not built");
    cv[k] = &it->second;
  }
  p.sample_ids = cv[0]->sample_ids;
  const std::size_t n = p.sample_ids.size();
  std::array<std::vector<double>, 3> aligned;
  for (std::size_t k = 0; k < 3; ++k) {
    if (cv[k]->sample_ids.size() != n)
      throw MissingDataError("channel '" + cv[k]->name() + "' covers " + std::to_string(cv[k]->sample_ids.size()) +
                             " samples, expected " + std::to_string(n));
    if (cv[k]->sample_ids == p.sample_ids) {
      aligned[k] = cv[k]->values;
      continue;
    }
    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(cv[k]->sample_ids[i], i);
    aligned[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = index.find(p.sample_ids[i]);
      if (it == index.end())
        throw MissingDataError("channel '" + cv[k]->name() + "' has no value for sample '" + p.sample_ids[i] + "'");
      aligned[k][i] = cv[k]->values[it->second];
    }
  }
  p.z.resize(n);
  p.log_z.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = squash(aligned[k][i]);
      // Finite input always lands strictly inside (0, 1) unless |x| is so
      // large that the quotient rounds to +-1.
      if (!(v > 0.0 && v < 1.0))
        throw DegenerateDataError("squash of channel '" + std::string(to_string(selection[k])) + "' value " +
                                  std::to_string(aligned[k][i]) + " for sample '" + p.sample_ids[i] +
                                  "' rounds to the boundary");
      p.z[i][k] = v;
      p.log_z[i][k] = std::log(v);
    }
  return p;
}

/// RS for every panel row; uses the precomputed logs for the geometric term.
inline void score_panel(const SquashedPanel& p, const FusionWeights& w, std::vector<double>& out) {
  const double a = w.alpha(), b = w.beta(), c = w.gamma(), lam = w.lambda();
  out.resize(p.z.size());
  for (std::size_t i = 0; i < p.z.size(); ++i) {
    const auto& z = p.z[i];
    const auto& lz = p.log_z[i];
    const double lin = a * z[0] + b * z[1] + c * z[2];
    const double geo = std::exp(a * lz[0] + b * lz[1] + c * lz[2]);
    out[i] = lam * lin + (1.0 - lam) * geo;
  }
}

struct ScoreVector {
  std::vector<std::string> sample_ids;
  std::vector<Triple> z;
  std::vector<double> rs;
  FusionWeights weights;
  Selection channels_used{};
  double mean = 0.0;
};

inline ScoreVector score_dataset(const ChannelSet& channels, const Selection& selection, const FusionWeights& w) {
  SquashedPanel p = squash_channels(channels, selection);
  ScoreVector out;
  out.weights = w;
  out.channels_used = selection;
  score_panel(p, w, out.rs);
  double sum = 0.0;
  for (double v : out.rs) sum += v;
  out.mean = out.rs.empty() ? 0.0 : sum / static_cast<double>(out.rs.size());
  out.sample_ids = std::move(p.sample_ids);
  out.z = std::move(p.z);
  return out;
}

}  // namespace redemption
