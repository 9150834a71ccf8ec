#pragma once

// Per-sample raw score streams ("channels") feeding fusion and ablation.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "redemption/data_model.hpp"
#include "redemption/error.hpp"
#include "redemption/gaussian.hpp"

namespace redemption {

/// Channels in canonical order: mid, gte, dino, bert, lpips, clip.
enum class Channel { mid, gte, dino, bert, lpips, clip };

inline constexpr std::array<Channel, 6> kAllChannels = {Channel::mid,  Channel::gte,   Channel::dino,
                                                        Channel::bert, Channel::lpips, Channel::clip};

inline std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::mid: return "mid";
    case Channel::gte: return "gte";
    case Channel::dino: return "dino";
    case Channel::bert: return "bertscore";
    case Channel::lpips: return "lpips";
    case Channel::clip: return "clip";
  }
  return "?";
}

inline Channel parse_channel(std::string_view s) {
  if (s == "bert") return Channel::bert;
  for (auto c : kAllChannels)
    if (to_string(c) == s) return c;
  throw InputError("unknown channel '" + std::string(s) + "' (expected mid, dino, gte, clip, bertscore, lpips)");
}

inline std::vector<Channel> parse_channel_list(std::string_view csv) {
  std::vector<Channel> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto end = std::min(csv.find(',', start), csv.size());
    const auto tok = trim(csv.substr(start, end - start));
    if (!tok.empty()) out.push_back(parse_channel(tok));
    start = end + 1;
  }
  return out;
}

enum class ChannelKind { cosine, mid, scalar_passthrough, lpips_normalized };

/// Raw (pre-squash) per-sample values, aligned with `sample_ids`.
struct ChannelVector {
  Channel channel = Channel::mid;
  ChannelKind kind = ChannelKind::cosine;
  std::vector<std::string> sample_ids;
  std::vector<double> values;

  [[nodiscard]] std::string name() const { return std::string(to_string(channel)); }
  [[nodiscard]] std::size_t size() const { return values.size(); }
};

using ChannelSet = std::map<Channel, ChannelVector>;

// ---------------------------------------------------------------------------

namespace detail {
template <class T, class U>
double cosine_impl(std::span<const T> u, std::span<const U> v) {
  if (u.size() != v.size())
    throw InputError("cosine: length mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw InputError("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}
}  // namespace detail

inline double cosine(std::span<const double> u, std::span<const double> v) { return detail::cosine_impl(u, v); }
inline double cosine(std::span<const float> u, std::span<const float> v) { return detail::cosine_impl(u, v); }

/// Cycle-consistency similarity: mean of cos(orig, gen_cand) and cos(gen_cand, gen_ref).
template <class T>
double dino_sim(std::span<const T> e_orig, std::span<const T> e_gen_cand, std::span<const T> e_gen_ref) {
  const double s1 = cosine(e_orig, e_gen_cand);
  const double s2 = cosine(e_gen_cand, e_gen_ref);
  return 0.5 * (s1 + s2);
}

enum class RefAggregation { first, max, mean };

inline RefAggregation parse_ref_aggregation(std::string_view s) {
  if (s == "first") return RefAggregation::first;
  if (s == "max") return RefAggregation::max;
  if (s == "mean") return RefAggregation::mean;
  throw InputError("unknown reference aggregation '" + std::string(s) + "'");
}

template <class T>
double gte_score(std::span<const T> e_cand, const std::vector<std::span<const T>>& e_refs,
                 RefAggregation agg = RefAggregation::first) {
  if (e_refs.empty()) throw InputError("gte_score: empty reference list");
  if (agg == RefAggregation::first) return cosine(e_cand, e_refs.front());
  double best = -1.0, sum = 0.0;
  for (const auto& r : e_refs) {
    const double c = cosine(e_cand, r);
    best = std::max(best, c);
    sum += c;
  }
  return agg == RefAggregation::max ? best : sum / static_cast<double>(e_refs.size());
}

inline double lpips_norm(double raw_lpips) {
  if (!(raw_lpips >= 0.0) || !std::isfinite(raw_lpips))
    throw InputError("lpips_norm: raw LPIPS must be finite and >= 0, got " + std::to_string(raw_lpips));
  return 1.0 / (1.0 + raw_lpips);
}

// ---------------------------------------------------------------------------

/// Table or scalar names a channel reads.
inline std::vector<std::string> required_inputs(Channel c) {
  switch (c) {
    case Channel::mid:
    case Channel::clip: return {std::string(tables::clip_image), std::string(tables::clip_text)};
    case Channel::dino:
      return {std::string(tables::dino_image), std::string(tables::dino_gen_candidate),
              std::string(tables::dino_gen_reference)};
    case Channel::gte: return {std::string(tables::gte_candidate), std::string(tables::gte_reference)};
    case Channel::bert: return {"bertscore"};
    case Channel::lpips: return {"lpips"};
  }
  return {};
}

inline std::vector<std::string> required_inputs(const std::vector<Channel>& cs) {
  std::vector<std::string> out;
  for (auto c : cs)
    for (auto& r : required_inputs(c))
      if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(std::move(r));
  return out;
}

struct BuildOptions {
  RefAggregation aggregation = RefAggregation::first;
  std::optional<double> shrinkage;
  /// Use these stats for the MID channel instead of fitting on the dataset.
  std::optional<GaussianStats> mid_stats;
};

namespace detail {
inline std::span<const float> need(const Dataset& ds, std::string_view table, const Sample& s,
                                   std::size_t ref_index = 0) {
  if (auto v = ds.lookup(table, s, ref_index)) return *v;
  if (!ds.has_table(table)) throw MissingDataError("channel input table '" + std::string(table) + "' not loaded");
  throw MissingDataError("sample '" + s.sample_id + "': no entry in '" + std::string(table) + "' for key '" +
                         join_key(s, ds.spec(table).key_space, ref_index) + "'");
}

inline double need_scalar(const Sample& s, const std::string& name) {
  auto it = s.scalar_channels.find(name);
  if (it == s.scalar_channels.end())
    throw MissingDataError("sample '" + s.sample_id + "': missing scalar channel '" + name + "'");
  return it->second;
}
}  // namespace detail

/// One ChannelVector per requested channel, each covering every sample of
/// `ds` in order. MID fits the joint Gaussian on `ds` unless stats are given.
inline ChannelSet build_channels(const Dataset& ds, const std::vector<Channel>& requested,
                                 const BuildOptions& opts = {}) {
  ChannelSet out;
  for (Channel c : requested) {
    if (out.count(c)) continue;
    ChannelVector cv;
    cv.channel = c;
    cv.sample_ids.reserve(ds.samples.size());
    cv.values.reserve(ds.samples.size());
    for (const auto& s : ds.samples) cv.sample_ids.push_back(s.sample_id);

    switch (c) {
      case Channel::mid: {
        cv.kind = ChannelKind::mid;
        if (ds.samples.empty()) break;
        const GaussianStats stats = opts.mid_stats ? *opts.mid_stats : fit_gaussian_stats(ds, opts.shrinkage);
        cv.values = mid_scores(stats, ds).per_sample;
        break;
      }
      case Channel::clip:
        cv.kind = ChannelKind::cosine;
        for (const auto& s : ds.samples)
          cv.values.push_back(
              cosine(detail::need(ds, tables::clip_image, s), detail::need(ds, tables::clip_text, s)));
        break;
      case Channel::dino:
        cv.kind = ChannelKind::cosine;
        for (const auto& s : ds.samples)
          cv.values.push_back(dino_sim(detail::need(ds, tables::dino_image, s),
                                       detail::need(ds, tables::dino_gen_candidate, s),
                                       detail::need(ds, tables::dino_gen_reference, s)));
        break;
      case Channel::gte:
        cv.kind = ChannelKind::cosine;
        for (const auto& s : ds.samples) {
          std::vector<std::span<const float>> refs;
          const std::size_t count = opts.aggregation == RefAggregation::first ? 1 : s.references.size();
          for (std::size_t r = 0; r < count; ++r) refs.push_back(detail::need(ds, tables::gte_reference, s, r));
          cv.values.push_back(gte_score(detail::need(ds, tables::gte_candidate, s), refs, opts.aggregation));
        }
        break;
      case Channel::bert:
        cv.kind = ChannelKind::scalar_passthrough;
        for (const auto& s : ds.samples) cv.values.push_back(detail::need_scalar(s, "bertscore"));
        break;
      case Channel::lpips:
        cv.kind = ChannelKind::lpips_normalized;
        for (const auto& s : ds.samples) cv.values.push_back(lpips_norm(detail::need_scalar(s, "lpips")));
        break;
    }
    out.emplace(c, std::move(cv));
  }
  return out;
}

}  // namespace redemption
