#pragma once

// Joint Gaussian model of (image, caption) embeddings: mutual information,
// point-wise mutual information and the per-sample MID channel.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "redemption/data_model.hpp"
#include "redemption/error.hpp"

namespace redemption {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Jitter ladder relative to trace(Sigma_xy) / (dim_x + dim_y).
inline constexpr double kJitterStartRel = 1e-6;
inline constexpr double kJitterMaxRel = 1e-2;

/// Fitted means, covariances and Cholesky factors. Immutable once built.
///
/// Every factor satisfies L L^T = Sigma + shrinkage_used * I; the same
/// jitter is applied to the two marginals and the joint, so the jittered
/// matrices are still a valid joint/marginal family and I(X;Y) >= 0.
class GaussianStats {
 public:
  /// Fit from row-per-sample matrices (n x dim_x, n x dim_y) with unbiased
  /// covariances. `shrinkage` is the first jitter tried; when absent the
  /// ladder starts at 1e-6 * trace/dim. The ladder escalates x10 up to
  /// 1e-2 * trace/dim and throws DegenerateDataError past that.
  static GaussianStats fit(const MatrixXd& xs, const MatrixXd& ys, std::optional<double> shrinkage = std::nullopt) {
    if (xs.rows() != ys.rows()) throw InputError("fit: x and y sample counts differ");
    if (xs.rows() < 2) throw DegenerateDataError("fit: need at least 2 pairs, got " + std::to_string(xs.rows()));
    if (xs.cols() == 0 || ys.cols() == 0) throw InputError("fit: zero-dimensional embeddings");
    if (!xs.allFinite() || !ys.allFinite()) throw InputError("fit: non-finite embedding component");

    const Index n = xs.rows(), dx = xs.cols(), dy = ys.cols();
    MatrixXd z(n, dx + dy);
    z << xs, ys;
    const VectorXd mu = z.colwise().mean();
    const MatrixXd centered = z.rowwise() - mu.transpose();
    MatrixXd cov = MatrixXd::Zero(dx + dy, dx + dy);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n - 1));
    cov = cov.selfadjointView<Eigen::Lower>();
    return from_moments(mu.head(dx), mu.tail(dy), cov, static_cast<std::size_t>(n), shrinkage, true);
  }

  /// Builds stats from known moments. With `escalate` false the factorization
  /// uses exactly `shrinkage` (default 0) and throws if that fails.
  static GaussianStats from_moments(const VectorXd& mu_x, const VectorXd& mu_y, const MatrixXd& sigma_xy,
                                    std::size_t n_fit, std::optional<double> shrinkage = std::nullopt,
                                    bool escalate = true) {
    const Index dx = mu_x.size(), dy = mu_y.size();
    if (dx == 0 || dy == 0) throw InputError("gaussian: zero-dimensional block");
    if (sigma_xy.rows() != dx + dy || sigma_xy.cols() != dx + dy)
      throw InputError("gaussian: joint covariance must be (dim_x + dim_y) square");
    if (shrinkage && (!std::isfinite(*shrinkage) || *shrinkage < 0.0))
      throw InputError("gaussian: shrinkage must be finite and >= 0");

    GaussianStats s;
    s.mu_x_ = mu_x;
    s.mu_y_ = mu_y;
    s.sigma_xy_ = 0.5 * (sigma_xy + sigma_xy.transpose());
    s.sigma_x_ = s.sigma_xy_.topLeftCorner(dx, dx);
    s.sigma_y_ = s.sigma_xy_.bottomRightCorner(dy, dy);
    s.n_fit_ = n_fit;

    const double scale = s.sigma_xy_.trace() / static_cast<double>(dx + dy);
    std::vector<double> ladder;
    if (!escalate) {
      ladder.push_back(shrinkage.value_or(0.0));
    } else {
      if (shrinkage) ladder.push_back(*shrinkage);
      if (scale > 0.0 && std::isfinite(scale))
        for (double rel = kJitterStartRel; rel <= kJitterMaxRel * (1.0 + 1e-9); rel *= 10.0)
          if (ladder.empty() || rel * scale > ladder.back()) ladder.push_back(rel * scale);
    }

    for (double jitter : ladder) {
      if (s.try_factor(jitter)) return s;
    }
    throw DegenerateDataError("gaussian: covariance is not positive definite even with jitter " +
                              std::to_string(ladder.empty() ? 0.0 : ladder.back()) + " (degenerate data)");
  }

  [[nodiscard]] Index dim_x() const { return mu_x_.size(); }
  [[nodiscard]] Index dim_y() const { return mu_y_.size(); }
  [[nodiscard]] const VectorXd& mu_x() const { return mu_x_; }
  [[nodiscard]] const VectorXd& mu_y() const { return mu_y_; }
  [[nodiscard]] const MatrixXd& sigma_x() const { return sigma_x_; }
  [[nodiscard]] const MatrixXd& sigma_y() const { return sigma_y_; }
  [[nodiscard]] const MatrixXd& sigma_xy() const { return sigma_xy_; }
  [[nodiscard]] const MatrixXd& chol_x() const { return chol_x_; }
  [[nodiscard]] const MatrixXd& chol_y() const { return chol_y_; }
  [[nodiscard]] const MatrixXd& chol_xy() const { return chol_xy_; }
  [[nodiscard]] double logdet_x() const { return logdet_x_; }
  [[nodiscard]] double logdet_y() const { return logdet_y_; }
  [[nodiscard]] double logdet_xy() const { return logdet_xy_; }
  [[nodiscard]] double shrinkage_used() const { return shrinkage_; }
  [[nodiscard]] std::size_t n_fit() const { return n_fit_; }

  /// Squared Mahalanobis distance of v from mean under lower factor L.
  static double mahalanobis_sq(const MatrixXd& chol, const VectorXd& mean, const VectorXd& v) {
    const VectorXd w = chol.triangularView<Eigen::Lower>().solve(v - mean);
    return w.squaredNorm();
  }

 private:
  bool try_factor(double jitter) {
    auto factor = [jitter](const MatrixXd& sigma, MatrixXd& chol, double& logdet) {
      MatrixXd a = sigma;
      a.diagonal().array() += jitter;
      Eigen::LLT<MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) return false;
      chol = llt.matrixL();
      const auto diag = chol.diagonal().array();
      if (!(diag > 0.0).all() || !diag.allFinite()) return false;
      logdet = 2.0 * diag.log().sum();
      return std::isfinite(logdet);
    };
    if (!factor(sigma_x_, chol_x_, logdet_x_)) return false;
    if (!factor(sigma_y_, chol_y_, logdet_y_)) return false;
    if (!factor(sigma_xy_, chol_xy_, logdet_xy_)) return false;
    shrinkage_ = jitter;
    return true;
  }

  VectorXd mu_x_, mu_y_;
  MatrixXd sigma_x_, sigma_y_, sigma_xy_;
  MatrixXd chol_x_, chol_y_, chol_xy_;
  double logdet_x_ = 0.0, logdet_y_ = 0.0, logdet_xy_ = 0.0;
  double shrinkage_ = 0.0;
  std::size_t n_fit_ = 0;
};

/// I(X;Y) = 1/2 (log|Sigma_x| + log|Sigma_y| - log|Sigma_xy|), in nats.
inline double mutual_information(const GaussianStats& s) {
  return 0.5 * (s.logdet_x() + s.logdet_y() - s.logdet_xy());
}

namespace detail {
inline void check_pair_dims(const GaussianStats& s, const VectorXd& x, const VectorXd& y) {
  if (x.size() != s.dim_x() || y.size() != s.dim_y())
    throw InputError("pmi: vector lengths (" + std::to_string(x.size()) + ", " + std::to_string(y.size()) +
                     ") do not match fitted dims (" + std::to_string(s.dim_x()) + ", " + std::to_string(s.dim_y()) +
                     ")");
}

inline VectorXd stack(const VectorXd& x, const VectorXd& y) {
  VectorXd z(x.size() + y.size());
  z << x, y;
  return z;
}

inline double log_density(const MatrixXd& chol, double logdet, const VectorXd& mean, const VectorXd& v) {
  const double d = static_cast<double>(v.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet + GaussianStats::mahalanobis_sq(chol, mean, v));
}
}  // namespace detail

/// PMI(x, y) = I(X;Y) + 1/2 (D2_x(x) + D2_y(y) - D2_xy([x; y])).
inline double pmi(const GaussianStats& s, const VectorXd& x, const VectorXd& y) {
  detail::check_pair_dims(s, x, y);
  const VectorXd z = detail::stack(x, y);
  const VectorXd mu = detail::stack(s.mu_x(), s.mu_y());
  const double dx = GaussianStats::mahalanobis_sq(s.chol_x(), s.mu_x(), x);
  const double dy = GaussianStats::mahalanobis_sq(s.chol_y(), s.mu_y(), y);
  const double dxy = GaussianStats::mahalanobis_sq(s.chol_xy(), mu, z);
  return mutual_information(s) + 0.5 * (dx + dy - dxy);
}

/// log N([x;y]; mu_xy, Sigma_xy) - log N(x; mu_x, Sigma_x) - log N(y; mu_y, Sigma_y).
/// Algebraically identical to pmi(); kept as an independent route.
inline double pmi_log_density(const GaussianStats& s, const VectorXd& x, const VectorXd& y) {
  detail::check_pair_dims(s, x, y);
  const VectorXd z = detail::stack(x, y);
  const VectorXd mu = detail::stack(s.mu_x(), s.mu_y());
  return detail::log_density(s.chol_xy(), s.logdet_xy(), mu, z) -
         detail::log_density(s.chol_x(), s.logdet_x(), s.mu_x(), x) -
         detail::log_density(s.chol_y(), s.logdet_y(), s.mu_y(), y);
}

inline VectorXd to_vector(std::span<const float> v) {
  VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = v[i];
  return out;
}

/// Image / caption embedding matrices (rows follow dataset sample order).
inline std::pair<MatrixXd, MatrixXd> embedding_matrices(const Dataset& ds, std::string_view image_table,
                                                        std::string_view text_table) {
  const auto& img = ds.table(image_table);
  const auto& txt = ds.table(text_table);
  const auto n = static_cast<Index>(ds.samples.size());
  MatrixXd xs(n, static_cast<Index>(img.dim())), ys(n, static_cast<Index>(txt.dim()));
  for (Index i = 0; i < n; ++i) {
    const auto& s = ds.samples[static_cast<std::size_t>(i)];
    const auto x = ds.lookup(image_table, s);
    const auto y = ds.lookup(text_table, s);
    if (!x) throw MissingDataError("sample '" + s.sample_id + "': no '" + std::string(image_table) + "' embedding");
    if (!y) throw MissingDataError("sample '" + s.sample_id + "': no '" + std::string(text_table) + "' embedding");
    xs.row(i) = to_vector(*x).transpose();
    ys.row(i) = to_vector(*y).transpose();
  }
  return {std::move(xs), std::move(ys)};
}

/// Fits the joint Gaussian on the (image, candidate) pairs of every sample.
inline GaussianStats fit_gaussian_stats(const Dataset& ds, std::optional<double> shrinkage = std::nullopt,
                                        std::string_view image_table = tables::clip_image,
                                        std::string_view text_table = tables::clip_text) {
  auto [xs, ys] = embedding_matrices(ds, image_table, text_table);
  return GaussianStats::fit(xs, ys, shrinkage);
}

struct MidScores {
  std::vector<std::string> sample_ids;
  std::vector<double> per_sample;
  double mean = 0.0;
};

inline MidScores mid_scores(const GaussianStats& stats, const Dataset& ds,
                            std::string_view image_table = tables::clip_image,
                            std::string_view text_table = tables::clip_text) {
  MidScores out;
  if (ds.samples.empty()) return out;
  auto [xs, ys] = embedding_matrices(ds, image_table, text_table);
  out.sample_ids.reserve(ds.samples.size());
  out.per_sample.reserve(ds.samples.size());
  double sum = 0.0;
  for (Index i = 0; i < xs.rows(); ++i) {
    const double v = pmi(stats, xs.row(i).transpose(), ys.row(i).transpose());
    out.sample_ids.push_back(ds.samples[static_cast<std::size_t>(i)].sample_id);
    out.per_sample.push_back(v);
    sum += v;
  }
  out.mean = sum / static_cast<double>(out.per_sample.size());
  return out;
}

// ---------------------------------------------------------------------------
// Stats cache: "RSGS" | u32 version=1 | u32 dim_x | u32 dim_y | u64 n_fit |
// f64 shrinkage | f64 mu_x[dim_x] | f64 mu_y[dim_y] | f64 sigma_xy[(dx+dy)^2]
// (row-major). Reloading refactors at exactly the stored shrinkage.

inline constexpr std::string_view kStatsMagic = "RSGS";

inline void write_stats(std::ostream& out, const GaussianStats& s) {
  out.write(kStatsMagic.data(), 4);
  detail::put_le<std::uint32_t>(out, 1);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.dim_x()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.dim_y()));
  detail::put_le<std::uint64_t>(out, s.n_fit());
  detail::put_f64(out, s.shrinkage_used());
  for (Index i = 0; i < s.dim_x(); ++i) detail::put_f64(out, s.mu_x()[i]);
  for (Index i = 0; i < s.dim_y(); ++i) detail::put_f64(out, s.mu_y()[i]);
  const auto& sig = s.sigma_xy();
  for (Index r = 0; r < sig.rows(); ++r)
    for (Index c = 0; c < sig.cols(); ++c) detail::put_f64(out, sig(r, c));
}

inline GaussianStats read_stats(std::istream& in, const std::string& origin = "stats cache") {
  detail::expect_magic(in, kStatsMagic, origin);
  if (detail::get_le<std::uint32_t>(in, origin) != 1) throw InputError(origin + ": unsupported version");
  const auto dx = static_cast<Index>(detail::get_le<std::uint32_t>(in, origin));
  const auto dy = static_cast<Index>(detail::get_le<std::uint32_t>(in, origin));
  const auto n_fit = detail::get_le<std::uint64_t>(in, origin);
  const double shrink = detail::get_f64(in, origin);
  VectorXd mx(dx), my(dy);
  for (Index i = 0; i < dx; ++i) mx[i] = detail::get_f64(in, origin);
  for (Index i = 0; i < dy; ++i) my[i] = detail::get_f64(in, origin);
  MatrixXd sig(dx + dy, dx + dy);
  for (Index r = 0; r < sig.rows(); ++r)
    for (Index c = 0; c < sig.cols(); ++c) sig(r, c) = detail::get_f64(in, origin);
  return GaussianStats::from_moments(mx, my, sig, n_fit, shrink, false);
}

inline void save_stats(const fs::path& path, const GaussianStats& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write stats cache: " + path.string());
  write_stats(out, s);
}

inline GaussianStats load_stats(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing stats cache: " + path.string());
  return read_stats(in, path.string());
}

}  // namespace redemption
