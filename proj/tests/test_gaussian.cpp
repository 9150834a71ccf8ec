#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "redemption/gaussian.hpp"
#include "support/fixtures.hpp"

using namespace redemption;

namespace {

// Bivariate standard normal log density with correlation rho.
double log_bvn(double x, double y, double rho) {
  const double q = (x * x - 2.0 * rho * x * y + y * y) / (1.0 - rho * rho);
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(1.0 - rho * rho) - 0.5 * q;
}

double log_std_normal(double x) { return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * x * x; }

// Samples where coordinate i of y has correlation rho with coordinate i of x.
std::pair<MatrixXd, MatrixXd> correlated(Index n, Index d, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXd xs(n, d), ys(n, d);
  const double s = std::sqrt(1.0 - rho * rho);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) {
      xs(i, k) = g(rng);
      ys(i, k) = rho * xs(i, k) + s * g(rng);
    }
  return {xs, ys};
}

MatrixXd random_spd(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixXd a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = g(rng);
  return a * a.transpose() + 0.1 * MatrixXd::Identity(d, d);
}

GaussianStats one_dim(double rho) {
  MatrixXd sig(2, 2);
  sig << 1.0, rho, rho, 1.0;
  return GaussianStats::from_moments(VectorXd::Zero(1), VectorXd::Zero(1), sig, 0, 0.0, false);
}

VectorXd v1(double a) { return VectorXd::Constant(1, a); }

}  // namespace

TEST(Fit, TwoPairsHandArithmetic) {
  MatrixXd xs(2, 1), ys(2, 1);
  xs << 0, 2;
  ys << 0, 2;
  const auto s = GaussianStats::fit(xs, ys);
  EXPECT_DOUBLE_EQ(s.mu_x()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.mu_y()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.sigma_x()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.sigma_y()(0, 0), 2.0);
  EXPECT_TRUE(s.sigma_xy().isApprox(MatrixXd::Constant(2, 2, 2.0)));
  EXPECT_GT(s.shrinkage_used(), 0.0);
  EXPECT_EQ(s.n_fit(), 2u);
}

TEST(Fit, FactorsReproduceJitteredCovariance) {
  const auto [xs, ys] = correlated(300, 3, 0.4, 5);
  const auto s = GaussianStats::fit(xs, ys, 0.01);
  EXPECT_DOUBLE_EQ(s.shrinkage_used(), 0.01);
  const auto check = [&](const MatrixXd& l, const MatrixXd& sigma, double logdet) {
    const MatrixXd target = sigma + s.shrinkage_used() * MatrixXd::Identity(sigma.rows(), sigma.cols());
    EXPECT_LE((l * l.transpose() - target).norm(), 1e-8 * target.norm());
    EXPECT_TRUE(l.isLowerTriangular());
    EXPECT_EQ(logdet, 2.0 * l.diagonal().array().log().sum());
  };
  check(s.chol_x(), s.sigma_x(), s.logdet_x());
  check(s.chol_y(), s.sigma_y(), s.logdet_y());
  check(s.chol_xy(), s.sigma_xy(), s.logdet_xy());
  EXPECT_LE((s.sigma_xy() - s.sigma_xy().transpose()).norm(), 1e-10 * s.sigma_xy().norm());
  EXPECT_EQ(s.sigma_xy().topLeftCorner(3, 3), s.sigma_x());
  EXPECT_EQ(s.sigma_xy().bottomRightCorner(3, 3), s.sigma_y());
}

TEST(Fit, Errors) {
  MatrixXd one(1, 2);
  one << 1, 2;
  EXPECT_THROW(GaussianStats::fit(one, one), DegenerateDataError);
  MatrixXd a(3, 1), b(2, 1);
  a << 1, 2, 3;
  b << 1, 2;
  EXPECT_THROW(GaussianStats::fit(a, b), InputError);
  // Constant data has zero trace so no jitter ladder can rescue it.
  const MatrixXd c = MatrixXd::Constant(5, 2, 3.0);
  EXPECT_THROW(GaussianStats::fit(c, c), DegenerateDataError);
  const auto [xs, ys] = correlated(10, 1, 0.1, 1);
  EXPECT_THROW(GaussianStats::fit(xs, ys, -1.0), InputError);
}

TEST(Fit, LargeSampleRecoversCovariance) {
  const double rho = 0.6;
  const auto [xs, ys] = correlated(50000, 2, rho, 2024);
  const auto s = GaussianStats::fit(xs, ys);
  MatrixXd truth = MatrixXd::Identity(4, 4);
  truth(0, 2) = truth(2, 0) = truth(1, 3) = truth(3, 1) = rho;
  EXPECT_LE((s.sigma_xy() - truth).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NEAR(mutual_information(s), -std::log(1.0 - rho * rho), 0.02);
}

TEST(Fit, IndependentCoordinatesGiveSmallCrossBlock) {
  const auto [xs, ys] = correlated(20000, 2, 0.0, 9);
  const auto s = GaussianStats::fit(xs, ys);
  EXPECT_LT(s.sigma_xy().topRightCorner(2, 2).cwiseAbs().maxCoeff(), 0.05);
}

TEST(MutualInformation, ClosedFormOneDim) {
  EXPECT_NEAR(mutual_information(one_dim(0.6)), 0.223144, 1e-6);
  EXPECT_NEAR(mutual_information(one_dim(0.6)), -0.5 * std::log(1.0 - 0.36), 1e-12);
}

TEST(MutualInformation, BlockDiagonalIsZero) {
  std::mt19937_64 rng(4);
  MatrixXd sig = MatrixXd::Zero(5, 5);
  sig.topLeftCorner(2, 2) = random_spd(2, rng);
  sig.bottomRightCorner(3, 3) = random_spd(3, rng);
  const auto s = GaussianStats::from_moments(VectorXd::Zero(2), VectorXd::Zero(3), sig, 0, 0.0, false);
  EXPECT_NEAR(mutual_information(s), 0.0, 1e-12);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    VectorXd x(2), y(3);
    for (auto& c : x) c = 3.0 * g(rng);
    for (auto& c : y) c = 3.0 * g(rng);
    EXPECT_NEAR(pmi(s, x, y), 0.0, 1e-9);
  }
}

TEST(MutualInformation, NonNegativeWithoutJitter) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    const Index dx = 1 + static_cast<Index>(rng() % 4), dy = 1 + static_cast<Index>(rng() % 4);
    const auto sig = random_spd(dx + dy, rng);
    const auto s = GaussianStats::from_moments(VectorXd::Zero(dx), VectorXd::Zero(dy), sig, 0, 0.0, false);
    EXPECT_GE(mutual_information(s), -1e-12);
  }
}

TEST(MutualInformation, RotationInvariant) {
  const auto [xs, ys] = correlated(2000, 3, 0.5, 31);
  std::mt19937_64 rng(8);
  const Eigen::HouseholderQR<MatrixXd> qr(random_spd(3, rng));
  const MatrixXd q = qr.householderQ();
  const auto a = GaussianStats::fit(xs, ys, 0.0);
  const auto b = GaussianStats::fit(xs * q.transpose(), ys, 0.0);
  EXPECT_NEAR(mutual_information(a), mutual_information(b), 1e-8);
}

TEST(Pmi, HandCaseMatchesDensityOracle) {
  const auto s = one_dim(0.5);
  const double oracle = log_bvn(1.0, 1.0, 0.5) - 2.0 * log_std_normal(1.0);
  EXPECT_NEAR(oracle, 0.477174, 1e-6);
  EXPECT_NEAR(pmi(s, v1(1.0), v1(1.0)), oracle, 1e-12);
  EXPECT_NEAR(pmi(s, v1(1.0), v1(1.0)), 0.477174, 1e-6);
}

TEST(Pmi, AtMeansEqualsMutualInformation) {
  const auto [xs, ys] = correlated(500, 2, 0.3, 12);
  const auto s = GaussianStats::fit(xs, ys);
  EXPECT_NEAR(pmi(s, s.mu_x(), s.mu_y()), mutual_information(s), 1e-12);
}

TEST(Pmi, TwoFormsAgree) {
  const auto [xs, ys] = correlated(400, 4, 0.7, 3);
  const auto s = GaussianStats::fit(xs, ys);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int t = 0; t < 1000; ++t) {
    VectorXd x(4), y(4);
    for (auto& c : x) c = g(rng);
    for (auto& c : y) c = g(rng);
    EXPECT_NEAR(pmi(s, x, y), pmi_log_density(s, x, y), 1e-9);
  }
}

TEST(Pmi, LengthMismatchThrows) {
  const auto s = one_dim(0.2);
  EXPECT_THROW(pmi(s, VectorXd::Zero(2), v1(0.0)), InputError);
}

TEST(MidScores, MeanOverFittingSampleApproachesMi) {
  auto ds = fixtures::synthetic_dataset({.samples = 20000, .samples_per_image = 1, .dim = 4, .scalars = false});
  const auto s = fit_gaussian_stats(ds);
  const auto mid = mid_scores(s, ds);
  ASSERT_EQ(mid.per_sample.size(), 20000u);
  EXPECT_NEAR(mid.mean, mutual_information(s), 0.05);
}

TEST(MidScores, SingletonMeanIsItsPmi) {
  auto ds = fixtures::synthetic_dataset({.samples = 30, .samples_per_image = 1});
  const auto s = fit_gaussian_stats(ds);
  ds.samples.resize(1);
  const auto mid = mid_scores(s, ds);
  ASSERT_EQ(mid.per_sample.size(), 1u);
  EXPECT_EQ(mid.mean, mid.per_sample[0]);
  EXPECT_EQ(mid.sample_ids[0], "s0");
}

TEST(StatsCache, RoundTripReproducesScores) {
  auto ds = fixtures::synthetic_dataset({.samples = 50});
  const auto s = fit_gaussian_stats(ds);
  std::stringstream buf;
  write_stats(buf, s);
  const auto back = read_stats(buf);
  EXPECT_EQ(back.shrinkage_used(), s.shrinkage_used());
  EXPECT_EQ(back.n_fit(), s.n_fit());
  EXPECT_EQ(mutual_information(back), mutual_information(s));
  EXPECT_EQ(mid_scores(back, ds).per_sample, mid_scores(s, ds).per_sample);

  std::stringstream bad("RSEB");
  EXPECT_THROW(read_stats(bad), InputError);
}
