#include "doctest.h"

#include <cmath>
#include <numbers>

#include "coverlab/gff.hpp"
#include "support.hpp"

using namespace coverlab;

namespace {

// Dense inverse of I - P on the interior of [0,n]^3, built directly from coordinates.
Eigen::MatrixXd dense_green(int n) {
  const int k = n - 1;
  const int N = k * k * k;
  auto id = [k](int a, int b, int c) { return ((a - 1) * k + (b - 1)) * k + (c - 1); };
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(N, N);
  for (int a = 1; a < n; ++a)
    for (int b = 1; b < n; ++b)
      for (int c = 1; c < n; ++c) {
        const int moves[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (auto& m : moves) {
          const int u = a + m[0], v = b + m[1], w = c + m[2];
          if (u < 1 || v < 1 || w < 1 || u >= n || v >= n || w >= n) continue;
          L(id(a, b, c), id(u, v, w)) -= 1.0 / 6.0;
        }
      }
  return L.inverse();
}

}  // namespace

TEST_SUITE("gff") {

TEST_CASE("covariance: symmetry, boundary rejection and the dense inverse") {
  const Gff g(3, 6);
  CHECK(g.interior_size() == 125);
  CHECK(g.factorized());
  const Eigen::MatrixXd G = dense_green(6);
  auto id = [](const Point& p) { return ((p[0] - 1) * 5 + (p[1] - 1)) * 5 + (p[2] - 1); };
  const std::vector<Point> pts{{1, 1, 1}, {3, 3, 3}, {2, 4, 1}, {5, 2, 3}};
  for (const Point& x : pts)
    for (const Point& y : pts) {
      CHECK(g.covariance(x, y) == doctest::Approx(g.covariance(y, x)).epsilon(1e-9));
      CHECK(g.covariance(x, y) == doctest::Approx(G(id(x), id(y))).epsilon(1e-8));
    }
  CHECK_THROWS_AS(g.covariance({0, 3, 3}, {3, 3, 3}), ConfigError);
  CHECK_THROWS_AS(g.covariance({7, 3, 3}, {3, 3, 3}), ConfigError);
}

TEST_CASE("one-dimensional box: killed-walk Green's function in closed form") {
  const int n = 10;
  const Gff g(1, n);
  // expected visits to y from x for a walk on {0..n} killed at 0 and n: 2 x (n - y) / n for x <= y
  for (int x = 1; x < n; ++x)
    for (int y = x; y < n; ++y) CHECK(g.covariance(Point{x}, Point{y}) == doctest::Approx(2.0 * x * (n - y) / n).epsilon(1e-9));
}

TEST_CASE("samples: zero mean and the exact covariance") {
  const Gff g(3, 6);
  const std::size_t N = 10'000;
  const Eigen::MatrixXd S = sample_field(g, 3, N);
  REQUIRE(S.rows() == static_cast<Eigen::Index>(N));
  const Eigen::VectorXd mean = S.colwise().mean();
  double worst_mean = 0, worst_cov = 0;
  for (int i = 0; i < 125; ++i) {
    const double var = g.covariance_column(i)(i);
    worst_mean = std::max(worst_mean, std::abs(mean(i)) / std::sqrt(var / N));
  }
  CHECK(worst_mean < 4.5);
  const Eigen::MatrixXd C = S.transpose() * S / static_cast<double>(N);
  for (int i = 0; i < 125; i += 7)
    for (int j = 0; j < 125; j += 11) {
      const double cij = g.covariance_column(j)(i), cii = g.covariance_column(i)(i), cjj = g.covariance_column(j)(j);
      const double se = std::sqrt((cii * cjj + cij * cij) / N);
      worst_cov = std::max(worst_cov, std::abs(C(i, j) - cij) / se);
    }
  CHECK(worst_cov < 5);
  const MardiaReport mr = mardia_check(g, S);
  CHECK(std::abs(mr.z) < 4);
  CHECK(mr.mean_norm2 == doctest::Approx(125).epsilon(0.02));
  // same seed, same samples
  CHECK(sample_field(g, 3, 5) == S.topRows(5));
}

TEST_CASE("centre variance increases towards G(0) with the box side") {
  const double G0 = testing::shipped_constants().G0;
  double prev = 0;
  for (int n : {8, 16, 32}) {
    CAPTURE(n);
    const Gff g(3, n);
    const double v = g.covariance({n / 2, n / 2, n / 2}, {n / 2, n / 2, n / 2});
    CHECK(v > prev);
    CHECK(v < G0);
    prev = v;
  }
  CHECK(prev > G0 - 0.1);
}

TEST_CASE("normal tails") {
  CHECK(normal_tail(0.0) == doctest::Approx(0.5));
  CHECK(normal_tail(1.96) == doctest::Approx(0.5 * std::erfc(1.96 / std::sqrt(2.0))).epsilon(1e-12));
  for (double a : {-0.5, 0.3, 1.2})
    for (double b : {0.0, 0.8}) CHECK(bivariate_normal_tail(a, b, 0.0) == doctest::Approx(normal_tail(a) * normal_tail(b)).epsilon(1e-8));
  // orthant probability: 1/4 + asin(rho) / (2 pi)
  for (double rho : {-0.6, 0.2, 0.9})
    CHECK(bivariate_normal_tail(0, 0, rho) == doctest::Approx(0.25 + std::asin(rho) / (2 * std::numbers::pi)).epsilon(1e-8));
  CHECK(bivariate_normal_tail(1.0, 1.5, 0.99) <= normal_tail(1.5));
  CHECK_THROWS_AS(bivariate_normal_tail(0, 0, 1.0), ConfigError);
}

TEST_CASE("high points") {
  const Gff g(3, 12);
  HighPointSpec hps;
  hps.alpha = 0.3;
  hps.G0 = testing::shipped_constants().G0;
  CHECK(hps.threshold(3, 12) == doctest::Approx(std::sqrt(2 * 0.3 * 3 * hps.G0 * std::log(12.0))));
  const auto margin = margin_sites(g, hps.interior_margin);
  CHECK(margin.size() == 7 * 7 * 7);
  const Eigen::MatrixXd S = sample_field(g, 5, 50);
  for (Eigen::Index k = 0; k < S.rows(); ++k) {
    const Eigen::VectorXd phi = S.row(k).transpose();
    const auto hp = high_points(g, phi, hps);
    for (SiteIndex s : hp) {
      CHECK(phi(g.interior_index(s)) >= hps.threshold(3, 12));
      CHECK(std::find(margin.begin(), margin.end(), s) != margin.end());
    }
  }
  // near alpha = 1 high points are rare at this size
  HighPointSpec hi = hps;
  hi.alpha = 0.99;
  std::size_t total = 0;
  for (Eigen::Index k = 0; k < S.rows(); ++k) total += high_points(g, S.row(k).transpose(), hi).size();
  CHECK(total <= 2);
  hi.alpha = 1.0;
  CHECK_THROWS_AS(hi.validate(), ConfigError);
  hi.alpha = 0.5;
  hi.G0 = 0.0;
  CHECK_THROWS_AS(hi.validate(), ConfigError);
}

TEST_CASE("high-point frequencies follow the exact Gaussian tail") {
  const Gff g(3, 12);
  HighPointSpec hps;
  hps.alpha = 0.4;
  hps.G0 = testing::shipped_constants().G0;
  const HighPointComparison c = high_point_frequencies(g, hps, 20'000, 7);
  CHECK(c.samples == 20'000);
  for (std::size_t i = 0; i < c.sites.size(); ++i)
    CHECK(c.p_exact[i] == doctest::Approx(normal_tail(c.threshold / c.sigma[i])));
  CHECK(c.chi2_p > 0.001);
  CHECK(std::abs(c.aggregate_z) < 4);
}

TEST_CASE("Markov decomposition: harmonic measure and the variance identity") {
  const Gff g(3, 16);
  const Eigen::MatrixXd S = sample_field(g, 9, 4000);
  const MarkovDecomposition md = markov_decompose(g, {8, 8, 8}, 3.0, &S);
  CHECK(md.p_sum == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(md.min_p >= 0.0);
  CHECK(md.identity_error < 1e-8);
  CHECK(md.v_phi2 == doctest::Approx(g.covariance({8, 8, 8}, {8, 8, 8})).epsilon(1e-9));
  CHECK(md.boundary.size() == md.p.size());
  // independence of h from the outside field
  CHECK(md.max_abs_corr_z < 4.5);
  CHECK(std::abs(testing::zscore(md.xi_slope, 1.0, md.xi_slope_se)) < 4);
  CHECK_THROWS_AS(markov_decompose(g, {3, 8, 8}, 3.0), GeometryError);
}

TEST_CASE("harmonic variance roughly halves when the ball radius doubles") {
  const Gff g(3, 40);
  const MarkovDecomposition a = markov_decompose(g, {20, 20, 20}, 3.0);
  const MarkovDecomposition b = markov_decompose(g, {20, 20, 20}, 6.0);
  const double ratio = b.v_xi2 / a.v_xi2;
  CAPTURE(ratio);
  CHECK(ratio > 0.35);
  CHECK(ratio < 0.65);
}

TEST_CASE("Chen–Stein inputs for high points") {
  const Gff g(3, 12);
  HighPointSpec hps;
  hps.alpha = 0.3;
  hps.G0 = testing::shipped_constants().G0;
  const Eigen::MatrixXd S = sample_field(g, 13, 20'000);
  std::vector<SiteIndex> sites;
  for (int a = 4; a <= 8; a += 2)
    for (int b = 5; b <= 7; ++b) sites.push_back(g.cfg().index({a, b, 6}));
  const GffChenStein cs = bernoulli_comparison(g, S, hps, sites, 2.0);
  CHECK_NOTHROW(validate(cs.input));
  CHECK(cs.bounds.tv_bound == doctest::Approx(8 * (cs.bounds.b1 + cs.bounds.b2 + cs.bounds.b3)));
  REQUIRE_FALSE(cs.adjacent_ratio_hat.empty());
  REQUIRE(cs.adjacent_ratio_hat.size() == cs.adjacent_ratio_exact.size());
  for (std::size_t i = 0; i < cs.adjacent_ratio_hat.size(); ++i) {
    CHECK(cs.adjacent_ratio_exact[i] > 1.0);
    CHECK(cs.adjacent_ratio_hat[i] == doctest::Approx(cs.adjacent_ratio_exact[i]).epsilon(0.25));
  }
}

}  // TEST_SUITE
