#include "doctest.h"

#include <cmath>
#include <map>

#include "coverlab/hitting.hpp"
#include "coverlab/oracle.hpp"
#include "coverlab/symmetry.hpp"
#include "coverlab/walk.hpp"
#include "support.hpp"

using namespace coverlab;

TEST_SUITE("hitting") {

TEST_CASE("exact hitting probability boundary cases") {
  const LatticeConfig cfg(3, 6);
  const SiteSet target(cfg.volume(), {cfg.index({0, 0, 0})});
  const SiteSet avoid(cfg.volume(), {cfg.index({3, 3, 3})});
  CHECK(exact_hit_prob(cfg, {0, 0, 0}, target, avoid) == 1.0);
  CHECK(exact_hit_prob(cfg, {3, 3, 3}, target, avoid) == 0.0);
  CHECK_THROWS_AS(exact_hit_prob(cfg, {1, 1, 1}, target, target), ConfigError);
}

TEST_CASE("exact hitting probability on Z_4^3 agrees with Monte Carlo") {
  const LatticeConfig cfg(3, 4);
  const SiteSet target(cfg.volume(), {cfg.index({0, 0, 0})});
  const SiteSet avoid(cfg.volume(), {cfg.index({2, 2, 2})});
  const double h = exact_hit_prob(cfg, {1, 0, 0}, target, avoid);
  CHECK(h > 0.0);
  CHECK(h < 1.0);
  const SiteSet both = set_union(target, avoid);
  const Stepper st(cfg);
  const std::uint64_t N = 40'000;
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < N; ++i) {
    WalkState s = start_at(cfg, {1, 0, 0}, 3, i);
    REQUIRE(run_until_hit(s, both, 1'000'000, st).hit);
    hits += target.contains(s.site);
  }
  const double p = static_cast<double>(hits) / N;
  CHECK(std::abs(testing::zscore(p, h, std::sqrt(h * (1 - h) / N))) < 3);
}

TEST_CASE("property: exact solutions are harmonic off the boundary data and monotone in the target") {
  const LatticeConfig cfg(3, 7);
  const ExactChainSolver solver(cfg);
  Rng rng(4, 0);
  for (int it = 0; it < 5; ++it) {
    std::vector<SiteIndex> t, a;
    for (int k = 0; k < 3; ++k) t.push_back(static_cast<SiteIndex>(rng.below64(static_cast<std::uint64_t>(cfg.volume()))));
    for (int k = 0; k < 3; ++k) {
      const auto s = static_cast<SiteIndex>(rng.below64(static_cast<std::uint64_t>(cfg.volume())));
      if (std::find(t.begin(), t.end(), s) == t.end()) a.push_back(s);
    }
    const SiteSet target(cfg.volume(), t), avoid(cfg.volume(), a);
    const std::vector<double> h = solver.hit_probabilities(target, avoid);
    for (SiteIndex v = 0; v < cfg.volume(); ++v) {
      CHECK(h[static_cast<std::size_t>(v)] >= 0.0);
      CHECK(h[static_cast<std::size_t>(v)] <= 1.0);
      if (target.contains(v) || avoid.contains(v)) continue;
      double avg = 0;
      for (SiteIndex nb : cfg.neighbors(v)) avg += h[static_cast<std::size_t>(nb)] / 6.0;
      CHECK(std::abs(avg - h[static_cast<std::size_t>(v)]) < 1e-9);
    }
    std::vector<SiteIndex> t2 = t;
    t2.push_back(static_cast<SiteIndex>(rng.below64(static_cast<std::uint64_t>(cfg.volume()))));
    const SiteSet bigger(cfg.volume(), t2);
    const SiteSet avoid2 = set_difference(avoid, bigger);
    const std::vector<double> h2 = solver.hit_probabilities(bigger, avoid2);
    for (SiteIndex v = 0; v < cfg.volume(); ++v) CHECK(h2[static_cast<std::size_t>(v)] >= h[static_cast<std::size_t>(v)] - 1e-10);
  }
}

TEST_CASE("green columns on a box are symmetric") {
  const LatticeConfig box(3, 8, Geometry::box);
  const SiteIndex a = box.index({3, 4, 4}), b = box.index({5, 2, 3});
  const Eigen::MatrixXd G = ExactChainSolver(box).green_columns({a, b}, SiteSet(box.volume(), {}));
  CHECK(G(b, 0) == doctest::Approx(G(a, 1)).epsilon(1e-9));
  CHECK(G(box.index({0, 4, 4}), 0) == 0.0);
}

TEST_CASE("shipped constants: p_3, the Green identity and the decay exponent") {
  const GreenConstants c = testing::shipped_constants();
  CHECK(c.d == 3);
  CHECK(c.p_d == doctest::Approx(0.34).epsilon(0.03));
  CHECK(c.G0 * (1.0 - c.p_d) == doctest::Approx(1.0).epsilon(1e-12));
  // independent route, combined error bars
  const double z = (c.G0 * (1.0 - c.p_mc) - 1.0) / std::hypot(c.G0 * c.p_mc_se, (1.0 - c.p_mc) * c.G0_se);
  CHECK(std::abs(z) < 3);
  CHECK(std::abs(c.slope + 1.0) < 0.05);
  CHECK(c.C_d == doctest::Approx(c.c_d / c.G0));
  const GreenConstants back = constants_from_json(constants_to_json(c));
  CHECK(back.G0 == c.G0);
  CHECK(back.p_mc == c.p_mc);
}

TEST_CASE("small-box constants estimate is consistent") {
  ConstantsParams p;
  p.box_sides = {12, 16, 24};
  p.kill_radii = {8, 16};
  p.mc_walks = 20'000;
  p.max_extrapolation_gap = 0.05;
  const GreenConstants c = estimate_constants(3, p);
  CHECK(c.G0 == doctest::Approx(1.5164).epsilon(0.02));
  CHECK(c.box_G0[0] < c.box_G0[1]);
  CHECK(c.box_G0[1] < c.box_G0[2]);
  CHECK_THROWS_AS(estimate_constants(2, p), ConfigError);
}

TEST_CASE("conditional hit probability matches the exact conditioned chain on a tiny torus") {
  const LatticeConfig cfg(3, 12);
  const oracle::ExactAnnulus ex = oracle::exact_annulus(cfg, 2.0, 5.0);
  const ExcursionHitReport rep = conditional_hit_prob(cfg, 2.0, 5.0, 200'000, 13);
  CHECK(rep.small_radius);

  const auto E = ex.K.rows(), S = ex.K.cols();
  double agg = 0;
  std::map<std::pair<Point, int>, std::pair<double, double>> strata;  // (hit mass, total mass)
  for (Eigen::Index a = 0; a < E; ++a) {
    const Point& pa = ex.entry_shell[static_cast<std::size_t>(a)];
    agg += (1.0 - ex.K_nohit.row(a).sum()) / static_cast<double>(E);
    for (Eigen::Index y = 0; y < S; ++y) {
      const Point& py = ex.exit_shell[static_cast<std::size_t>(y)];
      double dot = 0, na = 0, ny = 0;
      for (int i = 0; i < 3; ++i) {
        dot += static_cast<double>(pa[i]) * py[i];
        na += static_cast<double>(pa[i]) * pa[i];
        ny += static_cast<double>(py[i]) * py[i];
      }
      const double cosv = dot / std::sqrt(na * ny);
      const int bin = cosv < -1.0 / 3.0 ? 0 : (cosv < 1.0 / 3.0 ? 1 : 2);
      auto& s = strata[{canonical_offset(pa), bin}];
      s.first += ex.K(a, y) - ex.K_nohit(a, y);
      s.second += ex.K(a, y);
    }
  }
  CHECK(std::abs(testing::zscore(rep.estimate, agg, rep.stderr_)) < 3);
  int compared = 0;
  for (const auto& st : rep.strata) {
    if (st.samples < 500) continue;
    const auto& m = strata.at({st.entry_class, st.exit_bin});
    const double p = m.first / m.second;
    const double phat = static_cast<double>(st.hits) / static_cast<double>(st.samples);
    CHECK(std::abs(testing::zscore(phat, p, std::sqrt(p * (1 - p) / static_cast<double>(st.samples)))) < 4);
    ++compared;
  }
  CHECK(compared >= 3);
}

TEST_CASE("two-point hit probability: degenerate pair and union bound") {
  const LatticeConfig cfg(3, 24);
  const ExcursionHitReport one = conditional_hit_prob(cfg, 3.0, 10.0, 40'000, 2);
  const ExcursionHitReport same = two_point_hit_prob(cfg, {0, 0, 0}, 3.0, 10.0, 40'000, 2);
  CHECK(same.hits == one.hits);
  const ExcursionHitReport adj = two_point_hit_prob(cfg, {1, 0, 0}, 3.0, 10.0, 40'000, 5);
  CHECK(adj.estimate > one.estimate);
  CHECK(adj.estimate <= 2 * one.estimate + 3 * (adj.stderr_ + 2 * one.stderr_));
}

}  // TEST_SUITE
