#include "doctest.h"

#include <cmath>

#include "coverlab/errors.hpp"
#include "coverlab/rng.hpp"
#include "coverlab/stats.hpp"

using namespace coverlab;

namespace {

std::uint64_t brute_adjacent(const SetSample& s, const LatticeConfig& cfg) {
  std::uint64_t c = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i)
    for (std::size_t j = i + 1; j < s.points.size(); ++j)
      c += torus_dist(cfg.point(s.points[i]), cfg.point(s.points[j]), cfg) == 1.0;
  return c;
}

SetSample random_set(const LatticeConfig& cfg, Rng& rng, int k) {
  std::vector<std::uint8_t> used(static_cast<std::size_t>(cfg.volume()), 0);
  SetSample s;
  while (static_cast<int>(s.points.size()) < k) {
    const auto x = static_cast<SiteIndex>(rng.below64(static_cast<std::uint64_t>(cfg.volume())));
    if (used[static_cast<std::size_t>(x)]++) continue;
    s.points.push_back(x);
  }
  return s;
}

// Sets of paired neighbours: each draw adds a site and one of its neighbours.
SetSample clustered_set(const LatticeConfig& cfg, Rng& rng, int pairs) {
  SetSample s;
  s.provenance = Provenance::surrogate;
  std::vector<std::uint8_t> used(static_cast<std::size_t>(cfg.volume()), 0);
  while (static_cast<int>(s.points.size()) < 2 * pairs) {
    const auto x = static_cast<SiteIndex>(rng.below64(static_cast<std::uint64_t>(cfg.volume())));
    const SiteIndex y = cfg.neighbors(x)[static_cast<std::size_t>(rng.below(6))];
    if (used[static_cast<std::size_t>(x)] || used[static_cast<std::size_t>(y)]) continue;
    used[static_cast<std::size_t>(x)] = used[static_cast<std::size_t>(y)] = 1;
    s.points.push_back(x);
    s.points.push_back(y);
  }
  return s;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("adjacent pairs: empty set, full torus, brute force") {
  const LatticeConfig cfg(3, 8);
  CHECK(adjacent_pairs(SetSample{}, cfg) == 0);
  SetSample all;
  for (SiteIndex s = 0; s < cfg.volume(); ++s) all.points.push_back(s);
  CHECK(adjacent_pairs(all, cfg) == 3 * 512);
  Rng rng(1, 0);
  for (int it = 0; it < 40; ++it) {
    const SetSample s = random_set(cfg, rng, 1 + rng.below(120));
    CHECK(adjacent_pairs(s, cfg) == brute_adjacent(s, cfg));
  }
}

TEST_CASE("property: adjacent pairs are translation invariant") {
  const LatticeConfig cfg(3, 9);
  Rng rng(2, 0);
  for (int it = 0; it < 30; ++it) {
    const SetSample s = random_set(cfg, rng, 60);
    const Point v{rng.below(9), rng.below(9), rng.below(9)};
    SetSample t = s;
    for (SiteIndex& x : t.points) x = cfg.index(cfg.translate(cfg.point(x), v));
    CHECK(adjacent_pairs(s, cfg) == adjacent_pairs(t, cfg));
  }
}

TEST_CASE("set validation") {
  const LatticeConfig cfg(3, 8);
  SetSample s;
  s.points = {0, 1, 512};
  CHECK_THROWS_AS(validate(s, cfg), ConfigError);
  s.points = {0, 1, 1};
  CHECK_THROWS_AS(validate(s, cfg), ConfigError);
  s.points = {3, 1};
  CHECK_NOTHROW(validate(s, cfg));
}

TEST_CASE("Bernoulli sets have the requested density") {
  const LatticeConfig cfg(3, 16);
  double total = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const SetSample s = bernoulli_set(cfg, 0.1, 4, r);
    CHECK(s.provenance == Provenance::bernoulli);
    CHECK_NOTHROW(validate(s, cfg));
    total += static_cast<double>(s.points.size());
  }
  const double N = 20.0 * 4096;
  CHECK(std::abs(total / N - 0.1) < 4 * std::sqrt(0.09 / N));
  CHECK(bernoulli_set(cfg, 0.1, 4, 3).points == bernoulli_set(cfg, 0.1, 4, 3).points);
}

TEST_CASE("rank test on known samples") {
  const RankTest t = rank_test({1, 2, 3}, {4, 5, 6});
  CHECK(t.u == 0.0);
  CHECK(t.auc == 0.0);
  CHECK(t.ks == 1.0);
  CHECK(t.z < 0);
  const RankTest ties = rank_test({1, 1, 1, 1}, {1, 1, 1, 1});
  CHECK(ties.auc == 0.5);
  CHECK(ties.p == 1.0);
  CHECK(ties.tv_lower_bound == 0.0);
}

TEST_CASE("property: the rank test is antisymmetric in its arguments") {
  Rng rng(7, 0);
  for (int it = 0; it < 20; ++it) {
    std::vector<double> a, b;
    for (int i = 0; i < 40; ++i) a.push_back(rng.below(10));
    for (int i = 0; i < 35; ++i) b.push_back(rng.below(12));
    const RankTest ab = rank_test(a, b), ba = rank_test(b, a);
    CHECK(ab.z == doctest::Approx(-ba.z));
    CHECK(ab.p == doctest::Approx(ba.p));
    CHECK(ab.auc == doctest::Approx(1.0 - ba.auc));
    CHECK(ab.ks == doctest::Approx(ba.ks));
    CHECK(ab.tv_lower_bound >= 0.0);
    CHECK(ab.tv_lower_bound <= ab.ks);
  }
}

TEST_CASE("discriminate: null case and a clustered alternative") {
  const LatticeConfig cfg(3, 16);
  std::vector<SetSample> a, b, c;
  Rng rng(5, 0);
  for (std::uint64_t r = 0; r < 60; ++r) {
    a.push_back(bernoulli_set(cfg, 0.05, 1, r));
    b.push_back(bernoulli_set(cfg, 0.05, 2, r));
    c.push_back(clustered_set(cfg, rng, 102));
  }
  const DiscriminationReport same = discriminate(a, b, cfg);
  CHECK(same.entry(Statistic::adjacent_pairs).p_bonferroni > 0.01);
  CHECK_FALSE(same.note.empty());
  const DiscriminationReport diff = discriminate(c, a, cfg);
  const auto& e = diff.entry(Statistic::adjacent_pairs);
  CHECK(e.p_bonferroni < 1e-6);
  CHECK(e.test.z > 0);
  CHECK(diff.tv_lower_bound > 0.5);
  const DiscriminationReport rev = discriminate(a, c, cfg);
  CHECK(rev.entry(Statistic::adjacent_pairs).test.z == doctest::Approx(-e.test.z));
  CHECK(to_json(diff).contains("tv_lower_bound"));
  std::vector<SetSample> few(a.begin(), a.begin() + 10);
  CHECK_THROWS_AS(discriminate(few, b, cfg), ConfigError);
}

TEST_CASE("tail shape report") {
  Rng rng(9, 0);
  std::vector<double> x;
  for (int i = 0; i < 5000; ++i) x.push_back(rng.normal() / std::sqrt(100.0));
  const std::vector<double> eta{0.02, 0.05, 0.1, 0.15, 0.2, 0.25};
  const TailShapeReport r = tail_shape_report(x, 100.0, eta);
  CHECK(r.monotone);
  for (std::size_t i = 1; i < r.exceedance.size(); ++i) CHECK(r.exceedance[i] <= r.exceedance[i - 1]);
  CHECK(r.fit_c > 0.0);
  // doubling A at fixed spread profile in eta^2 A halves c
  std::vector<double> y;
  for (double v : x) y.push_back(v / std::sqrt(2.0));
  const TailShapeReport r2 = tail_shape_report(y, 200.0, eta);
  CHECK(r2.fit_c * 200.0 == doctest::Approx(2 * r.fit_c * 100.0).epsilon(0.3));

  const TailShapeReport flat = tail_shape_report(std::vector<double>(200, 0.1), 50.0, eta);
  for (double e : flat.exceedance) CHECK((e == 0.0 || e == 1.0));
  CHECK_THROWS_AS(tail_shape_report(std::vector<double>(50, 0.0), 10.0, eta), ConfigError);
}

}  // TEST_SUITE
