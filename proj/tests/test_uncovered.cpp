#include "doctest.h"

#include <cmath>
#include <numeric>

#include "coverlab/oracle.hpp"
#include "coverlab/uncovered.hpp"
#include "product_identity.hpp"
#include "support.hpp"

using namespace coverlab;

namespace {

SurrogateParams tiny_params(const LatticeConfig& cfg, const oracle::ExactAnnulus& ex, double alpha = 0.9) {
  const Radii radii = choose_radii(cfg, alpha, 0.05, std::nullopt, 2.0, 5.0);
  return compute_params(cfg, alpha, 0.05, 0.0, 0.0, testing::shipped_constants(), ex.T, ex.m, radii);
}

}  // namespace

TEST_SUITE("uncovered") {

TEST_CASE("radius selection") {
  const LatticeConfig cfg(3, 64);
  const Radii f = choose_radii(cfg, 0.9, 0.05, std::nullopt, std::nullopt, std::nullopt);
  CHECK(f.source == "formula");
  CHECK(f.gamma == doctest::Approx(0.75));
  CHECK(f.R == doctest::Approx(std::pow(64.0, 0.75)));
  CHECK(f.r == doctest::Approx(std::pow(64.0, 0.75 * 0.95)));
  const Radii o = choose_radii(cfg, 0.6, 0.05, 0.7, std::nullopt, std::nullopt);
  CHECK(o.source == "gamma_override");
  CHECK(o.R == doctest::Approx(std::pow(64.0, 0.7)));
  const Radii e = choose_radii(cfg, 0.6, 0.05, std::nullopt, 3.0, 12.0);
  CHECK(e.source == "explicit");
  CHECK(e.r == 3.0);
  CHECK(e.R == 12.0);
  CHECK_THROWS_AS(choose_radii(cfg, 0.6, 0.05, std::nullopt, 3.0, std::nullopt), ConfigError);
  CHECK_THROWS_AS(choose_radii(LatticeConfig(3, 16), 0.9, 0.05, std::nullopt, 3.0, 8.0), GeometryError);
  // gamma = 2 alpha - 1 - eps <= 0
  CHECK_THROWS_AS(choose_radii(cfg, 0.5, 0.05, std::nullopt, std::nullopt, std::nullopt), ConfigError);
}

TEST_CASE("derived parameters: algebraic identities") {
  const LatticeConfig cfg(3, 32);
  const GreenConstants c = testing::shipped_constants();
  const Radii radii = choose_radii(cfg, 0.9, 0.05, 0.75, std::nullopt, std::nullopt);
  const SurrogateParams p = compute_params(cfg, 0.9, 0.05, 0.05, 0.1, c, 223.0, 0.0046, radii);
  CHECK(p.m * p.t_star == doctest::Approx(3.0 * std::log(32.0) * p.T).epsilon(1e-12));
  const double A = static_cast<double>(p.A);
  CHECK((1.0 + p.delta) * A * p.T <= p.alpha * p.t_star * (1 + 1e-12));
  CHECK(p.alpha * p.t_star < (1.0 + p.delta) * (A + 1.0) * p.T);
  CHECK(p.A_real * (1.0 + p.delta) == doctest::Approx(p.alpha * p.t_star / p.T).epsilon(1e-12));
  CHECK(p.A_prime > p.A_real);

  const SurrogateParams p2 = compute_params(cfg, 0.9, 0.05, 0.05, 0.1, c, 223.0, 0.0092, radii);
  CHECK(p2.t_star == doctest::Approx(p.t_star / 2).epsilon(1e-12));

  // Recomputed from the defining formulas with the same inputs.
  const double n = 32, r = std::pow(n, 0.75 * 0.95);
  const double delta = std::pow(r, -0.5) * std::pow(n, 0.05);
  const double t_star = 3 * std::log(n) * 223.0 / 0.0046;
  CHECK(p.delta == doctest::Approx(delta).epsilon(1e-12));
  CHECK(p.A == static_cast<std::uint64_t>(std::floor(0.9 * t_star / ((1 + delta) * 223.0))));
  CHECK(p.A == 1511);
  CHECK(p.alpha_above_threshold);

  CHECK_THROWS_AS(compute_params(cfg, 0.9, 0.05, 0.05, 0.1, c, 223.0, 50.0, radii), ConfigError);
  CHECK_THROWS_AS(compute_params(cfg, 0.9, 0.05, 0.05, 0.1, c, 0.0, 0.0046, radii), ConfigError);
}

TEST_CASE("centre panel is a sublattice") {
  const LatticeConfig cfg(3, 32);
  const auto panel = centre_panel(cfg);
  CHECK(panel.size() == 512);
  for (SiteIndex s : panel)
    for (int i = 0; i < 3; ++i) CHECK(cfg.point(s)[i] % 4 == 0);
  CHECK(centre_panel(LatticeConfig(3, 6)).size() == 216);
}

TEST_CASE("f and m estimates agree with the exact excursion chain") {
  const LatticeConfig cfg(3, 12);
  const oracle::ExactAnnulus ex = oracle::exact_annulus(cfg, 2.0, 5.0);
  const FMEstimate fm = estimate_f_and_m(cfg, 2.0, 5.0, 1'000'000, 3);
  for (double f : fm.f) {
    CHECK(f > 0.0);
    CHECK(f <= 1.0);
  }
  CHECK(std::abs(testing::zscore(fm.m, ex.m, fm.m_se)) < 3);
  CHECK(std::abs(testing::zscore(fm.T, ex.T, fm.T_se)) < 3);

  const auto& shell = fm.geom->exit_shell();
  std::vector<double> exact(fm.f.size(), -1.0);
  for (std::size_t i = 0; i < shell.size(); ++i)
    for (std::size_t j = 0; j < shell.size(); ++j)
      exact[static_cast<std::size_t>(fm.geom->pair_orbit(static_cast<int>(i), static_cast<int>(j)))] =
          ex.f(ex.exit_index(shell[i]), ex.exit_index(shell[j]));
  int tested = 0;
  double worst = 0;
  for (std::size_t o = 0; o < fm.f.size(); ++o) {
    if (fm.counts[o] < 2000) continue;
    const double k = static_cast<double>(fm.counts[o]);
    const double f = exact[o];
    worst = std::max(worst, std::abs(testing::zscore(fm.f[o], f, std::sqrt(f * (1 - f) / k))));
    ++tested;
  }
  CAPTURE(tested);
  CHECK(tested >= 10);
  CHECK(worst < 4.5);
}

TEST_CASE("surrogate survival flags agree with a replay of the stored trajectory") {
  const LatticeConfig cfg(3, 12);
  const AnnulusGeometry geom(cfg, 2.0, 5.0);
  std::vector<SiteIndex> sites(static_cast<std::size_t>(cfg.volume()));
  std::iota(sites.begin(), sites.end(), SiteIndex{0});
  SurrogateOptions opt;
  opt.store_trajectory = true;
  opt.coverage_horizon = 3000;
  const SurrogateSet ss = build_surrogate(geom, 3, sites, 5, 0, opt);
  REQUIRE_FALSE(ss.partial);
  REQUIRE(ss.trajectory.size() == ss.steps + 1);
  const oracle::Trajectory tr{cfg, 0, ss.trajectory};
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto q = oracle::replay_Q(tr, cfg.point(sites[i]), 2.0, 5.0, 3);
    REQUIRE(q.has_value());
    CHECK(ss.Q[i] == (*q ? 1 : 0));
  }
  const auto fv = oracle::replay_first_visits(tr);
  for (SiteIndex x = 0; x < cfg.volume(); ++x)
    CHECK(static_cast<bool>(ss.covered_at_horizon[static_cast<std::size_t>(x)]) == (fv[static_cast<std::size_t>(x)] <= 3000));
  CHECK_THROWS_AS(build_surrogate(geom, 0, sites, 5, 0), ConfigError);
}

TEST_CASE("survival given the exit sequence is the product of per-excursion no-hit probabilities") {
  const LatticeConfig cfg(3, 12);
  const testing::ProductIdentity pi = testing::product_identity(cfg, 2.0, 5.0, 3, 20'000, 17);
  CHECK(pi.mean_q > 0.0);
  CHECK(pi.mean_q < 1.0);
  CHECK(std::abs(pi.diff / pi.diff_se) < 3);
  CHECK(pi.max_abs_z < 3.5);
}

TEST_CASE("property: coupling bookkeeping is monotone in the horizon and always explained") {
  const LatticeConfig cfg(3, 12);
  const oracle::ExactAnnulus ex = oracle::exact_annulus(cfg, 2.0, 5.0);
  const SurrogateParams p = tiny_params(cfg, ex);
  REQUIRE(p.A >= 1);
  const AnnulusGeometry geom(cfg, p.r, p.R);
  const std::uint64_t H = coupling_horizon(p);
  for (std::uint64_t rep = 0; rep < 6; ++rep) {
    const CouplingReplica a = coupling_replica(geom, p, H / 2, 8, rep);
    const CouplingReplica b = coupling_replica(geom, p, H, 8, rep);
    const CouplingReplica c = coupling_replica(geom, p, 2 * H, 8, rep);
    CHECK(a.surrogate == b.surrogate);
    CHECK(b.surrogate == c.surrogate);
    CHECK(a.uncovered >= b.uncovered);
    CHECK(b.uncovered >= c.uncovered);
    for (const auto* x : {&a, &b, &c}) {
      CHECK(x->explained == x->u_not_in_ubar);
      CHECK(x->sym_diff == x->u_not_in_ubar + x->ubar_not_in_u);
      CHECK(x->equal == (x->sym_diff == 0));
    }
  }
  const CouplingReport rep = coupling_check(cfg, p, 4, 3);
  CHECK(rep.replicas.size() == 4);
  CHECK(rep.unexplained_failures == 0);
  CHECK(std::accumulate(rep.sym_diff_histogram.begin(), rep.sym_diff_histogram.end(), std::uint64_t{0}) == 4);
}

TEST_CASE("pair moments") {
  const LatticeConfig cfg(3, 12);
  const oracle::ExactAnnulus ex = oracle::exact_annulus(cfg, 2.0, 5.0);
  const SurrogateParams p = tiny_params(cfg, ex);
  const PairMomentReport pm = pair_moment(cfg, p, {1, 0, 0}, 4, 200, 2);
  CHECK(pm.distance == 1.0);
  CHECK(pm.EQxQy <= std::min(pm.EQx, pm.EQy) + 1e-12);
  CHECK(pm.EQxQy >= 0.0);
  // neighbours survive together more often than independent sites would
  CHECK(pm.cov > -3 * pm.cov_se);
  CHECK_THROWS_AS(pair_moment(cfg, p, {0, 0, 0}, 4, 10, 2), ConfigError);
  CHECK_THROWS_AS(pair_moment(cfg, p, {1, 0, 0}, 1, 10, 2), ConfigError);
  CHECK_THROWS_AS(pair_moment(cfg, p, {1, 0, 0}, 2, 2000, 2), ConfigError);
}

TEST_CASE("surrogate moments on a tiny torus match the exact exp(-mA)") {
  const LatticeConfig cfg(3, 12);
  const oracle::ExactAnnulus ex = oracle::exact_annulus(cfg, 2.0, 5.0);
  const SurrogateParams p = tiny_params(cfg, ex);
  const FMEstimate fm = estimate_f_and_m(cfg, 2.0, 5.0, 400'000, 9);
  const SurrogateMoments mo = surrogate_moments(cfg, p, fm, centre_panel(cfg, 4), 8, 0.2, 4);
  CHECK(mo.undetermined == 0);
  CHECK(mo.samples == 8 * 64);
  CHECK(mo.mean_Q > 0.0);
  CHECK(mo.predicted == doctest::Approx(std::exp(-p.m * static_cast<double>(p.A))));
  CHECK(mo.window_samples == mo.samples);
  CHECK_THROWS_AS(surrogate_moments(cfg, p, fm, centre_panel(cfg, 4), 1, 0.2, 4), ConfigError);
}

}  // TEST_SUITE
