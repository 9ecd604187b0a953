#include "doctest.h"

#include <cmath>

#include "coverlab/chenstein.hpp"
#include "coverlab/errors.hpp"
#include "coverlab/oracle.hpp"
#include "support.hpp"

using namespace coverlab;

namespace {

ChenSteinInput chain4() {
  ChenSteinInput in;
  in.p = {0.1, 0.2, 0.3, 0.4};
  in.nbhd = {{0, 1}, {0, 1, 2}, {1, 2, 3}, {2, 3}};
  in.pair = {{{0, 1}, 0.05}, {{1, 2}, 0.1}, {{2, 3}, 0.2}};
  in.b3_terms = {0.01, 0.0, 0.02, 0.0};
  return in;
}

// Uniformly random joint law with rational weights k / total.
TinyProcessSpec random_law(int m, Rng& rng) {
  TinyProcessSpec s;
  s.m = m;
  std::vector<int> k(std::size_t{1} << m);
  int total = 0;
  for (int& x : k) total += (x = rng.below(10));
  if (total == 0) total = ++k[0];
  for (int x : k) s.w.push_back(mpq_class(x, total));
  for (auto& q : s.w) q.canonicalize();
  return s;
}

}  // namespace

TEST_SUITE("chenstein") {

TEST_CASE("independent process: b2 = b3 = 0 and b1 = sum p^2") {
  ChenSteinInput in;
  in.p = {0.1, 0.25, 0.5};
  in.nbhd = {{0}, {1}, {2}};
  const ChenSteinBounds b = bounds(in);
  CHECK(b.b1 == doctest::Approx(0.01 + 0.0625 + 0.25));
  CHECK(b.b2 == 0.0);
  CHECK(b.b3 == 0.0);
  CHECK(b.tv_bound == doctest::Approx(8 * b.b1));
  in.p = {0.0, 0.0, 0.0};
  CHECK(bounds(in).tv_bound == 0.0);
}

TEST_CASE("hand-evaluated four-site chain") {
  // b1: .03 + .12 + .27 + .28; b2: each edge twice; b3: .01 + .02
  const ChenSteinBounds b = bounds(chain4());
  CHECK(b.b1 == doctest::Approx(0.70));
  CHECK(b.b2 == doctest::Approx(0.70));
  CHECK(b.b3 == doctest::Approx(0.03));
  CHECK(b.tv_bound == doctest::Approx(11.44));
}

TEST_CASE("input validation") {
  ChenSteinInput in = chain4();
  in.pair.erase({1, 2});
  CHECK_THROWS_AS(bounds(in), ConfigError);
  in = chain4();
  in.nbhd[2] = {1, 3};
  in.pair[{1, 3}] = 0.0;
  CHECK_THROWS_AS(validate(in), ConfigError);
  in = chain4();
  in.p[0] = 1.5;
  CHECK_THROWS_AS(validate(in), ConfigError);
  in = chain4();
  in.pair[{0, 1}] = 0.5;
  CHECK_THROWS_AS(validate(in), ConfigError);
  CHECK_NOTHROW(validate(chain4()));
}

TEST_CASE("pair moments are symmetrised and JSON round-trips") {
  ChenSteinInput in = chain4();
  in.pair[{1, 0}] = 0.07;
  CHECK(bounds(in).b2 == doctest::Approx(bounds(chain4()).b2 + 2 * 0.01));
  const ChenSteinInput back = input_from_json(to_json(chain4()));
  CHECK(back.p == chain4().p);
  CHECK(back.nbhd == chain4().nbhd);
  CHECK(bounds(back).tv_bound == bounds(chain4()).tv_bound);
  CHECK_THROWS_AS(input_from_json(nlohmann::json{{"p", "x"}}), ConfigError);
}

TEST_CASE("property: the bound is monotone in pair moments and b3 terms") {
  Rng rng(3, 0);
  for (int it = 0; it < 50; ++it) {
    ChenSteinInput in = chain4();
    const ChenSteinBounds base = bounds(in);
    auto it2 = std::next(in.pair.begin(), rng.below(3));
    it2->second += 0.05 * rng.uniform();
    in.b3_terms[static_cast<std::size_t>(rng.below(4))] += rng.uniform();
    CHECK(bounds(in).tv_bound >= base.tv_bound);
  }
}

TEST_CASE("exact TV examples") {
  TinyProcessSpec ones;
  ones.m = 2;
  ones.w = {0, 0, 0, 1};
  const mpq_class half(1, 2);
  CHECK(exact_tv(ones, BernoulliFieldSpec{{half, half}}) == mpq_class(3, 4));
  CHECK(exact_tv(ones, ones) == 0);
  const TinyProcessSpec indep = bernoulli_process(BernoulliFieldSpec{{mpq_class(1, 3), mpq_class(1, 5)}});
  CHECK(exact_tv(indep, BernoulliFieldSpec{{mpq_class(1, 3), mpq_class(1, 5)}}) == 0);
  TinyProcessSpec big;
  big.m = 21;
  CHECK_THROWS_AS(validate(big), ResourceError);
}

TEST_CASE("property: exact TV is a metric on random triples") {
  Rng rng(11, 0);
  for (int it = 0; it < 30; ++it) {
    const int m = 1 + rng.below(4);
    const TinyProcessSpec a = random_law(m, rng), b = random_law(m, rng), c = random_law(m, rng);
    CHECK(exact_tv(a, b) == exact_tv(b, a));
    CHECK(exact_tv(a, c) <= exact_tv(a, b) + exact_tv(b, c));
    CHECK(exact_tv(a, a) == 0);
    CHECK(exact_tv(a, b) <= 1);
  }
}

TEST_CASE("property: exact TV never exceeds the bound on random positively correlated tiny processes") {
  Rng rng(5, 0);
  for (int it = 0; it < 40; ++it) {
    const int m = 2 + rng.below(7);
    const TinyProcessParams par = random_tiny_params(m, rng);
    const TinyProcessSpec spec = tiny_process(par);
    const ExactChenStein cs = exact_chen_stein(spec, par.nbhd);
    const mpq_class tv = exact_tv(spec, BernoulliFieldSpec{cs.p});
    CHECK(tv <= cs.tv_bound);
    // positive correlation: every pair moment at least the product of marginals
    const oracle::TinyJoint j{spec.m, spec.w};
    for (int s = 0; s < m; ++s)
      for (int t = s + 1; t < m; ++t) CHECK(oracle::pair_moment(j, s, t) >= cs.p[s] * cs.p[t]);
  }
}

TEST_CASE("exact Chen–Stein quantities agree with the enumeration oracle") {
  Rng rng(8, 0);
  for (int it = 0; it < 10; ++it) {
    const int m = 3 + rng.below(5);
    const TinyProcessParams par = random_tiny_params(m, rng);
    const TinyProcessSpec spec = tiny_process(par);
    const ExactChenStein cs = exact_chen_stein(spec, par.nbhd);
    const oracle::TinyJoint j{spec.m, spec.w};
    CHECK(cs.p == oracle::marginals(j));
    CHECK(cs.b3 == oracle::exact_b3(j, par.nbhd));
    mpq_class b1 = 0, b2 = 0;
    for (int t = 0; t < m; ++t)
      for (int s : par.nbhd[static_cast<std::size_t>(t)]) {
        b1 += cs.p[t] * cs.p[s];
        if (s != t) b2 += oracle::pair_moment(j, s, t);
      }
    CHECK(cs.b1 == b1);
    CHECK(cs.b2 == b2);
    CHECK(cs.tv_bound == 8 * (b1 + b2 + cs.b3));
  }
}

TEST_CASE("b3 estimator: independent index gives zero within the corrected interval") {
  const TinyProcessSpec spec = bernoulli_process(BernoulliFieldSpec{{mpq_class(1, 3), mpq_class(1, 4), mpq_class(1, 2)}});
  const std::vector<std::vector<int>> nbhd{{0}, {1}, {2}};
  const B3Estimate e = b3_estimator(tiny_sampler(spec), {1.0 / 3, 0.25, 0.5}, nbhd, {}, 7);
  CHECK(e.biased_upward);
  CHECK(e.terms.size() == 3);
  for (const auto& t : e.terms) {
    CHECK(t.estimate >= t.corrected);
    CHECK(std::abs(t.corrected) < 3 * std::hypot(t.outer_se, t.inner_se) + 0.01);
  }
}

TEST_CASE("b3 estimator: a perfect copy outside the neighbourhood gives 2p(1-p)") {
  TinyProcessSpec copy;
  copy.m = 2;
  copy.w = {mpq_class(3, 4), 0, 0, mpq_class(1, 4)};
  const B3Estimate e = b3_estimator(tiny_sampler(copy), {0.25, 0.25}, {{0}, {1}}, {400, 100, 2000}, 3);
  const double expected = 2 * 0.25 * 0.75;
  for (const auto& t : e.terms)
    CHECK(std::abs(testing::zscore(t.corrected, expected, std::hypot(t.outer_se, t.inner_se))) < 4);
  // agreement with the exact enumeration of the conditional expectation
  const ExactChenStein cs = exact_chen_stein(copy, {{0}, {1}});
  CHECK(cs.b3 == mpq_class(3, 4));
}

TEST_CASE("b3 estimator on a tiny process matches enumeration") {
  Rng rng(2, 0);
  const TinyProcessParams par = random_tiny_params(5, rng);
  const TinyProcessSpec spec = tiny_process(par);
  const ExactChenStein cs = exact_chen_stein(spec, par.nbhd);
  std::vector<double> p;
  for (const auto& q : cs.p) p.push_back(q.get_d());
  const B3Estimate e = b3_estimator(tiny_sampler(spec), p, par.nbhd, {300, 300, 5000}, 12);
  CHECK(std::abs(testing::zscore(e.total_corrected, cs.b3.get_d(), e.total_se)) < 4);
  CHECK_THROWS_AS(b3_estimator(tiny_sampler(spec), p, par.nbhd, {1, 1, 10}, 1), ConfigError);
}

}  // TEST_SUITE
