#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include <gmpxx.h>
#include "json.hpp"

#include "coverlab/rng.hpp"

namespace coverlab {

// Dependent Bernoulli family {X_t : t in I}, I = {0, ..., size-1}, with dependency neighbourhoods.
struct ChenSteinInput {
  std::vector<std::vector<int>> nbhd;             // B_t, must contain t
  std::vector<double> p;                          // P(X_t = 1)
  std::map<std::pair<int, int>, double> pair;     // E[X_s X_t] for s in B_t \ {t}, keyed (s, t) in either order
  std::vector<double> b3_terms;                   // E|E[X_t - p_t | X_s, s not in B_t]|, empty = 0
  std::size_t size() const { return p.size(); }
};

struct ChenSteinBounds {
  double b1 = 0.0;
  double b2 = 0.0;
  double b3 = 0.0;
  double tv_bound = 0.0;
};

void validate(const ChenSteinInput& in, double tol = 1e-9);
// b1 = sum_t sum_{s in B_t} p_t p_s (diagonal included), b2 = sum_t sum_{s in B_t\{t}} p_st,
// b3 = sum of the supplied terms, tv_bound = 8 (b1 + b2 + b3). p_st is averaged with p_ts when
// both are present.
ChenSteinBounds bounds(const ChenSteinInput& in);

nlohmann::json to_json(const ChenSteinInput& in);
ChenSteinInput input_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChenSteinBounds& b);

inline constexpr int kMaxTinyIndices = 20;

// Exact law on {0,1}^m; bit t of the outcome index is X_t.
struct TinyProcessSpec {
  int m = 0;
  std::vector<mpq_class> w;
};

struct BernoulliFieldSpec {
  std::vector<mpq_class> p;
};

void validate(const TinyProcessSpec& spec);
TinyProcessSpec bernoulli_process(const BernoulliFieldSpec& b);
// 1/2 sum_w |mu(w) - nu(w)|.
mpq_class exact_tv(const TinyProcessSpec& spec, const BernoulliFieldSpec& bernoulli);
mpq_class exact_tv(const TinyProcessSpec& a, const TinyProcessSpec& b);

struct ExactChenStein {
  ChenSteinInput input;  // doubles, for reporting
  mpq_class b1, b2, b3, tv_bound;
  std::vector<mpq_class> p;
  std::vector<mpq_class> b3_terms;
};
// All Chen–Stein quantities of a tiny process by enumeration, in exact arithmetic.
ExactChenStein exact_chen_stein(const TinyProcessSpec& spec, const std::vector<std::vector<int>>& nbhd);

// Integer parameters of a random tiny process: a latent mixture over components z of
// pairwise-tilted products,
//   w(x) ∝ sum_z weight[z] prod_t q_zt^{x_t} (1 - q_zt)^{1 - x_t} prod_{(s,t) in edges} (1 + J x_s x_t),
// with q_zt = p_num[z][t] / p_den and J = j_num / j_den. Within a component larger q is assigned to
// larger z for every site, so the mixture is positively correlated.
struct TinyProcessParams {
  int m = 0;
  std::vector<int> weight;
  std::vector<std::vector<int>> p_num;
  int p_den = 20;
  std::vector<std::pair<int, int>> edges;
  int j_num = 0;
  int j_den = 4;
  std::vector<std::vector<int>> nbhd;
};

TinyProcessParams random_tiny_params(int m, Rng& rng);
TinyProcessSpec tiny_process(const TinyProcessParams& params);

struct B3Term {
  double estimate = 0.0;    // raw mean of |inner mean|, biased upward
  double corrected = 0.0;   // jackknife-corrected over the inner stage
  double outer_se = 0.0;
  double inner_se = 0.0;
  std::uint64_t rejections = 0;
};

struct B3Estimate {
  std::vector<B3Term> terms;
  double total = 0.0;
  double total_corrected = 0.0;
  double total_se = 0.0;
  bool biased_upward = true;
  std::size_t outer = 0;
  std::size_t inner = 0;
};

struct B3Budget {
  std::size_t outer = 200;
  std::size_t inner = 200;
  // Rejection attempts allowed per accepted inner draw before giving up.
  std::uint64_t max_attempts_per_draw = 2000;
};

using ProcessSampler = std::function<std::vector<std::uint8_t>(Rng&)>;

// Nested Monte Carlo for each b3 term: the outer stage draws the outside configuration, the inner
// stage estimates E[X_t - p_t | outside] by rejection from the unconditional sampler.
B3Estimate b3_estimator(const ProcessSampler& sampler, const std::vector<double>& p,
                        const std::vector<std::vector<int>>& nbhd, const B3Budget& budget, std::uint64_t seed);
ProcessSampler tiny_sampler(const TinyProcessSpec& spec);

}  // namespace coverlab
