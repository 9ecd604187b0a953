#include "coverlab/chenstein.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "coverlab/errors.hpp"
#include "coverlab/parallel.hpp"

namespace coverlab {

namespace {

bool in_nbhd(const std::vector<int>& B, int s) { return std::find(B.begin(), B.end(), s) != B.end(); }

std::uint64_t outside_mask(const std::vector<int>& B, int m) {
  std::uint64_t mask = (m == 64) ? ~std::uint64_t{0} : (std::uint64_t{1} << m) - 1;
  for (int s : B) mask &= ~(std::uint64_t{1} << s);
  return mask;
}

}  // namespace

void validate(const ChenSteinInput& in, double tol) {
  const int n = static_cast<int>(in.size());
  if (in.nbhd.size() != in.p.size()) throw ConfigError("one neighbourhood per index required");
  if (!in.b3_terms.empty() && in.b3_terms.size() != in.p.size()) throw ConfigError("one b3 term per index required");
  for (int t = 0; t < n; ++t) {
    const double pt = in.p[static_cast<std::size_t>(t)];
    if (!(pt >= 0.0 && pt <= 1.0)) throw ConfigError("marginal p_" + std::to_string(t) + " outside [0,1]");
    const auto& B = in.nbhd[static_cast<std::size_t>(t)];
    if (!in_nbhd(B, t)) throw ConfigError("B_" + std::to_string(t) + " must contain " + std::to_string(t));
    for (int s : B) {
      if (s < 0 || s >= n) throw ConfigError("neighbourhood index out of range");
      if (s == t) continue;
      auto it = in.pair.find({s, t});
      if (it == in.pair.end()) it = in.pair.find({t, s});
      if (it == in.pair.end())
        throw ConfigError("missing pair moment p_{" + std::to_string(s) + "," + std::to_string(t) + "}");
      const double ps = in.p[static_cast<std::size_t>(s)];
      if (it->second < -tol || it->second > std::min(ps, pt) + tol)
        throw ConfigError("pair moment p_{" + std::to_string(s) + "," + std::to_string(t) + "} outside [0, min(p_s,p_t)]");
    }
  }
  for (double b : in.b3_terms)
    if (!(b >= 0.0)) throw ConfigError("b3 terms must be >= 0");
}

ChenSteinBounds bounds(const ChenSteinInput& in) {
  validate(in);
  ChenSteinBounds b;
  for (std::size_t t = 0; t < in.size(); ++t) {
    for (int s : in.nbhd[t]) {
      b.b1 += in.p[t] * in.p[static_cast<std::size_t>(s)];
      if (s == static_cast<int>(t)) continue;
      const auto a = in.pair.find({s, static_cast<int>(t)});
      const auto c = in.pair.find({static_cast<int>(t), s});
      if (a != in.pair.end() && c != in.pair.end())
        b.b2 += 0.5 * (a->second + c->second);
      else
        b.b2 += (a != in.pair.end() ? a : c)->second;
    }
  }
  for (double x : in.b3_terms) b.b3 += x;
  b.tv_bound = 8.0 * (b.b1 + b.b2 + b.b3);
  return b;
}

nlohmann::json to_json(const ChenSteinInput& in) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [k, v] : in.pair) pairs.push_back({k.first, k.second, v});
  return {{"index_set", in.size()}, {"neighborhoods", in.nbhd}, {"p", in.p}, {"pair_moments", pairs}, {"b3_terms", in.b3_terms}};
}

ChenSteinInput input_from_json(const nlohmann::json& j) {
  ChenSteinInput in;
  try {
    in.nbhd = j.at("neighborhoods").get<std::vector<std::vector<int>>>();
    in.p = j.at("p").get<std::vector<double>>();
    for (const auto& e : j.at("pair_moments")) in.pair[{e.at(0).get<int>(), e.at(1).get<int>()}] = e.at(2).get<double>();
    if (j.contains("b3_terms")) in.b3_terms = j.at("b3_terms").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed Chen–Stein input: ") + e.what());
  }
  validate(in);
  return in;
}

nlohmann::json to_json(const ChenSteinBounds& b) {
  return {{"b1", b.b1}, {"b2", b.b2}, {"b3", b.b3}, {"tv_bound", b.tv_bound}};
}

void validate(const TinyProcessSpec& spec) {
  if (spec.m < 0 || spec.m > kMaxTinyIndices)
    throw ResourceError("tiny process has " + std::to_string(spec.m) + " indices; at most 20 are enumerable");
  if (spec.w.size() != (std::size_t{1} << spec.m)) throw ConfigError("tiny process needs 2^m weights");
  mpq_class total(0);
  for (const auto& x : spec.w) {
    if (x < 0) throw ConfigError("negative weight in tiny process");
    total += x;
  }
  if (total != 1) throw ConfigError("tiny process weights must sum to 1");
}

TinyProcessSpec bernoulli_process(const BernoulliFieldSpec& b) {
  TinyProcessSpec s;
  s.m = static_cast<int>(b.p.size());
  if (s.m > kMaxTinyIndices) throw ResourceError("Bernoulli field too large to enumerate");
  s.w.assign(std::size_t{1} << s.m, mpq_class(1));
  for (int t = 0; t < s.m; ++t) {
    const mpq_class& p = b.p[static_cast<std::size_t>(t)];
    if (p < 0 || p > 1) throw ConfigError("Bernoulli parameter outside [0,1]");
    const mpq_class q = 1 - p;
    for (std::size_t w = 0; w < s.w.size(); ++w) s.w[w] *= (w >> t & 1u) ? p : q;
  }
  return s;
}

mpq_class exact_tv(const TinyProcessSpec& a, const TinyProcessSpec& b) {
  validate(a);
  validate(b);
  if (a.m != b.m) throw ConfigError("exact_tv: index sets differ");
  mpq_class s(0);
  for (std::size_t w = 0; w < a.w.size(); ++w) s += abs(a.w[w] - b.w[w]);
  return s / 2;
}

mpq_class exact_tv(const TinyProcessSpec& spec, const BernoulliFieldSpec& bernoulli) {
  if (static_cast<int>(bernoulli.p.size()) != spec.m) throw ConfigError("exact_tv: index sets differ");
  return exact_tv(spec, bernoulli_process(bernoulli));
}

ExactChenStein exact_chen_stein(const TinyProcessSpec& spec, const std::vector<std::vector<int>>& nbhd) {
  validate(spec);
  const int m = spec.m;
  if (static_cast<int>(nbhd.size()) != m) throw ConfigError("one neighbourhood per index required");
  ExactChenStein out;
  out.p.assign(static_cast<std::size_t>(m), mpq_class(0));
  for (std::size_t w = 0; w < spec.w.size(); ++w)
    for (int t = 0; t < m; ++t)
      if (w >> t & 1u) out.p[static_cast<std::size_t>(t)] += spec.w[w];

  out.b1 = 0;
  out.b2 = 0;
  out.b3 = 0;
  for (int t = 0; t < m; ++t) {
    const auto& B = nbhd[static_cast<std::size_t>(t)];
    if (!in_nbhd(B, t)) throw ConfigError("B_t must contain t");
    for (int s : B) {
      if (s < 0 || s >= m) throw ConfigError("neighbourhood index out of range");
      out.b1 += out.p[static_cast<std::size_t>(t)] * out.p[static_cast<std::size_t>(s)];
      if (s == t) continue;
      mpq_class pst(0);
      for (std::size_t w = 0; w < spec.w.size(); ++w)
        if ((w >> t & 1u) && (w >> s & 1u)) pst += spec.w[w];
      out.b2 += pst;
      out.input.pair[{s, t}] = pst.get_d();
    }
    // Group outcomes by the configuration outside B_t.
    const std::uint64_t mask = outside_mask(B, m);
    std::unordered_map<std::uint64_t, std::pair<mpq_class, mpq_class>> groups;  // key -> (P(key), P(key, X_t=1))
    for (std::size_t w = 0; w < spec.w.size(); ++w) {
      auto& g = groups[w & mask];
      g.first += spec.w[w];
      if (w >> t & 1u) g.second += spec.w[w];
    }
    mpq_class term(0);
    const mpq_class& pt = out.p[static_cast<std::size_t>(t)];
    for (const auto& [key, g] : groups) term += abs(g.second - pt * g.first);
    out.b3_terms.push_back(term);
    out.b3 += term;
  }
  out.tv_bound = 8 * (out.b1 + out.b2 + out.b3);
  out.input.nbhd = nbhd;
  for (const auto& p : out.p) out.input.p.push_back(p.get_d());
  for (const auto& b : out.b3_terms) out.input.b3_terms.push_back(b.get_d());
  return out;
}

TinyProcessParams random_tiny_params(int m, Rng& rng) {
  if (m < 1 || m > kMaxTinyIndices) throw ConfigError("tiny process size must be in [1,20]");
  TinyProcessParams p;
  p.m = m;
  const int K = 1 + rng.below(3);
  for (int z = 0; z < K; ++z) p.weight.push_back(1 + rng.below(5));
  p.p_num.assign(static_cast<std::size_t>(K), std::vector<int>(static_cast<std::size_t>(m)));
  for (int t = 0; t < m; ++t) {
    std::vector<int> q;
    for (int z = 0; z < K; ++z) q.push_back(rng.below(p.p_den / 2 + 1));
    std::sort(q.begin(), q.end());
    for (int z = 0; z < K; ++z) p.p_num[static_cast<std::size_t>(z)][static_cast<std::size_t>(t)] = q[static_cast<std::size_t>(z)];
  }
  for (int t = 0; t + 1 < m; ++t)
    if (rng.bernoulli(0.5)) p.edges.emplace_back(t, t + 1);
  p.j_num = rng.below(9);
  // Neighbourhoods: a random window around t, enlarged to cover every tilted edge at t.
  p.nbhd.resize(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t) {
    const int w = rng.below(3);
    auto& B = p.nbhd[static_cast<std::size_t>(t)];
    for (int s = std::max(0, t - w); s <= std::min(m - 1, t + w); ++s) B.push_back(s);
    for (const auto& [a, b] : p.edges) {
      if (a == t && !in_nbhd(B, b)) B.push_back(b);
      if (b == t && !in_nbhd(B, a)) B.push_back(a);
    }
    std::sort(B.begin(), B.end());
  }
  return p;
}

TinyProcessSpec tiny_process(const TinyProcessParams& params) {
  const int m = params.m;
  if (m < 0 || m > kMaxTinyIndices) throw ResourceError("tiny process too large to enumerate");
  TinyProcessSpec s;
  s.m = m;
  s.w.assign(std::size_t{1} << m, mpq_class(0));
  const mpq_class J(params.j_num, params.j_den);
  for (std::size_t z = 0; z < params.weight.size(); ++z) {
    std::vector<mpq_class> comp(s.w.size(), mpq_class(1));
    for (int t = 0; t < m; ++t) {
      const mpq_class q(params.p_num[z][static_cast<std::size_t>(t)], params.p_den);
      const mpq_class nq = 1 - q;
      for (std::size_t w = 0; w < comp.size(); ++w) comp[w] *= (w >> t & 1u) ? q : nq;
    }
    for (const auto& [a, b] : params.edges)
      for (std::size_t w = 0; w < comp.size(); ++w)
        if ((w >> a & 1u) && (w >> b & 1u)) comp[w] *= 1 + J;
    mpq_class total(0);
    for (const auto& c : comp) total += c;
    const mpq_class scale = mpq_class(params.weight[z]) / total;
    for (std::size_t w = 0; w < comp.size(); ++w) s.w[w] += comp[w] * scale;
  }
  mpq_class total(0);
  for (const auto& x : s.w) total += x;
  for (auto& x : s.w) x /= total;
  return s;
}

ProcessSampler tiny_sampler(const TinyProcessSpec& spec) {
  validate(spec);
  std::vector<double> cdf(spec.w.size());
  double acc = 0.0;
  for (std::size_t w = 0; w < spec.w.size(); ++w) cdf[w] = (acc += spec.w[w].get_d());
  const int m = spec.m;
  return [cdf = std::move(cdf), m](Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    const std::size_t w = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    std::vector<std::uint8_t> x(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) x[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>((std::min(w, cdf.size() - 1) >> t) & 1u);
    return x;
  };
}

B3Estimate b3_estimator(const ProcessSampler& sampler, const std::vector<double>& p,
                        const std::vector<std::vector<int>>& nbhd, const B3Budget& budget, std::uint64_t seed) {
  if (p.size() != nbhd.size()) throw ConfigError("one neighbourhood per index required");
  if (budget.outer < 2 || budget.inner < 2) throw ConfigError("b3 estimator needs at least 2 outer and 2 inner draws");
  const std::size_t n = p.size();
  B3Estimate est;
  est.outer = budget.outer;
  est.inner = budget.inner;
  est.terms.resize(n);
  parallel_for(n, [&](std::size_t t) {
    const auto& B = nbhd[t];
    if (!in_nbhd(B, static_cast<int>(t))) throw ConfigError("B_t must contain t");
    std::vector<int> outside;
    for (std::size_t s = 0; s < n; ++s)
      if (!in_nbhd(B, static_cast<int>(s))) outside.push_back(static_cast<int>(s));
    Rng rng(seed, stream_id("b3-estimator", t));
    const double J = static_cast<double>(budget.inner);
    std::vector<double> abs_means, jack, inner_var;
    B3Term term;
    for (std::size_t i = 0; i < budget.outer; ++i) {
      const std::vector<std::uint8_t> x0 = sampler(rng);
      double sum = 0.0, sum2 = 0.0;
      std::vector<double> vals;
      vals.reserve(budget.inner);
      std::uint64_t attempts = 0;
      while (vals.size() < budget.inner) {
        if (++attempts > budget.max_attempts_per_draw * budget.inner)
          throw ResourceError("b3 estimator: rejection sampling starved for index " + std::to_string(t));
        const std::vector<std::uint8_t> x = sampler(rng);
        bool match = true;
        for (int s : outside)
          if (x[static_cast<std::size_t>(s)] != x0[static_cast<std::size_t>(s)]) {
            match = false;
            break;
          }
        if (!match) {
          ++term.rejections;
          continue;
        }
        const double v = x[t] - p[t];
        vals.push_back(v);
        sum += v;
        sum2 += v * v;
      }
      const double mean = sum / J;
      const double theta = std::abs(mean);
      double loo = 0.0;
      for (double v : vals) loo += std::abs((sum - v) / (J - 1.0));
      loo /= J;
      abs_means.push_back(theta);
      jack.push_back(J * theta - (J - 1.0) * loo);
      inner_var.push_back(std::max(0.0, (sum2 - J * mean * mean) / (J - 1.0)) / J);
    }
    const double K = static_cast<double>(budget.outer);
    const double mean_abs = std::accumulate(abs_means.begin(), abs_means.end(), 0.0) / K;
    double ss = 0.0;
    for (double a : abs_means) ss += (a - mean_abs) * (a - mean_abs);
    term.estimate = mean_abs;
    term.corrected = std::max(0.0, std::accumulate(jack.begin(), jack.end(), 0.0) / K);
    term.outer_se = std::sqrt(ss / (K - 1.0) / K);
    term.inner_se = std::sqrt(std::accumulate(inner_var.begin(), inner_var.end(), 0.0) / K);
    est.terms[t] = term;
  });
  double var = 0.0;
  for (const auto& t : est.terms) {
    est.total += t.estimate;
    est.total_corrected += t.corrected;
    var += t.outer_se * t.outer_se;
  }
  est.total_se = std::sqrt(var);
  return est;
}

}  // namespace coverlab
