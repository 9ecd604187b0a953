#include "coverlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coverlab/errors.hpp"
#include "coverlab/rng.hpp"

namespace coverlab {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::uncovered: return "uncovered";
    case Provenance::surrogate: return "surrogate";
    case Provenance::gff_high: return "gff-high";
    case Provenance::bernoulli: return "bernoulli";
  }
  return "?";
}

std::string to_string(Statistic s) { return s == Statistic::adjacent_pairs ? "adjacent_pairs" : "size"; }

void validate(const SetSample& s, const LatticeConfig& cfg) {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(cfg.volume()), 0);
  for (SiteIndex x : s.points) {
    if (x < 0 || x >= cfg.volume()) throw ConfigError("set sample point outside the lattice");
    if (seen[static_cast<std::size_t>(x)]++) throw ConfigError("set sample lists a site twice");
  }
}

std::uint64_t adjacent_pairs(const SetSample& s, const LatticeConfig& cfg) {
  validate(s, cfg);
  std::vector<std::uint8_t> in(static_cast<std::size_t>(cfg.volume()), 0);
  for (SiteIndex x : s.points) in[static_cast<std::size_t>(x)] = 1;
  std::uint64_t twice = 0;
  for (SiteIndex x = 0; x < cfg.volume(); ++x) {
    if (!in[static_cast<std::size_t>(x)]) continue;
    for (SiteIndex y : cfg.neighbors(x)) twice += in[static_cast<std::size_t>(y)];
  }
  return twice / 2;
}

SetSample bernoulli_set(const LatticeConfig& cfg, double p, std::uint64_t seed, std::uint64_t replica) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("Bernoulli parameter outside [0,1]");
  Rng rng(seed, stream_id("bernoulli-set", replica));
  SetSample s{Provenance::bernoulli, {}, replica, seed};
  for (SiteIndex x = 0; x < cfg.volume(); ++x)
    if (rng.bernoulli(p)) s.points.push_back(x);
  return s;
}

double evaluate(Statistic st, const SetSample& s, const LatticeConfig& cfg) {
  if (st == Statistic::size) {
    std::vector<SiteIndex> p = s.points;
    std::sort(p.begin(), p.end());
    return static_cast<double>(std::unique(p.begin(), p.end()) - p.begin());
  }
  return static_cast<double>(adjacent_pairs(s, cfg));
}

RankTest rank_test(const std::vector<double>& a, const std::vector<double>& b) {
  RankTest r;
  r.n_a = a.size();
  r.n_b = b.size();
  if (a.empty() || b.empty()) throw ConfigError("rank test needs two non-empty samples");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size()), n = na + nb;
  r.mean_a = std::accumulate(a.begin(), a.end(), 0.0) / na;
  r.mean_b = std::accumulate(b.begin(), b.end(), 0.0) / nb;

  std::vector<std::pair<double, int>> all;
  for (double x : a) all.emplace_back(x, 0);
  for (double x : b) all.emplace_back(x, 1);
  std::sort(all.begin(), all.end());
  double rank_a = 0.0, ties = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second == 0) rank_a += avg;
    i = j;
  }
  r.u = rank_a - na * (na + 1.0) / 2.0;
  r.auc = r.u / (na * nb);
  const double var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  const double mu = na * nb / 2.0;
  if (var > 0) {
    const double diff = r.u - mu;
    const double cc = diff > 0 ? -0.5 : (diff < 0 ? 0.5 : 0.0);
    r.z = (diff + cc) / std::sqrt(var);
    r.p = std::min(1.0, std::erfc(std::abs(r.z) / std::sqrt(2.0)));
  }

  // Kolmogorov–Smirnov distance between the empirical CDFs.
  std::size_t ia = 0, ib = 0;
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  while (ia < sa.size() || ib < sb.size()) {
    double x;
    if (ib >= sb.size() || (ia < sa.size() && sa[ia] <= sb[ib]))
      x = sa[ia];
    else
      x = sb[ib];
    while (ia < sa.size() && sa[ia] == x) ++ia;
    while (ib < sb.size() && sb[ib] == x) ++ib;
    r.ks = std::max(r.ks, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  // DKW: sup|F_hat - F| <= sqrt(log(2/beta) / 2n) with probability 1 - beta; split beta = 0.05 over both samples.
  const double e = std::log(2.0 / 0.025) / 2.0;
  r.tv_lower_bound = std::max(0.0, r.ks - std::sqrt(e / na) - std::sqrt(e / nb));
  return r;
}

const DiscriminationEntry& DiscriminationReport::entry(Statistic s) const {
  for (const auto& e : entries)
    if (e.statistic == s) return e;
  throw ConfigError("statistic not in the report panel");
}

DiscriminationReport discriminate(const std::vector<SetSample>& a, const std::vector<SetSample>& b,
                                  const LatticeConfig& cfg, const std::vector<Statistic>& panel) {
  if (a.size() < 30 || b.size() < 30) throw ConfigError("discriminate needs at least 30 replicas per stream");
  DiscriminationReport rep;
  for (Statistic st : panel) {
    std::vector<double> va, vb;
    for (const auto& s : a) va.push_back(evaluate(st, s, cfg));
    for (const auto& s : b) vb.push_back(evaluate(st, s, cfg));
    DiscriminationEntry e{st, rank_test(va, vb), 1.0};
    e.p_bonferroni = std::min(1.0, e.test.p * static_cast<double>(panel.size()));
    rep.tv_lower_bound = std::max(rep.tv_lower_bound, e.test.tv_lower_bound);
    rep.entries.push_back(e);
  }
  rep.note = "TV between set laws is not computable; the bound is the certified distinguishing power of the statistic panel (lower bound only)";
  return rep;
}

nlohmann::json to_json(const DiscriminationReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"statistic", to_string(e.statistic)},
                       {"n_a", e.test.n_a},
                       {"n_b", e.test.n_b},
                       {"mean_a", e.test.mean_a},
                       {"mean_b", e.test.mean_b},
                       {"u", e.test.u},
                       {"z", e.test.z},
                       {"p", e.test.p},
                       {"p_bonferroni", e.p_bonferroni},
                       {"auc", e.test.auc},
                       {"ks", e.test.ks},
                       {"tv_lower_bound", e.test.tv_lower_bound}});
  return {{"entries", entries}, {"tv_lower_bound", r.tv_lower_bound}, {"note", r.note}};
}

TailShapeReport tail_shape_report(const std::vector<double>& x, double A, const std::vector<double>& eta) {
  if (x.size() < 100) throw ConfigError("tail shape report needs at least 100 samples");
  if (!(A > 0.0)) throw ConfigError("tail shape report needs A > 0");
  TailShapeReport rep;
  rep.A = A;
  rep.eta = eta;
  std::sort(rep.eta.begin(), rep.eta.end());
  const double N = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double e : rep.eta) {
    const double f = static_cast<double>(std::count_if(x.begin(), x.end(), [&](double v) { return std::abs(v) > e; })) / N;
    if (!rep.exceedance.empty() && f > rep.exceedance.back()) rep.monotone = false;
    rep.exceedance.push_back(f);
    if (f > 0.0 && f < 1.0) {
      const double u = e * e * A, y = std::log(f);
      sx += u;
      sy += y;
      sxx += u * u;
      sxy += u * y;
      ++rep.fit_points;
    }
  }
  if (rep.fit_points >= 2) {
    const double k = rep.fit_points;
    const double den = k * sxx - sx * sx;
    if (den > 0) {
      const double slope = (k * sxy - sx * sy) / den;
      rep.fit_c = -slope;
      rep.fit_log_c0 = (sy - slope * sx) / k;
    }
  }
  return rep;
}

}  // namespace coverlab
