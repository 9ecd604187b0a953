#include "coverlab/uncovered.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "coverlab/parallel.hpp"

namespace coverlab {

Radii choose_radii(const LatticeConfig& cfg, double alpha, double eps, std::optional<double> gamma_override,
                   std::optional<double> r, std::optional<double> R) {
  Radii out;
  if (r || R) {
    if (!(r && R)) throw ConfigError("explicit radii need both r and R");
    out.r = *r;
    out.R = *R;
    out.gamma = std::log(*R) / std::log(static_cast<double>(cfg.side()));
    out.source = "explicit";
  } else {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("epsilon must lie in (0,1)");
    out.gamma = gamma_override ? *gamma_override : 2.0 * alpha - 1.0 - eps;
    out.source = gamma_override ? "gamma_override" : "formula";
    if (!(out.gamma > 0.0 && out.gamma < 1.0)) throw ConfigError("gamma = " + std::to_string(out.gamma) + " outside (0,1)");
    const double n = cfg.side();
    out.R = std::pow(n, out.gamma);
    out.r = std::pow(n, out.gamma * (1.0 - eps));
  }
  check_annulus(AnnulusSpec{cfg.origin(), out.r, out.R}, cfg);
  return out;
}

FMEstimate fm_from_stats(const ExcursionStats& st) {
  FMEstimate fm;
  fm.geom = st.geom;
  fm.excursions = st.excursions;
  fm.T = st.T;
  fm.T_se = st.T_se;
  const std::size_t P = st.pair_counts.size();
  if (P == 0) throw ConfigError("f̂ needs pair statistics");
  const double N = static_cast<double>(std::max<std::uint64_t>(1, st.excursions));
  fm.counts = st.pair_counts;
  fm.hits = st.pair_hits;
  fm.f.resize(P);
  fm.neg_log_f.resize(P);
  double var_hits = 0.0;
  for (std::size_t o = 0; o < P; ++o) {
    const double k = static_cast<double>(st.pair_counts[o]);
    if (k == 0) {
      fm.f[o] = 1.0;
      fm.neg_log_f[o] = 0.0;
      continue;
    }
    const double h = static_cast<double>(st.pair_hits[o]) / k;
    if (st.pair_hits[o] == 0) {
      ++fm.zero_hit_orbits;
      fm.zero_hit_samples += st.pair_counts[o];
    }
    fm.f[o] = std::max(1.0 - h, 0.5 / k);
    // First-order correction of the upward bias of -log(1 - ĥ).
    const double corr = h < 1.0 ? h / (2.0 * k * (1.0 - h)) : 0.0;
    fm.neg_log_f[o] = std::max(0.0, -std::log(fm.f[o]) - corr);
    fm.m += k / N * fm.neg_log_f[o];
    if (h < 1.0) var_hits += static_cast<double>(st.pair_hits[o]) / ((1.0 - h) * N * N);
  }
  // Delta-method batch means: per time block, the linearised contribution of the block's pairs
  // and hits to m̂. This captures the correlation between excursions of one trajectory.
  std::vector<double> psi;
  for (std::size_t b = 0; b < st.batch_pair_counts.size(); ++b) {
    double num = 0.0, den = 0.0;
    for (std::size_t o = 0; o < P; ++o) {
      const double kb = st.batch_pair_counts[b][o];
      if (kb == 0) continue;
      const double k = static_cast<double>(st.pair_counts[o]);
      const double h = static_cast<double>(st.pair_hits[o]) / k;
      const double hb = b < st.batch_pair_hits.size() ? static_cast<double>(st.batch_pair_hits[b][o]) : kb * h;
      num += kb * fm.neg_log_f[o] + (h < 1.0 ? (hb - kb * h) / (1.0 - h) : 0.0);
      den += kb;
    }
    if (den > 0) psi.push_back(num / den);
  }
  double var_w = 0.0;
  if (psi.size() >= 2) {
    const double mean = std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
    for (double x : psi) var_w += (x - mean) * (x - mean);
    var_w /= static_cast<double>(psi.size() - 1) * static_cast<double>(psi.size());
  }
  fm.m_se = std::sqrt(std::max(var_hits, var_w));
  for (const auto& tv : st.mixing_tv)
    if (!tv.empty()) fm.mixing_tv_last = std::max(fm.mixing_tv_last, tv.back());
  return fm;
}

std::vector<SiteIndex> centre_panel(const LatticeConfig& cfg, int per_axis) {
  const int step = std::max(1, cfg.side() / per_axis);
  std::vector<SiteIndex> out;
  for (SiteIndex s = 0; s < cfg.volume(); ++s) {
    const Point p = cfg.point(s);
    bool on = true;
    for (int i = 0; i < cfg.dim() && on; ++i) on = p[i] % step == 0;
    if (on) out.push_back(s);
  }
  return out;
}

FMEstimate estimate_f_and_m(const LatticeConfig& cfg, double r, double R, std::uint64_t n_excursions,
                            std::uint64_t seed, int replicas) {
  auto geom = std::make_shared<AnnulusGeometry>(cfg, r, R);
  geom->build_pair_orbits();
  ExcursionRunConfig rc;
  rc.target_excursions = n_excursions;
  rc.replicas = replicas;
  rc.seed = seed;
  rc.mixing_max_k = 3;
  rc.centres = centre_panel(cfg);
  const ExcursionStats st = run_excursion_stats(geom, rc);
  if (st.cap_hit) throw ResourceError("step cap reached before the excursion target");
  return fm_from_stats(st);
}

SurrogateParams compute_params(const LatticeConfig& cfg, double alpha, double eps, double psi, double zeta,
                               const GreenConstants& constants, double T, double m, const Radii& radii) {
  if (!(T > 0.0) || !(m > 0.0)) throw ConfigError("compute_params needs T > 0 and m > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  SurrogateParams p;
  p.d = cfg.dim();
  p.n = cfg.side();
  p.alpha = alpha;
  p.eps = eps;
  p.psi = psi;
  p.zeta = zeta;
  p.gamma = radii.gamma;
  p.r = radii.r;
  p.R = radii.R;
  p.radii_source = radii.source;
  p.m = m;
  p.T = T;
  p.C_d = constants.C_d;
  p.p_d = constants.p_d;
  const double n = cfg.side();
  const double logN = static_cast<double>(cfg.dim()) * std::log(n);
  p.delta = std::pow(p.r, (2.0 - p.d) / 2.0) * std::pow(n, psi);
  p.t_star = logN * T / m;
  p.A_real = alpha * p.t_star / ((1.0 + p.delta) * T);
  p.A_prime = p.delta < 1.0 ? alpha * p.t_star / ((1.0 - p.delta) * T) : std::numeric_limits<double>::infinity();
  p.A_leading = alpha / constants.C_d * std::pow(p.r, p.d - 2.0) * logN;
  const double A = std::floor(p.A_real);
  if (A < 1.0) throw ConfigError("A = floor(alpha t* / ((1+delta) T)) < 1: instance too small for this alpha");
  p.A = static_cast<std::uint64_t>(A);

  const AnnulusCheck chk = check_annulus(AnnulusSpec{cfg.origin(), p.r, p.R}, cfg);
  p.validated = chk.validated;
  p.warnings = chk.warnings;
  p.alpha_above_threshold = alpha > (1.0 + constants.p_d) / 2.0;
  if (!p.alpha_above_threshold) p.warnings.push_back("alpha <= (1 + p_d)/2: outside the surrogate's regime");
  if (p.delta >= 1.0) p.warnings.push_back("delta >= 1: A' is infinite");
  if (zeta > 0.0 && !(zeta < p.gamma * (1.0 - eps))) p.warnings.push_back("zeta >= gamma (1 - eps)");
  return p;
}

namespace {

struct SurrogateListener {
  std::uint64_t A;
  const FMEstimate* table;
  SurrogateSet& out;
  AnnulusTracker<SurrogateListener>* tracker = nullptr;
  std::vector<std::uint64_t> exits;
  std::vector<std::int32_t> last;
  std::size_t determined = 0;

  void on_reach(int slot, std::uint64_t t) { out.first_reach[static_cast<std::size_t>(slot)] = t; }
  void on_entry(int, std::uint64_t, int) {}
  void on_visit(int slot, std::uint64_t t) {
    const auto s = static_cast<std::size_t>(slot);
    if (out.first_reach[s] != kNever && out.tau_tilde[s] == kNever) out.tau_tilde[s] = t;
  }
  void on_exit(int slot, std::uint64_t t, int idx) {
    const auto s = static_cast<std::size_t>(slot);
    const std::uint64_t e = exits[s]++;
    if (table && e >= 1 && e <= A) out.neg_log_f_sum[s] += table->neg_log_f_pair(last[s], idx);
    last[s] = idx;
    if (e == A) {
      out.sigma[s] = t;
      out.Q[s] = out.tau_tilde[s] == kNever ? 1 : 0;
      ++determined;
      tracker->retire(slot);
    }
  }
};

}  // namespace

SurrogateSet build_surrogate(const AnnulusGeometry& geom, std::uint64_t A, const std::vector<SiteIndex>& sites,
                             std::uint64_t seed, std::uint64_t replica, const SurrogateOptions& opt) {
  if (A < 1) throw ConfigError("surrogate needs A >= 1");
  if (opt.f_table && opt.f_table->geom.get() != &geom && opt.f_table->geom->exit_shell() != geom.exit_shell())
    throw ConfigError("f̂ table built for a different annulus");
  const LatticeConfig& cfg = geom.cfg();
  SurrogateSet out;
  out.sites = sites;
  const std::size_t N = sites.size();
  out.Q.assign(N, -1);
  out.sigma.assign(N, kNever);
  out.tau_tilde.assign(N, kNever);
  out.first_reach.assign(N, kNever);
  out.neg_log_f_sum.assign(N, opt.f_table ? 0.0 : std::numeric_limits<double>::quiet_NaN());

  SurrogateListener l{A, opt.f_table, out, nullptr, std::vector<std::uint64_t>(N, 0), std::vector<std::int32_t>(N, -1)};
  AnnulusTracker<SurrogateListener> tracker(geom, sites, l);
  l.tracker = &tracker;
  WalkState s = start_stationary(cfg, seed, stream_id("surrogate-walk", replica));
  const Stepper stepper(cfg);
  const std::uint64_t H = opt.coverage_horizon.value_or(0);
  if (opt.coverage_horizon) {
    out.horizon = H;
    out.covered_at_horizon.assign(static_cast<std::size_t>(cfg.volume()), 0);
    out.covered_at_horizon[static_cast<std::size_t>(s.site)] = 1;
  }
  if (opt.store_trajectory) out.trajectory.push_back(s.site);
  tracker.start(s);
  while (l.determined < N || (opt.coverage_horizon && s.time < H)) {
    if (s.time >= opt.step_cap) {
      out.partial = true;
      break;
    }
    const int k = stepper.advance(s);
    if (opt.coverage_horizon && s.time <= H) out.covered_at_horizon[static_cast<std::size_t>(s.site)] = 1;
    if (opt.store_trajectory) out.trajectory.push_back(s.site);
    tracker.after_step(s, k);
  }
  out.steps = s.time;
  for (std::size_t i = 0; i < N; ++i)
    if (out.Q[i] < 0 && out.tau_tilde[i] != kNever) out.Q[i] = 0;
  return out;
}

SurrogateReplicaStats reduce_surrogate(const SurrogateSet& ss, double m, std::uint64_t A, double eta) {
  SurrogateReplicaStats o;
  o.steps = ss.steps;
  const double mA = m * static_cast<double>(A);
  for (std::size_t i = 0; i < ss.sites.size(); ++i) {
    if (ss.Q[i] < 0) {
      ++o.undetermined;
      continue;
    }
    ++o.determined;
    o.survivors += static_cast<std::uint64_t>(ss.Q[i]);
    if (ss.sigma[i] != kNever && !std::isnan(ss.neg_log_f_sum[i])) {
      ++o.window_samples;
      const double L = ss.neg_log_f_sum[i];
      if (!(L > (1.0 - eta) * mA && L < (1.0 + eta) * mA)) ++o.window_violations;
    }
  }
  return o;
}

SurrogateMoments combine_surrogate(const std::vector<SurrogateReplicaStats>& reps, const SurrogateParams& params,
                                   double m_se, double eta) {
  SurrogateMoments mo;
  mo.replicas = reps.size();
  mo.eta = eta;
  mo.predicted = std::exp(-params.m * static_cast<double>(params.A));
  mo.predicted_se = mo.predicted * static_cast<double>(params.A) * m_se;
  if (reps.empty()) return mo;
  std::uint64_t bad = 0;
  for (const auto& o : reps) {
    mo.replica_means.push_back(o.mean());
    mo.samples += o.determined;
    mo.undetermined += o.undetermined;
    mo.window_samples += o.window_samples;
    bad += o.window_violations;
  }
  const double R = static_cast<double>(reps.size());
  mo.mean_Q = std::accumulate(mo.replica_means.begin(), mo.replica_means.end(), 0.0) / R;
  if (reps.size() >= 2) {
    double ss = 0.0;
    for (double x : mo.replica_means) ss += (x - mo.mean_Q) * (x - mo.mean_Q);
    mo.mean_Q_se = std::sqrt(ss / (R - 1.0) / R);
  }
  const double den = std::sqrt(mo.mean_Q_se * mo.mean_Q_se + mo.predicted_se * mo.predicted_se);
  mo.z = den > 0 ? (mo.mean_Q - mo.predicted) / den : 0.0;
  mo.window_violation = mo.window_samples ? static_cast<double>(bad) / static_cast<double>(mo.window_samples) : 0.0;
  return mo;
}

SurrogateMoments surrogate_moments(const LatticeConfig& cfg, const SurrogateParams& params, const FMEstimate& fm,
                                   const std::vector<SiteIndex>& sites, int replicas, double eta, std::uint64_t seed) {
  if (replicas < 2) throw ConfigError("surrogate moments need at least two replicas");
  if (!(fm.geom->cfg() == cfg) || std::abs(fm.geom->r() - params.r) > 1e-12 || std::abs(fm.geom->R() - params.R) > 1e-12)
    throw ConfigError("f̂ table does not match the surrogate annulus");
  SurrogateOptions opt;
  opt.f_table = &fm;
  std::vector<SurrogateReplicaStats> outs(static_cast<std::size_t>(replicas));
  parallel_for(outs.size(), [&](std::size_t r) {
    outs[r] = reduce_surrogate(build_surrogate(*fm.geom, params.A, sites, seed, r, opt), params.m, params.A, eta);
  });
  return combine_surrogate(outs, params, fm.m_se, eta);
}

CouplingReplica coupling_replica(const AnnulusGeometry& geom, const SurrogateParams& params, std::uint64_t horizon,
                                 std::uint64_t seed, std::uint64_t replica) {
  const LatticeConfig& cfg = geom.cfg();
  std::vector<SiteIndex> all(static_cast<std::size_t>(cfg.volume()));
  std::iota(all.begin(), all.end(), SiteIndex{0});
  SurrogateOptions opt;
  opt.coverage_horizon = horizon;
  const SurrogateSet ss = build_surrogate(geom, params.A, all, seed, replica, opt);
  CouplingReplica c;
  c.partial = ss.partial;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool inU = !ss.covered_at_horizon[i];
    const bool inUbar = ss.Q[i] == 1;
    const bool shortfall = ss.sigma[i] == kNever || ss.sigma[i] > horizon;
    c.uncovered += inU;
    c.surrogate += inUbar;
    c.shortfall_logged = c.shortfall_logged || shortfall;
    if (inU && !inUbar) {
      ++c.u_not_in_ubar;
      if (shortfall) ++c.explained;
    }
    if (inUbar && !inU) ++c.ubar_not_in_u;
  }
  c.sym_diff = c.u_not_in_ubar + c.ubar_not_in_u;
  c.equal = c.sym_diff == 0;
  return c;
}

CouplingReport combine_coupling(std::vector<CouplingReplica> reps, std::uint64_t horizon) {
  CouplingReport rep;
  rep.horizon = horizon;
  rep.replicas = std::move(reps);
  std::uint64_t eq = 0;
  rep.sym_diff_histogram.assign(21, 0);
  for (const auto& c : rep.replicas) {
    eq += c.equal;
    rep.inclusion_failures += c.u_not_in_ubar;
    rep.unexplained_failures += c.u_not_in_ubar - c.explained;
    ++rep.sym_diff_histogram[std::min<std::size_t>(20, c.sym_diff)];
  }
  rep.equal_fraction = rep.replicas.empty() ? 0.0 : static_cast<double>(eq) / static_cast<double>(rep.replicas.size());
  return rep;
}

CouplingReport coupling_check(const LatticeConfig& cfg, const SurrogateParams& params, int replicas, std::uint64_t seed) {
  if (replicas < 0) throw ConfigError("replicas must be >= 0");
  const AnnulusGeometry geom(cfg, params.r, params.R);
  const std::uint64_t H = coupling_horizon(params);
  std::vector<CouplingReplica> reps(static_cast<std::size_t>(replicas));
  parallel_for(reps.size(), [&](std::size_t r) { reps[r] = coupling_replica(geom, params, H, seed, r); });
  return combine_coupling(std::move(reps), H);
}

PairMomentReport pair_moment(const LatticeConfig& cfg, const SurrogateParams& params, const Point& offset,
                             int replicas, std::size_t pairs_per_replica, std::uint64_t seed) {
  if (replicas < 2) throw ConfigError("pair moments need at least two replicas");
  const Point v = cfg.displacement(cfg.origin(), cfg.wrap(offset));
  if (v == cfg.origin()) throw ConfigError("pair moment needs x != y");
  if (2 * pairs_per_replica > static_cast<std::size_t>(cfg.volume())) throw ConfigError("too many pairs for the lattice");
  const AnnulusGeometry geom(cfg, params.r, params.R);

  PairMomentReport rep;
  rep.offset = v;
  rep.distance = torus_dist(cfg.origin(), cfg.wrap(v), cfg);
  rep.replicas = replicas;
  rep.pairs_per_replica = pairs_per_replica;
  struct Out {
    double a = 0, b = 0, c = 0;
  };
  std::vector<Out> outs(static_cast<std::size_t>(replicas));
  parallel_for(outs.size(), [&](std::size_t r) {
    Rng pick(seed, stream_id("pair-panel", r));
    std::vector<std::uint8_t> used(static_cast<std::size_t>(cfg.volume()), 0);
    std::vector<SiteIndex> xs, ys;
    std::size_t guard = 0;
    while (xs.size() < pairs_per_replica) {
      if (++guard > 100 * pairs_per_replica + 1000) throw ResourceError("could not place disjoint pairs");
      const auto x = static_cast<SiteIndex>(pick.below64(static_cast<std::uint64_t>(cfg.volume())));
      const SiteIndex y = cfg.index(cfg.translate(cfg.point(x), v));
      if (used[static_cast<std::size_t>(x)] || used[static_cast<std::size_t>(y)]) continue;
      used[static_cast<std::size_t>(x)] = used[static_cast<std::size_t>(y)] = 1;
      xs.push_back(x);
      ys.push_back(y);
    }
    std::vector<SiteIndex> sites = xs;
    sites.insert(sites.end(), ys.begin(), ys.end());
    const SurrogateSet ss = build_surrogate(geom, params.A, sites, seed, r);
    Out o;
    std::size_t n = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const int qx = ss.Q[k], qy = ss.Q[k + xs.size()];
      if (qx < 0 || qy < 0) continue;
      ++n;
      o.a += qx * qy;
      o.b += qx;
      o.c += qy;
    }
    if (n) {
      o.a /= static_cast<double>(n);
      o.b /= static_cast<double>(n);
      o.c /= static_cast<double>(n);
    }
    outs[r] = o;
  });
  auto stat = [&](std::size_t skip) {
    double a = 0, b = 0, c = 0, k = 0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      if (i == skip) continue;
      a += outs[i].a;
      b += outs[i].b;
      c += outs[i].c;
      ++k;
    }
    return std::array<double, 4>{a / k, b / k, c / k, a / k - (b / k) * (c / k)};
  };
  const auto full = stat(outs.size());
  rep.EQxQy = full[0];
  rep.EQx = full[1];
  rep.EQy = full[2];
  rep.cov = full[3];
  double ssa = 0, ssc = 0;
  std::vector<double> jk;
  for (std::size_t i = 0; i < outs.size(); ++i) jk.push_back(stat(i)[3]);
  const double jm = std::accumulate(jk.begin(), jk.end(), 0.0) / static_cast<double>(jk.size());
  for (double x : jk) ssc += (x - jm) * (x - jm);
  for (const auto& o : outs) ssa += (o.a - rep.EQxQy) * (o.a - rep.EQxQy);
  const double R = replicas;
  rep.cov_se = std::sqrt((R - 1.0) / R * ssc);
  rep.EQxQy_se = std::sqrt(ssa / (R - 1.0) / R);
  rep.cov_z = rep.cov_se > 0 ? rep.cov / rep.cov_se : 0.0;
  const double n = cfg.side();
  rep.envelope_close = std::pow(n, -2.0 * params.alpha * params.d / (1.0 + params.p_d));
  rep.envelope_far = std::pow(n, -2.0 * params.alpha * params.d);
  return rep;
}

}  // namespace coverlab
