#include "coverlab/excursion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>


#include "coverlab/parallel.hpp"
#include "coverlab/rng.hpp"
#include "coverlab/symmetry.hpp"

namespace coverlab {

ExcursionLog record_excursions(WalkState& s, const AnnulusGeometry& geom, const Point& centre,
                               std::uint64_t horizon, const Stepper& stepper, std::vector<SiteIndex>* trace) {
  ExcursionLog log;
  log.annulus = AnnulusSpec{centre, geom.r(), geom.R()};
  log.start_time = s.time;
  log.horizon = std::max(horizon, s.time);
  const OffsetClassifier cls(geom);
  OffsetTracker tr(cls, centre, s.position);
  bool inside = false;

  auto observe = [&](std::uint8_t f) {
    if (!log.first_reach && (f & kExitShell)) log.first_reach = s.time;
    if (inside && !(f & kInOuterBall)) {
      inside = false;
      log.rho_tilde.push_back(s.time);
      log.exit_points.push_back(s.position);
    } else if (!inside && (f & kEntryShell)) {
      inside = true;
      log.rho.push_back(s.time);
      log.entry_points.push_back(s.position);
    }
    if (f & kCentre) log.centre_visits.push_back(s.time);
  };

  if (trace) trace->push_back(s.site);
  observe(tr.flags());
  while (s.time < log.horizon) {
    const int k = stepper.advance(s);
    if (trace) trace->push_back(s.site);
    if (k < 0) continue;
    tr.move(k);
    observe(tr.flags());
  }
  log.truncated = inside;
  return log;
}

ExcursionCount count_excursions(const ExcursionLog& log, std::uint64_t t) {
  if (t == 0) return {0, true};
  if (log.rho_tilde.empty()) return {0, false};
  const std::uint64_t base = log.rho_tilde.front();
  ExcursionCount c;
  for (std::size_t k = 1; k < log.rho_tilde.size(); ++k)
    if (log.rho_tilde[k] - base <= t) ++c.count;
  c.determined = base + t <= log.horizon;
  return c;
}

namespace {

struct MixingTables {
  int start = 0;
  int stab_count = 0;
  std::vector<int> orbit_slot;  // per exit point: slot within start's orbit, or -1
  std::vector<int> map;         // slot * S + v -> stabiliser orbit of g_slot(v)
};

struct ReplicaAccumulator {
  std::uint64_t excursions = 0;
  std::uint64_t steps = 0;
  bool cap_hit = false;
  std::vector<double> gap_sum;
  std::vector<std::uint64_t> gap_n;
  std::vector<std::uint64_t> exit_counts;
  std::vector<std::uint64_t> pair_counts;
  std::vector<std::uint64_t> pair_hits;
  std::vector<std::vector<std::uint32_t>> batch_exit_counts;
  std::vector<std::vector<std::uint32_t>> batch_pair_counts;
  std::vector<std::vector<std::uint32_t>> batch_pair_hits;
  std::vector<std::vector<std::vector<std::uint64_t>>> mix;  // [start][k-1][stab orbit]
};

struct StatsListener {
  const AnnulusGeometry& g;
  const ExcursionRunConfig& rc;
  const std::vector<MixingTables>& mt;
  ReplicaAccumulator& acc;
  std::uint64_t per_replica_target;
  int K;
  std::size_t S;
  std::vector<std::uint64_t> last_exit;
  std::vector<std::uint32_t> exits;
  std::vector<std::uint8_t> hit;
  std::vector<std::int32_t> ring;

  StatsListener(const AnnulusGeometry& geom, const ExcursionRunConfig& cfg, const std::vector<MixingTables>& tables,
                ReplicaAccumulator& a, std::size_t centres, std::uint64_t target)
      : g(geom), rc(cfg), mt(tables), acc(a), per_replica_target(target), K(std::max(1, cfg.mixing_max_k)),
        S(geom.exit_shell().size()), last_exit(centres, 0), exits(centres, 0), hit(centres, 0),
        ring(centres * static_cast<std::size_t>(K), -1) {}

  void on_reach(int, std::uint64_t) {}
  void on_entry(int, std::uint64_t, int) {}
  void on_visit(int slot, std::uint64_t) { hit[static_cast<std::size_t>(slot)] = 1; }

  void on_exit(int slot, std::uint64_t t, int idx) {
    const auto sl = static_cast<std::size_t>(slot);
    const std::uint32_t e = exits[sl]++;
    std::int32_t* hist = &ring[sl * static_cast<std::size_t>(K)];
    const auto B = static_cast<std::uint32_t>(rc.burn_in);
    if (e >= B + 1) {
      const std::size_t batch = std::min<std::size_t>(
          static_cast<std::size_t>(rc.batches_per_replica - 1),
          static_cast<std::size_t>(acc.excursions * static_cast<std::uint64_t>(rc.batches_per_replica) / std::max<std::uint64_t>(1, per_replica_target)));
      acc.gap_sum[batch] += static_cast<double>(t - last_exit[sl]);
      ++acc.gap_n[batch];
      ++acc.exit_counts[static_cast<std::size_t>(idx)];
      ++acc.batch_exit_counts[batch][static_cast<std::size_t>(idx)];
      if (rc.pair_statistics) {
        const int prev = hist[(e - 1) % static_cast<std::uint32_t>(K)];
        const auto o = static_cast<std::size_t>(g.pair_orbit(prev, idx));
        ++acc.pair_counts[o];
        acc.pair_hits[o] += hit[sl];
        ++acc.batch_pair_counts[batch][o];
        acc.batch_pair_hits[batch][o] += hit[sl];
      }
      for (int k = 1; k <= K; ++k) {
        if (e < B + static_cast<std::uint32_t>(k)) break;
        const int old = hist[(e - static_cast<std::uint32_t>(k)) % static_cast<std::uint32_t>(K)];
        for (std::size_t si = 0; si < mt.size(); ++si) {
          const int os = mt[si].orbit_slot[static_cast<std::size_t>(old)];
          if (os < 0) continue;
          const int stab = mt[si].map[static_cast<std::size_t>(os) * S + static_cast<std::size_t>(idx)];
          ++acc.mix[si][static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(stab)];
        }
      }
      ++acc.excursions;
    }
    hist[e % static_cast<std::uint32_t>(K)] = idx;
    last_exit[sl] = t;
    hit[sl] = 0;
  }
};

std::vector<MixingTables> build_mixing_tables(const AnnulusGeometry& g, int starts) {
  const std::size_t S = g.exit_shell().size();
  std::vector<int> orbits(static_cast<std::size_t>(g.num_exit_orbits()));
  std::iota(orbits.begin(), orbits.end(), 0);
  std::stable_sort(orbits.begin(), orbits.end(), [&](int a, int b) { return g.exit_orbit_size(a) < g.exit_orbit_size(b); });
  std::vector<MixingTables> out;
  for (int k = 0; k < std::min<int>(starts, static_cast<int>(orbits.size())); ++k) {
    MixingTables t;
    const int o = orbits[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < S; ++i)
      if (g.exit_orbit(static_cast<int>(i)) == o) {
        t.start = static_cast<int>(i);
        break;
      }
    const Point us = g.exit_shell()[static_cast<std::size_t>(t.start)];
    const std::vector<int> stab = g.stabiliser_orbits(t.start, &t.stab_count);
    t.orbit_slot.assign(S, -1);
    int slots = 0;
    for (std::size_t i = 0; i < S; ++i) {
      if (g.exit_orbit(static_cast<int>(i)) != o) continue;
      SignedPermutation gi;
      find_mapping(g.exit_shell()[i], us, &gi);
      t.orbit_slot[i] = slots++;
      for (std::size_t v = 0; v < S; ++v) {
        const int j = g.exit_index(gi.apply(g.exit_shell()[v], g.cfg().side()));
        if (j < 0) throw NumericalError("symmetry map left the exit shell");
        t.map.push_back(stab[static_cast<std::size_t>(j)]);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

ExcursionStats run_excursion_stats(std::shared_ptr<const AnnulusGeometry> geom, const ExcursionRunConfig& rc) {
  if (!geom) throw ConfigError("missing annulus geometry");
  if (rc.replicas < 1) throw ConfigError("excursion statistics need at least one replica");
  if (rc.batches_per_replica < 1) throw ConfigError("batches_per_replica must be >= 1");
  if (rc.burn_in < 0) throw ConfigError("burn_in must be >= 0");
  const AnnulusGeometry& g = *geom;
  if (rc.pair_statistics && !g.has_pair_orbits()) throw ConfigError("pair orbits not built for this geometry");
  const LatticeConfig& cfg = g.cfg();
  const std::size_t S = g.exit_shell().size();

  std::vector<SiteIndex> centres = rc.centres;
  if (centres.empty()) {
    centres.resize(static_cast<std::size_t>(cfg.volume()));
    std::iota(centres.begin(), centres.end(), SiteIndex{0});
  }
  const auto mt = build_mixing_tables(g, rc.mixing_max_k > 0 ? rc.mixing_starts : 0);
  const std::uint64_t per_rep = (rc.target_excursions + static_cast<std::uint64_t>(rc.replicas) - 1) / static_cast<std::uint64_t>(rc.replicas);
  const std::size_t P = rc.pair_statistics ? static_cast<std::size_t>(g.num_pair_orbits()) : 0;

  std::vector<ReplicaAccumulator> accs(static_cast<std::size_t>(rc.replicas));
  parallel_for(accs.size(), [&](std::size_t rep) {
    ReplicaAccumulator& acc = accs[rep];
    const auto nb = static_cast<std::size_t>(rc.batches_per_replica);
    acc.gap_sum.assign(nb, 0.0);
    acc.gap_n.assign(nb, 0);
    acc.exit_counts.assign(S, 0);
    acc.pair_counts.assign(P, 0);
    acc.pair_hits.assign(P, 0);
    acc.batch_exit_counts.assign(nb, std::vector<std::uint32_t>(S, 0));
    acc.batch_pair_counts.assign(nb, std::vector<std::uint32_t>(P, 0));
    acc.batch_pair_hits.assign(nb, std::vector<std::uint32_t>(P, 0));
    acc.mix.resize(mt.size());
    for (std::size_t si = 0; si < mt.size(); ++si)
      acc.mix[si].assign(static_cast<std::size_t>(rc.mixing_max_k), std::vector<std::uint64_t>(static_cast<std::size_t>(mt[si].stab_count), 0));

    StatsListener l(g, rc, mt, acc, centres.size(), per_rep);
    AnnulusTracker<StatsListener> tracker(g, centres, l);
    WalkState s = start_stationary(cfg, rc.seed, stream_id("excursion-stats", rep));
    const Stepper stepper(cfg);
    tracker.start(s);
    const std::uint64_t cap = rc.step_cap / static_cast<std::uint64_t>(rc.replicas);
    while (acc.excursions < per_rep) {
      if (s.time >= cap) {
        acc.cap_hit = true;
        break;
      }
      tracker.after_step(s, stepper.advance(s));
    }
    acc.steps = s.time;
  });

  ExcursionStats st;
  st.geom = geom;
  st.burn_in = rc.burn_in;
  st.exit_counts.assign(S, 0);
  st.pair_counts.assign(P, 0);
  st.pair_hits.assign(P, 0);
  double gs = 0.0;
  std::uint64_t gn = 0;
  for (const auto& acc : accs) {
    st.excursions += acc.excursions;
    st.steps += acc.steps;
    st.cap_hit = st.cap_hit || acc.cap_hit;
    for (std::size_t i = 0; i < S; ++i) st.exit_counts[i] += acc.exit_counts[i];
    for (std::size_t o = 0; o < P; ++o) {
      st.pair_counts[o] += acc.pair_counts[o];
      st.pair_hits[o] += acc.pair_hits[o];
    }
    for (std::size_t b = 0; b < acc.gap_sum.size(); ++b) {
      gs += acc.gap_sum[b];
      gn += acc.gap_n[b];
      if (acc.gap_n[b] > 0) st.T_batches.push_back(acc.gap_sum[b] / static_cast<double>(acc.gap_n[b]));
      st.batch_exit_counts.push_back(acc.batch_exit_counts[b]);
      if (P > 0) {
        st.batch_pair_counts.push_back(acc.batch_pair_counts[b]);
        st.batch_pair_hits.push_back(acc.batch_pair_hits[b]);
      }
    }
  }
  st.T = gn ? gs / static_cast<double>(gn) : 0.0;
  if (st.T_batches.size() >= 2) {
    double ss = 0.0;
    for (double x : st.T_batches) ss += (x - st.T) * (x - st.T);
    const double nb = static_cast<double>(st.T_batches.size());
    st.T_se = std::sqrt(ss / (nb - 1.0) / nb);
  }

  const double total = static_cast<double>(std::max<std::uint64_t>(1, st.excursions));
  for (std::size_t si = 0; si < mt.size(); ++si) {
    const MixingTables& t = mt[si];
    std::vector<double> pi(static_cast<std::size_t>(t.stab_count), 0.0);
    // Stabiliser orbits of the start, via the identity slot of its own orbit.
    const int own = t.orbit_slot[static_cast<std::size_t>(t.start)];
    for (std::size_t v = 0; v < S; ++v)
      pi[static_cast<std::size_t>(t.map[static_cast<std::size_t>(own) * S + v])] += static_cast<double>(st.exit_counts[v]) / total;
    std::vector<double> tv, floor;
    std::vector<std::uint64_t> ns;
    for (int k = 0; k < rc.mixing_max_k; ++k) {
      std::vector<std::uint64_t> h(static_cast<std::size_t>(t.stab_count), 0);
      for (const auto& acc : accs)
        for (std::size_t o = 0; o < h.size(); ++o) h[o] += acc.mix[si][static_cast<std::size_t>(k)][o];
      const std::uint64_t N = std::accumulate(h.begin(), h.end(), std::uint64_t{0});
      double d = 0.0, fl = 0.0;
      for (std::size_t o = 0; o < h.size(); ++o) {
        const double q = N ? static_cast<double>(h[o]) / static_cast<double>(N) : 0.0;
        d += std::abs(q - pi[o]);
        if (N) fl += std::sqrt(2.0 / M_PI * pi[o] * (1.0 - pi[o]) / static_cast<double>(N));
      }
      tv.push_back(0.5 * d);
      floor.push_back(N ? 0.5 * fl : 1.0);
      ns.push_back(N);
    }
    st.mixing_start_points.push_back(t.start);
    st.mixing_tv.push_back(tv);
    st.mixing_noise_floor.push_back(floor);
    st.mixing_samples.push_back(ns);
  }
  return st;
}

TEstimate estimate_T(const LatticeConfig& cfg, const AnnulusSpec& a, std::uint64_t n_excursions, std::uint64_t seed) {
  auto geom = std::make_shared<AnnulusGeometry>(cfg, a.r, a.R);
  ExcursionRunConfig rc;
  rc.target_excursions = n_excursions;
  rc.pair_statistics = false;
  rc.mixing_max_k = 0;
  rc.seed = seed;
  const ExcursionStats st = run_excursion_stats(geom, rc);
  if (st.cap_hit) throw ResourceError("step cap reached before the excursion target");
  return TEstimate{st.T, st.T_se, st.excursions};
}

ExitChainEstimate summarize_exit_chain(const ExcursionStats& st) {
  const AnnulusGeometry& g = *st.geom;
  ExitChainEstimate e;
  e.support = g.exit_shell();
  e.excursions = st.excursions;
  const double N = static_cast<double>(std::max<std::uint64_t>(1, st.excursions));
  const std::size_t S = e.support.size();
  for (std::size_t i = 0; i < S; ++i) {
    const double p = static_cast<double>(st.exit_counts[i]) / N;
    e.pi_tilde.push_back(p);
    e.pi_tilde_orbit_se.push_back(std::sqrt(p * (1.0 - p) / N));
  }

  // Within-orbit chi-square, calibrated by a group-randomization test: exits pooled over all
  // centres are far from multinomial, but under lattice symmetry each time batch may be
  // transformed by an independent group element without changing the joint law.
  const int O = g.num_exit_orbits();
  auto within_orbit_chi = [&](const std::vector<double>& c) {
    std::vector<double> tot(static_cast<std::size_t>(O), 0.0);
    for (std::size_t i = 0; i < S; ++i) tot[static_cast<std::size_t>(g.exit_orbit(static_cast<int>(i)))] += c[i];
    double chi = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      const int o = g.exit_orbit(static_cast<int>(i));
      const double exp = tot[static_cast<std::size_t>(o)] / g.exit_orbit_size(o);
      if (exp > 0) chi += (c[i] - exp) * (c[i] - exp) / exp;
    }
    return chi;
  };
  const std::size_t B = st.batch_exit_counts.size();
  if (B >= 2) {
    const auto group = canonicalizers(Point(g.cfg().dim()));
    std::vector<std::vector<int>> act(group.size(), std::vector<int>(S));
    for (std::size_t h = 0; h < group.size(); ++h)
      for (std::size_t i = 0; i < S; ++i) {
        const int j = g.exit_index(group[h].apply(g.exit_shell()[i], g.cfg().side()));
        if (j < 0) throw NumericalError("symmetry map left the exit shell");
        act[h][i] = j;
      }
    std::vector<double> c(S, 0.0);
    for (std::size_t i = 0; i < S; ++i) c[i] = static_cast<double>(st.exit_counts[i]);
    const double observed = within_orbit_chi(c);
    constexpr int kDraws = 1999;
    Rng rng(0x6578697473ULL, B);
    int exceed = 0;
    for (int k = 0; k < kDraws; ++k) {
      std::fill(c.begin(), c.end(), 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        const auto& m = act[static_cast<std::size_t>(rng.below(static_cast<int>(group.size())))];
        for (std::size_t i = 0; i < S; ++i) c[static_cast<std::size_t>(m[i])] += st.batch_exit_counts[b][i];
      }
      if (within_orbit_chi(c) >= observed) ++exceed;
    }
    e.orbit_uniformity_p = (1.0 + exceed) / (1.0 + kDraws);
  }
  if (!st.pair_counts.empty()) {
    e.nu_ratio_min_count = 100;
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (std::size_t o = 0; o < st.pair_counts.size(); ++o) {
      const int sz = g.pair_orbit_size(static_cast<int>(o));
      const double w = static_cast<double>(st.pair_counts[o]) / (N * sz);
      e.nu_orbit.push_back(w);
      e.nu_orbit_size.push_back(sz);
      e.nu_orbit_counts.push_back(st.pair_counts[o]);
      if (st.pair_counts[o] >= e.nu_ratio_min_count) {
        lo = any ? std::min(lo, w) : w;
        hi = any ? std::max(hi, w) : w;
        any = true;
      }
    }
    e.nu_ratio = any && lo > 0 ? hi / lo : 0.0;
  }

  e.mixing_tv = st.mixing_tv;
  e.mixing_noise_floor = st.mixing_noise_floor;
  const int K = st.mixing_tv.empty() ? 0 : static_cast<int>(st.mixing_tv.front().size());
  e.mixing_steps = K + 1;
  for (int k = 0; k < K; ++k) {
    double worst = 0.0;
    for (std::size_t si = 0; si < st.mixing_tv.size(); ++si)
      worst = std::max(worst, st.mixing_tv[si][static_cast<std::size_t>(k)] - st.mixing_noise_floor[si][static_cast<std::size_t>(k)]);
    if (worst < 0.1) {
      e.mixing_steps = k + 1;
      break;
    }
  }
  e.wide_ci = st.excursions < 100 * S || e.mixing_steps > K || 10 * e.mixing_steps > std::max(50, st.burn_in);
  for (const auto& f : st.mixing_noise_floor)
    for (double x : f) e.wide_ci = e.wide_ci || x > 0.05;
  return e;
}

ExitChainEstimate exit_chain(const LatticeConfig& cfg, const AnnulusSpec& a, std::uint64_t n_excursions, std::uint64_t seed) {
  auto geom = std::make_shared<AnnulusGeometry>(cfg, a.r, a.R);
  geom->build_pair_orbits();
  ExcursionRunConfig rc;
  rc.target_excursions = n_excursions;
  rc.seed = seed;
  const ExcursionStats st = run_excursion_stats(geom, rc);
  if (st.cap_hit) throw ResourceError("step cap reached before the excursion target");
  return summarize_exit_chain(st);
}

namespace {

struct CountListener {
  std::uint64_t window;
  std::vector<std::uint64_t> first_exit;
  std::vector<std::uint64_t> count;
  std::size_t with_first = 0;
  std::uint64_t latest_first = 0;

  void on_reach(int, std::uint64_t) {}
  void on_entry(int, std::uint64_t, int) {}
  void on_visit(int, std::uint64_t) {}
  void on_exit(int slot, std::uint64_t t, int) {
    auto& f = first_exit[static_cast<std::size_t>(slot)];
    if (f == kNever) {
      f = t;
      ++with_first;
      latest_first = std::max(latest_first, t);
    } else if (t - f <= window) {
      ++count[static_cast<std::size_t>(slot)];
    }
  }
};

}  // namespace

ConcentrationReport concentration_check(const LatticeConfig& cfg, const AnnulusSpec& a, std::uint64_t t,
                                        const std::vector<double>& deltas, double T, int replicas,
                                        std::size_t panel, double psi, std::uint64_t seed) {
  if (!(T > 0.0)) throw ConfigError("concentration check needs T > 0");
  if (replicas < 0) throw ConfigError("replicas must be >= 0");
  for (double d : deltas)
    if (!(d > 0.0 && d < 1.0)) throw ConfigError("delta must lie in (0,1)");
  const AnnulusGeometry g(cfg, a.r, a.R);
  panel = std::min<std::size_t>(panel, static_cast<std::size_t>(cfg.volume()));

  ConcentrationReport rep;
  rep.t = static_cast<double>(t);
  rep.T = T;
  rep.deltas = deltas;
  rep.psi = psi;
  const double n = cfg.side();
  const double rd = std::pow(a.r, cfg.dim() - 2);
  for (double d : deltas) {
    rep.A.push_back(rep.t / ((1.0 + d) * T));
    rep.A_prime.push_back(rep.t / ((1.0 - d) * T));
    rep.bound_shape_c1.push_back(std::pow(n, psi) * std::exp(-d * d * rd / std::pow(n, psi)) + std::exp(-std::pow(n, psi)));
  }

  struct Out {
    std::vector<std::uint64_t> counts;
    std::uint64_t undetermined = 0;
  };
  std::vector<Out> outs(static_cast<std::size_t>(replicas));
  parallel_for(outs.size(), [&](std::size_t r) {
    Rng pick(seed, stream_id("concentration-panel", r));
    std::vector<SiteIndex> centres;
    std::vector<std::uint8_t> used(static_cast<std::size_t>(cfg.volume()), 0);
    while (centres.size() < panel) {
      const auto c = static_cast<SiteIndex>(pick.below64(static_cast<std::uint64_t>(cfg.volume())));
      if (!used[static_cast<std::size_t>(c)]) {
        used[static_cast<std::size_t>(c)] = 1;
        centres.push_back(c);
      }
    }
    CountListener l{t, std::vector<std::uint64_t>(panel, kNever), std::vector<std::uint64_t>(panel, 0)};
    AnnulusTracker<CountListener> tracker(g, centres, l);
    WalkState s = start_stationary(cfg, seed, stream_id("concentration-walk", r));
    const Stepper stepper(cfg);
    tracker.start(s);
    const std::uint64_t cap = 50 * t + 100'000'000ULL;
    while (s.time < cap && (l.with_first < panel || s.time < l.latest_first + t))
      tracker.after_step(s, stepper.advance(s));
    Out o;
    for (std::size_t i = 0; i < panel; ++i) {
      if (l.first_exit[i] == kNever || l.first_exit[i] + t > s.time) {
        ++o.undetermined;
        continue;
      }
      o.counts.push_back(l.count[i]);
    }
    outs[r] = std::move(o);
  });

  rep.violations.assign(deltas.size(), 0);
  for (const auto& o : outs) {
    rep.undetermined += o.undetermined;
    for (std::uint64_t c : o.counts) {
      ++rep.samples;
      for (std::size_t k = 0; k < deltas.size(); ++k)
        if (static_cast<double>(c) < rep.A[k] || static_cast<double>(c) > rep.A_prime[k]) ++rep.violations[k];
    }
  }
  for (std::uint64_t v : rep.violations)
    rep.violation_freq.push_back(rep.samples ? static_cast<double>(v) / static_cast<double>(rep.samples) : 0.0);
  return rep;
}

}  // namespace coverlab
