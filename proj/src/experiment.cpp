#include "coverlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "coverlab/chenstein.hpp"
#include "coverlab/errors.hpp"
#include "coverlab/gff.hpp"
#include "coverlab/parallel.hpp"
#include "coverlab/report.hpp"
#include "coverlab/rng.hpp"
#include "coverlab/stats.hpp"
#include "coverlab/uncovered.hpp"
#include "coverlab/walk.hpp"

namespace coverlab {

using nlohmann::json;

namespace {

const std::map<std::string, ExperimentKind> kKinds = {
    {"walk-uncovered", ExperimentKind::walk_uncovered},
    {"surrogate", ExperimentKind::surrogate},
    {"excursion-diagnostics", ExperimentKind::excursion_diagnostics},
    {"hitting-constants", ExperimentKind::hitting_constants},
    {"chen-stein", ExperimentKind::chen_stein},
    {"gff", ExperimentKind::gff},
    {"discriminate", ExperimentKind::discriminate},
};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

void read_opt(const json& j, const char* key, std::optional<double>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  if (!j.at(key).is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  out = j.at(key).get<double>();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

bool uses_torus(ExperimentKind k) { return k != ExperimentKind::gff && k != ExperimentKind::chen_stein; }
bool uses_surrogate_params(ExperimentKind k) {
  return k == ExperimentKind::walk_uncovered || k == ExperimentKind::surrogate || k == ExperimentKind::discriminate;
}
bool replica_structured(ExperimentKind k) { return uses_surrogate_params(k) || k == ExperimentKind::chen_stein; }

std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << x;
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

json param(const json& value, const std::string& provenance) { return {{"value", value}, {"provenance", provenance}}; }

// Everything shared by the replicas of a walk-based experiment.
struct WalkSetup {
  std::optional<LatticeConfig> cfg;
  GreenConstants constants;
  Radii radii;
  FMEstimate fm;
  SurrogateParams params;
  std::uint64_t horizon = 0;
};

json parameters_block(const ExperimentConfig& c, const WalkSetup* w) {
  const std::string na = "not-applicable";
  json p;
  p["alpha"] = param(c.alpha, "config");
  p["epsilon"] = param(c.epsilon, "config");
  p["psi"] = param(c.psi, "config");
  p["zeta"] = param(c.zeta, "config");
  if (w) {
    const auto& s = w->params;
    const std::string rs = w->radii.source == "formula" ? "derived: 2 alpha - 1 - epsilon" : "config: " + w->radii.source;
    p["gamma"] = param(s.gamma, rs);
    p["r"] = param(s.r, w->radii.source == "explicit" ? "config" : "derived: n^(gamma (1 - epsilon))");
    p["R"] = param(s.R, w->radii.source == "explicit" ? "config" : "derived: n^gamma");
    p["delta"] = param(s.delta, "derived: r^((2-d)/2) n^psi");
    p["m_hat"] = param(s.m, "estimated: excursion Monte Carlo");
    p["T_hat"] = param(s.T, "estimated: excursion Monte Carlo");
    p["t_star"] = param(s.t_star, "derived: log(n^d) T_hat / m_hat");
    p["A"] = param(s.A, "derived: floor(alpha t* / ((1+delta) T_hat))");
  } else {
    for (const char* k : {"gamma", "r", "R", "delta", "m_hat", "T_hat", "t_star", "A"}) p[k] = param(nullptr, na);
    if (c.gamma_override) p["gamma"] = param(*c.gamma_override, "config");
    if (c.r) p["r"] = param(*c.r, "config");
    if (c.R) p["R"] = param(*c.R, "config");
  }
  return p;
}

json constants_json(const GreenConstants& k) {
  return {{"d", k.d}, {"G0", k.G0}, {"p_d", k.p_d}, {"c_d", k.c_d}, {"C_d", k.C_d}, {"p_mc", k.p_mc}};
}

GreenConstants get_constants(const ExperimentConfig& c, const RunOptions& opt) {
  if (opt.constants) return *opt.constants;
  const std::string path = c.constants_cache.empty() ? default_constants_path(c.d) : c.constants_cache;
  return load_or_estimate_constants(c.d, path, opt.constants_params);
}

WalkSetup walk_setup(const ExperimentConfig& c, const RunOptions& opt) {
  WalkSetup w;
  w.cfg.emplace(c.d, c.n);
  w.constants = get_constants(c, opt);
  w.radii = choose_radii(*w.cfg, c.alpha, c.epsilon, c.gamma_override, c.r, c.R);
  w.fm = estimate_f_and_m(*w.cfg, w.radii.r, w.radii.R, c.budgets.excursions, c.seed, c.budgets.fm_replicas);
  w.params = compute_params(*w.cfg, c.alpha, c.epsilon, c.psi, c.zeta, w.constants, w.fm.T, w.fm.m, w.radii);
  w.horizon = coupling_horizon(w.params);
  return w;
}

std::vector<SiteIndex> random_panel(const LatticeConfig& cfg, std::uint64_t k, std::uint64_t seed, std::uint64_t replica) {
  std::vector<SiteIndex> all(static_cast<std::size_t>(cfg.volume()));
  std::iota(all.begin(), all.end(), SiteIndex{0});
  if (k == 0 || k >= all.size()) return all;
  Rng rng(seed, stream_id("surrogate-panel", replica));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below64(all.size() - i));
    std::swap(all[i], all[j]);
  }
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<SiteIndex> uncovered_points(const WalkSetup& w, std::uint64_t seed, std::uint64_t replica) {
  WalkState s = start_stationary(*w.cfg, seed, stream_id("walk-uncovered", replica));
  const Stepper stepper(*w.cfg);
  const CoverTracker ct = run_and_track(s, w.horizon, stepper, false);
  return ct.uncovered().sites();
}

std::vector<SiteIndex> surrogate_points(const WalkSetup& w, std::uint64_t seed, std::uint64_t replica, std::uint64_t cap,
                                        bool* partial) {
  std::vector<SiteIndex> all(static_cast<std::size_t>(w.cfg->volume()));
  std::iota(all.begin(), all.end(), SiteIndex{0});
  SurrogateOptions o;
  o.step_cap = cap;
  const SurrogateSet ss = build_surrogate(*w.fm.geom, w.params.A, all, seed, replica, o);
  if (partial) *partial = ss.partial;
  std::vector<SiteIndex> out;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (ss.Q[i] == 1) out.push_back(all[i]);
  return out;
}

json run_replica(const ExperimentConfig& c, const WalkSetup* w, std::size_t i) {
  switch (c.kind) {
    case ExperimentKind::walk_uncovered: {
      const auto U = uncovered_points(*w, c.seed, i);
      const SetSample s{Provenance::uncovered, U, i, c.seed};
      return {{"uncovered", U.size()}, {"adjacent_pairs", adjacent_pairs(s, *w->cfg)}, {"steps", w->horizon}};
    }
    case ExperimentKind::surrogate: {
      SurrogateOptions o;
      o.f_table = &w->fm;
      o.step_cap = c.budgets.step_cap;
      const auto sites = random_panel(*w->cfg, c.budgets.panel, c.seed, i);
      const SurrogateSet ss = build_surrogate(*w->fm.geom, w->params.A, sites, c.seed, i, o);
      const SurrogateReplicaStats st = reduce_surrogate(ss, w->params.m, w->params.A, c.budgets.eta);
      json r = {{"determined", st.determined}, {"survivors", st.survivors}, {"undetermined", st.undetermined},
                {"window_samples", st.window_samples}, {"window_violations", st.window_violations},
                {"steps", st.steps}, {"mean_Q", st.mean()}, {"partial", ss.partial}};
      if (c.budgets.coupling) {
        const CouplingReplica cr = coupling_replica(*w->fm.geom, w->params, w->horizon, c.seed, 1'000'000 + i);
        r["coupling"] = {{"equal", cr.equal}, {"uncovered", cr.uncovered}, {"surrogate", cr.surrogate},
                         {"u_not_in_ubar", cr.u_not_in_ubar}, {"explained", cr.explained},
                         {"ubar_not_in_u", cr.ubar_not_in_u}, {"partial", cr.partial}};
      }
      return r;
    }
    case ExperimentKind::discriminate: {
      bool partial = false;
      const auto pts = c.budgets.source == "surrogate" ? surrogate_points(*w, c.seed, i, c.budgets.step_cap, &partial)
                                                       : uncovered_points(*w, c.seed, i);
      return {{"points", pts}, {"size", pts.size()}, {"partial", partial}};
    }
    case ExperimentKind::chen_stein: {
      Rng rng(c.seed, stream_id("chen-stein-instance", i));
      const TinyProcessParams tp = random_tiny_params(c.budgets.tiny_size, rng);
      const TinyProcessSpec spec = tiny_process(tp);
      const ExactChenStein ex = exact_chen_stein(spec, tp.nbhd);
      const mpq_class tv = exact_tv(spec, BernoulliFieldSpec{ex.p});
      return {{"m", tp.m}, {"components", tp.weight.size()}, {"edges", tp.edges.size()},
              {"b1", ex.b1.get_d()}, {"b2", ex.b2.get_d()}, {"b3", ex.b3.get_d()},
              {"tv_bound", ex.tv_bound.get_d()}, {"tv", tv.get_d()}, {"violation", tv > ex.tv_bound}};
    }
    default:
      throw ConfigError("experiment has no replica structure");
  }
}

json summarize_replicas(const ExperimentConfig& c, const WalkSetup* w, const std::vector<json>& reps, json& warnings) {
  json res;
  switch (c.kind) {
    case ExperimentKind::walk_uncovered: {
      std::vector<double> u, a;
      for (const auto& r : reps) {
        u.push_back(r.at("uncovered").get<double>());
        a.push_back(r.at("adjacent_pairs").get<double>());
      }
      const double N = static_cast<double>(w->cfg->volume());
      const double p = mean_of(u) / N;
      res = {{"horizon", w->horizon}, {"mean_uncovered", mean_of(u)}, {"mean_uncovered_se", se_of(u)},
             {"uncovered_fraction", p}, {"n_minus_alpha_d", std::pow(c.n, -c.alpha * c.d)},
             {"mean_adjacent_pairs", mean_of(a)}, {"mean_adjacent_pairs_se", se_of(a)},
             {"bernoulli_adjacent_pairs", c.d * N * p * p}};
      break;
    }
    case ExperimentKind::surrogate: {
      std::vector<SurrogateReplicaStats> st;
      std::vector<CouplingReplica> cr;
      for (const auto& r : reps) {
        SurrogateReplicaStats s;
        s.determined = r.at("determined");
        s.survivors = r.at("survivors");
        s.undetermined = r.at("undetermined");
        s.window_samples = r.at("window_samples");
        s.window_violations = r.at("window_violations");
        s.steps = r.at("steps");
        st.push_back(s);
        if (r.contains("coupling")) {
          const auto& j = r.at("coupling");
          CouplingReplica x;
          x.equal = j.at("equal");
          x.uncovered = j.at("uncovered");
          x.surrogate = j.at("surrogate");
          x.u_not_in_ubar = j.at("u_not_in_ubar");
          x.explained = j.at("explained");
          x.ubar_not_in_u = j.at("ubar_not_in_u");
          x.sym_diff = x.u_not_in_ubar + x.ubar_not_in_u;
          x.partial = j.at("partial");
          cr.push_back(x);
        }
      }
      const SurrogateMoments mo = combine_surrogate(st, w->params, w->fm.m_se, c.budgets.eta);
      res = {{"mean_Q", mo.mean_Q}, {"mean_Q_se", mo.mean_Q_se},
             {"mean_Q_ci95", {mo.mean_Q - 1.96 * mo.mean_Q_se, mo.mean_Q + 1.96 * mo.mean_Q_se}},
             {"predicted_exp_minus_mA", mo.predicted}, {"predicted_se", mo.predicted_se}, {"z", mo.z},
             {"eta", mo.eta}, {"window_violation", mo.window_violation}, {"window_samples", mo.window_samples},
             {"samples", mo.samples}, {"undetermined", mo.undetermined}, {"m_se", w->fm.m_se},
             {"zero_hit_orbits", w->fm.zero_hit_orbits}, {"fm_excursions", w->fm.excursions}};
      if (!cr.empty()) {
        const CouplingReport rep = combine_coupling(cr, w->horizon);
        res["coupling"] = {{"horizon", rep.horizon}, {"equal_fraction", rep.equal_fraction},
                           {"inclusion_failures", rep.inclusion_failures},
                           {"unexplained_failures", rep.unexplained_failures},
                           {"sym_diff_histogram", rep.sym_diff_histogram}};
      }
      if (mo.undetermined) warnings.push_back("some sites were undetermined at the step cap");
      break;
    }
    case ExperimentKind::discriminate: {
      std::vector<SetSample> a, b;
      double total = 0.0;
      for (std::size_t i = 0; i < reps.size(); ++i) {
        SetSample s{c.budgets.source == "surrogate" ? Provenance::surrogate : Provenance::uncovered,
                    reps[i].at("points").get<std::vector<SiteIndex>>(), i, c.seed};
        total += static_cast<double>(s.points.size());
        a.push_back(std::move(s));
      }
      const double p = reps.empty() ? 0.0 : total / (static_cast<double>(reps.size()) * static_cast<double>(w->cfg->volume()));
      for (std::size_t i = 0; i < reps.size(); ++i) b.push_back(bernoulli_set(*w->cfg, p, c.seed, i));
      res["matched_p"] = p;
      res["source"] = c.budgets.source;
      if (reps.size() >= 30) {
        const DiscriminationReport rep = discriminate(a, b, *w->cfg);
        res["report"] = to_json(rep);
      } else {
        warnings.push_back("fewer than 30 replicas: no discrimination test");
      }
      break;
    }
    case ExperimentKind::chen_stein: {
      std::uint64_t violations = 0;
      double max_ratio = 0.0;
      for (const auto& r : reps) {
        violations += r.at("violation").get<bool>();
        const double b = r.at("tv_bound").get<double>();
        if (b > 0) max_ratio = std::max(max_ratio, r.at("tv").get<double>() / b);
      }
      res = {{"instances", reps.size()}, {"violations", violations}, {"max_tv_over_bound", max_ratio}};
      break;
    }
    default:
      break;
  }
  return res;
}

json run_unit(const ExperimentConfig& c, const RunOptions& opt, json& warnings, json& params_out, json& constants_out,
              std::uint64_t& steps) {
  json res;
  switch (c.kind) {
    case ExperimentKind::excursion_diagnostics: {
      const LatticeConfig cfg(c.d, c.n);
      const Radii radii = choose_radii(cfg, c.alpha, c.epsilon, c.gamma_override, c.r, c.R);
      auto geom = std::make_shared<AnnulusGeometry>(cfg, radii.r, radii.R);
      geom->build_pair_orbits();
      ExcursionRunConfig rc;
      rc.target_excursions = c.budgets.excursions;
      rc.centres = centre_panel(cfg);
      rc.replicas = std::max(1, c.replicas);
      rc.seed = c.seed;
      rc.step_cap = c.budgets.step_cap;
      const ExcursionStats st = run_excursion_stats(geom, rc);
      steps = st.steps;
      const ExitChainEstimate ec = summarize_exit_chain(st);
      const FMEstimate fm = fm_from_stats(st);
      for (const auto& w : geom->check().warnings) warnings.push_back(w);
      if (st.cap_hit) warnings.push_back("step cap reached before the excursion target");
      res = {{"excursions", st.excursions}, {"T_hat", st.T}, {"T_se", st.T_se}, {"m_hat", fm.m}, {"m_se", fm.m_se},
             {"exit_shell_size", geom->exit_shell().size()}, {"pair_orbits", geom->num_pair_orbits()},
             {"orbit_uniformity_p", ec.orbit_uniformity_p}, {"nu_ratio", ec.nu_ratio}, {"mixing_steps", ec.mixing_steps},
             {"mixing_tv", ec.mixing_tv}, {"mixing_noise_floor", ec.mixing_noise_floor}, {"wide_ci", ec.wide_ci},
             {"zero_hit_orbits", fm.zero_hit_orbits}};
      params_out["gamma"] = param(radii.gamma, radii.source);
      params_out["r"] = param(radii.r, radii.source);
      params_out["R"] = param(radii.R, radii.source);
      params_out["m_hat"] = param(fm.m, "estimated: excursion Monte Carlo");
      params_out["T_hat"] = param(st.T, "estimated: excursion Monte Carlo");
      break;
    }
    case ExperimentKind::hitting_constants: {
      ConstantsParams cp = opt.constants_params;
      cp.seed = c.seed;
      const GreenConstants K = opt.constants ? *opt.constants : estimate_constants(c.d, cp);
      constants_out = constants_json(K);
      const double sig = std::sqrt(K.G0_se * K.G0_se * (1 - K.p_mc) * (1 - K.p_mc) + K.G0 * K.G0 * K.p_mc_se * K.p_mc_se);
      res = {{"G0", K.G0}, {"G0_se", K.G0_se}, {"p_d", K.p_d}, {"p_mc", K.p_mc}, {"p_mc_se", K.p_mc_se},
             {"identity_G0_times_1_minus_p_mc", K.G0 * (1 - K.p_mc)}, {"identity_sigma", sig},
             {"c_d", K.c_d}, {"c_d_se", K.c_d_se}, {"C_d", K.C_d}, {"slope", K.slope},
             {"extrapolation_gap", K.extrapolation_gap}};
      if (c.budgets.samples > 0 && c.r && c.R) {
        const LatticeConfig cfg(c.d, c.n);
        const ExcursionHitReport h = conditional_hit_prob(cfg, *c.r, *c.R, c.budgets.samples, c.seed);
        const double pred = K.C_d / std::pow(*c.r, c.d - 2.0);
        res["conditional_hit"] = {{"estimate", h.estimate}, {"se", h.stderr_}, {"predicted_C_d_over_r", pred},
                                  {"relative_error", h.estimate / pred - 1.0}, {"homogeneity_p", h.homogeneity_p},
                                  {"exit_homogeneity_p", h.exit_homogeneity_p},
                                  {"entry_homogeneity_p", h.entry_homogeneity_p}, {"max_min_ratio", h.max_min_ratio},
                                  {"samples", h.samples}};
      }
      break;
    }
    case ExperimentKind::gff: {
      const GreenConstants K = get_constants(c, opt);
      constants_out = constants_json(K);
      const Gff g(c.d, c.n);
      HighPointSpec hps{c.alpha, c.budgets.interior_margin, K.G0};
      res["interior"] = g.interior_size();
      res["threshold"] = hps.threshold(c.d, c.n);
      Point centre(c.d);
      for (int i = 0; i < c.d; ++i) centre[i] = c.n / 2;
      res["var_centre"] = g.covariance(centre, centre);
      try {
        const MarkovDecomposition md = markov_decompose(g, centre, ball_radius(c.n, c.budgets.ball_gamma));
        res["decomposition"] = {{"radius", md.radius}, {"v_h2", md.v_h2}, {"v_xi2", md.v_xi2}, {"v_phi2", md.v_phi2},
                                {"identity_error", md.identity_error}, {"harmonic_sum_error", std::abs(md.p_sum - 1.0)}};
      } catch (const GeometryError& e) {
        warnings.push_back(e.what());
      }
      if (c.budgets.samples > 0 && !g.factorized())
        throw ResourceError("GFF interior of " + std::to_string(g.interior_size()) +
                            " sites is too large to sample; set budgets.samples = 0 for covariance-only runs");
      if (c.budgets.samples > 0) {
        const HighPointComparison hp = high_point_frequencies(g, hps, c.budgets.samples, c.seed);
        res["high_points"] = {{"sites", hp.sites.size()}, {"samples", hp.samples}, {"chi2", hp.chi2}, {"dof", hp.dof},
                              {"chi2_p", hp.chi2_p}, {"total_hits", hp.total_hits},
                              {"total_expected", hp.total_expected}, {"aggregate_z", hp.aggregate_z}};
      }
      break;
    }
    default:
      throw ConfigError("experiment is replica-structured");
  }
  return res;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [name, kind] : kKinds)
    if (kind == k) return name;
  return "?";
}

ExperimentKind parse_kind(const std::string& s) {
  const auto it = kKinds.find(s);
  if (it == kKinds.end()) throw ConfigError("unknown experiment '" + s + "'");
  return it->second;
}

ExperimentConfig parse_config(const json& j) {
  check_keys(j, {"schema", "experiment", "lattice", "alpha", "epsilon", "psi", "zeta", "gamma_override", "r", "R",
                 "replicas", "seed", "budgets", "constants_cache", "output"},
             "");
  ExperimentConfig c;
  read(j, "schema", c.schema);
  if (c.schema != kConfigSchema) throw ConfigError("unsupported config schema " + std::to_string(c.schema));
  if (!j.contains("experiment")) throw ConfigError("config key 'experiment' is required");
  c.kind = parse_kind(j.at("experiment").get<std::string>());
  if (j.contains("lattice")) {
    check_keys(j.at("lattice"), {"d", "n"}, "lattice.");
    read(j.at("lattice"), "d", c.d, "lattice.");
    read(j.at("lattice"), "n", c.n, "lattice.");
  }
  read(j, "alpha", c.alpha);
  read(j, "epsilon", c.epsilon);
  read(j, "psi", c.psi);
  read(j, "zeta", c.zeta);
  read_opt(j, "gamma_override", c.gamma_override);
  read_opt(j, "r", c.r);
  read_opt(j, "R", c.R);
  read(j, "replicas", c.replicas);
  read(j, "seed", c.seed);
  read(j, "constants_cache", c.constants_cache);
  read(j, "output", c.output);
  if (j.contains("budgets")) {
    const json& b = j.at("budgets");
    check_keys(b, {"excursions", "fm_replicas", "step_cap", "eta", "panel", "coupling", "samples", "source", "tiny_size",
                   "interior_margin", "ball_gamma"},
               "budgets.");
    auto& B = c.budgets;
    read(b, "excursions", B.excursions, "budgets.");
    read(b, "fm_replicas", B.fm_replicas, "budgets.");
    read(b, "step_cap", B.step_cap, "budgets.");
    read(b, "eta", B.eta, "budgets.");
    read(b, "panel", B.panel, "budgets.");
    read(b, "coupling", B.coupling, "budgets.");
    read(b, "samples", B.samples, "budgets.");
    read(b, "source", B.source, "budgets.");
    read(b, "tiny_size", B.tiny_size, "budgets.");
    read(b, "interior_margin", B.interior_margin, "budgets.");
    read(b, "ball_gamma", B.ball_gamma, "budgets.");
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

json config_to_json(const ExperimentConfig& c) {
  const auto& B = c.budgets;
  return {{"schema", c.schema},
          {"experiment", to_string(c.kind)},
          {"lattice", {{"d", c.d}, {"n", c.n}}},
          {"alpha", c.alpha},
          {"epsilon", c.epsilon},
          {"psi", c.psi},
          {"zeta", c.zeta},
          {"gamma_override", opt_json(c.gamma_override)},
          {"r", opt_json(c.r)},
          {"R", opt_json(c.R)},
          {"replicas", c.replicas},
          {"seed", c.seed},
          {"budgets",
           {{"excursions", B.excursions}, {"fm_replicas", B.fm_replicas}, {"step_cap", B.step_cap}, {"eta", B.eta},
            {"panel", B.panel}, {"coupling", B.coupling}, {"samples", B.samples}, {"source", B.source},
            {"tiny_size", B.tiny_size}, {"interior_margin", B.interior_margin}, {"ball_gamma", B.ball_gamma}}},
          {"constants_cache", c.constants_cache},
          {"output", c.output}};
}

std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("output");
  return hex64(fnv1a64(j.dump()));
}

void validate(const ExperimentConfig& c) {
  if (uses_torus(c.kind)) {
    if (c.d < 3 || c.d > kMaxDim) throw ConfigError("lattice.d must be in [3,8] for walk experiments");
  } else if (c.kind == ExperimentKind::gff) {
    if (c.d < 3 || c.d > kMaxDim) throw ConfigError("lattice.d must be in [3,8] for the gff experiment (G(0) is finite only for d >= 3)");
  }
  if (c.n < 4) throw ConfigError("lattice.n must be >= 4");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ConfigError("epsilon must lie in (0,1)");
  if (!(c.psi >= 0.0)) throw ConfigError("psi must be >= 0");
  if (!(c.zeta >= 0.0)) throw ConfigError("zeta must be >= 0");
  if (c.gamma_override && !(*c.gamma_override > 0.0 && *c.gamma_override < 1.0)) throw ConfigError("gamma_override must lie in (0,1)");
  if (c.r.has_value() != c.R.has_value()) throw ConfigError("r and R must be given together");
  if (c.r && !(*c.r > 0.0 && *c.R > *c.r)) throw ConfigError("radii need 0 < r < R");
  if (c.replicas < 0) throw ConfigError("replicas must be >= 0");
  const auto& B = c.budgets;
  if (B.excursions == 0) throw ConfigError("budgets.excursions must be > 0");
  if (B.fm_replicas < 1) throw ConfigError("budgets.fm_replicas must be >= 1");
  if (!(B.eta > 0.0 && B.eta < 1.0)) throw ConfigError("budgets.eta must lie in (0,1)");
  if (B.source != "uncovered" && B.source != "surrogate") throw ConfigError("budgets.source must be 'uncovered' or 'surrogate'");
  if (B.tiny_size < 1 || B.tiny_size > kMaxTinyIndices) throw ConfigError("budgets.tiny_size must be in [1,20]");
  if (!(B.interior_margin > 0.0 && B.interior_margin < 0.5)) throw ConfigError("budgets.interior_margin must lie in (0,1/2)");
  if (!(B.ball_gamma > 0.0 && B.ball_gamma < 1.0)) throw ConfigError("budgets.ball_gamma must lie in (0,1)");
  if (c.kind == ExperimentKind::hitting_constants && B.samples > 0 && !c.r)
    throw ConfigError("hitting-constants with samples > 0 needs explicit r and R");
  if (c.output.empty()) throw ConfigError("output directory must be non-empty");
  if (c.kind != ExperimentKind::gff && c.kind != ExperimentKind::chen_stein && !(c.kind == ExperimentKind::hitting_constants && !c.r)) {
    const LatticeConfig cfg(c.d, c.n);
    if (c.kind != ExperimentKind::hitting_constants) choose_radii(cfg, c.alpha, c.epsilon, c.gamma_override, c.r, c.R);
    else check_annulus(AnnulusSpec{cfg.origin(), *c.r, *c.R}, cfg);
  }
}

std::string default_constants_path(int d) { return "coverlab_constants_d" + std::to_string(d) + ".json"; }

void write_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw ResourceError("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

ExperimentRecord run(const ExperimentConfig& c, const RunOptions& opt) {
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string hash = config_hash(c);
  const std::filesystem::path dir(c.output);
  const std::string ckpt = (dir / "checkpoint.json").string();

  json warnings = json::array();
  json results = json::object();
  json replicas = json::array();
  json constants = nullptr;
  json params = parameters_block(c, nullptr);
  std::uint64_t steps = 0;

  if (c.replicas > 0 && replica_structured(c.kind)) {
    std::optional<WalkSetup> w;
    if (uses_surrogate_params(c.kind)) {
      w = walk_setup(c, opt);
      params = parameters_block(c, &*w);
      constants = constants_json(w->constants);
      for (const auto& s : w->params.warnings) warnings.push_back(s);
    }
    std::vector<json> reps(static_cast<std::size_t>(c.replicas));
    std::vector<bool> done(reps.size(), false);
    if (opt.write && opt.resume && std::filesystem::exists(ckpt)) {
      const json ck = read_json_file(ckpt);
      if (ck.value("config_hash", std::string()) == hash)
        for (auto it = ck.at("completed").begin(); it != ck.at("completed").end(); ++it) {
          const std::size_t i = std::stoul(it.key());
          if (i < reps.size()) {
            reps[i] = it.value();
            done[i] = true;
          }
        }
    }
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < reps.size(); ++i)
      if (!done[i]) todo.push_back(i);
    const std::size_t batch = static_cast<std::size_t>(std::max(1, worker_count()));
    for (std::size_t b = 0; b < todo.size(); b += batch) {
      const std::size_t e = std::min(todo.size(), b + batch);
      parallel_for(e - b, [&](std::size_t k) { reps[todo[b + k]] = run_replica(c, w ? &*w : nullptr, todo[b + k]); });
      for (std::size_t k = b; k < e; ++k) done[todo[k]] = true;
      if (opt.write) {
        json ck = {{"config_hash", hash}, {"completed", json::object()}};
        for (std::size_t i = 0; i < reps.size(); ++i)
          if (done[i]) ck["completed"][std::to_string(i)] = reps[i];
        write_atomic(ckpt, ck.dump());
      }
    }
    for (const auto& r : reps) {
      steps += r.value("steps", std::uint64_t{0});
      replicas.push_back(r);
    }
    results = summarize_replicas(c, w ? &*w : nullptr, reps, warnings);
  } else if (c.replicas > 0) {
    results = run_unit(c, opt, warnings, params, constants, steps);
  }

  ExperimentRecord rec;
  rec.summary = {{"schema", kConfigSchema}, {"experiment", to_string(c.kind)}, {"config_hash", hash},
                 {"replicas", c.replicas}, {"seed", c.seed}, {"parameters", params}, {"results", results},
                 {"constants", constants}, {"warnings", warnings}, {"rng", kRngName}};
  if (c.kind == ExperimentKind::discriminate) {
    std::ostringstream os;
    if (results.contains("report")) {
      os << "TV(" << c.budgets.source << " set law, matched Bernoulli law) >= " << results["report"]["tv_lower_bound"].get<double>()
         << " (certified 95% lower bound from the statistic panel; not an estimate of TV)";
    } else {
      os << "TV lower bound: not computed (fewer than 30 replicas)";
    }
    rec.summary["tv_lower_bound_line"] = os.str();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.record = {{"schema", kConfigSchema}, {"experiment", to_string(c.kind)}, {"config", config_to_json(c)},
                {"config_hash", hash}, {"code_version", kCodeVersion}, {"rng", kRngName}, {"constants", constants},
                {"replicas", replicas}, {"summary", rec.summary},
                {"timing", {{"wall_seconds", wall}, {"steps", steps}, {"threads", worker_count()}}}};
  if (opt.write) {
    std::filesystem::create_directories(dir);
    write_atomic((dir / "record.json").string(), rec.record.dump(2) + "\n");
    write_report(rec.record, "all", c.output);
    std::filesystem::remove(ckpt);
  }
  return rec;
}

}  // namespace coverlab
