#include "coverlab/walk.hpp"

namespace coverlab {

WalkState start_stationary(const LatticeConfig& cfg, std::uint64_t seed, std::uint64_t replica) {
  if (!cfg.is_torus()) throw ConfigError("walks run on the torus");
  Rng rng(seed, replica);
  const auto site = static_cast<SiteIndex>(rng.below64(static_cast<std::uint64_t>(cfg.volume())));
  return WalkState{cfg.point(site), site, 0, std::move(rng)};
}

WalkState start_at(const LatticeConfig& cfg, const Point& p, std::uint64_t seed, std::uint64_t replica) {
  if (!cfg.is_torus()) throw ConfigError("walks run on the torus");
  return WalkState{p, cfg.index(p), 0, Rng(seed, replica)};
}

Stepper::Stepper(const LatticeConfig& cfg, bool lazy)
    : cfg_(cfg), n_(cfg.side()), two_d_(2 * cfg.dim()), lazy_(lazy) {
  if (!cfg.is_torus()) throw ConfigError("walks run on the torus");
}

WalkState step(WalkState s, const LatticeConfig& cfg) {
  Stepper(cfg).advance(s);
  return s;
}

HitResult run_until_hit(WalkState& s, const SiteSet& target, std::uint64_t cap, const Stepper& stepper) {
  if (target.empty()) throw ConfigError("run_until_hit: empty target");
  if (cap == 0) throw ConfigError("run_until_hit: cap must be positive");
  if (target.contains(s.site)) return {true, s.time};
  for (std::uint64_t k = 0; k < cap; ++k) {
    stepper.advance(s);
    if (target.contains(s.site)) return {true, s.time};
  }
  return {false, s.time};
}

CoverTracker::CoverTracker(const LatticeConfig& cfg, bool record_first_visits)
    : visited_(static_cast<std::size_t>(cfg.volume()), 0),
      first_visit_(record_first_visits ? static_cast<std::size_t>(cfg.volume()) : 0, kNever),
      uncovered_(static_cast<std::uint64_t>(cfg.volume())),
      record_(record_first_visits) {}

std::optional<std::uint64_t> CoverTracker::first_visit(SiteIndex s) const {
  if (!record_ || !visited(s)) return std::nullopt;
  return first_visit_[static_cast<std::size_t>(s)];
}

SiteSet CoverTracker::uncovered() const {
  std::vector<SiteIndex> out;
  out.reserve(uncovered_);
  for (std::size_t i = 0; i < visited_.size(); ++i)
    if (!visited_[i]) out.push_back(static_cast<SiteIndex>(i));
  return SiteSet(volume(), std::move(out));
}

CoverTracker run_and_track(WalkState& s, std::uint64_t horizon, const Stepper& stepper,
                           bool record_first_visits, std::vector<SiteIndex>* trace) {
  CoverTracker tracker(stepper.cfg(), record_first_visits);
  tracker.visit(s.site, s.time);
  if (trace) trace->push_back(s.site);
  while (s.time < horizon) {
    stepper.advance(s);
    tracker.visit(s.site, s.time);
    if (trace) trace->push_back(s.site);
  }
  return tracker;
}

std::uint64_t cover_time(const LatticeConfig& cfg, std::uint64_t seed, std::uint64_t replica, std::uint64_t cap) {
  WalkState s = start_stationary(cfg, seed, replica);
  const Stepper stepper(cfg);
  CoverTracker tracker(cfg, false);
  tracker.visit(s.site, 0);
  while (tracker.uncovered_count() > 0) {
    if (s.time >= cap) return kNever;
    stepper.advance(s);
    tracker.visit(s.site, s.time);
  }
  return s.time;
}

}  // namespace coverlab
