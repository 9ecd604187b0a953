#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "coverlab/lattice.hpp"
#include "coverlab/symmetry.hpp"
#include "coverlab/walk.hpp"

namespace coverlab {

// Offset classes relative to an annulus centre.
enum OffsetFlag : std::uint8_t {
  kInOuterBall = 1,    // dist <= R
  kEntryShell = 2,     // inner boundary of B(0,r): the stopping set for excursion starts
  kExitShell = 4,      // outer boundary of B(0,R): the first vertices outside B(0,R)
  kCentre = 8,
};

// Precomputed offset geometry of B(0,R) \ B(0,r) on a torus, plus per-direction event lists
// used to update many annulus automata from one trajectory.
class AnnulusGeometry {
 public:
  struct Event {
    std::array<std::int16_t, kMaxDim> off{};
    std::int32_t shell = -1;  // index into exit_shell() or entry_shell()
  };

  AnnulusGeometry(const LatticeConfig& cfg, double r, double R);

  const LatticeConfig& cfg() const { return cfg_; }
  double r() const { return r_; }
  double R() const { return R_; }
  const AnnulusCheck& check() const { return check_; }

  // Flags of an arbitrary offset (any integer vector; wrapped internally).
  std::uint8_t classify(const Point& offset) const;

  const std::vector<Point>& exit_shell() const { return exit_shell_; }
  const std::vector<Point>& entry_shell() const { return entry_shell_; }
  int exit_index(const Point& offset) const;   // -1 when not on the exit shell
  int entry_index(const Point& offset) const;  // -1 when not on the entry shell

  // After a step in direction k to offset u': u' leaves B(0,R) / enters the entry shell /
  // enters the exit shell.
  const std::vector<Event>& exit_events(int k) const { return exit_events_[static_cast<std::size_t>(k)]; }
  const std::vector<Event>& entry_events(int k) const { return entry_events_[static_cast<std::size_t>(k)]; }
  const std::vector<Event>& reach_events(int k) const { return reach_events_[static_cast<std::size_t>(k)]; }

  // Site of the centre x with walker position p and offset u = p - x.
  SiteIndex centre_site(const Point& p, const Event& e) const {
    SiteIndex s = 0;
    for (int a = 0; a < d_; ++a)
      s += wrap_[static_cast<std::size_t>(a * 3 * n_ + p[a] - e.off[static_cast<std::size_t>(a)] + n_)];
    return s;
  }

  // Symmetry orbits of exit-shell points and of ordered exit-shell pairs.
  int exit_orbit(int i) const { return exit_orbit_[static_cast<std::size_t>(i)]; }
  int num_exit_orbits() const { return static_cast<int>(exit_orbit_size_.size()); }
  int exit_orbit_size(int o) const { return exit_orbit_size_[static_cast<std::size_t>(o)]; }
  void build_pair_orbits();
  bool has_pair_orbits() const { return !pair_orbit_.empty(); }
  int pair_orbit(int i, int j) const {
    return pair_orbit_[static_cast<std::size_t>(i) * exit_shell_.size() + static_cast<std::size_t>(j)];
  }
  int num_pair_orbits() const { return static_cast<int>(pair_orbit_size_.size()); }
  int pair_orbit_size(int o) const { return pair_orbit_size_[static_cast<std::size_t>(o)]; }
  // A representative (i, j) of a pair orbit.
  std::pair<int, int> pair_orbit_rep(int o) const { return pair_orbit_rep_[static_cast<std::size_t>(o)]; }

  // Orbits of exit-shell points under the stabiliser of exit point `i`.
  std::vector<int> stabiliser_orbits(int i, int* count) const;

 private:
  Point wrap_offset(const Point& u) const;
  bool in_ball(const Point& u, std::int64_t r2) const;

  LatticeConfig cfg_;
  int d_;
  int n_;
  double r_;
  double R_;
  std::int64_t r2_;
  std::int64_t R2_;
  AnnulusCheck check_;
  std::vector<Point> exit_shell_;
  std::vector<Point> entry_shell_;
  std::unordered_map<PackedKey, int, PackedKeyHash> exit_lookup_;
  std::unordered_map<PackedKey, int, PackedKeyHash> entry_lookup_;
  std::vector<std::vector<Event>> exit_events_;
  std::vector<std::vector<Event>> entry_events_;
  std::vector<std::vector<Event>> reach_events_;
  std::vector<SiteIndex> wrap_;
  std::vector<int> exit_orbit_;
  std::vector<int> exit_orbit_size_;
  std::vector<std::int32_t> pair_orbit_;
  std::vector<int> pair_orbit_size_;
  std::vector<std::pair<int, int>> pair_orbit_rep_;
};

// Per-centre excursion automata for a panel of centres, all driven by one trajectory.
// Listener receives:
//   on_reach(slot, t)            first visit to the exit shell of the centre (tau_{dB(x,R)})
//   on_entry(slot, t, entry_idx) excursion start rho_k (entry shell)
//   on_exit(slot, t, exit_idx)   excursion end rho~_k (first vertex outside B(x,R))
//   on_visit(slot, t)            walker at the centre
template <class Listener>
class AnnulusTracker {
 public:
  AnnulusTracker(const AnnulusGeometry& geom, const std::vector<SiteIndex>& centres, Listener& listener)
      : g_(geom), centres_(centres), l_(listener),
        slot_of_(static_cast<std::size_t>(geom.cfg().volume()), -1),
        inside_(centres.size(), 0), reached_(centres.size(), 0), unreached_(centres.size()) {
    for (std::size_t i = 0; i < centres.size(); ++i) {
      auto& s = slot_of_[static_cast<std::size_t>(centres[i])];
      if (s >= 0) throw ConfigError("duplicate centre in tracker panel");
      s = static_cast<std::int32_t>(i);
    }
  }

  // Classifies the starting position against every centre (time s.time).
  void start(const WalkState& s) {
    const auto& cfg = g_.cfg();
    for (std::size_t i = 0; i < centres_.size(); ++i) {
      const Point u = cfg.displacement(cfg.point(centres_[i]), s.position);
      const std::uint8_t f = g_.classify(u);
      const int slot = static_cast<int>(i);
      if (f & kExitShell) mark_reached(slot, s.time);
      if (f & kEntryShell) {
        inside_[i] = 1;
        l_.on_entry(slot, s.time, g_.entry_index(u));
      }
      if (f & kCentre) l_.on_visit(slot, s.time);
    }
  }

  // Update after the step in direction k (k < 0: lazy hold, nothing changes).
  void after_step(const WalkState& s, int k) {
    if (k < 0) return;
    const Point& p = s.position;
    if (unreached_ > 0) {
      for (const auto& e : g_.reach_events(k)) {
        const int slot = slot_of_[static_cast<std::size_t>(g_.centre_site(p, e))];
        if (slot >= 0 && !reached_[static_cast<std::size_t>(slot)]) mark_reached(slot, s.time);
      }
    }
    for (const auto& e : g_.exit_events(k)) {
      const int slot = slot_of_[static_cast<std::size_t>(g_.centre_site(p, e))];
      if (slot >= 0 && inside_[static_cast<std::size_t>(slot)]) {
        inside_[static_cast<std::size_t>(slot)] = 0;
        l_.on_exit(slot, s.time, e.shell);
      }
    }
    for (const auto& e : g_.entry_events(k)) {
      const int slot = slot_of_[static_cast<std::size_t>(g_.centre_site(p, e))];
      if (slot >= 0 && !inside_[static_cast<std::size_t>(slot)]) {
        inside_[static_cast<std::size_t>(slot)] = 1;
        l_.on_entry(slot, s.time, e.shell);
      }
    }
    const int slot = slot_of_[static_cast<std::size_t>(s.site)];
    if (slot >= 0) l_.on_visit(slot, s.time);
  }

  // Stops watching a centre; no further callbacks for it.
  void retire(int slot) {
    const auto c = static_cast<std::size_t>(centres_[static_cast<std::size_t>(slot)]);
    if (slot_of_[c] < 0) return;
    slot_of_[c] = -1;
    if (!reached_[static_cast<std::size_t>(slot)]) {
      reached_[static_cast<std::size_t>(slot)] = 1;
      --unreached_;
    }
    ++retired_;
  }

  bool reached(int slot) const { return reached_[static_cast<std::size_t>(slot)] != 0; }
  bool inside(int slot) const { return inside_[static_cast<std::size_t>(slot)] != 0; }
  std::size_t active() const { return centres_.size() - retired_; }
  const std::vector<SiteIndex>& centres() const { return centres_; }

 private:
  void mark_reached(int slot, std::uint64_t t) {
    reached_[static_cast<std::size_t>(slot)] = 1;
    --unreached_;
    l_.on_reach(slot, t);
  }

  const AnnulusGeometry& g_;
  std::vector<SiteIndex> centres_;
  Listener& l_;
  std::vector<std::int32_t> slot_of_;
  std::vector<std::uint8_t> inside_;
  std::vector<std::uint8_t> reached_;
  std::size_t unreached_;
  std::size_t retired_ = 0;
};

// Dense flag table over the bounding cube of B(0,R+1); built once per geometry.
class OffsetClassifier {
 public:
  explicit OffsetClassifier(const AnnulusGeometry& geom);
  // Flags of an offset already wrapped into (-n/2, n/2].
  std::uint8_t flags(const Point& u) const {
    std::int64_t idx = 0;
    for (int a = 0; a < u.dim(); ++a) {
      const int c = u[a];
      if (c > half_ || c < -half_) return 0;
      idx += (c + half_) * stride_[static_cast<std::size_t>(a)];
    }
    return table_[static_cast<std::size_t>(idx)];
  }
  const AnnulusGeometry& geometry() const { return *g_; }

 private:
  const AnnulusGeometry* g_;
  int half_;
  std::vector<std::uint8_t> table_;
  std::array<std::int64_t, kMaxDim> stride_{};
};

// Offset of the walker from one centre, updated in O(1) per step.
class OffsetTracker {
 public:
  OffsetTracker(const OffsetClassifier& cls, const Point& centre, const Point& position);
  void move(int k) {
    if (k < 0) return;
    int& c = u_[k >> 1];
    c += (k & 1) ? -1 : 1;
    if (2 * c > n_) c -= n_;
    if (2 * c <= -n_) c += n_;
  }
  const Point& offset() const { return u_; }
  std::uint8_t flags() const { return cls_->flags(u_); }

 private:
  const OffsetClassifier* cls_;
  int n_;
  Point u_;
};

}  // namespace coverlab
