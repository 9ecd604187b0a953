#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "coverlab/lattice.hpp"
#include "coverlab/rng.hpp"

namespace coverlab {

inline constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

struct WalkState {
  Point position;
  SiteIndex site = 0;
  std::uint64_t time = 0;
  Rng rng;
};

// Uniform start on Z_n^d (the stationary law of the walk); time 0.
WalkState start_stationary(const LatticeConfig& cfg, std::uint64_t seed, std::uint64_t replica);
WalkState start_at(const LatticeConfig& cfg, const Point& p, std::uint64_t seed, std::uint64_t replica);

// Nearest-neighbour stepping on the torus. Direction k moves axis k/2 by +1 (k even) or -1.
class Stepper {
 public:
  explicit Stepper(const LatticeConfig& cfg, bool lazy = false);

  // One step; returns the direction taken, or -1 for a lazy hold.
  int advance(WalkState& s) const {
    if (lazy_ && (s.rng.next() >> 63)) {
      ++s.time;
      return -1;
    }
    const int k = s.rng.below(two_d_);
    move(s, k);
    ++s.time;
    return k;
  }

  void move(WalkState& s, int k) const {
    const int axis = k >> 1;
    int& c = s.position[axis];
    const SiteIndex st = cfg_.stride(axis);
    if ((k & 1) == 0) {
      if (c == n_ - 1) {
        c = 0;
        s.site -= st * (n_ - 1);
      } else {
        ++c;
        s.site += st;
      }
    } else {
      if (c == 0) {
        c = n_ - 1;
        s.site += st * (n_ - 1);
      } else {
        --c;
        s.site -= st;
      }
    }
  }

  const LatticeConfig& cfg() const { return cfg_; }
  int directions() const { return two_d_; }
  bool lazy() const { return lazy_; }

 private:
  LatticeConfig cfg_;
  int n_;
  int two_d_;
  bool lazy_;
};

// Value-semantic single step.
WalkState step(WalkState s, const LatticeConfig& cfg);

struct HitResult {
  bool hit = false;            // false: cap exceeded
  std::uint64_t time = 0;      // hit time, or the time at which the cap stopped the walk
};

// First t >= s.time with X(t) in target, walking at most `cap` steps. The state is advanced.
HitResult run_until_hit(WalkState& s, const SiteSet& target, std::uint64_t cap, const Stepper& stepper);

class CoverTracker {
 public:
  CoverTracker(const LatticeConfig& cfg, bool record_first_visits);

  void visit(SiteIndex s, std::uint64_t t) {
    auto& v = visited_[static_cast<std::size_t>(s)];
    if (!v) {
      v = 1;
      --uncovered_;
      if (record_) first_visit_[static_cast<std::size_t>(s)] = t;
    }
  }

  std::uint64_t uncovered_count() const { return uncovered_; }
  bool visited(SiteIndex s) const { return visited_[static_cast<std::size_t>(s)] != 0; }
  // tau_x when recorded and x visited.
  std::optional<std::uint64_t> first_visit(SiteIndex s) const;
  bool records_first_visits() const { return record_; }
  SiteSet uncovered() const;
  SiteIndex volume() const { return static_cast<SiteIndex>(visited_.size()); }

 private:
  std::vector<std::uint8_t> visited_;
  std::vector<std::uint64_t> first_visit_;
  std::uint64_t uncovered_;
  bool record_;
};

// Runs the walk until time `horizon` (absolute), marking every visited site in [s.time, horizon].
CoverTracker run_and_track(WalkState& s, std::uint64_t horizon, const Stepper& stepper,
                           bool record_first_visits = true, std::vector<SiteIndex>* trace = nullptr);

// Time to visit every site from a stationary start; kNever if `cap` steps did not suffice.
std::uint64_t cover_time(const LatticeConfig& cfg, std::uint64_t seed, std::uint64_t replica, std::uint64_t cap);

}  // namespace coverlab
