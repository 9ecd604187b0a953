#include "coverlab/annulus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace coverlab {

namespace {

int wrap_coord(int c, int n) {
  c %= n;
  if (c < 0) c += n;
  if (2 * c > n) c -= n;
  return c;
}

Point unit(int d, int k) {
  Point e(d);
  e[k >> 1] = (k & 1) ? -1 : 1;
  return e;
}

Point add(const Point& a, const Point& b) {
  Point c(a.dim());
  for (int i = 0; i < a.dim(); ++i) c[i] = a[i] + b[i];
  return c;
}

Point sub(const Point& a, const Point& b) {
  Point c(a.dim());
  for (int i = 0; i < a.dim(); ++i) c[i] = a[i] - b[i];
  return c;
}

}  // namespace

AnnulusGeometry::AnnulusGeometry(const LatticeConfig& cfg, double r, double R)
    : cfg_(cfg), d_(cfg.dim()), n_(cfg.side()), r_(r), R_(R), r2_(radius_sq_floor(r)), R2_(radius_sq_floor(R)) {
  check_ = check_annulus(AnnulusSpec{cfg.origin(), r, R}, cfg);

  const int K = static_cast<int>(std::floor(R + 1e-12)) + 1;
  std::vector<Point> cube;
  {
    std::unordered_map<PackedKey, int, PackedKeyHash> seen;
    Point off(d_);
    for (int i = 0; i < d_; ++i) off[i] = -K;
    while (true) {
      const Point w = wrap_offset(off);
      if (seen.emplace(pack(w), 0).second) cube.push_back(w);
      int i = 0;
      while (i < d_ && off[i] == K) off[i++] = -K;
      if (i == d_) break;
      ++off[i];
    }
  }
  std::sort(cube.begin(), cube.end());
  for (const Point& u : cube) {
    const std::uint8_t f = classify(u);
    if (f & kExitShell) {
      exit_lookup_.emplace(pack(u), static_cast<int>(exit_shell_.size()));
      exit_shell_.push_back(u);
    }
    if (f & kEntryShell) {
      entry_lookup_.emplace(pack(u), static_cast<int>(entry_shell_.size()));
      entry_shell_.push_back(u);
    }
  }
  if (entry_shell_.empty() || exit_shell_.empty()) throw GeometryError("degenerate annulus");

  auto to_event = [&](const Point& u, int shell) {
    Event e;
    for (int a = 0; a < d_; ++a) e.off[static_cast<std::size_t>(a)] = static_cast<std::int16_t>(u[a]);
    e.shell = shell;
    return e;
  };
  const int dirs = 2 * d_;
  exit_events_.resize(static_cast<std::size_t>(dirs));
  entry_events_.resize(static_cast<std::size_t>(dirs));
  reach_events_.resize(static_cast<std::size_t>(dirs));
  for (int k = 0; k < dirs; ++k) {
    const Point e = unit(d_, k);
    for (std::size_t i = 0; i < exit_shell_.size(); ++i) {
      const std::uint8_t prev = classify(sub(exit_shell_[i], e));
      if (prev & kInOuterBall) exit_events_[static_cast<std::size_t>(k)].push_back(to_event(exit_shell_[i], static_cast<int>(i)));
      if (!(prev & kExitShell)) reach_events_[static_cast<std::size_t>(k)].push_back(to_event(exit_shell_[i], static_cast<int>(i)));
    }
    for (std::size_t i = 0; i < entry_shell_.size(); ++i) {
      const std::uint8_t prev = classify(sub(entry_shell_[i], e));
      if (!(prev & kEntryShell)) entry_events_[static_cast<std::size_t>(k)].push_back(to_event(entry_shell_[i], static_cast<int>(i)));
    }
  }

  wrap_.resize(static_cast<std::size_t>(d_ * 3 * n_));
  for (int a = 0; a < d_; ++a)
    for (int v = -n_; v < 2 * n_; ++v)
      wrap_[static_cast<std::size_t>(a * 3 * n_ + v + n_)] = cfg_.stride(a) * (((v % n_) + n_) % n_);

  std::unordered_map<PackedKey, int, PackedKeyHash> orbit_ids;
  exit_orbit_.resize(exit_shell_.size());
  for (std::size_t i = 0; i < exit_shell_.size(); ++i) {
    auto [it, fresh] = orbit_ids.emplace(pack(canonical_offset(exit_shell_[i])), static_cast<int>(exit_orbit_size_.size()));
    if (fresh) exit_orbit_size_.push_back(0);
    exit_orbit_[i] = it->second;
    ++exit_orbit_size_[static_cast<std::size_t>(it->second)];
  }
}

Point AnnulusGeometry::wrap_offset(const Point& u) const {
  Point w(d_);
  for (int a = 0; a < d_; ++a) w[a] = wrap_coord(u[a], n_);
  return w;
}

bool AnnulusGeometry::in_ball(const Point& u, std::int64_t r2) const {
  std::int64_t s = 0;
  for (int a = 0; a < d_; ++a) s += static_cast<std::int64_t>(u[a]) * u[a];
  return s <= r2;
}

std::uint8_t AnnulusGeometry::classify(const Point& offset) const {
  if (offset.dim() != d_) throw ConfigError("offset dimension mismatch");
  const Point u = wrap_offset(offset);
  std::uint8_t f = 0;
  const bool inR = in_ball(u, R2_);
  const bool inr = in_ball(u, r2_);
  if (inR) f |= kInOuterBall;
  bool all_zero = true;
  for (int a = 0; a < d_; ++a) all_zero = all_zero && u[a] == 0;
  if (all_zero) f |= kCentre;
  bool nb_in_R = false, nb_out_r = false;
  for (int k = 0; k < 2 * d_; ++k) {
    const Point v = wrap_offset(add(u, unit(d_, k)));
    nb_in_R = nb_in_R || in_ball(v, R2_);
    nb_out_r = nb_out_r || !in_ball(v, r2_);
  }
  if (!inR && nb_in_R) f |= kExitShell;
  if (inr && nb_out_r) f |= kEntryShell;
  return f;
}

int AnnulusGeometry::exit_index(const Point& offset) const {
  auto it = exit_lookup_.find(pack(wrap_offset(offset)));
  return it == exit_lookup_.end() ? -1 : it->second;
}

int AnnulusGeometry::entry_index(const Point& offset) const {
  auto it = entry_lookup_.find(pack(wrap_offset(offset)));
  return it == entry_lookup_.end() ? -1 : it->second;
}

void AnnulusGeometry::build_pair_orbits() {
  if (!pair_orbit_.empty()) return;
  const std::size_t S = exit_shell_.size();
  pair_orbit_.assign(S * S, -1);
  std::unordered_map<PairKey, int, PairKeyHash> ids;
  for (std::size_t i = 0; i < S; ++i) {
    const auto gs = canonicalizers(exit_shell_[i]);
    const PackedKey cu = pack(canonical_offset(exit_shell_[i]));
    for (std::size_t j = 0; j < S; ++j) {
      bool first = true;
      Point best;
      for (const auto& g : gs) {
        Point gv = g.apply(exit_shell_[j], n_);
        if (first || gv < best) {
          best = gv;
          first = false;
        }
      }
      const PairKey key{cu, pack(best)};
      auto [it, fresh] = ids.emplace(key, static_cast<int>(pair_orbit_size_.size()));
      if (fresh) {
        pair_orbit_size_.push_back(0);
        pair_orbit_rep_.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
      pair_orbit_[i * S + j] = it->second;
      ++pair_orbit_size_[static_cast<std::size_t>(it->second)];
    }
  }
}

std::vector<int> AnnulusGeometry::stabiliser_orbits(int i, int* count) const {
  const auto gs = canonicalizers(exit_shell_[static_cast<std::size_t>(i)]);
  std::unordered_map<PackedKey, int, PackedKeyHash> ids;
  std::vector<int> out(exit_shell_.size());
  for (std::size_t j = 0; j < exit_shell_.size(); ++j) {
    bool first = true;
    Point best;
    for (const auto& g : gs) {
      Point gv = g.apply(exit_shell_[j], n_);
      if (first || gv < best) {
        best = gv;
        first = false;
      }
    }
    out[j] = ids.emplace(pack(best), static_cast<int>(ids.size())).first->second;
  }
  if (count) *count = static_cast<int>(ids.size());
  return out;
}

OffsetClassifier::OffsetClassifier(const AnnulusGeometry& geom) : g_(&geom) {
  const int d = geom.cfg().dim();
  half_ = static_cast<int>(std::floor(geom.R() + 1e-12)) + 2;
  const std::int64_t w = 2 * half_ + 1;
  std::int64_t size = 1;
  for (int a = 0; a < d; ++a) {
    stride_[static_cast<std::size_t>(a)] = size;
    size *= w;
  }
  table_.assign(static_cast<std::size_t>(size), 0);
  Point off(d);
  for (std::int64_t idx = 0; idx < size; ++idx) {
    std::int64_t rem = idx;
    for (int a = 0; a < d; ++a) {
      off[a] = static_cast<int>(rem % w) - half_;
      rem /= w;
    }
    table_[static_cast<std::size_t>(idx)] = geom.classify(off);
  }
}

OffsetTracker::OffsetTracker(const OffsetClassifier& cls, const Point& centre, const Point& position)
    : cls_(&cls), n_(cls.geometry().cfg().side()), u_(cls.geometry().cfg().displacement(centre, position)) {}

}  // namespace coverlab
