#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "coverlab/excursion.hpp"
#include "coverlab/oracle.hpp"

namespace testing {

// Survival of the annulus centre against the exact product of per-excursion no-hit probabilities.
// The walk starts on the exit shell at `start`, so tau_{dB(x,R)} = 0 and the conditional law of Q
// given the exit points Y_0..Y_A is f(start, Y_0) prod_{i=1}^{A} f(Y_{i-1}, Y_i).
struct ProductIdentity {
  std::size_t samples = 0;
  double mean_q = 0.0;
  double mean_product = 0.0;
  double diff = 0.0;       // mean(Q - product)
  double diff_se = 0.0;
  std::array<double, 4> stratum_z{};  // by quartile of the product
  std::array<std::size_t, 4> stratum_n{};
  double max_abs_z = 0.0;
};

inline ProductIdentity product_identity(const coverlab::LatticeConfig& cfg, double r, double R, std::uint64_t A,
                                        std::size_t samples, std::uint64_t seed) {
  using namespace coverlab;
  const oracle::ExactAnnulus ex = oracle::exact_annulus(cfg, r, R);
  const AnnulusGeometry geom(cfg, r, R);
  const Stepper st(cfg);
  const Point centre = cfg.origin();
  const Point start = cfg.wrap(ex.exit_shell.front());
  const int z0 = ex.exit_index(ex.exit_shell.front());
  const auto horizon0 = static_cast<std::uint64_t>(8.0 * static_cast<double>(A + 2) * ex.T);

  std::vector<double> q(samples), prod(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    ExcursionLog log;
    // Same stream with a longer horizon replays the same prefix, so extending is unbiased.
    for (std::uint64_t h = horizon0;; h *= 2) {
      WalkState s = start_at(cfg, start, seed, i);
      log = record_excursions(s, geom, centre, h, st);
      if (log.rho_tilde.size() > A) break;
    }
    bool visited = false;
    for (std::uint64_t v : log.centre_visits) visited = visited || v <= log.rho_tilde[A];
    q[i] = visited ? 0.0 : 1.0;
    double p = 1.0;
    int prev = z0;
    for (std::uint64_t k = 0; k <= A; ++k) {
      const int y = ex.exit_index(cfg.displacement(centre, log.exit_points[k]));
      p *= ex.f(prev, y);
      prev = y;
    }
    prod[i] = p;
  }

  ProductIdentity out;
  out.samples = samples;
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double dlt = q[i] - prod[i];
    s1 += dlt;
    s2 += dlt * dlt;
    out.mean_q += q[i] / static_cast<double>(samples);
    out.mean_product += prod[i] / static_cast<double>(samples);
  }
  const double N = static_cast<double>(samples);
  out.diff = s1 / N;
  out.diff_se = std::sqrt((s2 / N - out.diff * out.diff) / N);

  std::vector<double> sorted = prod;
  std::sort(sorted.begin(), sorted.end());
  std::array<double, 3> cut{sorted[samples / 4], sorted[samples / 2], sorted[3 * samples / 4]};
  std::array<double, 4> a1{}, a2{};
  for (std::size_t i = 0; i < samples; ++i) {
    const int b = prod[i] < cut[0] ? 0 : (prod[i] < cut[1] ? 1 : (prod[i] < cut[2] ? 2 : 3));
    const double dlt = q[i] - prod[i];
    a1[static_cast<std::size_t>(b)] += dlt;
    a2[static_cast<std::size_t>(b)] += dlt * dlt;
    ++out.stratum_n[static_cast<std::size_t>(b)];
  }
  for (std::size_t b = 0; b < 4; ++b) {
    const double n = static_cast<double>(out.stratum_n[b]);
    if (n < 2) continue;
    const double m = a1[b] / n, se = std::sqrt((a2[b] / n - m * m) / n);
    out.stratum_z[b] = se > 0 ? m / se : 0.0;
    out.max_abs_z = std::max(out.max_abs_z, std::abs(out.stratum_z[b]));
  }
  return out;
}

}  // namespace testing
