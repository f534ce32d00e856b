#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "core.hpp"
#include "grid.hpp"

namespace equipot {

/**
 * Smooth random field for multi-start experiments: a real trigonometric
 * polynomial with independent Gaussian coefficients on all nonzero modes with
 * per-axis frequency at most kmax, weighted by 1/(1+|k|^2), then rescaled to
 * unit sup norm (times amp). Deterministic for a fixed seed across platforms;
 * the normal variates are generated by an explicit Box-Muller transform since
 * std::normal_distribution is not bit-stable between standard libraries.
 */
inline Field random_band_limited(const Grid& g, std::uint64_t seed, int kmax, double amp) {
  if (kmax < 1 || kmax > g.n / 4)
    throw InvalidArgument("random_band_limited: kmax must lie in [1, n/4]");
  std::mt19937_64 rng(seed);
  auto normal = [&rng]() {
    // Box-Muller; u1 in (0,1] so the log is finite
    const double u1 =
        (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740993.0);
    const double u2 = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  };

  const int axes = g.axes();
  Field f(g);
  // Enumerate modes k in [-kmax, kmax]^axes, k != 0, taking one representative
  // per {k, -k} pair (first nonzero entry positive).
  std::vector<int> k(axes, -kmax);
  for (;;) {
    bool lead_positive = false, nonzero = false;
    for (int a = 0; a < axes; ++a) {
      if (k[a] != 0) {
        nonzero = true;
        lead_positive = k[a] > 0;
        break;
      }
    }
    if (nonzero && lead_positive) {
      double ksq = 0.0;
      for (int a = 0; a < axes; ++a) ksq += static_cast<double>(k[a]) * k[a];
      const double w = 1.0 / (1.0 + ksq);
      const double ac = w * normal();
      const double as = w * normal();
      const int n = g.n;
      std::vector<int> idx(axes, 0);
      for (std::size_t i = 0; i < f.v.size(); ++i) {
        long phase = 0;
        for (int a = 0; a < axes; ++a) phase += static_cast<long>(k[a]) * idx[a];
        const long r = ((phase % n) + n) % n;
        const double t = two_pi * static_cast<double>(r) / n;
        f.v[i] += ac * std::cos(t) + as * std::sin(t);
        for (int a = axes - 1; a >= 0; --a) {
          if (++idx[a] < n) break;
          idx[a] = 0;
        }
      }
    }
    int a = axes - 1;
    for (; a >= 0; --a) {
      if (++k[a] <= kmax) break;
      k[a] = -kmax;
    }
    if (a < 0) break;
  }

  const double s = sup_abs(f);
  if (s > 0.0) f *= amp / s;
  return f;
}

}  // namespace equipot
