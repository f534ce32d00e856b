#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "core.hpp"

namespace equipot::fft {

// Cached FFTW plans per grid shape. Plans are created once with
// FFTW_ESTIMATE | FFTW_UNALIGNED (deterministic plan choice, any buffer
// alignment) and executed through the new-array interface, which is safe to
// call concurrently; only plan creation is serialized.
struct Plans {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
  std::size_t cplx_size = 0;
};

inline const Plans& plans_for(const Grid& g) {
  static std::map<std::pair<int, int>, Plans> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(g.ndim, g.n);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const int rank = g.axes();
  std::vector<int> dims(rank, g.n);
  const std::size_t rs = g.point_count();
  const std::size_t cs = rs / g.n * (g.n / 2 + 1);
  double* rbuf = fftw_alloc_real(rs);
  fftw_complex* cbuf = fftw_alloc_complex(cs);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  Plans p;
  p.fwd = fftw_plan_dft_r2c(rank, dims.data(), rbuf, cbuf, flags);
  p.inv = fftw_plan_dft_c2r(rank, dims.data(), cbuf, rbuf, flags);
  p.cplx_size = cs;
  fftw_free(rbuf);
  fftw_free(cbuf);
  return cache.emplace(key, p).first->second;
}

// Multiplies every retained spectral coefficient by sym(k), where k is the
// signed integer frequency vector (last axis runs 0..n/2, the others carry
// negative frequencies as i-n). sym may return double or complex<double>;
// complex symbols must satisfy sym(-k) = conj(sym(k)) to keep the result real.
template <class Symbol>
Field apply_symbol(const Field& f, Symbol&& sym) {
  const Grid& g = f.grid;
  const auto& plans = plans_for(g);
  const int rank = g.axes();
  const int n = g.n;
  const int nc = n / 2 + 1;

  std::vector<double> rbuf(f.v);
  std::vector<std::complex<double>> cbuf(plans.cplx_size);
  fftw_execute_dft_r2c(plans.fwd, rbuf.data(), reinterpret_cast<fftw_complex*>(cbuf.data()));

  std::vector<int> idx(rank, 0), k(rank, 0);
  for (std::size_t j = 0; j < cbuf.size(); ++j) {
    for (int a = 0; a + 1 < rank; ++a) k[a] = idx[a] <= n / 2 ? idx[a] : idx[a] - n;
    k[rank - 1] = idx[rank - 1];
    cbuf[j] *= sym(k.data());
    for (int a = rank - 1; a >= 0; --a) {
      const int lim = (a == rank - 1) ? nc : n;
      if (++idx[a] < lim) break;
      idx[a] = 0;
    }
  }

  fftw_execute_dft_c2r(plans.inv, reinterpret_cast<fftw_complex*>(cbuf.data()), rbuf.data());
  Field out(g);
  const double scale = 1.0 / static_cast<double>(g.point_count());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = rbuf[i] * scale;
  return out;
}

}  // namespace equipot::fft
