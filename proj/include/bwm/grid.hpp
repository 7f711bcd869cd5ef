#pragma once

// Uniformly sampled wavefunctions and exact spectral free evolution.  This is
// the numerical cross-check backend for the analytic Gaussian representation:
// free dispersion is applied mode by mode, which is exact for band-limited
// samples.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "bwm/constants.hpp"
#include "bwm/errors.hpp"
#include "bwm/gaussian.hpp"

namespace bwm {

struct GridWindow {
  double x_min = 0.0;
  double x_max = 0.0;
  std::size_t n = std::size_t(1) << 16;
};

struct GridFunction {
  double x_min = 0.0;
  double dx = 0.0;
  std::size_t n = 0;
  std::vector<cplx> values;

  double x_at(std::size_t i) const { return x_min + dx * static_cast<double>(i); }
};

// Window wide enough that the boundary magnitudes satisfy the 1e-8 invariant:
// centroid +/- 8 amplitude widths, the amplitude width being sqrt(2) x the
// density std (|psi| at 8 amplitude widths ~ e^-32 relative).
inline GridWindow default_window(const WavePacket& p,
                                 std::size_t n = std::size_t(1) << 16) {
  const double mu = mean_position(p);
  double half = 8.0 * std::sqrt(2.0 * position_variance(p));
  for (const auto& t : p.terms)
    half = std::max(half, std::abs(term_center(t) - mu) +
                              8.0 * std::sqrt(2.0) * term_width(t));
  return {mu - half, mu + half, n};
}

inline GridWindow merge_windows(const GridWindow& a, const GridWindow& b) {
  return {std::min(a.x_min, b.x_min), std::max(a.x_max, b.x_max),
          std::max(a.n, b.n)};
}

inline double boundary_residual(const GridFunction& g) {
  double peak = 0.0;
  for (const auto& v : g.values) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  return std::max(std::abs(g.values.front()), std::abs(g.values.back())) / peak;
}

inline GridFunction to_grid(const WavePacket& p, const GridWindow& w,
                            bool enforce_boundary = true) {
  if (w.n < 2 || !(w.x_max > w.x_min))
    throw validation_error("to_grid: bad window");
  GridFunction g;
  g.x_min = w.x_min;
  g.n = w.n;
  g.dx = (w.x_max - w.x_min) / static_cast<double>(w.n - 1);
  g.values.resize(w.n);
  for (std::size_t i = 0; i < w.n; ++i) g.values[i] = evaluate(p, g.x_at(i));
  if (enforce_boundary && boundary_residual(g) >= 1e-8)
    throw discretization_error("to_grid: support escapes the window");
  return g;
}

// Iterative radix-2 FFT (power-of-two n).  Forward is the plain DFT sum,
// inverse carries the 1/n.
inline void fft_inplace(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw validation_error("fft_inplace: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * phys::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx w = std::polar(1.0, ang * static_cast<double>(k));
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// Signed wavenumber of FFT bin m: k = 2 pi f / (n dx), f in [-n/2, n/2).
inline double grid_wavenumber(const GridFunction& g, std::size_t m) {
  const double f = (m <= g.n / 2 - 1) ? static_cast<double>(m)
                                      : static_cast<double>(m) - static_cast<double>(g.n);
  return 2.0 * phys::pi * f / (static_cast<double>(g.n) * g.dx);
}

// Multiply each mode by exp(-i hbar k^2 dt / 2m).
inline GridFunction grid_free_evolve(const GridFunction& g, double dt,
                                     const ProtocolParams& pp) {
  if (!(dt > 0.0)) throw validation_error("grid_free_evolve: dt must be > 0");
  GridFunction out = g;
  fft_inplace(out.values, false);
  const double c = pp.hbar_Js * dt / (2.0 * pp.mass_kg);
  for (std::size_t m = 0; m < out.n; ++m) {
    const double k = grid_wavenumber(out, m);
    out.values[m] *= std::polar(1.0, -c * k * k);
  }
  fft_inplace(out.values, true);
  return out;
}

inline double grid_norm_squared(const GridFunction& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    const double w = (i == 0 || i == g.n - 1) ? 0.5 : 1.0;
    acc += w * std::norm(g.values[i]);
  }
  return acc * g.dx;
}

// d/dx by spectral differentiation.
inline GridFunction grid_derivative(const GridFunction& g) {
  GridFunction out = g;
  fft_inplace(out.values, false);
  for (std::size_t m = 0; m < out.n; ++m)
    out.values[m] *= cplx(0.0, grid_wavenumber(out, m));
  fft_inplace(out.values, true);
  return out;
}

inline std::vector<double> grid_current(const GridFunction& g, double hbar,
                                        double mass) {
  const GridFunction d = grid_derivative(g);
  std::vector<double> J(g.n);
  for (std::size_t i = 0; i < g.n; ++i)
    J[i] = hbar / mass * std::imag(std::conj(g.values[i]) * d.values[i]);
  return J;
}

inline double grid_mean_momentum(const GridFunction& g, double hbar) {
  std::vector<cplx> hat = g.values;
  fft_inplace(hat, false);
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < g.n; ++m) {
    const double w = std::norm(hat[m]);
    num += hbar * grid_wavenumber(g, m) * w;
    den += w;
  }
  return num / den;
}

inline GridFunction apply_position(const GridFunction& g) {
  GridFunction out = g;
  for (std::size_t i = 0; i < g.n; ++i) out.values[i] *= g.x_at(i);
  return out;
}

inline GridFunction apply_momentum(const GridFunction& g, double hbar) {
  GridFunction out = grid_derivative(g);
  for (auto& v : out.values) v *= cplx(0.0, -hbar);
  return out;
}

inline double grid_l2_norm(const GridFunction& g) {
  return std::sqrt(grid_norm_squared(g));
}

inline double l2_relative_error(const GridFunction& a, const GridFunction& b) {
  if (a.n != b.n) throw validation_error("l2_relative_error: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) {
    num += std::norm(a.values[i] - b.values[i]);
    den += std::norm(b.values[i]);
  }
  return std::sqrt(num / den);
}

// || (U x - x U + (tau/m) p U) psi ||  /  || x psi ||
// for the flat-potential propagator U over tau; finite tau throughout.
inline double commutator_residual(const GridFunction& psi, double tau,
                                  const ProtocolParams& pp) {
  const GridFunction u_x = grid_free_evolve(apply_position(psi), tau, pp);
  const GridFunction u_psi = grid_free_evolve(psi, tau, pp);
  const GridFunction x_u = apply_position(u_psi);
  const GridFunction p_u = apply_momentum(u_psi, pp.hbar_Js);
  const double scale = tau / pp.mass_kg;
  GridFunction res = u_x;
  for (std::size_t i = 0; i < res.n; ++i)
    res.values[i] = u_x.values[i] - x_u.values[i] + scale * p_u.values[i];
  return grid_l2_norm(res) / grid_l2_norm(apply_position(psi));
}

}  // namespace bwm
