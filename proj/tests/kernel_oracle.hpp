#pragma once

// Independent numeric oracles for the two-measurement probabilities, built
// directly from the position-basis kernels on dense grids.  They share no
// code with the closed-form pipeline beyond pointwise wavefunction
// evaluation.

#include <cmath>
#include <complex>
#include <vector>

#include "bwm/constants.hpp"
#include "bwm/gaussian.hpp"
#include "bwm/parallel.hpp"

namespace bwm::test {

// P(x_w and x_s) as the explicit nested integral
//   C_s^2 int dx e^{-(x_s-x)^2/sigma_s^2} | int dx' K(x,x') C_w
//         e^{-(x_w-x')^2/(2 sigma_w^2)} psi(x') |^2
// with K the flat-potential kernel over tau; trapezoidal on dense grids.
inline double joint_probability_oracle(const WavePacket& psi_tw, double x_w,
                                       double x_s, const ProtocolParams& pp,
                                       std::size_t n_inner = std::size_t(1) << 16,
                                       std::size_t n_outer = 257) {
  const double a = pp.mass_kg / (2.0 * pp.hbar_Js * pp.tau_s);
  const double c_mag = std::sqrt(pp.mass_kg / (2.0 * phys::pi * pp.hbar_Js * pp.tau_s));
  const cplx c = c_mag * std::polar(1.0, -phys::pi / 4.0);
  const double cw = 1.0 / std::sqrt(std::sqrt(phys::pi) * pp.sigma_w_m);
  const double cs2 = 1.0 / (std::sqrt(phys::pi) * pp.sigma_s_m);

  const double mu = mean_position(psi_tw);
  const double R = support_radius(psi_tw);
  const double lo = std::max(mu - R, x_w - 10.0 * pp.sigma_w_m);
  const double hi = std::min(mu + R, x_w + 10.0 * pp.sigma_w_m);
  if (!(hi > lo)) return 0.0;
  const double dxi = (hi - lo) / static_cast<double>(n_inner - 1);

  std::vector<cplx> w(n_inner);
  std::vector<double> xi(n_inner);
  for (std::size_t j = 0; j < n_inner; ++j) {
    const double x = lo + dxi * static_cast<double>(j);
    const double trap = (j == 0 || j == n_inner - 1) ? 0.5 : 1.0;
    xi[j] = x;
    const double d = x_w - x;
    w[j] = evaluate(psi_tw, x) * cw *
           std::exp(-d * d / (2.0 * pp.sigma_w_m * pp.sigma_w_m)) * trap * dxi;
  }

  const double olo = x_s - 8.0 * pp.sigma_s_m;
  const double dxo = 16.0 * pp.sigma_s_m / static_cast<double>(n_outer - 1);
  std::vector<double> contrib(n_outer);
  parallel_for(n_outer, [&](std::size_t i) {
    const double x = olo + dxo * static_cast<double>(i);
    cplx phi = 0.0;
    for (std::size_t j = 0; j < n_inner; ++j) {
      const double d = x - xi[j];
      phi += std::polar(1.0, a * d * d) * w[j];
    }
    phi *= c;
    const double ks = (x_s - x) / pp.sigma_s_m;
    const double trap = (i == 0 || i == n_outer - 1) ? 0.5 : 1.0;
    contrib[i] = trap * std::exp(-ks * ks) * std::norm(phi);
  });
  double acc = 0.0;
  for (double v : contrib) acc += v;
  return cs2 * acc * dxo;
}

// P(x_s) from the two-point kernel form: after integrating out the first
// outcome analytically the marginal becomes
//   (m / 2 pi hbar tau) int dx' dx''  e^{-(x'-x'')^2/(4 sigma_w^2)}
//     e^{-(a sigma_s)^2 (x'-x'')^2}  conj(h(x')) h(x'')
// with h(x) = psi(x) exp(i a (x - x_s)^2), a = m/(2 hbar tau).  Evaluated as
// a Toeplitz correlation over a dense grid.
inline double second_marginal_oracle(const WavePacket& psi_tw, double x_s,
                                     const ProtocolParams& pp,
                                     std::size_t n = 49152) {
  const double a = pp.mass_kg / (2.0 * pp.hbar_Js * pp.tau_s);
  const double mu = mean_position(psi_tw);
  const double R = support_radius(psi_tw);
  const double dx = 2.0 * R / static_cast<double>(n - 1);

  std::vector<cplx> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = mu - R + dx * static_cast<double>(i);
    const double d = x - x_s;
    h[i] = evaluate(psi_tw, x) * std::polar(1.0, a * d * d);
  }

  const double b = 1.0 / (4.0 * pp.sigma_w_m * pp.sigma_w_m) +
                   a * a * pp.sigma_s_m * pp.sigma_s_m;
  std::size_t dmax = n - 1;
  {
    const double u = std::sqrt(60.0 / b);
    const std::size_t d_cut = static_cast<std::size_t>(u / dx) + 1;
    dmax = std::min(dmax, d_cut);
  }

  std::vector<double> partial(dmax + 1);
  parallel_for(dmax + 1, [&](std::size_t d) {
    cplx corr = 0.0;
    for (std::size_t i = d; i < n; ++i) corr += std::conj(h[i]) * h[i - d];
    const double u = static_cast<double>(d) * dx;
    const double g = std::exp(-b * u * u);
    partial[d] = (d == 0 ? 1.0 : 2.0) * g * corr.real();
  });
  double acc = 0.0;
  for (double v : partial) acc += v;
  const double pref = pp.mass_kg / (2.0 * phys::pi * pp.hbar_Js * pp.tau_s);
  return pref * acc * dx * dx;
}

}  // namespace bwm::test
