#pragma once

// Analytic algebra of complex-Gaussian wavefunctions.
//
// A state is a finite superposition of terms exp(alpha x^2 + beta x + gamma)
// with Re(alpha) < 0.  Gaussian windows and flat-potential evolution map the
// family onto itself, so norms, densities, currents and their spatial
// derivatives are available in closed form with no discretization error.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "bwm/constants.hpp"
#include "bwm/errors.hpp"

namespace bwm {

using cplx = std::complex<double>;

// Apparatus and particle parameters shared by the whole pipeline.
// tau_s is the interval between the two position measurements,
// t_w_s the lab time of the first one.
struct ProtocolParams {
  double mass_kg = phys::electron_mass_kg;
  double hbar_Js = phys::hbar_Js;
  double tau_s = 1e-12;
  double sigma_w_m = 150e-9;
  double sigma_s_m = 0.2e-9;
  double t_w_s = 10e-12;

  double t_s_s() const { return t_w_s + tau_s; }

  void validate() const {
    auto pos = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw validation_error(std::string("ProtocolParams: ") + name +
                               " must be strictly positive");
    };
    pos(mass_kg, "mass_kg");
    pos(hbar_Js, "hbar_Js");
    pos(tau_s, "tau_s");
    pos(sigma_w_m, "sigma_w_m");
    pos(sigma_s_m, "sigma_s_m");
    pos(t_w_s, "t_w_s");
  }
};

// One component exp(alpha x^2 + beta x + gamma).
struct GaussianTerm {
  cplx alpha;  // 1/m^2, Re < 0
  cplx beta;   // 1/m
  cplx gamma;  // dimensionless, absorbs amplitude and phase
};

struct WavePacket {
  std::vector<GaussianTerm> terms;
  double time_label_s = 0.0;
};

// Normalized Gaussian of density std sigma0 centered at `center` carrying
// central momentum p:  (2 pi sigma0^2)^(-1/4) exp(-(x-c)^2/(4 sigma0^2) + i p (x-c)/hbar).
inline GaussianTerm make_gaussian(double center, double sigma0, double momentum,
                                  double hbar, double amplitude = 1.0,
                                  double phase = 0.0) {
  if (!(sigma0 > 0.0)) throw validation_error("make_gaussian: sigma0 must be > 0");
  if (!(amplitude > 0.0)) throw validation_error("make_gaussian: amplitude must be > 0");
  const double a = 1.0 / (4.0 * sigma0 * sigma0);
  GaussianTerm t;
  t.alpha = cplx(-a, 0.0);
  t.beta = cplx(2.0 * a * center, momentum / hbar);
  t.gamma = cplx(-a * center * center + std::log(amplitude) -
                     0.25 * std::log(2.0 * phys::pi * sigma0 * sigma0),
                 phase - momentum * center / hbar);
  return t;
}

namespace detail {

// Integral over the real line of exp(A x^2 + B x + C), Re(A) < 0:
//   sqrt(pi / (-A)) * exp(C - B^2/(4A)).
// Computed through a single exp of the combined log to keep under/overflow
// behavior uniform.  The principal branch of log(-A) is safe: Re(-A) > 0.
inline cplx gauss_integral(cplx A, cplx B, cplx C) {
  if (!(A.real() < 0.0))
    throw numerical_breakdown("gauss_integral: exponent not normalizable (Re(A) >= 0)");
  const cplx expo = C - B * B / (4.0 * A) + 0.5 * (std::log(phys::pi) - std::log(-A));
  if (expo.real() > 700.0)
    throw numerical_breakdown("gauss_integral: exponent overflow");
  return std::exp(expo);
}

struct GaussMoments {
  cplx i0, i1, i2;  // integrals of {1, x, x^2} exp(A x^2 + B x + C)
};

inline GaussMoments gauss_moments(cplx A, cplx B, cplx C) {
  const cplx i0 = gauss_integral(A, B, C);
  const cplx x0 = -B / (2.0 * A);
  return {i0, x0 * i0, (x0 * x0 - 1.0 / (2.0 * A)) * i0};
}

}  // namespace detail

inline cplx evaluate(const WavePacket& p, double x) {
  cplx acc = 0.0;
  for (const auto& t : p.terms) {
    const cplx e = (t.alpha * x + t.beta) * x + t.gamma;
    if (e.real() > 700.0)
      throw numerical_breakdown("evaluate: non-normalizable input (exponent overflow)");
    acc += std::exp(e);
  }
  return acc;
}

// Wavefunction together with its first three spatial derivatives.
struct Derivatives {
  cplx psi, d1, d2, d3;
};

inline Derivatives derivatives(const WavePacket& p, double x) {
  Derivatives d{0.0, 0.0, 0.0, 0.0};
  for (const auto& t : p.terms) {
    const cplx e = (t.alpha * x + t.beta) * x + t.gamma;
    if (e.real() > 700.0)
      throw numerical_breakdown("derivatives: exponent overflow");
    const cplx T = std::exp(e);
    const cplx L = 2.0 * t.alpha * x + t.beta;
    d.psi += T;
    d.d1 += L * T;
    d.d2 += (2.0 * t.alpha + L * L) * T;
    d.d3 += (6.0 * t.alpha * L + L * L * L) * T;
  }
  return d;
}

inline double norm_squared(const WavePacket& p) {
  const std::size_t n = p.terms.size();
  if (n == 0) throw validation_error("norm_squared: empty packet");
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const cplx aj = std::conj(p.terms[j].alpha);
    const cplx bj = std::conj(p.terms[j].beta);
    const cplx cj = std::conj(p.terms[j].gamma);
    for (std::size_t k = j; k < n; ++k) {
      const cplx i0 = detail::gauss_integral(aj + p.terms[k].alpha,
                                             bj + p.terms[k].beta,
                                             cj + p.terms[k].gamma);
      acc += (k == j) ? i0.real() : 2.0 * i0.real();
    }
  }
  if (!(acc > 0.0) || !std::isfinite(acc))
    throw numerical_breakdown("norm_squared: non-positive result");
  return acc;
}

inline WavePacket normalized(const WavePacket& p) {
  const double n2 = norm_squared(p);
  WavePacket out = p;
  const double shift = 0.5 * std::log(n2);
  for (auto& t : out.terms) t.gamma -= shift;
  return out;
}

inline double density(const WavePacket& p, double x) {
  return std::norm(evaluate(p, x));
}

inline double current(const WavePacket& p, double x, double hbar, double mass) {
  const auto d = derivatives(p, x);
  return hbar / mass * std::imag(std::conj(d.psi) * d.d1);
}

inline double current(const WavePacket& p, double x, const ProtocolParams& pp) {
  return current(p, x, pp.hbar_Js, pp.mass_kg);
}

// rho, J and the spatial derivatives entering the velocity/error formulas.
struct LocalFields {
  double rho, drho, d2rho;
  double J, dJ, d2J;
};

inline LocalFields local_fields(const WavePacket& p, double x, double hbar,
                                double mass) {
  const auto d = derivatives(p, x);
  LocalFields f;
  f.rho = std::norm(d.psi);
  f.drho = 2.0 * std::real(std::conj(d.psi) * d.d1);
  f.d2rho = 2.0 * (std::norm(d.d1) + std::real(std::conj(d.psi) * d.d2));
  const double hm = hbar / mass;
  f.J = hm * std::imag(std::conj(d.psi) * d.d1);
  f.dJ = hm * std::imag(std::conj(d.psi) * d.d2);
  f.d2J = hm * std::imag(std::conj(d.d1) * d.d2 + std::conj(d.psi) * d.d3);
  return f;
}

// Guidance velocity v = J / rho.  The caller supplies the density floor
// (1e-12 x peak density is the library-wide default policy).
inline double bohmian_velocity(const WavePacket& p, double x, double hbar,
                               double mass, double rho_floor) {
  const auto d = derivatives(p, x);
  const double rho = std::norm(d.psi);
  if (!(rho > rho_floor))
    throw node_proximity_error("bohmian_velocity: density below floor (node proximity)");
  return hbar / mass * std::imag(std::conj(d.psi) * d.d1) / rho;
}

// Q_B = -(hbar^2 / 2m) (d^2 sqrt(rho) / dx^2) / sqrt(rho)
//     = -(hbar^2 / 2m) [rho''/(2 rho) - (rho')^2/(4 rho^2)].
inline double quantum_potential(const WavePacket& p, double x, double hbar,
                                double mass, double rho_floor) {
  const auto f = local_fields(p, x, hbar, mass);
  if (!(f.rho > rho_floor))
    throw node_proximity_error("quantum_potential: density below floor (node proximity)");
  return -(hbar * hbar / (2.0 * mass)) *
         (f.d2rho / (2.0 * f.rho) - f.drho * f.drho / (4.0 * f.rho * f.rho));
}

// Flat-potential propagation by dt > 0.  With a = m/(2 hbar dt) each term maps
//   alpha' = i a alpha / (i a + alpha)
//   beta'  = i a beta  / (i a + alpha)
//   gamma' = gamma - beta^2/(4 (i a + alpha)) + (1/2) log(i a / (i a + alpha))
// The principal log is the right branch: Im(i a/(i a + alpha)) < 0 strictly for
// Re(alpha) < 0, a > 0, so the path from the identity never crosses the cut.
inline WavePacket free_evolve(const WavePacket& p, double dt,
                              const ProtocolParams& pp) {
  if (!(dt > 0.0)) throw validation_error("free_evolve: dt must be > 0");
  const double a = pp.mass_kg / (2.0 * pp.hbar_Js * dt);
  const cplx ia(0.0, a);
  WavePacket out;
  out.terms.reserve(p.terms.size());
  out.time_label_s = p.time_label_s + dt;
  for (const auto& t : p.terms) {
    const cplx D = ia + t.alpha;
    GaussianTerm u;
    u.alpha = ia * t.alpha / D;
    u.beta = ia * t.beta / D;
    u.gamma = t.gamma - t.beta * t.beta / (4.0 * D) + 0.5 * std::log(ia / D);
    if (!(u.alpha.real() < 0.0))
      throw numerical_breakdown("free_evolve: lost normalizability");
    out.terms.push_back(u);
  }
  return out;
}

// Multiply by exp(-(x-center)^2/(2 sigma^2)) * exp(log_prefactor).
inline WavePacket gaussian_window(const WavePacket& p, double center,
                                  double sigma, cplx log_prefactor) {
  if (!(sigma > 0.0)) throw validation_error("gaussian_window: sigma must be > 0");
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  WavePacket out = p;
  for (auto& t : out.terms) {
    t.alpha += cplx(-inv2s2, 0.0);
    t.beta += cplx(2.0 * inv2s2 * center, 0.0);
    t.gamma += cplx(-inv2s2 * center * center, 0.0) + log_prefactor;
  }
  return out;
}

// ---- packet moments (closed form) ----

inline double mean_position(const WavePacket& p) {
  const std::size_t n = p.terms.size();
  cplx num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const auto m = detail::gauss_moments(
          std::conj(p.terms[j].alpha) + p.terms[k].alpha,
          std::conj(p.terms[j].beta) + p.terms[k].beta,
          std::conj(p.terms[j].gamma) + p.terms[k].gamma);
      num += m.i1;
      den += m.i0;
    }
  return num.real() / den.real();
}

inline double position_variance(const WavePacket& p) {
  const std::size_t n = p.terms.size();
  cplx s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const auto m = detail::gauss_moments(
          std::conj(p.terms[j].alpha) + p.terms[k].alpha,
          std::conj(p.terms[j].beta) + p.terms[k].beta,
          std::conj(p.terms[j].gamma) + p.terms[k].gamma);
      s0 += m.i0;
      s1 += m.i1;
      s2 += m.i2;
    }
  const double mean = s1.real() / s0.real();
  return s2.real() / s0.real() - mean * mean;
}

inline double mean_momentum(const WavePacket& p, double hbar) {
  const std::size_t n = p.terms.size();
  cplx acc = 0.0, den = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const auto m = detail::gauss_moments(
          std::conj(p.terms[j].alpha) + p.terms[k].alpha,
          std::conj(p.terms[j].beta) + p.terms[k].beta,
          std::conj(p.terms[j].gamma) + p.terms[k].gamma);
      acc += 2.0 * p.terms[k].alpha * m.i1 + p.terms[k].beta * m.i0;
      den += m.i0;
    }
  return (cplx(0.0, -hbar) * acc).real() / den.real();
}

// ---- support estimates ----

// Density std of an individual term.
inline double term_width(const GaussianTerm& t) {
  return std::sqrt(-1.0 / (4.0 * t.alpha.real()));
}

inline double term_center(const GaussianTerm& t) {
  return -t.beta.real() / (2.0 * t.alpha.real());
}

// Radius around the centroid beyond which every term has dropped by ~10 sigma.
inline double support_radius(const WavePacket& p) {
  const double mu = mean_position(p);
  double r = 0.0;
  for (const auto& t : p.terms)
    r = std::max(r, std::abs(term_center(t) - mu) + 10.0 * term_width(t));
  return r;
}

// Peak density over the support, by scan.  Feeds the density-floor policy
// rho_floor = 1e-12 * density_peak.
inline double density_peak(const WavePacket& p, std::size_t scan_n = 4096) {
  const double mu = mean_position(p);
  const double r = support_radius(p);
  const double dx = 2.0 * r / static_cast<double>(scan_n - 1);
  double best = 0.0;
  for (std::size_t i = 0; i < scan_n; ++i)
    best = std::max(best, density(p, mu - r + dx * static_cast<double>(i)));
  return best;
}

// [lo, hi] where rho >= threshold * peak, by scan over the support window.
struct Interval {
  double lo, hi;
  double width() const { return hi - lo; }
};

inline Interval support_interval(const WavePacket& p, double threshold,
                                 std::size_t scan_n = 4096) {
  const double mu = mean_position(p);
  const double r = support_radius(p);
  const double dx = 2.0 * r / static_cast<double>(scan_n - 1);
  std::vector<double> rho(scan_n);
  double peak = 0.0;
  for (std::size_t i = 0; i < scan_n; ++i) {
    rho[i] = density(p, mu - r + dx * static_cast<double>(i));
    peak = std::max(peak, rho[i]);
  }
  const double cut = threshold * peak;
  std::size_t lo = 0, hi = scan_n - 1;
  while (lo < scan_n && rho[lo] < cut) ++lo;
  while (hi > lo && rho[hi] < cut) --hi;
  if (lo >= hi) throw numerical_breakdown("support_interval: empty support");
  return {mu - r + dx * static_cast<double>(lo), mu - r + dx * static_cast<double>(hi)};
}

}  // namespace bwm
