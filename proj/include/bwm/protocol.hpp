#pragma once

// The two-measurement pipeline: joint and marginal outcome probabilities,
// conditional means, ensemble velocity/current, velocity variance, local
// error bounds and regime diagnostics.
//
// The pipeline is limit-free: the first-outcome integrals are evaluated by
// adaptive quadrature of the exact joint density, with no weak-measurement
// approximation, so the approximation error the bounds describe is
// observable.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bwm/errors.hpp"
#include "bwm/gaussian.hpp"
#include "bwm/parallel.hpp"
#include "bwm/povm.hpp"
#include "bwm/quadrature.hpp"

namespace bwm {

inline constexpr double kDensityFloorRel = 1e-12;  // rho_floor = this x peak
inline constexpr double kProbabilityFloor = 1e-300;
inline constexpr double kMomentRelTol = 1e-12;

// P(x_w and x_s) = || S(x_s) U_tau W(x_w) psi ||^2 for psi given at t_w.
inline double joint_probability(const WavePacket& psi_tw, double x_w,
                                double x_s, const ProtocolParams& pp) {
  WavePacket s = apply_kraus(psi_tw, make_kraus(x_w, pp.sigma_w_m));
  s = free_evolve(s, pp.tau_s, pp);
  s = apply_kraus(s, make_kraus(x_s, pp.sigma_s_m));
  return norm_squared(s);
}

// Zeroth, first and second moments of the joint density over the first
// outcome x_w, all from one adaptive pass.
struct XwMoments {
  double p = 0.0;   // P(x_s)
  double m1 = 0.0;  // int x_w P dx_w
  double m2 = 0.0;  // int x_w^2 P dx_w
  bool converged = true;
  std::size_t evals = 0;
};

inline XwMoments xw_moments(const WavePacket& psi_tw, double x_s,
                            const ProtocolParams& pp,
                            double rel_tol = kMomentRelTol) {
  const double mu = mean_position(psi_tw);
  const double half = 10.0 * pp.sigma_w_m + support_radius(psi_tw);
  auto f = [&](double x_w) -> std::array<double, 3> {
    const double p = joint_probability(psi_tw, x_w, x_s, pp);
    return {p, x_w * p, x_w * x_w * p};
  };
  const auto r =
      integrate_adaptive<3>(f, mu - half, mu + half, 0.0, rel_tol,
                            {0.0, 0.0, 0.0}, 32);
  return {r.value[0], r.value[1], r.value[2], r.converged, r.evals};
}

inline double second_marginal(const WavePacket& psi_tw, double x_s,
                              const ProtocolParams& pp) {
  return xw_moments(psi_tw, x_s, pp).p;
}

inline double conditional_mean(const WavePacket& psi_tw, double x_s,
                               const ProtocolParams& pp) {
  const auto m = xw_moments(psi_tw, x_s, pp);
  if (!(m.p > kProbabilityFloor))
    throw out_of_support_error("conditional_mean: P(x_s) below probability floor");
  return m.m1 / m.p;
}

inline double ensemble_velocity(const WavePacket& psi_tw, double x_s,
                                const ProtocolParams& pp) {
  return (x_s - conditional_mean(psi_tw, x_s, pp)) / pp.tau_s;
}

// J_e = [P(x_s) x_s - int x_w P dx_w] / tau; identically v_e * P(x_s).
inline double ensemble_current(const WavePacket& psi_tw, double x_s,
                               const ProtocolParams& pp) {
  const auto m = xw_moments(psi_tw, x_s, pp);
  return (m.p * x_s - m.m1) / pp.tau_s;
}

// ---- Gaussian-kernel smeared fields (closed form) ----
//
// Kernel exp(-(x_s - x)^2 / sigma^2) with prefactor 1/(sqrt(pi) sigma); this
// is the squared measurement window, so the smeared density equals
// <psi| S^dag S |psi> at center x_s.

struct SmearedFields {
  double rho = 0.0;   // kernel average of |psi|^2
  double J = 0.0;     // kernel average of the current
  double xrho = 0.0;  // kernel-weighted first moment of |psi|^2
};

inline SmearedFields smeared_fields(const WavePacket& p, double x_s,
                                    double sigma, double hbar, double mass) {
  const double inv_s2 = 1.0 / (sigma * sigma);
  const double pref = 1.0 / (std::sqrt(phys::pi) * sigma);
  const std::size_t n = p.terms.size();
  cplx s_rho = 0.0, s_cur = 0.0, s_x = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const cplx aj = std::conj(p.terms[j].alpha);
    const cplx bj = std::conj(p.terms[j].beta);
    const cplx cj = std::conj(p.terms[j].gamma);
    for (std::size_t k = 0; k < n; ++k) {
      const cplx A = aj + p.terms[k].alpha - inv_s2;
      const cplx B = bj + p.terms[k].beta + 2.0 * x_s * inv_s2;
      const cplx C = cj + p.terms[k].gamma - x_s * x_s * inv_s2;
      const auto m = detail::gauss_moments(A, B, C);
      s_rho += m.i0;
      s_x += m.i1;
      s_cur += 2.0 * p.terms[k].alpha * m.i1 + p.terms[k].beta * m.i0;
    }
  }
  SmearedFields out;
  out.rho = pref * s_rho.real();
  out.xrho = pref * s_x.real();
  out.J = pref * hbar / mass * s_cur.imag();
  return out;
}

inline double smeared_density(const WavePacket& p, double x_s, double sigma) {
  return smeared_fields(p, x_s, sigma, 1.0, 1.0).rho;
}

// Smeared density on a uniform grid.  Per term pair the exponent is a complex
// quadratic in x_s, so successive exp values follow a two-term recurrence;
// restarting every block bounds drift and recovers from underflow.
inline void smeared_density_scan(const WavePacket& p, double sigma, double lo,
                                 double dx, std::size_t n, double* out) {
  const double inv_s2 = 1.0 / (sigma * sigma);
  const double pref = 1.0 / (std::sqrt(phys::pi) * sigma);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
  const std::size_t block = 512;
  const std::size_t nt = p.terms.size();
  for (std::size_t j = 0; j < nt; ++j) {
    const cplx aj = std::conj(p.terms[j].alpha);
    const cplx bj = std::conj(p.terms[j].beta);
    const cplx cj = std::conj(p.terms[j].gamma);
    for (std::size_t k = j; k < nt; ++k) {
      const double w = (k == j) ? 1.0 : 2.0;  // hermitian pair symmetry
      const cplx Abar = aj + p.terms[k].alpha;
      const cplx A = Abar - inv_s2;
      const cplx B = bj + p.terms[k].beta;
      const cplx C = cj + p.terms[k].gamma;
      if (!(A.real() < 0.0))
        throw numerical_breakdown("smeared_density_scan: Re(A) >= 0");
      // Completing the square with the x_s-shifted kernel leaves an exponent
      // quadratic in x_s: E(x_s) = q2 x_s^2 + q1 x_s + q0.  The cancellation-
      // free form of q2 is -inv_s2 * Abar / (Abar - inv_s2).
      const cplx q2 = -inv_s2 * Abar / A;
      const cplx q1 = -B * inv_s2 / A;
      const cplx q0 = C - B * B / (4.0 * A) +
                      0.5 * (std::log(phys::pi) - std::log(-A));
      const cplx ratio = std::exp(2.0 * q2 * dx * dx);
      for (std::size_t b = 0; b < n; b += block) {
        const std::size_t e = std::min(n, b + block);
        const double x0 = lo + dx * static_cast<double>(b);
        cplx f = std::exp((q2 * x0 + q1) * x0 + q0);
        cplx g = std::exp(q2 * dx * dx + (2.0 * q2 * x0 + q1) * dx);
        for (std::size_t i = b; i < e; ++i) {
          out[i] += w * pref * f.real();
          f *= g;
          g *= ratio;
        }
      }
    }
  }
}

// v_bar = smeared J / smeared rho.
inline double smeared_velocity(const WavePacket& psi_tw, double x_s,
                               const ProtocolParams& pp, double rho_floor) {
  const WavePacket psi_ts = free_evolve(psi_tw, pp.tau_s, pp);
  const auto f = smeared_fields(psi_ts, x_s, pp.sigma_s_m, pp.hbar_Js, pp.mass_kg);
  if (!(f.rho > rho_floor))
    throw node_proximity_error("smeared_velocity: smeared density below floor");
  return f.J / f.rho;
}

// ---- velocity variance ----

enum class VarianceMode { exact, asymptotic };

// exact:      (E[x_w^2|x_s] - E[x_w|x_s]^2) / tau^2 by moment quadrature
// asymptotic: sigma_w^2 / (2 tau^2) + (2/m) Q_B(x_s) at the final time
inline double velocity_variance(const WavePacket& psi_tw, double x_s,
                                const ProtocolParams& pp, VarianceMode mode) {
  if (mode == VarianceMode::exact) {
    const auto m = xw_moments(psi_tw, x_s, pp);
    if (!(m.p > kProbabilityFloor))
      throw out_of_support_error("velocity_variance: P(x_s) below floor");
    const double mean = m.m1 / m.p;
    return (m.m2 / m.p - mean * mean) / (pp.tau_s * pp.tau_s);
  }
  const WavePacket psi_ts = free_evolve(psi_tw, pp.tau_s, pp);
  const double floor = kDensityFloorRel * density_peak(psi_ts);
  const double qb = quantum_potential(psi_ts, x_s, pp.hbar_Js, pp.mass_kg, floor);
  return pp.sigma_w_m * pp.sigma_w_m / (2.0 * pp.tau_s * pp.tau_s) +
         2.0 / pp.mass_kg * qb;
}

// ---- local error bounds ----

struct ErrorBound {
  double value = 0.0;
  bool diverged = false;  // denominator under the floor; value is +inf
};

struct VelocityDerivs {
  double v = 0.0, dv = 0.0, d2v = 0.0;
  bool ok = false;
};

inline VelocityDerivs velocity_derivs(const LocalFields& f, double rho_floor) {
  VelocityDerivs d;
  if (!(f.rho > rho_floor)) return d;
  const double r = f.rho;
  d.v = f.J / r;
  d.dv = (f.dJ * r - f.J * f.drho) / (r * r);
  d.d2v = f.d2J / r - (2.0 * f.dJ * f.drho + f.J * f.d2rho) / (r * r) +
          2.0 * f.J * f.drho * f.drho / (r * r * r);
  d.ok = true;
  return d;
}

// First-measurement error on the velocity:
//   (tau hbar^2 / 4 m^2 sigma_w^2)
//     | [2 (1 - tau v') rho' - tau rho v''] / [rho + kappa rho''] |,
// kappa = tau^2 hbar^2 / (4 m^2 sigma_w^2).
inline ErrorBound eps_w_from(const LocalFields& f, const VelocityDerivs& vd,
                             double tau, double sigma_w, double hbar,
                             double mass, double rho_floor) {
  if (!vd.ok) return {std::numeric_limits<double>::infinity(), true};
  const double pw =
      tau * hbar * hbar / (4.0 * mass * mass * sigma_w * sigma_w);
  const double kappa = pw * tau;
  const double den = f.rho + kappa * f.d2rho;
  if (!(std::abs(den) > rho_floor))
    return {std::numeric_limits<double>::infinity(), true};
  const double num = 2.0 * (1.0 - tau * vd.dv) * f.drho - tau * f.rho * vd.d2v;
  return {pw * std::abs(num / den), false};
}

// Second-apparatus (resolution) error on the velocity:
//   sigma_s^2 | [(2/tau) rho' + v rho'' - J''] / [4 rho + sigma_s^2 rho''] |,
// the numerator being (2/tau) rho' - 2 rho' v' - rho v'' in velocity form.
inline ErrorBound eps_s_from(const LocalFields& f, const VelocityDerivs& vd,
                             double tau, double sigma_s, double rho_floor) {
  if (!vd.ok) return {std::numeric_limits<double>::infinity(), true};
  const double den = 4.0 * f.rho + sigma_s * sigma_s * f.d2rho;
  if (!(std::abs(den) > rho_floor))
    return {std::numeric_limits<double>::infinity(), true};
  const double num = 2.0 / tau * f.drho + vd.v * f.d2rho - f.d2J;
  return {sigma_s * sigma_s * std::abs(num / den), false};
}

// Current-variant errors.  The ensemble current has no density denominator,
// so both reduce to prefactor x | J'' - 2 rho' / tau | and stay finite at
// density nodes.
inline double eps_w_current_from(const LocalFields& f, double tau,
                                 double sigma_w, double hbar, double mass) {
  const double kappa =
      tau * tau * hbar * hbar / (4.0 * mass * mass * sigma_w * sigma_w);
  return kappa * std::abs(f.d2J - 2.0 * f.drho / tau);
}

inline double eps_s_current_from(const LocalFields& f, double tau,
                                 double sigma_s) {
  return 0.25 * sigma_s * sigma_s * std::abs(f.d2J - 2.0 * f.drho / tau);
}

// Public forms taking the unperturbed state at the final time.
inline ErrorBound eps_w(const WavePacket& psi_at_ts, double x_s,
                        const ProtocolParams& pp, double rho_floor) {
  const auto f = local_fields(psi_at_ts, x_s, pp.hbar_Js, pp.mass_kg);
  return eps_w_from(f, velocity_derivs(f, rho_floor), pp.tau_s, pp.sigma_w_m,
                    pp.hbar_Js, pp.mass_kg, rho_floor);
}

inline ErrorBound eps_s(const WavePacket& psi_at_ts, double x_s,
                        const ProtocolParams& pp, double rho_floor) {
  const auto f = local_fields(psi_at_ts, x_s, pp.hbar_Js, pp.mass_kg);
  return eps_s_from(f, velocity_derivs(f, rho_floor), pp.tau_s, pp.sigma_s_m,
                    rho_floor);
}

// ---- regime diagnostics ----

struct RegimeReport {
  double sigma_w_over_tau = 0.0;   // m/s
  double hbar_over_m_sigma_s = 0.0;  // m/s
  double r1 = 0.0;                 // ratio of the two above
  double sigma_s_m = 0.0;
  double lambda_m = 0.0;           // h / (m v_max)
  double r2 = 0.0;                 // sigma_s / lambda
  double v_max = 0.0;              // velocity scale of the state
  bool weak_first_ok = false;      // r1 > 10
  bool resolution_ok = false;      // r2 < 1
};

// psi is the unperturbed state at the final measurement time; the velocity
// scale is max |v| where rho > 1e-3 x peak.
inline RegimeReport regime_report(const WavePacket& psi_at_ts,
                                  const ProtocolParams& pp,
                                  std::size_t scan_n = 4096) {
  RegimeReport r;
  r.sigma_w_over_tau = pp.sigma_w_m / pp.tau_s;
  r.hbar_over_m_sigma_s = pp.hbar_Js / (pp.mass_kg * pp.sigma_s_m);
  r.r1 = r.sigma_w_over_tau / r.hbar_over_m_sigma_s;
  r.sigma_s_m = pp.sigma_s_m;
  const auto iv = support_interval(psi_at_ts, 1e-3, scan_n);
  const double peak = density_peak(psi_at_ts, scan_n);
  const double cut = 1e-3 * peak;
  const double dx = iv.width() / static_cast<double>(scan_n - 1);
  double vmax = 0.0;
  for (std::size_t i = 0; i < scan_n; ++i) {
    const double x = iv.lo + dx * static_cast<double>(i);
    const auto f = local_fields(psi_at_ts, x, pp.hbar_Js, pp.mass_kg);
    if (f.rho > cut) vmax = std::max(vmax, std::abs(f.J / f.rho));
  }
  r.v_max = vmax;
  r.lambda_m = 2.0 * phys::pi * pp.hbar_Js / (pp.mass_kg * vmax);
  r.r2 = pp.sigma_s_m / r.lambda_m;
  r.weak_first_ok = r.r1 > 10.0;
  r.resolution_ok = r.r2 < 1.0;
  return r;
}

// ---- sample-count rule ----

// Smallest N with sigma_w / (tau sqrt(2 N)) <= eps_target.
inline long long required_samples(double eps_target, const ProtocolParams& pp) {
  if (!(eps_target > 0.0))
    throw validation_error("required_samples: target must be > 0");
  const double ratio = pp.sigma_w_m / (pp.tau_s * eps_target);
  const double n_real = 0.5 * ratio * ratio;
  const double n_guard = n_real * (1.0 - 1e-12);  // absorb fp overshoot
  return std::max(1ll, static_cast<long long>(std::ceil(n_guard)));
}

// ---- velocity profile over a position grid ----

enum PointFlag : unsigned {
  kFlagNode = 1u,      // density below floor: exact velocity undefined
  kFlagEpsW = 2u,      // eps_w denominator under floor
  kFlagEpsS = 4u,      // eps_s denominator under floor
  kFlagQuad = 8u,      // moment quadrature did not converge
  kFlagSmeared = 16u,  // smeared density under floor
};

struct VelocityProfile {
  std::vector<double> positions;     // x_s, strictly increasing (m)
  std::vector<double> v_e;           // ensemble velocity (m/s)
  std::vector<double> v_exact;       // J/rho at t_s (m/s); NaN when flagged
  std::vector<double> v_smeared;     // kernel-averaged velocity (m/s)
  std::vector<double> J_e;           // ensemble current (1/s)
  std::vector<double> J_exact;       // analytic current at t_s (1/s)
  std::vector<double> rho;           // density at t_s (1/m)
  std::vector<double> p_xs;          // second marginal P(x_s) (1/m)
  std::vector<double> eps_w_bound;   // m/s, +inf when diverged
  std::vector<double> eps_s_bound;   // m/s, +inf when diverged
  std::vector<unsigned> flags;
  ProtocolParams params;
};

struct ProfileOptions {
  int n_points = 2048;
  double density_cut = 1e-6;  // profile spans smeared density > cut x peak
  double rel_tol = kMomentRelTol;
  unsigned threads = 0;  // 0 -> worker_count()
};

inline VelocityProfile compute_profile(const WavePacket& psi_tw,
                                       const ProtocolParams& pp,
                                       const ProfileOptions& opt = {}) {
  pp.validate();
  if (opt.n_points < 2) throw validation_error("compute_profile: n_points < 2");
  const WavePacket psi_ts = free_evolve(psi_tw, pp.tau_s, pp);
  const double peak = density_peak(psi_ts);
  const double rho_floor = kDensityFloorRel * peak;

  // Span of the smeared density above the cut.
  const double mu = mean_position(psi_ts);
  const double r = support_radius(psi_ts) + 10.0 * pp.sigma_s_m;
  const std::size_t scan_n = 4096;
  std::vector<double> scan(scan_n);
  const double sdx = 2.0 * r / static_cast<double>(scan_n - 1);
  smeared_density_scan(psi_ts, pp.sigma_s_m, mu - r, sdx, scan_n, scan.data());
  double speak = 0.0;
  for (double v : scan) speak = std::max(speak, v);
  const double cut = opt.density_cut * speak;
  std::size_t ilo = 0, ihi = scan_n - 1;
  while (ilo < scan_n && scan[ilo] < cut) ++ilo;
  while (ihi > ilo && scan[ihi] < cut) --ihi;
  if (ilo >= ihi) throw numerical_breakdown("compute_profile: empty profile region");
  const double lo = mu - r + sdx * static_cast<double>(ilo);
  const double hi = mu - r + sdx * static_cast<double>(ihi);

  const std::size_t n = static_cast<std::size_t>(opt.n_points);
  VelocityProfile prof;
  prof.params = pp;
  prof.positions.resize(n);
  prof.v_e.resize(n);
  prof.v_exact.resize(n);
  prof.v_smeared.resize(n);
  prof.J_e.resize(n);
  prof.J_exact.resize(n);
  prof.rho.resize(n);
  prof.p_xs.resize(n);
  prof.eps_w_bound.resize(n);
  prof.eps_s_bound.resize(n);
  prof.flags.assign(n, 0u);
  const double dx = (hi - lo) / static_cast<double>(n - 1);

  parallel_for(
      n,
      [&](std::size_t i) {
        const double x = lo + dx * static_cast<double>(i);
        prof.positions[i] = x;
        unsigned flag = 0;

        const auto f = local_fields(psi_ts, x, pp.hbar_Js, pp.mass_kg);
        prof.rho[i] = f.rho;
        prof.J_exact[i] = f.J;
        const auto vd = velocity_derivs(f, rho_floor);
        if (vd.ok) {
          prof.v_exact[i] = vd.v;
        } else {
          prof.v_exact[i] = std::numeric_limits<double>::quiet_NaN();
          flag |= kFlagNode;
        }

        const auto sf =
            smeared_fields(psi_ts, x, pp.sigma_s_m, pp.hbar_Js, pp.mass_kg);
        if (sf.rho > rho_floor) {
          prof.v_smeared[i] = sf.J / sf.rho;
        } else {
          prof.v_smeared[i] = std::numeric_limits<double>::quiet_NaN();
          flag |= kFlagSmeared;
        }

        const auto ew = eps_w_from(f, vd, pp.tau_s, pp.sigma_w_m, pp.hbar_Js,
                                   pp.mass_kg, rho_floor);
        const auto es = eps_s_from(f, vd, pp.tau_s, pp.sigma_s_m, rho_floor);
        prof.eps_w_bound[i] = ew.value;
        prof.eps_s_bound[i] = es.value;
        if (ew.diverged) flag |= kFlagEpsW;
        if (es.diverged) flag |= kFlagEpsS;

        const auto m = xw_moments(psi_tw, x, pp, opt.rel_tol);
        if (!m.converged) flag |= kFlagQuad;
        prof.p_xs[i] = m.p;
        if (m.p > kProbabilityFloor) {
          prof.v_e[i] = (x - m.m1 / m.p) / pp.tau_s;
          prof.J_e[i] = (m.p * x - m.m1) / pp.tau_s;
        } else {
          prof.v_e[i] = std::numeric_limits<double>::quiet_NaN();
          prof.J_e[i] = 0.0;
          flag |= kFlagQuad;
        }
        prof.flags[i] = flag;
      },
      opt.threads ? opt.threads : worker_count());
  return prof;
}

// ---- integrated (position-averaged) relative errors ----

enum class ErrorKind { eps_w, eps_s, eps_total, measured };

struct IntegratedError {
  double value = 0.0;
  double excluded_fraction = 0.0;
  std::size_t used = 0;
};

// sqrt( sum eps^2 / sum v_exact^2 ) over unflagged profile points.  Flagged
// points are excluded and reported through excluded_fraction.
inline IntegratedError integrated_error(const VelocityProfile& prof,
                                        ErrorKind which) {
  const std::size_t n = prof.positions.size();
  if (n == 0) throw validation_error("integrated_error: empty profile");
  double num = 0.0, den = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (prof.flags[i] != 0u) continue;
    double e = 0.0;
    switch (which) {
      case ErrorKind::eps_w: e = prof.eps_w_bound[i]; break;
      case ErrorKind::eps_s: e = prof.eps_s_bound[i]; break;
      case ErrorKind::eps_total:
        e = prof.eps_w_bound[i] + prof.eps_s_bound[i];
        break;
      case ErrorKind::measured: e = prof.v_e[i] - prof.v_exact[i]; break;
    }
    num += e * e;
    den += prof.v_exact[i] * prof.v_exact[i];
    ++used;
  }
  if (used == 0 || !(den > 0.0))
    throw validation_error("integrated_error: zero-velocity or fully flagged profile");
  return {std::sqrt(num / den), 1.0 - static_cast<double>(used) / n, used};
}

// ---- field tables for parameter sweeps ----
//
// The error formulas depend on the unperturbed state only through rho, J and
// their derivatives at t_s; for sweeps over (sigma_w, sigma_s, tau) at a fixed
// snapshot the table is computed once and every cell is plain arithmetic.

struct ErrorTable {
  std::vector<double> x;
  std::vector<LocalFields> f;
  double rho_floor = 0.0;
  double dx = 0.0;
};

inline ErrorTable build_error_table(const WavePacket& psi_ts, double hbar,
                                    double mass, std::size_t n = 1024,
                                    double density_cut = 1e-6) {
  const auto iv = support_interval(psi_ts, density_cut);
  ErrorTable t;
  t.rho_floor = kDensityFloorRel * density_peak(psi_ts);
  t.dx = iv.width() / static_cast<double>(n - 1);
  t.x.resize(n);
  t.f.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.x[i] = iv.lo + t.dx * static_cast<double>(i);
    t.f[i] = local_fields(psi_ts, t.x[i], hbar, mass);
  }
  return t;
}

struct IntegratedEps {
  double w_velocity = 0.0, s_velocity = 0.0, total_velocity = 0.0;
  double w_current = 0.0, s_current = 0.0, total_current = 0.0;
  double excluded_fraction = 0.0;
};

inline IntegratedEps integrated_eps_from_table(const ErrorTable& t, double tau,
                                               double sigma_w, double sigma_s,
                                               double hbar, double mass) {
  double ww = 0.0, ss = 0.0, tt = 0.0, v2 = 0.0;
  double wj = 0.0, sj = 0.0, tj = 0.0, j2 = 0.0;
  std::size_t used = 0;
  const std::size_t n = t.x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = t.f[i];
    const auto vd = velocity_derivs(f, t.rho_floor);
    const auto ew = eps_w_from(f, vd, tau, sigma_w, hbar, mass, t.rho_floor);
    const auto es = eps_s_from(f, vd, tau, sigma_s, t.rho_floor);
    // current-variant terms are finite everywhere; accumulate them always
    const double ewj = eps_w_current_from(f, tau, sigma_w, hbar, mass);
    const double esj = eps_s_current_from(f, tau, sigma_s);
    wj += ewj * ewj;
    sj += esj * esj;
    tj += (ewj + esj) * (ewj + esj);
    j2 += f.J * f.J;
    if (!vd.ok || ew.diverged || es.diverged) continue;
    ww += ew.value * ew.value;
    ss += es.value * es.value;
    tt += (ew.value + es.value) * (ew.value + es.value);
    v2 += vd.v * vd.v;
    ++used;
  }
  IntegratedEps out;
  out.excluded_fraction = 1.0 - static_cast<double>(used) / n;
  if (used > 0 && v2 > 0.0) {
    out.w_velocity = std::sqrt(ww / v2);
    out.s_velocity = std::sqrt(ss / v2);
    out.total_velocity = std::sqrt(tt / v2);
  } else {
    out.w_velocity = out.s_velocity = out.total_velocity =
        std::numeric_limits<double>::quiet_NaN();
  }
  if (j2 > 0.0) {
    out.w_current = std::sqrt(wj / j2);
    out.s_current = std::sqrt(sj / j2);
    out.total_current = std::sqrt(tj / j2);
  } else {
    out.w_current = out.s_current = out.total_current =
        std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace bwm
