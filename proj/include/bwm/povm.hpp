#pragma once

// Gaussian Kraus operators for imprecise position measurements:
//   K(c, sigma) = C int dx exp(-(c-x)^2 / 2 sigma^2) |x><x|,
// with C = (sqrt(pi) sigma)^(-1/2) so that int dc K^dag K = I.

#include <cmath>
#include <complex>

#include "bwm/constants.hpp"
#include "bwm/errors.hpp"
#include "bwm/gaussian.hpp"
#include "bwm/quadrature.hpp"

namespace bwm {

struct KrausGaussian {
  double center_m = 0.0;
  double sigma_m = 0.0;
  double norm_const = 0.0;  // (sqrt(pi) sigma)^(-1/2)
};

inline KrausGaussian make_kraus(double center, double sigma) {
  if (!(sigma > 0.0)) throw validation_error("make_kraus: sigma must be > 0");
  return {center, sigma, 1.0 / std::sqrt(std::sqrt(phys::pi) * sigma)};
}

// State update |psi> -> K |psi> (unnormalized); the squared norm of the result
// is the outcome probability density at this center.
inline WavePacket apply_kraus(const WavePacket& p, const KrausGaussian& k) {
  return gaussian_window(p, k.center_m, k.sigma_m,
                         cplx(std::log(k.norm_const), 0.0));
}

// Outcome density of the first measurement, P(x_w) = || W(x_w) psi ||^2.
inline double first_marginal(const WavePacket& psi, double x_w,
                             const ProtocolParams& pp) {
  return norm_squared(apply_kraus(psi, make_kraus(x_w, pp.sigma_w_m)));
}

struct QuadSpec {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  int init_panels = 32;
  int max_depth = 28;
};

struct CompletenessResult {
  double residual = 0.0;
  bool converged = true;
  std::size_t evals = 0;
};

// | int dc ||K(c) psi||^2  -  1 | for a normalized probe.  The integral is
// exactly 1 operator-theoretically, so the residual measures quadrature error
// only.  Window: centroid +/- 10 (sigma + support radius).
inline CompletenessResult completeness_residual(double sigma,
                                                const WavePacket& probe,
                                                const QuadSpec& q = {}) {
  const double mu = mean_position(probe);
  const double half = 10.0 * (sigma + support_radius(probe));
  auto f = [&](double c) {
    return norm_squared(apply_kraus(probe, make_kraus(c, sigma)));
  };
  const auto r = integrate_adaptive_1(f, mu - half, mu + half, q.abs_tol,
                                      q.rel_tol, q.init_panels, q.max_depth);
  return {std::abs(r.value[0] - 1.0), r.converged, r.evals};
}

}  // namespace bwm
