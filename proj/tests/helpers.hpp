#pragma once

// Shared test utilities: reference states, statistical test critical values.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bwm/gaussian.hpp"
#include "bwm/sampler.hpp"

namespace bwm::test {

inline ProtocolParams fig_params() {
  ProtocolParams pp;
  pp.tau_s = 1e-12;
  pp.sigma_w_m = 150e-9;
  pp.sigma_s_m = 0.2e-9;
  pp.t_w_s = 10e-12;
  return pp;
}

// Two equal zero-momentum Gaussians 100 nm apart; sigma0 close to the
// calibrated value so evolved features match the headline scenario.
inline WavePacket double_slit_packet(double sigma0 = 2.7e-9,
                                     double separation = 100e-9) {
  WavePacket p;
  p.terms.push_back(make_gaussian(-0.5 * separation, sigma0, 0.0, phys::hbar_Js));
  p.terms.push_back(make_gaussian(+0.5 * separation, sigma0, 0.0, phys::hbar_Js));
  return normalized(p);
}

inline WavePacket single_gaussian(double sigma0 = 2.7e-9, double center = 0.0,
                                  double momentum = 0.0) {
  WavePacket p;
  p.terms.push_back(make_gaussian(center, sigma0, momentum, phys::hbar_Js));
  return normalized(p);
}

// One-sample Kolmogorov-Smirnov statistic against a reference CDF.
template <class Cdf>
double ks_statistic(std::vector<double> samples, const Cdf& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

// Asymptotic KS critical value at significance alpha = 1%.
inline double ks_critical_1pct(std::size_t n) {
  return 1.62762 / std::sqrt(static_cast<double>(n));
}

// Wilson-Hilferty approximation of the chi-square quantile at 99%.
inline double chi2_critical_1pct(std::size_t dof) {
  const double k = static_cast<double>(dof);
  const double z = 2.3263478740408408;  // 99% normal quantile
  const double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
  return k * t * t * t;
}

}  // namespace bwm::test
