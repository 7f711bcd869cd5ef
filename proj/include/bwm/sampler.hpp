#pragma once

// Simulation of actual measurement runs: draw the first outcome from its
// marginal, collapse, evolve, draw the second outcome, and reconstruct the
// velocity estimator with per-bin standard errors.
//
// Sampling is exact two-stage inverse-CDF on tabulated densities (16384-point
// grids, monotone cubic interpolation, 1e-12 tail truncation).  Every run
// derives an independent RNG stream from (master seed, run index), so results
// are reproducible regardless of thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "bwm/errors.hpp"
#include "bwm/gaussian.hpp"
#include "bwm/parallel.hpp"
#include "bwm/povm.hpp"
#include "bwm/protocol.hpp"

namespace bwm {

struct MeasurementRecord {
  std::uint64_t seed_id = 0;
  double x_w_m = 0.0;
  double x_s_m = 0.0;
};

inline constexpr std::size_t kCdfGridSize = std::size_t(1) << 14;
inline constexpr double kCdfTailMass = 1e-12;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Independent, reproducible stream for one run.
inline std::mt19937_64 run_rng(std::uint64_t master_seed, std::uint64_t run_index) {
  return std::mt19937_64(
      detail::splitmix64(master_seed ^ detail::splitmix64(run_index)));
}

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Monotone cubic (Fritsch-Carlson) interpolant through strictly increasing
// abscissae.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> t, std::vector<double> y)
      : t_(std::move(t)), y_(std::move(y)) {
    const std::size_t n = t_.size();
    if (n < 2 || y_.size() != n) throw cdf_error("MonotoneCubic: need >= 2 points");
    d_.assign(n, 0.0);
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = t_[i + 1] - t_[i];
      if (!(h[i] > 0.0)) throw cdf_error("MonotoneCubic: abscissae not increasing");
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        d_[i] = 0.0;
      } else {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
    d_[0] = edge_slope(h[0], n > 2 ? h[1] : h[0], delta[0],
                       n > 2 ? delta[1] : delta[0]);
    d_[n - 1] = edge_slope(h[n - 2], n > 2 ? h[n - 3] : h[n - 2], delta[n - 2],
                           n > 2 ? delta[n - 3] : delta[n - 2]);
  }

  double operator()(double x) const {
    if (x <= t_.front()) return y_.front();
    if (x >= t_.back()) return y_.back();
    std::size_t i =
        std::upper_bound(t_.begin(), t_.end(), x) - t_.begin() - 1;
    const double h = t_[i + 1] - t_[i];
    const double s = (x - t_[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return y_[i] * (2.0 * s3 - 3.0 * s2 + 1.0) + h * d_[i] * (s3 - 2.0 * s2 + s) +
           y_[i + 1] * (-2.0 * s3 + 3.0 * s2) + h * d_[i + 1] * (s3 - s2);
  }

 private:
  static double edge_slope(double h0, double h1, double del0, double del1) {
    double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (d * del0 <= 0.0) return 0.0;
    if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0))
      return 3.0 * del0;
    return d;
  }

  std::vector<double> t_, y_, d_;
};

// Tabulated 1D distribution with monotone-cubic forward CDF and inverse.
class TabulatedCdf {
 public:
  TabulatedCdf(const std::vector<double>& density, double lo, double dx) {
    const std::size_t n = density.size();
    if (n < 8) throw cdf_error("TabulatedCdf: too few points");
    std::vector<double> cdf(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double a = density[i], b = density[i + 1];
      if (a < -1e-12 || b < -1e-12 || !std::isfinite(a) || !std::isfinite(b))
        throw cdf_error("TabulatedCdf: invalid density values");
      cdf[i + 1] = cdf[i] + 0.5 * (std::max(a, 0.0) + std::max(b, 0.0)) * dx;
    }
    const double total = cdf.back();
    if (!(total > 0.0)) throw cdf_error("TabulatedCdf: zero total mass");
    for (auto& c : cdf) c /= total;
    // tail truncation
    std::size_t i0 = 0, i1 = n - 1;
    while (i0 + 1 < n && cdf[i0 + 1] < kCdfTailMass) ++i0;
    while (i1 > i0 + 1 && cdf[i1 - 1] > 1.0 - kCdfTailMass) --i1;
    // deduplicate flat stretches so both directions stay strictly monotone
    std::vector<double> xs, us;
    xs.reserve(i1 - i0 + 1);
    us.reserve(i1 - i0 + 1);
    for (std::size_t i = i0; i <= i1; ++i) {
      const double u = cdf[i];
      if (!us.empty() && !(u > us.back())) continue;
      xs.push_back(lo + dx * static_cast<double>(i));
      us.push_back(u);
    }
    if (xs.size() < 2) throw cdf_error("TabulatedCdf: degenerate CDF");
    u_lo_ = us.front();
    u_hi_ = us.back();
    x_lo_ = xs.front();
    x_hi_ = xs.back();
    forward_ = MonotoneCubic(xs, us);
    inverse_ = MonotoneCubic(std::move(us), std::move(xs));
  }

  double sample(double u) const {
    return inverse_(std::clamp(u, u_lo_, u_hi_));
  }

  double cdf(double x) const {
    if (x <= x_lo_) return 0.0;
    if (x >= x_hi_) return 1.0;
    return forward_(x);
  }

  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }

 private:
  MonotoneCubic forward_, inverse_;
  double u_lo_ = 0.0, u_hi_ = 1.0, x_lo_ = 0.0, x_hi_ = 0.0;
};

// CDF of the first-outcome marginal P(x_w) = || W(x_w) psi ||^2.  The
// marginal is the density smeared by the squared window, so the fast scan
// applies with sigma = sigma_w.
inline TabulatedCdf first_stage_cdf(const WavePacket& psi,
                                    const ProtocolParams& pp) {
  const double mu = mean_position(psi);
  const double half = support_radius(psi) + 10.0 * pp.sigma_w_m;
  const double dx = 2.0 * half / static_cast<double>(kCdfGridSize - 1);
  std::vector<double> dens(kCdfGridSize);
  smeared_density_scan(psi, pp.sigma_w_m, mu - half, dx, kCdfGridSize,
                       dens.data());
  return TabulatedCdf(dens, mu - half, dx);
}

// CDF of the second outcome for a given evolved post-measurement state.
inline TabulatedCdf second_stage_cdf(const WavePacket& collapsed_evolved,
                                     const ProtocolParams& pp) {
  const double mu = mean_position(collapsed_evolved);
  const double half = support_radius(collapsed_evolved) + 10.0 * pp.sigma_s_m;
  const double dx = 2.0 * half / static_cast<double>(kCdfGridSize - 1);
  std::vector<double> dens(kCdfGridSize);
  smeared_density_scan(collapsed_evolved, pp.sigma_s_m, mu - half, dx,
                       kCdfGridSize, dens.data());
  return TabulatedCdf(dens, mu - half, dx);
}

inline double draw_first(const TabulatedCdf& cdf, std::mt19937_64& rng) {
  return cdf.sample(uniform01(rng));
}

inline double draw_first(const WavePacket& psi, const ProtocolParams& pp,
                         std::mt19937_64& rng) {
  return draw_first(first_stage_cdf(psi, pp), rng);
}

// Post-measurement state W(x_w) psi / || W(x_w) psi ||.
inline WavePacket collapse(const WavePacket& psi, double x_w,
                           const ProtocolParams& pp) {
  WavePacket out = apply_kraus(psi, make_kraus(x_w, pp.sigma_w_m));
  const double n2 = norm_squared(out);
  if (!(n2 > kProbabilityFloor))
    throw out_of_support_error("collapse: zero-probability outcome");
  const double shift = 0.5 * std::log(n2);
  for (auto& t : out.terms) t.gamma -= shift;
  return out;
}

inline double draw_second(const WavePacket& collapsed_evolved,
                          const ProtocolParams& pp, std::mt19937_64& rng) {
  return second_stage_cdf(collapsed_evolved, pp).sample(uniform01(rng));
}

struct EnsembleResult {
  std::vector<MeasurementRecord> records;
  std::size_t failed = 0;
};

// n independent two-measurement runs on fresh copies of psi.
inline EnsembleResult run_ensemble(const WavePacket& psi_tw,
                                   const ProtocolParams& pp, std::size_t n,
                                   std::uint64_t master_seed,
                                   unsigned threads = 0) {
  if (n < 1) throw validation_error("run_ensemble: n must be >= 1");
  const TabulatedCdf first = first_stage_cdf(psi_tw, pp);
  std::vector<std::optional<MeasurementRecord>> slots(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        std::mt19937_64 rng = run_rng(master_seed, i);
        try {
          const double x_w = draw_first(first, rng);
          const WavePacket post = collapse(psi_tw, x_w, pp);
          const WavePacket evolved = free_evolve(post, pp.tau_s, pp);
          const double x_s = draw_second(evolved, pp, rng);
          slots[i] = MeasurementRecord{i, x_w, x_s};
        } catch (const std::runtime_error&) {
          slots[i] = std::nullopt;
        }
      },
      threads ? threads : worker_count());
  EnsembleResult out;
  out.records.reserve(n);
  for (auto& s : slots) {
    if (s)
      out.records.push_back(*s);
    else
      ++out.failed;
  }
  return out;
}

struct EnsembleEstimate {
  std::vector<double> bin_centers;       // m
  std::vector<double> v_hat;             // (mean x_s - mean x_w)/tau per bin
  std::vector<double> stderr_v;          // sample std of (x_s - x_w)/(tau sqrt(n))
  std::vector<std::size_t> counts;
  std::vector<bool> low_statistics;      // count < 10
};

inline EnsembleEstimate estimate_profile(
    const std::vector<MeasurementRecord>& records, double bin_width,
    const ProtocolParams& pp) {
  if (records.empty()) throw validation_error("estimate_profile: no records");
  if (!(bin_width > 0.0))
    throw validation_error("estimate_profile: bin_width must be > 0");
  double lo = records.front().x_s_m, hi = lo;
  for (const auto& r : records) {
    lo = std::min(lo, r.x_s_m);
    hi = std::max(hi, r.x_s_m);
  }
  const std::size_t nbins =
      std::max<std::size_t>(1, static_cast<std::size_t>((hi - lo) / bin_width) + 1);
  // Welford accumulation of the per-record distances d = x_s - x_w.
  std::vector<std::size_t> count(nbins, 0);
  std::vector<double> mean(nbins, 0.0), m2(nbins, 0.0);
  for (const auto& r : records) {
    std::size_t b = static_cast<std::size_t>((r.x_s_m - lo) / bin_width);
    if (b >= nbins) b = nbins - 1;
    const double d = r.x_s_m - r.x_w_m;
    ++count[b];
    const double delta = d - mean[b];
    mean[b] += delta / static_cast<double>(count[b]);
    m2[b] += delta * (d - mean[b]);
  }
  EnsembleEstimate est;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (count[b] == 0) continue;
    est.bin_centers.push_back(lo + (static_cast<double>(b) + 0.5) * bin_width);
    est.v_hat.push_back(mean[b] / pp.tau_s);
    double se = std::numeric_limits<double>::quiet_NaN();
    if (count[b] >= 2) {
      const double var = m2[b] / static_cast<double>(count[b] - 1);
      se = std::sqrt(var / static_cast<double>(count[b])) / pp.tau_s;
    }
    est.stderr_v.push_back(se);
    est.counts.push_back(count[b]);
    est.low_statistics.push_back(count[b] < 10);
  }
  return est;
}

}  // namespace bwm
