#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "bwm/grid.hpp"
#include "helpers.hpp"

using namespace bwm;
using test::double_slit_packet;
using test::single_gaussian;

TEST_CASE("norm on the grid matches the closed form") {
  const WavePacket p = double_slit_packet();
  const GridFunction g = to_grid(p, default_window(p));
  CHECK(grid_norm_squared(g) == Catch::Approx(norm_squared(p)).epsilon(1e-10));
}

TEST_CASE("boundary invariant is enforced") {
  const WavePacket p = single_gaussian(3e-9);
  GridWindow w{-6e-9, 6e-9, 1024};  // far too narrow
  CHECK_THROWS_AS(to_grid(p, w), discretization_error);
  const GridFunction g = to_grid(p, w, false);
  CHECK(boundary_residual(g) >= 1e-8);
}

TEST_CASE("zero grid stays zero under evolution") {
  ProtocolParams pp;
  GridFunction g;
  g.x_min = -1e-6;
  g.n = 4096;
  g.dx = 2e-6 / 4095;
  g.values.assign(4096, cplx(0.0, 0.0));
  const GridFunction e = grid_free_evolve(g, 1e-12, pp);
  for (const auto& v : e.values) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("grid momentum eigenmode acquires the dispersion phase exactly") {
  ProtocolParams pp;
  GridFunction g;
  g.n = 4096;
  g.x_min = -1e-6;
  g.dx = 2e-6 / static_cast<double>(g.n);  // exact periodic fit
  g.values.resize(g.n);
  const double k = 2.0 * phys::pi * 37.0 / (static_cast<double>(g.n) * g.dx);
  for (std::size_t i = 0; i < g.n; ++i)
    g.values[i] = std::polar(1.0, k * g.x_at(i));
  const double dt = 1e-12;
  const GridFunction e = grid_free_evolve(g, dt, pp);
  const cplx phase = std::polar(1.0, -pp.hbar_Js * k * k * dt / (2 * pp.mass_kg));
  for (std::size_t i = 0; i < g.n; i += 97)
    CHECK(std::abs(e.values[i] - phase * g.values[i]) < 1e-12);
}

TEST_CASE("spectral evolution matches analytic evolution: single packet") {
  ProtocolParams pp;
  const WavePacket p = single_gaussian(2.7e-9);
  const double dt = 11e-12;
  const WavePacket pe = free_evolve(p, dt, pp);
  const GridWindow w = merge_windows(default_window(p), default_window(pe));
  const GridFunction start = to_grid(p, w);
  const GridFunction spectral = grid_free_evolve(start, dt, pp);
  const GridFunction analytic = to_grid(pe, w);
  CHECK(l2_relative_error(spectral, analytic) < 1e-10);
}

TEST_CASE("spectral evolution matches analytic evolution: double slit") {
  ProtocolParams pp;
  const WavePacket p = double_slit_packet();
  const double dt = 11e-12;
  const WavePacket pe = free_evolve(p, dt, pp);
  const GridWindow w = merge_windows(default_window(p), default_window(pe));
  const GridFunction spectral = grid_free_evolve(to_grid(p, w), dt, pp);
  const GridFunction analytic = to_grid(pe, w);
  CHECK(l2_relative_error(spectral, analytic) < 1e-8);
}

TEST_CASE("backend equivalence: density and current where rho is significant") {
  ProtocolParams pp;
  const WavePacket pe = free_evolve(double_slit_packet(), 11e-12, pp);
  const GridFunction g = to_grid(pe, default_window(pe));
  const auto J = grid_current(g, pp.hbar_Js, pp.mass_kg);
  double peak = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) peak = std::max(peak, std::norm(g.values[i]));
  double jscale = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) jscale = std::max(jscale, std::abs(J[i]));
  for (std::size_t i = 0; i < g.n; i += 53) {
    const double x = g.x_at(i);
    const double rho_g = std::norm(g.values[i]);
    if (rho_g < 1e-6 * peak) continue;
    const auto f = local_fields(pe, x, pp.hbar_Js, pp.mass_kg);
    CHECK(std::abs(rho_g - f.rho) <= 1e-8 * f.rho);
    CHECK(std::abs(J[i] - f.J) <= 1e-8 * std::max(std::abs(f.J), 1e-3 * jscale));
  }
}

TEST_CASE("grid current matches the phase-gradient form") {
  ProtocolParams pp;
  const WavePacket pe = free_evolve(double_slit_packet(), 11e-12, pp);
  // pick a healthy mid-fringe point
  const double x = 1.3e-7;
  const double h = 2e-11;
  const cplx r = evaluate(pe, x + h) / evaluate(pe, x - h);
  const double v_phase = pp.hbar_Js / pp.mass_kg * std::arg(r) / (2 * h);
  const double J_phase = density(pe, x) * v_phase;
  const double J = current(pe, x, pp);
  CHECK(J == Catch::Approx(J_phase).epsilon(1e-6));
}

TEST_CASE("Ehrenfest: grid momentum expectation is conserved") {
  ProtocolParams pp;
  WavePacket p = double_slit_packet();
  // give it a net drift so the expectation is nonzero
  for (auto& t : p.terms) t.beta += cplx(0.0, 2e-25 / pp.hbar_Js);
  p = normalized(p);
  const WavePacket pe = free_evolve(p, 11e-12, pp);
  const GridWindow w = merge_windows(default_window(p), default_window(pe));
  const GridFunction g0 = to_grid(p, w);
  const GridFunction g1 = grid_free_evolve(g0, 11e-12, pp);
  const double p_before = grid_mean_momentum(g0, pp.hbar_Js);
  const double p_after = grid_mean_momentum(g1, pp.hbar_Js);
  CHECK(std::abs(p_after - p_before) <= 1e-10 * std::abs(p_before));
  CHECK(p_before == Catch::Approx(mean_momentum(p, pp.hbar_Js)).epsilon(1e-10));
}

TEST_CASE("propagator commutation with position on the grid") {
  ProtocolParams pp;
  const WavePacket p = double_slit_packet();
  const WavePacket far = free_evolve(p, 10e-12, pp);
  const GridWindow w = merge_windows(default_window(p), default_window(far));
  const GridFunction g = to_grid(p, w);
  for (double tau : {0.1e-12, 1e-12, 10e-12}) {
    CAPTURE(tau);
    CHECK(commutator_residual(g, tau, pp) < 1e-8);
  }
}

TEST_CASE("fft round trip and size validation") {
  std::vector<cplx> v(256);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = cplx(std::sin(0.1 * i), std::cos(0.21 * i));
  auto w = v;
  fft_inplace(w, false);
  fft_inplace(w, true);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(w[i] - v[i]) < 1e-13);

  std::vector<cplx> bad(100);
  CHECK_THROWS_AS(fft_inplace(bad, false), validation_error);
}
