#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "bwm/grid.hpp"
#include "bwm/povm.hpp"
#include "helpers.hpp"

using namespace bwm;
using test::double_slit_packet;
using test::single_gaussian;

namespace {

WavePacket translated(const WavePacket& p, double shift) {
  // psi(x - shift) term by term
  WavePacket out = p;
  for (auto& t : out.terms) {
    const cplx a = t.alpha, b = t.beta;
    t.beta = b - 2.0 * a * shift;
    t.gamma += a * shift * shift - b * shift;
  }
  return out;
}

}  // namespace

TEST_CASE("kraus normalization constant") {
  CHECK(make_kraus(0.0, 1.0).norm_const ==
        Catch::Approx(std::pow(phys::pi, -0.25)).epsilon(1e-14));
  const double s = 150e-9;
  CHECK(make_kraus(0.0, s).norm_const ==
        Catch::Approx(1.0 / std::sqrt(std::sqrt(phys::pi) * s)).epsilon(1e-14));
  // doubling sigma divides the constant by 2^(1/4)
  CHECK(make_kraus(0.0, 2 * s).norm_const / make_kraus(0.0, s).norm_const ==
        Catch::Approx(std::pow(2.0, -0.25)).epsilon(1e-14));
  CHECK_THROWS_AS(make_kraus(0.0, 0.0), validation_error);
  CHECK_THROWS_AS(make_kraus(0.0, -1e-9), validation_error);
}

TEST_CASE("weak window leaves the state shape unchanged") {
  const WavePacket p = double_slit_packet();
  const KrausGaussian k = make_kraus(0.0, 1e-3);  // sigma_w >> support
  const WavePacket post = apply_kraus(p, k);
  for (double x : {-6e-8, 1e-8, 4e-8}) {
    const cplx expect = k.norm_const * evaluate(p, x);
    CHECK(std::abs(evaluate(post, x) - expect) <= 1e-9 * std::abs(expect));
  }
}

TEST_CASE("povm completeness on single and double probes") {
  const WavePacket narrow = single_gaussian(2.7e-9);
  const WavePacket slit = double_slit_packet();
  for (double sigma : {0.2e-9, 150e-9}) {
    CAPTURE(sigma);
    CHECK(completeness_residual(sigma, narrow).residual < 1e-9);
    CHECK(completeness_residual(sigma, slit).residual < 1e-9);
  }
}

TEST_CASE("narrow window concentrates mass on one slit") {
  const WavePacket p = double_slit_packet();
  const KrausGaussian k = make_kraus(-50e-9, 50e-9);
  const WavePacket post = apply_kraus(p, k);

  // closed-form per-term masses vs grid quadrature of the windowed terms
  WavePacket t0{{post.terms[0]}, 0.0}, t1{{post.terms[1]}, 0.0};
  const double m0 = norm_squared(t0), m1 = norm_squared(t1);
  CHECK(m0 > 50.0 * m1);  // mass sits on the windowed slit

  const GridFunction g0 = to_grid(t0, default_window(t0));
  const GridFunction g1 = to_grid(t1, default_window(t1));
  const double ratio = m1 / m0;
  const double ratio_grid = grid_norm_squared(g1) / grid_norm_squared(g0);
  CHECK(ratio == Catch::Approx(ratio_grid).epsilon(1e-8));
}

TEST_CASE("first marginal: strong and weak limits") {
  ProtocolParams pp = test::fig_params();
  const WavePacket p = free_evolve(double_slit_packet(), pp.t_w_s, pp);

  // strong limit: sigma_w far below every feature recovers the density
  ProtocolParams sharp = pp;
  sharp.sigma_w_m = 0.05e-9;
  for (double x : {0.0, 1.1e-7, -2.3e-7})
    CHECK(first_marginal(p, x, sharp) ==
          Catch::Approx(density(p, x)).epsilon(2e-4));

  // weak limit: a broad gaussian envelope of width ~sigma_w
  ProtocolParams weak = pp;
  weak.sigma_w_m = 1e-3;
  const double cw2 = 1.0 / (std::sqrt(phys::pi) * weak.sigma_w_m);
  for (double x_w : {0.0, 2e-4}) {
    const double envelope =
        cw2 * std::exp(-x_w * x_w / (weak.sigma_w_m * weak.sigma_w_m));
    CHECK(first_marginal(p, x_w, weak) == Catch::Approx(envelope).epsilon(1e-5));
  }
}

TEST_CASE("first marginal matches a grid convolution of the density") {
  ProtocolParams pp = test::fig_params();
  const WavePacket p = free_evolve(double_slit_packet(), pp.t_w_s, pp);
  const GridFunction g = to_grid(p, default_window(p));
  const double cw2 = 1.0 / (std::sqrt(phys::pi) * pp.sigma_w_m);
  for (double x_w : {0.0, 0.9e-7, -3.1e-7}) {
    double conv = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
      const double d = x_w - g.x_at(i);
      const double trap = (i == 0 || i == g.n - 1) ? 0.5 : 1.0;
      conv += trap * std::exp(-d * d / (pp.sigma_w_m * pp.sigma_w_m)) *
              std::norm(g.values[i]);
    }
    conv *= cw2 * g.dx;
    CHECK(first_marginal(p, x_w, pp) == Catch::Approx(conv).epsilon(1e-8));
  }
}

TEST_CASE("first marginal integrates to one") {
  ProtocolParams pp = test::fig_params();
  const WavePacket p = free_evolve(double_slit_packet(), pp.t_w_s, pp);
  const double mu = mean_position(p);
  const double half = support_radius(p) + 10.0 * pp.sigma_w_m;
  auto f = [&](double x_w) { return first_marginal(p, x_w, pp); };
  const auto r = integrate_adaptive_1(f, mu - half, mu + half, 1e-10, 0.0, 32);
  CHECK(std::abs(r.value[0] - 1.0) < 1e-9);
}

TEST_CASE("kraus update commutes with joint translation (property)") {
  std::mt19937_64 rng(20240811);
  auto u = [&](double a, double b) {
    return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  const WavePacket p = double_slit_packet();
  for (int rep = 0; rep < 12; ++rep) {
    const double shift = u(-3e-7, 3e-7);
    const double center = u(-1e-7, 1e-7);
    const double sigma = u(2e-8, 3e-7);
    const WavePacket lhs =
        apply_kraus(translated(p, shift), make_kraus(center + shift, sigma));
    const WavePacket rhs =
        translated(apply_kraus(p, make_kraus(center, sigma)), shift);
    CHECK(norm_squared(lhs) == Catch::Approx(norm_squared(rhs)).epsilon(1e-12));
    const double x = u(-1e-7, 1e-7) + shift;
    CHECK(std::abs(evaluate(lhs, x) - evaluate(rhs, x)) <=
          1e-10 * std::abs(evaluate(rhs, x)) + 1e-300);
  }
}
