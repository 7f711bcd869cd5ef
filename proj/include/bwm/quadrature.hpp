#pragma once

// Adaptive Gauss-Kronrod (7,15) quadrature over finite intervals, for scalar
// and small-vector integrands.  Panels are bisected until the K15-G7
// discrepancy of every component fits its share of the error budget.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>

namespace bwm {

namespace gk {

// K15 abscissae (positive half) and weights; the even-index nodes carry the
// embedded 7-point Gauss rule.
inline constexpr std::array<double, 8> xgk = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> wgk = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

inline constexpr std::array<double, 4> wg = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

}  // namespace gk

template <std::size_t N>
struct QuadResult {
  std::array<double, N> value{};
  std::array<double, N> err{};
  std::size_t evals = 0;
  bool converged = true;
};

namespace detail {

template <std::size_t N, class F>
void gk15_panel(F& f, double a, double b, std::array<double, N>& k15,
                std::array<double, N>& g7, std::size_t& evals) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  k15.fill(0.0);
  g7.fill(0.0);
  for (std::size_t i = 0; i < 8; ++i) {
    const double w = gk::wgk[i];
    const bool gauss_node = (i % 2 == 1) || i == 7;
    const double wgauss = gauss_node ? gk::wg[i == 7 ? 3 : i / 2] : 0.0;
    if (gk::xgk[i] == 0.0) {
      const auto v = f(c);
      ++evals;
      for (std::size_t m = 0; m < N; ++m) {
        k15[m] += w * v[m];
        g7[m] += wgauss * v[m];
      }
    } else {
      const auto vp = f(c + h * gk::xgk[i]);
      const auto vm = f(c - h * gk::xgk[i]);
      evals += 2;
      for (std::size_t m = 0; m < N; ++m) {
        k15[m] += w * (vp[m] + vm[m]);
        g7[m] += wgauss * (vp[m] + vm[m]);
      }
    }
  }
  for (std::size_t m = 0; m < N; ++m) {
    k15[m] *= h;
    g7[m] *= h;
  }
}

template <std::size_t N, class F>
void refine(F& f, double a, double b, const std::array<double, N>& budget,
            QuadResult<N>& out, int depth, int max_depth) {
  std::array<double, N> k15{}, g7{};
  gk15_panel<N>(f, a, b, k15, g7, out.evals);
  bool ok = true;
  for (std::size_t m = 0; m < N; ++m)
    if (std::abs(k15[m] - g7[m]) > budget[m]) {
      ok = false;
      break;
    }
  if (ok || depth >= max_depth) {
    if (!ok) out.converged = false;
    for (std::size_t m = 0; m < N; ++m) {
      out.value[m] += k15[m];
      out.err[m] += std::abs(k15[m] - g7[m]);
    }
    return;
  }
  const double c = 0.5 * (a + b);
  std::array<double, N> half{};
  for (std::size_t m = 0; m < N; ++m) half[m] = 0.5 * budget[m];
  refine<N>(f, a, c, half, out, depth + 1, max_depth);
  refine<N>(f, c, b, half, out, depth + 1, max_depth);
}

}  // namespace detail

// Integrate f : double -> std::array<double, N> over [a, b].
// Per-component tolerance: abs_tol + rel_tol * scale, where scale defaults to
// the magnitude of a first-pass estimate over `init_panels` panels.
template <std::size_t N, class F>
QuadResult<N> integrate_adaptive(F&& f, double a, double b, double abs_tol,
                                 double rel_tol,
                                 std::array<double, N> scale_hint = {},
                                 int init_panels = 16, int max_depth = 28) {
  QuadResult<N> out;
  if (!(b > a)) return out;
  // First pass: coarse estimates to set component scales.
  std::array<double, N> coarse{};
  {
    std::array<double, N> k15{}, g7{};
    const double w = (b - a) / init_panels;
    for (int p = 0; p < init_panels; ++p) {
      detail::gk15_panel<N>(f, a + p * w, a + (p + 1) * w, k15, g7, out.evals);
      for (std::size_t m = 0; m < N; ++m) coarse[m] += k15[m];
    }
  }
  std::array<double, N> budget{};
  for (std::size_t m = 0; m < N; ++m) {
    const double scale = std::max(std::abs(coarse[m]), scale_hint[m]);
    budget[m] = std::max(abs_tol, rel_tol * scale) / init_panels;
  }
  const double w = (b - a) / init_panels;
  for (int p = 0; p < init_panels; ++p)
    detail::refine<N>(f, a + p * w, a + (p + 1) * w, budget, out, 0, max_depth);
  return out;
}

// Scalar convenience wrapper.
template <class F>
QuadResult<1> integrate_adaptive_1(F&& f, double a, double b, double abs_tol,
                                   double rel_tol, int init_panels = 16,
                                   int max_depth = 28) {
  auto wrap = [&f](double x) { return std::array<double, 1>{f(x)}; };
  return integrate_adaptive<1>(wrap, a, b, abs_tol, rel_tol, {}, init_panels,
                               max_depth);
}

}  // namespace bwm
