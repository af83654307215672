#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "crossflux/mesh.hpp"
#include "crossflux/spectral.hpp"
#include "test_helpers.hpp"

using namespace crossflux;
using testing_support::baseline;

namespace {

constexpr double kPi = std::numbers::pi;

StateVector sampled_kernel_perturbation(const ModelParams& p, const Grid& g, int j, double eps) {
  const ConstantState cs = constant_state(p);
  const KernelRatios kr = kernel_ratios(j, p);
  const NeumannMode mode(j, p.length, g.x_left);
  StateVector s = StateVector::constant(g.n, cs.u_star, cs.v_star);
  for (int i = 0; i < g.n; ++i) {
    s.u[i] += eps * mode(g.node(i));
    s.v[i] += eps * kr.kappa * mode(g.node(i));
  }
  return s;
}

// smooth manufactured pair with Neumann-compatible derivatives and the
// exact residual of the continuous operator evaluated analytically
struct Manufactured {
  double c_u, c_v;
  int j_u, j_v;
  const ModelParams& p;

  double u(double t) const { return 0.5 + c_u * std::cos(j_u * kPi * t); }       // t = (x-xl)/L
  double du(double t) const { return -c_u * j_u * kPi * std::sin(j_u * kPi * t); }
  double d2u(double t) const { return -c_u * j_u * j_u * kPi * kPi * std::cos(j_u * kPi * t); }
  double v(double t) const { return 0.5 + c_v * std::cos(j_v * kPi * t); }
  double dv(double t) const { return -c_v * j_v * kPi * std::sin(j_v * kPi * t); }
  double d2v(double t) const { return -c_v * j_v * j_v * kPi * kPi * std::cos(j_v * kPi * t); }

  // divergence of the two fluxes plus reaction, by the product rule
  std::pair<double, double> exact_residual(double t, double d2) const {
    const double L = p.length;
    const double uu = u(t), vv = v(t);
    const double ux = du(t) / L, vx = dv(t) / L;
    const double uxx = d2u(t) / (L * L), vxx = d2v(t) / (L * L);
    const double flux_u = p.alpha * vx * ux + (p.d1 + p.alpha * vv) * uxx -
                          p.alpha * (ux * vx + uu * vxx);
    const double flux_v = p.beta * ux * vx + (d2 + p.beta * uu) * vxx -
                          p.beta * (vx * ux + vv * uxx);
    const ReactionTerms r = reaction(uu, vv, p);
    return {flux_u + r.f, flux_v + r.g};
  }
};

}  // namespace

TEST_CASE("residual vanishes at the constant state") {
  const ModelParams p = baseline();
  const Grid g(101, p.length, p.x_left);
  const ConstantState cs = constant_state(p);
  const StateVector s = StateVector::constant(g.n, cs.u_star, cs.v_star);
  const std::vector<double> r = assemble_residual(s, 0.02, p, g);
  CHECK(sup_norm(r) < 1e-14);
}

TEST_CASE("kernel-direction residual scaling near the bifurcation point") {
  const ModelParams p = baseline();
  const double ds = *critical_d2(1, p);

  // quadratic in the amplitude at fixed grid (up to the O(h^2) floor)
  const Grid g(801, p.length, p.x_left);
  const double r1 = sup_norm(assemble_residual(sampled_kernel_perturbation(p, g, 1, 1e-3), ds, p, g));
  const double r2 = sup_norm(assemble_residual(sampled_kernel_perturbation(p, g, 1, 2e-3), ds, p, g));
  CHECK(r2 / r1 == Catch::Approx(4.0).margin(0.8));

  // O(eps h^2) under grid doubling at fixed small amplitude; eps small
  // enough that the quadratic-in-amplitude part stays negligible
  const Grid gc(101, p.length, p.x_left), gf(201, p.length, p.x_left);
  const double eps = 1e-7;
  const double rc = sup_norm(assemble_residual(sampled_kernel_perturbation(p, gc, 1, eps), ds, p, gc));
  const double rf = sup_norm(assemble_residual(sampled_kernel_perturbation(p, gf, 1, eps), ds, p, gf));
  CHECK(rc / rf > 3.0);
  CHECK(rc / rf < 5.0);
}

TEST_CASE("discrete flux divergence telescopes to the reaction quadrature") {
  const ModelParams p = baseline();
  const Grid g(64, p.length, p.x_left);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  StateVector s(std::vector<double>(g.n), std::vector<double>(g.n));
  for (int i = 0; i < g.n; ++i) {
    s.u[i] = unit(rng);
    s.v[i] = unit(rng);
  }
  const std::vector<double> r = assemble_residual(s, 0.01, p, g);
  double sum_u = 0.0, sum_v = 0.0, quad_f = 0.0, quad_g = 0.0;
  for (int i = 0; i < g.n; ++i) {
    const double w = g.cell_width(i);
    sum_u += w * r[2 * i];
    sum_v += w * r[2 * i + 1];
    const ReactionTerms rt = reaction(s.u[i], s.v[i], p);
    quad_f += w * rt.f;
    quad_g += w * rt.g;
  }
  CHECK(sum_u == Catch::Approx(quad_f).margin(1e-12));
  CHECK(sum_v == Catch::Approx(quad_g).margin(1e-12));
}

TEST_CASE("Jacobian matches central finite differences") {
  const ModelParams p = baseline();
  const Grid g(24, p.length, p.x_left);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> unit(0.05, 1.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(2 * g.n);
    for (double& w : x) w = unit(rng);
    const double d2 = 0.002 + 0.01 * (trial % 7);
    BandedMatrix jac(x.size(), kSystemBandwidth, kSystemBandwidth);
    assemble_jacobian_packed(x, d2, p, g, jac);
    const double scale = jac.inf_norm();
    const double eps = 1e-6;
    std::vector<double> rp(x.size()), rm(x.size());
    for (std::size_t col = 0; col < x.size(); ++col) {
      const double save = x[col];
      x[col] = save + eps;
      assemble_residual_packed(x, d2, p, g, rp);
      x[col] = save - eps;
      assemble_residual_packed(x, d2, p, g, rm);
      x[col] = save;
      for (std::size_t row = 0; row < x.size(); ++row) {
        if (!jac.in_band(row, col)) continue;
        const double fd = (rp[row] - rm[row]) / (2.0 * eps);
        worst = std::max(worst, std::abs(fd - jac.at(row, col)) / scale);
      }
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("Jacobian annihilates the sampled kernel to O(h^2)") {
  const ModelParams p = baseline();
  const double ds = *critical_d2(1, p);
  const ConstantState cs = constant_state(p);
  const KernelRatios kr = kernel_ratios(1, p);

  auto kernel_residual = [&](int n) {
    const Grid g(n, p.length, p.x_left);
    const StateVector s = StateVector::constant(g.n, cs.u_star, cs.v_star);
    BandedMatrix jac = assemble_jacobian(s, ds, p, g);
    const NeumannMode mode(1, p.length, g.x_left);
    std::vector<double> k(2 * g.n), out(2 * g.n);
    for (int i = 0; i < g.n; ++i) {
      k[2 * i] = mode(g.node(i));
      k[2 * i + 1] = kr.kappa * mode(g.node(i));
    }
    jac.multiply(k, out);
    return sup_norm(out);
  };
  const double rc = kernel_residual(101);
  const double rf = kernel_residual(201);
  CHECK(rc / rf > 3.0);
  CHECK(rc / rf < 5.0);
}

TEST_CASE("d2 derivative") {
  const ModelParams p = baseline();
  const Grid g(41, p.length, p.x_left);

  SECTION("zero at constant states") {
    const StateVector s = StateVector::constant(g.n, 0.3, 0.9);
    CHECK(sup_norm(d2_derivative(s, g)) == 0.0);
  }

  SECTION("matches a finite difference in d2 and is linear in v") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    StateVector s(std::vector<double>(g.n), std::vector<double>(g.n));
    for (int i = 0; i < g.n; ++i) {
      s.u[i] = unit(rng);
      s.v[i] = unit(rng);
    }
    const std::vector<double> dd2 = d2_derivative(s, g);
    const double d2 = 0.02, eps = 1e-7;
    const std::vector<double> rp = assemble_residual(s, d2 + eps, p, g);
    const std::vector<double> rm = assemble_residual(s, d2 - eps, p, g);
    for (std::size_t i = 0; i < dd2.size(); ++i)
      CHECK(dd2[i] == Catch::Approx((rp[i] - rm[i]) / (2 * eps)).margin(1e-8 * (1 + std::abs(dd2[i]))));

    StateVector doubled = s;
    for (double& w : doubled.v) w *= 2.0;
    const std::vector<double> dd2x2 = d2_derivative(doubled, g);
    for (std::size_t i = 0; i < dd2.size(); ++i)
      CHECK(dd2x2[i] == Catch::Approx(2.0 * dd2[i]).margin(1e-12));
  }
}

TEST_CASE("norms") {
  const Grid g(1001, 1.0, -0.5);

  SECTION("constants") {
    const std::vector<double> c(g.n, -0.75);
    CHECK(l2_norm(c, g) == Catch::Approx(0.75).epsilon(1e-12));
    CHECK(sup_norm(c) == 0.75);
    CHECK(h1_seminorm(c, g) == 0.0);
  }

  SECTION("sampled eigenfunction has unit L2 norm") {
    std::vector<double> phi(g.n);
    for (int i = 0; i < g.n; ++i) phi[i] = neumann_eigenfunction(1, 1.0, -0.5, g.node(i));
    CHECK(l2_norm(phi, g) == Catch::Approx(1.0).margin(1e-4));
    CHECK(sup_norm(phi) == Catch::Approx(std::sqrt(2.0)));
  }
}

TEST_CASE("prolongation") {
  const Grid coarse(101, 1.0, -0.5), fine(201, 1.0, -0.5);

  SECTION("constants and linear profiles are reproduced exactly") {
    StateVector lin(std::vector<double>(coarse.n), std::vector<double>(coarse.n, 2.0));
    for (int i = 0; i < coarse.n; ++i) lin.u[i] = 1.0 + 3.0 * coarse.node(i);
    const StateVector out = prolong(lin, coarse, fine);
    for (int i = 0; i < fine.n; ++i) {
      CHECK(out.u[i] == Catch::Approx(1.0 + 3.0 * fine.node(i)).margin(1e-13));
      CHECK(out.v[i] == Catch::Approx(2.0));
    }
  }

  SECTION("interpolation error of a smooth mode is O(h^2)") {
    auto interp_error = [&](const Grid& gc, const Grid& gf) {
      StateVector s(std::vector<double>(gc.n), std::vector<double>(gc.n, 0.0));
      for (int i = 0; i < gc.n; ++i) s.u[i] = neumann_eigenfunction(1, 1.0, -0.5, gc.node(i));
      const StateVector out = prolong(s, gc, gf);
      double err = 0.0;
      for (int i = 0; i < gf.n; ++i)
        err = std::max(err, std::abs(out.u[i] - neumann_eigenfunction(1, 1.0, -0.5, gf.node(i))));
      return err;
    };
    const Grid c2(201, 1.0, -0.5), f2(401, 1.0, -0.5);
    const double e1 = interp_error(coarse, fine);
    const double e2 = interp_error(c2, f2);
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
  }

  SECTION("domain mismatch is rejected") {
    const Grid other(51, 2.0, -1.0);
    const StateVector s = StateVector::constant(coarse.n, 1.0, 1.0);
    CHECK_THROWS_AS(prolong(s, coarse, other), std::invalid_argument);
  }
}

TEST_CASE("manufactured-solution consistency is second order") {
  const ModelParams p = baseline();
  const double d2 = 0.02;

  auto truncation_error = [&](int n) {
    const Grid g(n, p.length, p.x_left);
    const Manufactured mf{0.1, -0.05, 1, 2, p};
    StateVector s(std::vector<double>(g.n), std::vector<double>(g.n));
    for (int i = 0; i < g.n; ++i) {
      const double t = (g.node(i) - g.x_left) / g.length;
      s.u[i] = mf.u(t);
      s.v[i] = mf.v(t);
    }
    const std::vector<double> r = assemble_residual(s, d2, p, g);
    double err = 0.0;
    for (int i = 0; i < g.n; ++i) {
      const double t = (g.node(i) - g.x_left) / g.length;
      const auto [eu, ev] = mf.exact_residual(t, d2);
      err = std::max(err, std::abs(r[2 * i] - eu));
      err = std::max(err, std::abs(r[2 * i + 1] - ev));
    }
    return err;
  };

  const double e1 = truncation_error(101);
  const double e2 = truncation_error(201);
  const double e3 = truncation_error(401);
  CHECK(e1 / e2 > 3.0);
  CHECK(e1 / e2 < 5.0);
  CHECK(e2 / e3 > 3.0);
  CHECK(e2 / e3 < 5.0);
}
