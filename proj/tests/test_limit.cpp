#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "crossflux/limit.hpp"
#include "test_helpers.hpp"

using namespace crossflux;
using testing_support::baseline;

namespace {

constexpr double kPi = std::numbers::pi;

}

TEST_CASE("scalar residual basics") {
  const ModelParams p = baseline();
  const Gamma g2 = Gamma::finite(2.0);
  const Grid g(101, p.length, p.x_left);

  SECTION("constant roots") {
    const std::vector<double> vstar(g.n, 0.5), zero(g.n, 0.0);
    CHECK(sup_norm(scalar_residual(vstar, 0.03, p, g2, g)) < 1e-14);
    CHECK(sup_norm(scalar_residual(zero, 0.03, p, g2, g)) < 1e-14);
  }

  SECTION("regime refusal") {
    CHECK_THROWS_AS(ScalarProblem(p, Gamma::finite(0.5), g), std::invalid_argument);
    CHECK_THROWS_AS(ScalarProblem(p, Gamma::finite(1.0), g), std::invalid_argument);
  }

  SECTION("manufactured truncation error is O(h^2)") {
    const LimitCoefficients lc = limit_coefficients(p, g2);
    const double d2 = 0.03, d = lc.d_eff(d2);
    auto err = [&](int n) {
      const Grid gn(n, p.length, p.x_left);
      std::vector<double> v(gn.n);
      for (int i = 0; i < gn.n; ++i) {
        const double t = (gn.node(i) - gn.x_left) / gn.length;
        v[i] = 0.5 + 0.1 * std::cos(kPi * t);
      }
      const std::vector<double> r = scalar_residual(v, d2, p, g2, gn);
      double worst = 0.0;
      for (int i = 0; i < gn.n; ++i) {
        const double t = (gn.node(i) - gn.x_left) / gn.length;
        const double vv = 0.5 + 0.1 * std::cos(kPi * t);
        const double vxx = -0.1 * kPi * kPi * std::cos(kPi * t) / (gn.length * gn.length);
        const double exact = d * vxx + lc.xi_star * vv * (vv - 0.5);
        worst = std::max(worst, std::abs(r[i] - exact));
      }
      return worst;
    };
    CHECK(err(101) / err(201) > 3.0);
    CHECK(err(101) / err(201) < 5.0);
  }
}

TEST_CASE("Jacobian of the scalar problem matches finite differences") {
  const ModelParams p = baseline();
  const Gamma g2 = Gamma::finite(2.0);
  const Grid g(31, p.length, p.x_left);
  const ScalarProblem prob(p, g2, g);
  std::vector<double> v(g.n);
  for (int i = 0; i < g.n; ++i) v[i] = 0.4 + 0.1 * std::sin(3.0 * i);
  BandedMatrix jac(g.n, 1, 1);
  prob.jacobian(v, 0.03, jac);
  const double eps = 1e-6, scale = jac.inf_norm();
  std::vector<double> rp(g.n), rm(g.n);
  for (int col = 0; col < g.n; ++col) {
    const double save = v[col];
    v[col] = save + eps;
    prob.residual(v, 0.03, rp);
    v[col] = save - eps;
    prob.residual(v, 0.03, rm);
    v[col] = save;
    for (int row = std::max(0, col - 1); row <= std::min(g.n - 1, col + 1); ++row)
      CHECK(jac.at(row, col) ==
            Catch::Approx((rp[row] - rm[row]) / (2 * eps)).margin(1e-6 * scale));
  }
}

TEST_CASE("scalar branch onsets") {
  const ModelParams p = baseline();
  const Gamma g2 = Gamma::finite(2.0);
  const Grid g(201, p.length, p.x_left);
  StepControls controls;
  controls.d2_floor = 0.002;
  controls.ds_init = 0.005;
  controls.ds_max = 0.02;
  controls.max_points = 400;

  const Branch b1 = trace_scalar_branch(p, g2, 1, -1, 0.05, g, controls);
  CHECK(b1.termination == Termination::d2_floor);
  CHECK(b1.points.front().d2 == Catch::Approx(0.0486605918212 * 0.98).epsilon(1e-6));

  const auto onset = extrapolate_onset(b1);
  REQUIRE(onset.has_value());
  CHECK(*onset == Catch::Approx(0.0486605918212).epsilon(0.02));
}

TEST_CASE("shooting oracle") {
  const ModelParams p = baseline();
  const Gamma g2 = Gamma::finite(2.0);
  const LimitCoefficients lc = limit_coefficients(p, g2);

  SECTION("equilibrium initial value gives the constant profile") {
    const Grid g(101, p.length, p.x_left);
    const auto shot = detail::shoot(lc.d_eff(0.03), lc.xi_star, 0.5, g, 0.5, nullptr, 8);
    CHECK(std::abs(shot.end_slope) < 1e-12);
  }

  SECTION("above the first onset only the constant solution exists") {
    const Grid g(101, p.length, p.x_left);
    const ShootingResult r = shooting_oracle(lc.d_eff(0.055), lc.xi_star, 0.5, g, 0);
    CHECK_FALSE(r.found);
  }

  SECTION("monotone mode-1 profile below the onset") {
    const Grid g(201, p.length, p.x_left);
    const ShootingResult r = shooting_oracle(lc.d_eff(0.03), lc.xi_star, 0.5, g, 0);
    REQUIRE(r.found);
    CHECK(r.eta < 0.5);
    CHECK(r.profile.front() == Catch::Approx(r.eta));
    CHECK(std::abs(r.profile.back() - 0.5) > 0.05);  // genuinely nonconstant
    for (int i = 1; i < g.n; ++i) CHECK(r.profile[i] >= r.profile[i - 1] - 1e-12);
  }
}

TEST_CASE("shooting and continuation agree at matched d2") {
  const ModelParams p = baseline();
  const Gamma g2 = Gamma::finite(2.0);
  const Grid g(801, p.length, p.x_left);
  StepControls controls;
  controls.d2_floor = 0.025;
  controls.ds_init = 0.005;
  controls.ds_max = 0.02;
  controls.max_points = 500;
  controls.newton.tol = 1e-10;
  const Branch br = trace_scalar_branch(p, g2, 1, -1, 0.05, g, controls);
  REQUIRE(br.termination == Termination::d2_floor);

  // land exactly on d2 = 0.03 by correcting the nearest branch point
  const double target = 0.03;
  const ScalarProblem prob(p, g2, g);
  std::size_t nearest = 0;
  for (std::size_t k = 0; k < br.points.size(); ++k)
    if (std::abs(br.points[k].d2 - target) < std::abs(br.points[nearest].d2 - target)) nearest = k;
  std::vector<double> v = br.points[nearest].x;
  NewtonOptions opt;
  opt.tol = 1e-10;
  const NewtonReport rep = newton_solve(prob, target, v, opt);
  REQUIRE(rep.converged);

  const LimitCoefficients lc = limit_coefficients(p, g2);
  const ShootingResult shot = shooting_oracle(lc.d_eff(target), lc.xi_star, 0.5, g, 0);
  REQUIRE(shot.found);
  double diff = 0.0;
  for (int i = 0; i < g.n; ++i) diff = std::max(diff, std::abs(shot.profile[i] - v[i]));
  CHECK(diff <= 1e-4);
}

TEST_CASE("branch distances") {
  const ModelParams p = baseline();
  const Gamma g2 = Gamma::finite(2.0);
  const Grid g(201, p.length, p.x_left);
  StepControls controls;
  controls.d2_floor = 0.002;
  controls.ds_init = 0.01;
  controls.ds_max = 0.05;
  controls.max_points = 400;

  const Branch scalar = trace_scalar_branch(p, g2, 1, -1, 0.05, g, controls);

  SECTION("identical branches have zero distance") {
    const BranchDistance d = branch_distance(scalar, scalar);
    CHECK(d.hausdorff == Catch::Approx(0.0).margin(1e-12));
    CHECK(d.onset_gap == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("the strong-flux branch sits closer to the limit") {
    auto system_branch = [&](double s) {
      const ModelParams ps = p.with_flux(2.0 * s, s);
      const SwitchResult sw = switch_branch(1, -1, 0.05, ps, g);
      SystemProblem prob(ps, g);
      BranchSeed seed;
      seed.x = sw.point.x;
      seed.d2 = sw.point.d2;
      seed.direction_hint = switch_direction_hint(sw, -1);
      seed.id = "G1u";
      seed.j_origin = 1;
      seed.sign = -1;
      return continue_branch(prob, seed, controls);
    };
    const BranchDistance weak = branch_distance(system_branch(1.0), scalar);
    const BranchDistance strong = branch_distance(system_branch(25.0), scalar);
    CHECK(strong.hausdorff < weak.hausdorff);
  }

  SECTION("empty branches are rejected") {
    Branch empty;
    CHECK_THROWS_AS(branch_distance(empty, scalar), std::invalid_argument);
  }
}

TEST_CASE("ratio defect profile") {
  const ModelParams p = baseline();
  const Grid g(201, p.length, p.x_left);
  StepControls controls;
  controls.d2_floor = 0.01;
  controls.max_points = 120;

  SECTION("constant state has zero defect") {
    SystemProblem prob(p, g);
    Branch br;
    BranchPoint pt;
    pt.x = prob.trivial_state();
    pt.m = prob.measure(pt.x);
    br.points.push_back(pt);
    const RatioDefectProfile rd = ratio_defect_profile(br);
    CHECK(rd.max == Catch::Approx(0.0).margin(1e-14));
  }

  SECTION("defect is invariant under reflection") {
    const SwitchResult sw = switch_branch(1, -1, 0.05, p, g);
    SystemProblem prob(p, g);
    const PointMeasures m1 = prob.measure(sw.point.x);
    const std::vector<double> xr = pack(reflect(unpack(sw.point.x)));
    const PointMeasures m2 = prob.measure(xr);
    CHECK(m1.ratio_defect == Catch::Approx(m2.ratio_defect).margin(1e-14));
  }

  SECTION("defect maxima fall along the flux ray", "[slow]") {
    double prev = 1e9;
    for (double s : {1.0, 5.0, 25.0}) {
      const ModelParams ps = p.with_flux(2.0 * s, s);
      const SwitchResult sw = switch_branch(1, -1, 0.05, ps, g);
      SystemProblem prob(ps, g);
      BranchSeed seed;
      seed.x = sw.point.x;
      seed.d2 = sw.point.d2;
      seed.direction_hint = switch_direction_hint(sw, -1);
      seed.id = "G1u";
      seed.j_origin = 1;
      seed.sign = -1;
      const Branch br = continue_branch(prob, seed, controls);
      const double m = ratio_defect_profile(br).max;
      CHECK(m < prev);
      prev = m;
    }
  }
}
