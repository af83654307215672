#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "crossflux/banded.hpp"
#include "crossflux/continuation.hpp"
#include "crossflux/mesh.hpp"
#include "crossflux/newton.hpp"
#include "test_helpers.hpp"

using namespace crossflux;
using testing_support::baseline;

namespace {

// dense LU with partial pivoting, the oracle for the banded solver
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i][k]) > std::abs(a[p][k])) p = i;
    std::swap(a[k], a[p]);
    std::swap(b[k], b[p]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= m * a[k][j];
      b[i] -= m * b[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    for (std::size_t j = k + 1; j < n; ++j) b[k] -= a[k][j] * b[j];
    b[k] /= a[k][k];
  }
  return b;
}

}  // namespace

TEST_CASE("banded solve: identity") {
  BandedMatrix a(6, 1, 1);
  for (std::size_t i = 0; i < 6; ++i) a.at(i, i) = 1.0;
  const std::vector<double> rhs{1, 2, 3, 4, 5, 6};
  CHECK(banded_solve(a, rhs) == rhs);
}

TEST_CASE("banded solve matches the dense oracle") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int n : {7, 40, 200}) {
    // Neumann Laplacian plus identity plus random banded noise
    BandedMatrix a(n, 2, 2);
    std::vector<std::vector<double>> dense(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = std::max(0, i - 2); j <= std::min(n - 1, i + 2); ++j) {
        double v = 0.3 * unit(rng);
        if (j == i) v += 2.0;
        if (std::abs(i - j) == 1) v -= 1.0;
        a.at(i, j) = v;
        dense[i][j] = v;
      }
    std::vector<double> rhs(n, 1.0);
    const std::vector<double> x = banded_solve(a, rhs);
    const std::vector<double> y = dense_solve(dense, rhs);
    double xn = 0.0;
    for (double w : x) xn = std::max(xn, std::abs(w));
    for (int i = 0; i < n; ++i) CHECK(x[i] == Catch::Approx(y[i]).margin(1e-10 * (1.0 + xn)));

    // residual certificate: ||Ax - b|| <= 1e-10 (||A|| ||x|| + ||b||)
    std::vector<double> ax(n);
    a.multiply(x, ax);
    double res = 0.0;
    for (int i = 0; i < n; ++i) res = std::max(res, std::abs(ax[i] - rhs[i]));
    CHECK(res <= 1e-10 * (a.inf_norm() * xn + 1.0));
  }
}

TEST_CASE("banded solve reports singular matrices with the pivot index") {
  BandedMatrix a(5, 1, 1);
  for (std::size_t i = 0; i < 5; ++i)
    if (i != 2) a.at(i, i) = 1.0;
  // row 2 left identically zero
  try {
    banded_solve(a, std::vector<double>(5, 1.0));
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.pivot_index == 2);
  }
}

TEST_CASE("banded LU determinant sign and magnitude") {
  BandedMatrix a(3, 1, 1);
  a.at(0, 0) = 2;
  a.at(1, 1) = -3;
  a.at(2, 2) = 4;
  a.at(0, 1) = 1;
  a.at(1, 0) = 1;
  const BandedLU lu(a);
  // det = (2*-3 - 1) * 4 = -28
  CHECK(lu.det_sign() == -1);
  CHECK(lu.log_abs_det() == Catch::Approx(std::log(28.0)).epsilon(1e-12));
}

TEST_CASE("Newton on the steady system") {
  const ModelParams p = baseline();
  const Grid g(201, p.length, p.x_left);
  const SystemProblem prob(p, g);
  const ConstantState cs = constant_state(p);

  SECTION("exact constant state converges immediately") {
    std::vector<double> x = prob.trivial_state();
    const NewtonReport rep = newton_solve(prob, 0.05, x);
    CHECK(rep.converged);
    CHECK(rep.iterations <= 1);
  }

  SECTION("kernel perturbation lands on a nonconstant solution") {
    const double ds = *critical_d2(1, p);
    const KernelRatios kr = kernel_ratios(1, p);
    const NeumannMode mode(1, p.length, g.x_left);
    std::vector<double> x = prob.trivial_state();
    for (int i = 0; i < g.n; ++i) {
      x[2 * i] += 0.05 * mode(g.node(i));
      x[2 * i + 1] += 0.05 * kr.kappa * mode(g.node(i));
    }
    const NewtonReport rep = newton_solve(prob, 0.9 * ds, x);
    REQUIRE(rep.converged);
    CHECK(rep.final_residual_norm <= 1e-10);
    const StateVector s = unpack(x);
    double umin = s.u[0], umax = s.u[0];
    for (double w : s.u) {
      umin = std::min(umin, w);
      umax = std::max(umax, w);
    }
    CHECK(umax - umin > 1e-9);  // genuinely nonconstant
    CHECK(s.min_value() > 0.0);
    // u stays monotone for the first mode: its derivative never changes sign
    CHECK(node_count(s.u, g) == 0);
    CHECK(node_count(s, g) == 0);

    SECTION("local quadratic convergence toward the solution") {
      const std::vector<double> sol = x;
      std::vector<double> y = sol;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += 1e-3 * std::sin(0.1 * i);
      std::vector<double> errs;
      for (int it = 0; it < 4; ++it) {
        double e = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) e = std::max(e, std::abs(y[i] - sol[i]));
        errs.push_back(e);
        NewtonOptions one;
        one.max_iter = 1;
        one.tol = 0.0;  // force exactly one step
        newton_solve(prob, 0.9 * ds, y, one);
      }
      // e_{k+1} <= C e_k^2 over the last steps, well above roundoff
      CHECK(errs[1] < 0.2 * errs[0]);
      CHECK(errs[2] < 10.0 * errs[1] * errs[1] / errs[0]);
    }
  }

  SECTION("far initial data never silently returns a bad state") {
    std::vector<double> x(prob.dof(), 100.0);
    const NewtonReport rep = newton_solve(prob, 0.05, x);
    if (rep.converged) {
      std::vector<double> r(prob.dof());
      prob.residual(x, 0.05, r);
      CHECK(sup_norm(r) <= 1e-10);
    } else {
      CHECK(rep.final_residual_norm > 1e-10);
    }
  }
}
