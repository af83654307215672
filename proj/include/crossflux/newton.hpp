#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <vector>

#include "crossflux/banded.hpp"
#include "crossflux/grid.hpp"

namespace crossflux {

// Anything the Newton and continuation drivers need from a discretized
// steady problem parameterized by d2.
template <typename P>
concept ContinuationProblem = requires(const P& p, std::span<const double> x, double d2,
                                       std::span<double> out, BandedMatrix& jac) {
  { p.dof() } -> std::convertible_to<std::size_t>;
  { p.lower_bandwidth() } -> std::convertible_to<int>;
  { p.upper_bandwidth() } -> std::convertible_to<int>;
  p.residual(x, d2, out);
  p.jacobian(x, d2, jac);
  p.d2_derivative(x, out);
};

struct NewtonOptions {
  double tol = 1e-10;  // sup norm of the residual
  int max_iter = 25;
  int max_halvings = 30;
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  double final_residual_norm = std::numeric_limits<double>::infinity();
  std::vector<double> step_norms;
  int damping_events = 0;
};

// Damped Newton iteration at fixed d2; steps are halved until the residual
// norm decreases.  x is updated in place; non-convergence is a report, not
// an exception, but a singular Jacobian propagates.
template <ContinuationProblem P>
NewtonReport newton_solve(const P& prob, double d2, std::vector<double>& x,
                          const NewtonOptions& opt = {}) {
  const std::size_t n = prob.dof();
  NewtonReport rep;
  std::vector<double> r(n), trial(n), rt(n);
  BandedMatrix jac(n, prob.lower_bandwidth(), prob.upper_bandwidth());

  prob.residual(x, d2, r);
  double rn = sup_norm(r);
  for (int it = 0; it < opt.max_iter; ++it) {
    if (rn <= opt.tol) {
      rep.converged = true;
      rep.final_residual_norm = rn;
      return rep;
    }
    prob.jacobian(x, d2, jac);
    BandedLU lu(jac);
    std::vector<double> step(r);
    for (double& s : step) s = -s;
    lu.solve_in_place(step);

    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= opt.max_halvings; ++halving) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + lambda * step[i];
      prob.residual(trial, d2, rt);
      const double rtn = sup_norm(rt);
      if (rtn < rn || rtn <= opt.tol) {
        x = trial;
        r.swap(rt);
        rn = rtn;
        rep.step_norms.push_back(lambda * sup_norm(step));
        if (halving > 0) ++rep.damping_events;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    ++rep.iterations;
    if (!accepted) {
      rep.final_residual_norm = rn;
      return rep;  // stalled: no decrease within the halving budget
    }
  }
  rep.converged = rn <= opt.tol;
  rep.final_residual_norm = rn;
  return rep;
}

}  // namespace crossflux
