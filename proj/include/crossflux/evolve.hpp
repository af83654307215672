#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crossflux/mesh.hpp"

namespace crossflux {

struct PositivityViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One semi-implicit step: the full flux operator is treated implicitly with
// coefficients frozen at the current state, the reaction terms explicitly.
//   (I - dt L(w)) w_next = w + dt R(w)
inline StateVector step_imex(const StateVector& s, double dt, double d2, const ModelParams& p,
                             const Grid& g, bool include_reaction = true) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_imex: dt must be positive");
  const std::size_t dof = static_cast<std::size_t>(2 * g.n);
  BandedMatrix flux = frozen_flux_matrix(s, d2, p, g);
  BandedMatrix m(dof, kSystemBandwidth, kSystemBandwidth);
  for (std::size_t i = 0; i < dof; ++i) {
    const std::size_t j0 = i > static_cast<std::size_t>(kSystemBandwidth)
                               ? i - kSystemBandwidth
                               : 0;
    const std::size_t j1 = std::min(dof - 1, i + static_cast<std::size_t>(kSystemBandwidth));
    for (std::size_t j = j0; j <= j1; ++j) m.at(i, j) = -dt * flux.at(i, j);
    m.at(i, i) += 1.0;
  }
  std::vector<double> rhs = pack(s);
  if (include_reaction) {
    for (int i = 0; i < g.n; ++i) {
      const ReactionTerms r = reaction(s.u[i], s.v[i], p);
      rhs[2 * i] += dt * r.f;
      rhs[2 * i + 1] += dt * r.g;
    }
  }
  BandedLU lu(std::move(m));
  lu.solve_in_place(rhs);
  StateVector next = unpack(rhs);
  if (next.min_value() < -1e-6)
    throw PositivityViolation("step_imex: negative nodal value after step");
  return next;
}

enum class EvolveTermination { steady, blowup, time_budget };

inline const char* to_string(EvolveTermination t) {
  switch (t) {
    case EvolveTermination::steady: return "steady";
    case EvolveTermination::blowup: return "blowup";
    case EvolveTermination::time_budget: return "time_budget";
  }
  return "?";
}

struct EvolveControls {
  double dt = 0.01;
  double dt_min = 1e-8;
  double dt_max = 0.25;
  double t_max = 600.0;
  double steady_tol = 1e-8;   // on the discrete time derivative, sup norm
  double blowup_sup = 1e3;
  int grow_every = 10;        // accepted steps between dt growth
  double grow_factor = 1.2;
  int snapshot_stride = 50;
  bool include_reaction = true;
};

struct EvolutionRun {
  std::vector<std::pair<double, StateVector>> snapshots;  // (t, state)
  std::vector<std::pair<double, double>> distance_history;  // (t, sup dist to constant)
  EvolveTermination termination = EvolveTermination::time_budget;
  int accepted = 0;
  int rejected = 0;
  double final_time = 0;
  double final_distance = 0;
  double final_elliptic_residual = 0;
};

inline double distance_to_constant(const StateVector& s, const ConstantState& cs) {
  double d = 0.0;
  for (int i = 0; i < s.n(); ++i) {
    d = std::max(d, std::abs(s.u[i] - cs.u_star));
    d = std::max(d, std::abs(s.v[i] - cs.v_star));
  }
  return d;
}

// Adaptive driver: halve dt on positivity rejection, grow gently after a
// run of accepted steps.  Steady termination additionally requires the
// elliptic residual to confirm the time derivative signal.
inline EvolutionRun evolve(const StateVector& s0, double d2, const ModelParams& p, const Grid& g,
                           const EvolveControls& c = {}) {
  EvolutionRun run;
  const ConstantState cs = constant_state(p);
  StateVector s = s0;
  double t = 0.0;
  double dt = c.dt;
  int since_growth = 0;

  auto snapshot = [&](double time) {
    run.snapshots.emplace_back(time, s);
    run.distance_history.emplace_back(time, distance_to_constant(s, cs));
  };
  auto elliptic_residual = [&]() {
    return sup_norm(assemble_residual(s, d2, p, g));
  };
  snapshot(0.0);

  while (t < c.t_max) {
    StateVector next;
    try {
      next = step_imex(s, dt, d2, p, g, c.include_reaction);
    } catch (const PositivityViolation&) {
      ++run.rejected;
      dt *= 0.5;
      if (dt < c.dt_min)
        throw std::runtime_error("evolve: dt underflow while enforcing positivity");
      since_growth = 0;
      continue;
    }
    double rate = 0.0;
    for (int i = 0; i < g.n; ++i) {
      rate = std::max(rate, std::abs(next.u[i] - s.u[i]));
      rate = std::max(rate, std::abs(next.v[i] - s.v[i]));
    }
    rate /= dt;
    s = std::move(next);
    t += dt;
    ++run.accepted;
    if (++since_growth >= c.grow_every) {
      dt = std::min(c.dt_max, dt * c.grow_factor);
      since_growth = 0;
    }
    if (run.accepted % c.snapshot_stride == 0) snapshot(t);

    double sup = 0.0;
    for (double w : s.u) sup = std::max(sup, std::abs(w));
    for (double w : s.v) sup = std::max(sup, std::abs(w));
    if (sup > c.blowup_sup) {
      run.termination = EvolveTermination::blowup;
      break;
    }
    if (rate <= c.steady_tol) {
      const double res = elliptic_residual();
      if (res <= 10.0 * c.steady_tol) {
        run.termination = EvolveTermination::steady;
        break;
      }
    }
  }
  if (run.snapshots.empty() || run.snapshots.back().first != t) snapshot(t);
  run.final_time = t;
  run.final_distance = distance_to_constant(s, cs);
  run.final_elliptic_residual = elliptic_residual();
  return run;
}

}  // namespace crossflux
