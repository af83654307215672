#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "crossflux/grid.hpp"

namespace crossflux {

// c1/c2 < b1/b2 < a1/a2, tested with cross-multiplication so the
// comparison stays exact near the boundary of the cone.
inline bool check_weak_cooperative(double a1, double a2, double b1, double b2, double c1,
                                   double c2) {
  if (!(a1 > 0 && a2 > 0 && b1 > 0 && b2 > 0 && c1 > 0 && c2 > 0))
    throw std::invalid_argument("check_weak_cooperative: coefficients must be positive");
  return c1 * b2 < b1 * c2 && b1 * a2 < a1 * b2;
}

// All coefficients of the system plus the flux strengths and the domain.
// d2 is the bifurcation parameter; the stored value is only a reference
// point, operations that vary d2 take it explicitly.
struct ModelParams {
  double d1 = 0.004;
  double d2 = 0.05;
  double a1 = 1.0, a2 = 1.0;
  double b1 = 4.0, b2 = 5.0;
  double c1 = 2.0, c2 = 3.0;
  double alpha = 2.0, beta = 1.0;
  double length = 1.0;
  double x_left = -0.5;

  void validate() const {
    if (!(d1 > 0 && d2 > 0)) throw std::invalid_argument("ModelParams: diffusion rates must be positive");
    if (!(length > 0)) throw std::invalid_argument("ModelParams: domain length must be positive");
    if (!(alpha >= 0 && beta >= 0)) throw std::invalid_argument("ModelParams: flux strengths must be nonnegative");
    if (!check_weak_cooperative(a1, a2, b1, b2, c1, c2))
      throw std::invalid_argument("ModelParams: weak cooperative condition violated");
  }

  ModelParams with_flux(double a, double b) const {
    ModelParams p = *this;
    p.alpha = a;
    p.beta = b;
    return p;
  }

  double lambda1() const {
    const double w = std::numbers::pi / length;
    return w * w;
  }
};

struct ConstantState {
  double u_star, v_star;
  double tau_star;        // u*/v*
  double A;               // a1/a2
  double gamma_threshold; // A tau*
};

inline ConstantState constant_state(const ModelParams& p) {
  p.validate();
  const double den = p.b1 * p.c2 - p.b2 * p.c1;
  const double us = (p.a1 * p.c2 - p.a2 * p.c1) / den;
  const double vs = (p.a1 * p.b2 - p.a2 * p.b1) / den;
  const double tau = us / vs;
  const double A = p.a1 / p.a2;
  return ConstantState{us, vs, tau, A, A * tau};
}

struct ReactionTerms {
  double f, g;
};

// Defined for all real inputs; Newton iterates may leave the positive cone.
inline ReactionTerms reaction(double u, double v, const ModelParams& p) {
  return ReactionTerms{u * (p.a1 - p.b1 * u + p.c1 * v), v * (-p.a2 + p.b2 * u - p.c2 * v)};
}

struct ReactionJacobian {
  double fu, fv, gu, gv;
};

inline ReactionJacobian reaction_jacobian(double u, double v, const ModelParams& p) {
  return ReactionJacobian{p.a1 - 2.0 * p.b1 * u + p.c1 * v, p.c1 * u, p.b2 * v,
                          -p.a2 + p.b2 * u - 2.0 * p.c2 * v};
}

struct Potentials {
  double v1, v2;
};

// Potentials of the semilinear form of the system; both vanish at the
// constant state since the numerators are combinations of the reaction
// factors.
inline Potentials semilinear_potentials(double u, double v, const ModelParams& p) {
  const double den = p.d1 * p.d2 + p.d1 * p.beta * u + p.d2 * p.alpha * v;
  if (!(den > 0.0))
    throw std::domain_error("semilinear_potentials: nonpositive denominator (negative input)");
  const double ru = p.a1 - p.b1 * u + p.c1 * v;
  const double rv = -p.a2 + p.b2 * u - p.c2 * v;
  const double v1 = ((p.d2 + p.beta * u) * ru + p.alpha * v * rv) / den;
  const double v2 = ((p.d1 + p.alpha * v) * rv + p.beta * u * ru) / den;
  return Potentials{v1, v2};
}

// shared bound on |V1| and |V2|
inline double potential_bound(double u, double v, const ModelParams& p) {
  const double ru = p.a1 - p.b1 * u + p.c1 * v;
  const double rv = -p.a2 + p.b2 * u - p.c2 * v;
  return std::abs(ru) / p.d1 + std::abs(rv) / p.d2;
}

struct L2Bounds {
  double u_bound, v_bound;
};

// independent of d1, d2, alpha, beta
inline L2Bounds l2_bounds(const ModelParams& p) {
  const double den = p.b1 * p.c2 - p.b2 * p.c1;
  const double root = std::sqrt(p.length);
  return L2Bounds{p.a1 * p.c2 / den * root, p.a1 * p.b2 / den * root};
}

// Necessary condition for a nonconstant positive solution, evaluated with
// the empirical sup-norm M of the solution under test.  Returns true when
// the diffusion rates are small enough that nonconstant solutions are not
// excluded.
inline bool nonexistence_check(const ModelParams& p, double m_emp) {
  if (!(m_emp > 0.0)) throw std::invalid_argument("nonexistence_check: M must be positive");
  const double lam1 = p.lambda1();
  const double rhs1 =
      0.5 * (p.alpha + p.beta) * m_emp + (p.a1 + 0.5 * (3.0 * p.c1 + p.b2) * m_emp) / lam1;
  const double rhs2 = 0.5 * m_emp * (p.alpha + p.beta + (p.c1 + 3.0 * p.b2) / lam1);
  return p.d1 < rhs1 || p.d2 < rhs2;
}

struct HarnackRatios {
  double ratio_u, ratio_v;
};

// sup/inf per component, a diagnostic for positive solutions
inline HarnackRatios harnack_ratios(const StateVector& s) {
  if (s.n() == 0) throw std::invalid_argument("harnack_ratios: empty state");
  double min_u = s.u[0], max_u = s.u[0], min_v = s.v[0], max_v = s.v[0];
  for (int i = 0; i < s.n(); ++i) {
    min_u = std::min(min_u, s.u[i]);
    max_u = std::max(max_u, s.u[i]);
    min_v = std::min(min_v, s.v[i]);
    max_v = std::max(max_v, s.v[i]);
  }
  if (!(min_u > 0.0 && min_v > 0.0))
    throw std::domain_error("harnack_ratios: state must be strictly positive");
  return HarnackRatios{max_u / min_u, max_v / min_v};
}

}  // namespace crossflux
