#pragma once

#include <cassert>
#include <span>
#include <stdexcept>
#include <vector>

#include "crossflux/banded.hpp"
#include "crossflux/grid.hpp"
#include "crossflux/model.hpp"

namespace crossflux {

// Conservative finite differences for the steady system in divergence form:
//   d/dx[(d1 + alpha v) u' - alpha u v'] + u(a1 - b1 u + c1 v) = 0
//   d/dx[(d2 + beta  u) v' - beta  v u'] + v(-a2 + b2 u - c2 v) = 0
// with zero flux through the boundary half-edges.  Unknowns and residual
// rows are interleaved (u0, v0, u1, v1, ...), so the Jacobian has lower and
// upper bandwidth 3.

inline constexpr int kSystemBandwidth = 3;

namespace detail {

struct EdgeFlux {
  double fu, fv;
};

inline EdgeFlux edge_flux(double ul, double ur, double vl, double vr, double d2,
                          const ModelParams& p, double h) {
  const double um = 0.5 * (ul + ur);
  const double vm = 0.5 * (vl + vr);
  const double du = (ur - ul) / h;
  const double dv = (vr - vl) / h;
  return EdgeFlux{(p.d1 + p.alpha * vm) * du - p.alpha * um * dv,
                  (d2 + p.beta * um) * dv - p.beta * vm * du};
}

}  // namespace detail

inline void assemble_residual_packed(std::span<const double> x, double d2, const ModelParams& p,
                                     const Grid& g, std::span<double> out) {
  const int n = g.n;
  if (x.size() != static_cast<std::size_t>(2 * n) || out.size() != x.size())
    throw std::invalid_argument("assemble_residual: size mismatch");
  const double h = g.h;
  double left_fu = 0.0, left_fv = 0.0;  // zero flux through the left boundary
  for (int i = 0; i < n; ++i) {
    double right_fu = 0.0, right_fv = 0.0;
    if (i < n - 1) {
      const auto e = detail::edge_flux(x[2 * i], x[2 * i + 2], x[2 * i + 1], x[2 * i + 3], d2, p, h);
      right_fu = e.fu;
      right_fv = e.fv;
    }
    const double w = g.cell_width(i);
    const ReactionTerms r = reaction(x[2 * i], x[2 * i + 1], p);
    out[2 * i] = (right_fu - left_fu) / w + r.f;
    out[2 * i + 1] = (right_fv - left_fv) / w + r.g;
    left_fu = right_fu;
    left_fv = right_fv;
  }
}

inline std::vector<double> assemble_residual(const StateVector& s, double d2,
                                             const ModelParams& p, const Grid& g) {
  if (s.n() != g.n) throw std::invalid_argument("assemble_residual: state/grid size mismatch");
  std::vector<double> x = pack(s), out(x.size());
  assemble_residual_packed(x, d2, p, g, out);
  return out;
}

// Exact derivative of the residual with respect to the nodal unknowns.
inline void assemble_jacobian_packed(std::span<const double> x, double d2, const ModelParams& p,
                                     const Grid& g, BandedMatrix& jac) {
  const int n = g.n;
  if (x.size() != static_cast<std::size_t>(2 * n) || jac.size() != x.size() ||
      jac.lower_bandwidth() < kSystemBandwidth || jac.upper_bandwidth() < kSystemBandwidth)
    throw std::invalid_argument("assemble_jacobian: size mismatch");
  jac.clear();
  const double h = g.h;

  // flux derivatives per edge e (between nodes e and e+1):
  //   d fu / d(ul, ur, vl, vr) and d fv / d(ul, ur, vl, vr)
  for (int e = 0; e < n - 1; ++e) {
    const double ul = x[2 * e], ur = x[2 * e + 2];
    const double vl = x[2 * e + 1], vr = x[2 * e + 3];
    const double um = 0.5 * (ul + ur), vm = 0.5 * (vl + vr);
    const double du = (ur - ul) / h, dv = (vr - vl) / h;

    const double fu_ul = -(p.d1 + p.alpha * vm) / h - 0.5 * p.alpha * dv;
    const double fu_ur = (p.d1 + p.alpha * vm) / h - 0.5 * p.alpha * dv;
    const double fu_vl = 0.5 * p.alpha * du + p.alpha * um / h;
    const double fu_vr = 0.5 * p.alpha * du - p.alpha * um / h;

    const double fv_vl = -(d2 + p.beta * um) / h - 0.5 * p.beta * du;
    const double fv_vr = (d2 + p.beta * um) / h - 0.5 * p.beta * du;
    const double fv_ul = 0.5 * p.beta * dv + p.beta * vm / h;
    const double fv_ur = 0.5 * p.beta * dv - p.beta * vm / h;

    // edge flux enters row e with +1/w(e) and row e+1 with -1/w(e+1)
    const double wl = g.cell_width(e), wr = g.cell_width(e + 1);
    const int ru_l = 2 * e, rv_l = 2 * e + 1, ru_r = 2 * e + 2, rv_r = 2 * e + 3;

    jac.at(ru_l, 2 * e) += fu_ul / wl;
    jac.at(ru_l, 2 * e + 2) += fu_ur / wl;
    jac.at(ru_l, 2 * e + 1) += fu_vl / wl;
    jac.at(ru_l, 2 * e + 3) += fu_vr / wl;

    jac.at(rv_l, 2 * e + 1) += fv_vl / wl;
    jac.at(rv_l, 2 * e + 3) += fv_vr / wl;
    jac.at(rv_l, 2 * e) += fv_ul / wl;
    jac.at(rv_l, 2 * e + 2) += fv_ur / wl;

    jac.at(ru_r, 2 * e) -= fu_ul / wr;
    jac.at(ru_r, 2 * e + 2) -= fu_ur / wr;
    jac.at(ru_r, 2 * e + 1) -= fu_vl / wr;
    jac.at(ru_r, 2 * e + 3) -= fu_vr / wr;

    jac.at(rv_r, 2 * e + 1) -= fv_vl / wr;
    jac.at(rv_r, 2 * e + 3) -= fv_vr / wr;
    jac.at(rv_r, 2 * e) -= fv_ul / wr;
    jac.at(rv_r, 2 * e + 2) -= fv_ur / wr;
  }

  for (int i = 0; i < n; ++i) {
    const ReactionJacobian rj = reaction_jacobian(x[2 * i], x[2 * i + 1], p);
    jac.at(2 * i, 2 * i) += rj.fu;
    jac.at(2 * i, 2 * i + 1) += rj.fv;
    jac.at(2 * i + 1, 2 * i) += rj.gu;
    jac.at(2 * i + 1, 2 * i + 1) += rj.gv;
  }
}

inline BandedMatrix assemble_jacobian(const StateVector& s, double d2, const ModelParams& p,
                                      const Grid& g) {
  std::vector<double> x = pack(s);
  BandedMatrix jac(x.size(), kSystemBandwidth, kSystemBandwidth);
  assemble_jacobian_packed(x, d2, p, g, jac);
  return jac;
}

// d(residual)/d(d2): the discrete Laplacian of v in the v rows, zero in u rows.
inline void d2_derivative_packed(std::span<const double> x, const Grid& g, std::span<double> out) {
  const int n = g.n;
  if (x.size() != static_cast<std::size_t>(2 * n) || out.size() != x.size())
    throw std::invalid_argument("d2_derivative: size mismatch");
  const double h = g.h;
  double left = 0.0;
  for (int i = 0; i < n; ++i) {
    const double right = (i < n - 1) ? (x[2 * i + 3] - x[2 * i + 1]) / h : 0.0;
    out[2 * i] = 0.0;
    out[2 * i + 1] = (right - left) / g.cell_width(i);
    left = right;
  }
}

inline std::vector<double> d2_derivative(const StateVector& s, const Grid& g) {
  std::vector<double> x = pack(s), out(x.size());
  d2_derivative_packed(x, g, out);
  return out;
}

// Linear operator for the semi-implicit time stepper: the full flux block
// with the coefficient factors frozen at the given state.  Applying it to
// the frozen state itself reproduces the nonlinear flux divergence, so
// steady states are exact fixed points of the stepper.
inline BandedMatrix frozen_flux_matrix(const StateVector& frozen, double d2,
                                       const ModelParams& p, const Grid& g) {
  const int n = g.n;
  if (frozen.n() != n) throw std::invalid_argument("frozen_flux_matrix: size mismatch");
  BandedMatrix op(static_cast<std::size_t>(2 * n), kSystemBandwidth, kSystemBandwidth);
  const double h = g.h;
  for (int e = 0; e < n - 1; ++e) {
    const double um = 0.5 * (frozen.u[e] + frozen.u[e + 1]);
    const double vm = 0.5 * (frozen.v[e] + frozen.v[e + 1]);
    const double cu = (p.d1 + p.alpha * vm) / h;  // coefficient of u' in the u flux
    const double au = p.alpha * um / h;           // coefficient of v' in the u flux
    const double cv = (d2 + p.beta * um) / h;
    const double av = p.beta * vm / h;
    const double wl = g.cell_width(e), wr = g.cell_width(e + 1);
    const int ul = 2 * e, vl = 2 * e + 1, ur = 2 * e + 2, vr = 2 * e + 3;

    // u flux: cu (ur - ul) - au (vr - vl)
    op.at(ul, ul) += -cu / wl;
    op.at(ul, ur) += cu / wl;
    op.at(ul, vl) += au / wl;
    op.at(ul, vr) += -au / wl;
    op.at(ur, ul) -= -cu / wr;
    op.at(ur, ur) -= cu / wr;
    op.at(ur, vl) -= au / wr;
    op.at(ur, vr) -= -au / wr;

    // v flux: cv (vr - vl) - av (ur - ul)
    op.at(vl, vl) += -cv / wl;
    op.at(vl, vr) += cv / wl;
    op.at(vl, ul) += av / wl;
    op.at(vl, ur) += -av / wl;
    op.at(vr, vl) -= -cv / wr;
    op.at(vr, vr) -= cv / wr;
    op.at(vr, ul) -= av / wr;
    op.at(vr, ur) -= -av / wr;
  }
  return op;
}

}  // namespace crossflux
