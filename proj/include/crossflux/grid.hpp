#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace crossflux {

// Uniform vertex-centered grid on [x_left, x_left + length].
struct Grid {
  int n;
  double h;
  double x_left;
  double length;

  Grid(int n_, double length_, double x_left_)
      : n(n_), h(length_ / (n_ - 1)), x_left(x_left_), length(length_) {
    if (n_ < 3) throw std::invalid_argument("Grid: need at least 3 nodes");
    if (!(length_ > 0.0)) throw std::invalid_argument("Grid: length must be positive");
  }

  double node(int i) const { return x_left + i * h; }
  double x_right() const { return x_left + length; }
  // control-volume width; boundary nodes own half cells
  double cell_width(int i) const { return (i == 0 || i == n - 1) ? 0.5 * h : h; }
};

// Nodal values of the two species; the continuation unknown.
struct StateVector {
  std::vector<double> u, v;

  StateVector() = default;
  StateVector(std::vector<double> u_, std::vector<double> v_) : u(std::move(u_)), v(std::move(v_)) {
    if (u.size() != v.size()) throw std::invalid_argument("StateVector: component size mismatch");
  }
  static StateVector constant(int n, double cu, double cv) {
    return StateVector(std::vector<double>(n, cu), std::vector<double>(n, cv));
  }

  int n() const { return static_cast<int>(u.size()); }

  double min_value() const {
    double m = u.empty() ? 0.0 : u[0];
    for (double x : u) m = std::min(m, x);
    for (double x : v) m = std::min(m, x);
    return m;
  }
};

// Interleaved packing (u0, v0, u1, v1, ...) keeps the Jacobian block
// tridiagonal with bandwidth 3.
inline std::vector<double> pack(const StateVector& s) {
  std::vector<double> x(2 * s.u.size());
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    x[2 * i] = s.u[i];
    x[2 * i + 1] = s.v[i];
  }
  return x;
}

inline StateVector unpack(std::span<const double> x) {
  assert(x.size() % 2 == 0);
  const std::size_t n = x.size() / 2;
  StateVector s{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.u[i] = x[2 * i];
    s.v[i] = x[2 * i + 1];
  }
  return s;
}

// x -> -x image of a state (grids are symmetric about the midpoint)
inline StateVector reflect(const StateVector& s) {
  StateVector r = s;
  std::reverse(r.u.begin(), r.u.end());
  std::reverse(r.v.begin(), r.v.end());
  return r;
}

inline double sup_norm(std::span<const double> w) {
  double m = 0.0;
  for (double x : w) m = std::max(m, std::abs(x));
  return m;
}

// trapezoid-rule L2 norm
inline double l2_norm(std::span<const double> w, const Grid& g) {
  assert(static_cast<int>(w.size()) == g.n);
  double s = 0.0;
  for (int i = 0; i < g.n; ++i) s += g.cell_width(i) * w[i] * w[i];
  return std::sqrt(s);
}

// forward-difference H1 seminorm
inline double h1_seminorm(std::span<const double> w, const Grid& g) {
  assert(static_cast<int>(w.size()) == g.n);
  double s = 0.0;
  for (int i = 0; i + 1 < g.n; ++i) {
    const double d = (w[i + 1] - w[i]) / g.h;
    s += g.h * d * d;
  }
  return std::sqrt(s);
}

struct StateNorms {
  double l2_u, l2_v, sup_u, sup_v, h1_u, h1_v;
};

inline StateNorms norms(const StateVector& s, const Grid& g) {
  if (s.n() != g.n) throw std::invalid_argument("norms: state/grid size mismatch");
  return StateNorms{l2_norm(s.u, g), l2_norm(s.v, g), sup_norm(s.u),
                    sup_norm(s.v),  h1_seminorm(s.u, g), h1_seminorm(s.v, g)};
}

// piecewise-linear interpolation onto a finer (or any covering) grid
inline StateVector prolong(const StateVector& s, const Grid& coarse, const Grid& fine) {
  if (s.n() != coarse.n) throw std::invalid_argument("prolong: state/grid size mismatch");
  const double slack = 1e-12 * coarse.length;
  if (fine.x_left < coarse.x_left - slack || fine.x_right() > coarse.x_right() + slack)
    throw std::invalid_argument("prolong: fine grid leaves the coarse domain");
  StateVector out(std::vector<double>(fine.n), std::vector<double>(fine.n));
  for (int i = 0; i < fine.n; ++i) {
    const double x = fine.node(i);
    double t = (x - coarse.x_left) / coarse.h;
    int cell = static_cast<int>(std::floor(t));
    cell = std::clamp(cell, 0, coarse.n - 2);
    const double w = t - cell;
    out.u[i] = (1.0 - w) * s.u[cell] + w * s.u[cell + 1];
    out.v[i] = (1.0 - w) * s.v[cell] + w * s.v[cell + 1];
  }
  return out;
}

}  // namespace crossflux
