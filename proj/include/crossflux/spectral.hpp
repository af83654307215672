#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "crossflux/model.hpp"

namespace crossflux {

inline double neumann_eigenvalue(int j, double length) {
  if (j < 0) throw std::invalid_argument("neumann_eigenvalue: j must be nonnegative");
  if (!(length > 0.0)) throw std::invalid_argument("neumann_eigenvalue: length must be positive");
  const double w = j * std::numbers::pi / length;
  return w * w;
}

// L2-normalized Neumann eigenfunction on [x_left, x_left + L]:
// Phi_0 = 1/sqrt(L), Phi_j = sqrt(2/L) cos(j pi (x - x_left)/L).
inline double neumann_eigenfunction(int j, double length, double x_left, double x) {
  if (j < 0) throw std::invalid_argument("neumann_eigenfunction: j must be nonnegative");
  const double slack = 1e-12 * length;
  if (x < x_left - slack || x > x_left + length + slack)
    throw std::domain_error("neumann_eigenfunction: x outside the domain");
  if (j == 0) return 1.0 / std::sqrt(length);
  return std::sqrt(2.0 / length) * std::cos(j * std::numbers::pi * (x - x_left) / length);
}

struct NeumannMode {
  int j;
  double lambda;
  double length;
  double x_left;

  NeumannMode(int j_, double length_, double x_left_)
      : j(j_), lambda(neumann_eigenvalue(j_, length_)), length(length_), x_left(x_left_) {}

  double operator()(double x) const { return neumann_eigenfunction(j, length, x_left, x); }
};

// 2x2 linearization block of mode j
struct ModeBlock {
  double a11, a12, a21, a22;

  double trace() const { return a11 + a22; }
  double det() const { return a11 * a22 - a12 * a21; }
  double frobenius() const {
    return std::sqrt(a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22);
  }
};

inline ModeBlock mode_block_matrix(int j, double d2, const ModelParams& p) {
  if (j < 0) throw std::invalid_argument("mode_block_matrix: j must be nonnegative");
  const ConstantState cs = constant_state(p);
  const double lam = neumann_eigenvalue(j, p.length);
  return ModeBlock{p.b1 * cs.u_star + (p.d1 + p.alpha * cs.v_star) * lam,
                   -(p.c1 + lam * p.alpha) * cs.u_star,
                   -(p.b2 + lam * p.beta) * cs.v_star,
                   p.c2 * cs.v_star + (d2 + p.beta * cs.u_star) * lam};
}

// Roots of mu^2 - tr mu + det = 0, ordered by real part then imaginary part.
inline std::pair<std::complex<double>, std::complex<double>> mode_roots(const ModeBlock& b) {
  const double tr = b.trace();
  const double disc = tr * tr - 4.0 * b.det();
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return {std::complex<double>(0.5 * (tr - r), 0.0), std::complex<double>(0.5 * (tr + r), 0.0)};
  }
  const double im = 0.5 * std::sqrt(-disc);
  return {std::complex<double>(0.5 * tr, -im), std::complex<double>(0.5 * tr, im)};
}

// Numerator of the critical-value quotient; mode j admits a bifurcation
// point iff this is positive.
inline double region_numerator(int j, const ModelParams& p) {
  const ConstantState cs = constant_state(p);
  const double lam = neumann_eigenvalue(j, p.length);
  return p.a2 * cs.v_star * lam * p.alpha - (p.a1 + p.d1 * lam) * cs.u_star * lam * p.beta -
         (p.c2 * p.d1 * lam + p.a1 * p.c2 - p.a2 * p.c1) * cs.v_star;
}

inline bool region_membership(int j, const ModelParams& p) {
  if (j < 1) throw std::invalid_argument("region_membership: defined for j >= 1");
  return region_numerator(j, p) > 0.0;
}

// d2 at which mode j's block becomes singular; absent when the flux pair
// lies outside the mode's region.
inline std::optional<double> critical_d2(int j, const ModelParams& p) {
  if (!region_membership(j, p)) return std::nullopt;
  const ConstantState cs = constant_state(p);
  const double lam = neumann_eigenvalue(j, p.length);
  const double den = ((p.d1 + p.alpha * cs.v_star) * lam + p.b1 * cs.u_star) * lam;
  return region_numerator(j, p) / den;
}

struct KernelRatios {
  double kappa;       // (1, kappa) Phi_j spans the null space at the critical d2
  double kappa_star;  // (1, kappa*) Phi_j spans the adjoint null space
};

inline KernelRatios kernel_ratios(int j, const ModelParams& p) {
  if (j < 1) throw std::invalid_argument("kernel_ratios: defined for j >= 1");
  const ConstantState cs = constant_state(p);
  const double lam = neumann_eigenvalue(j, p.length);
  const double num = p.b1 * cs.u_star + (p.d1 + p.alpha * cs.v_star) * lam;
  return KernelRatios{num / ((p.c1 + lam * p.alpha) * cs.u_star),
                      num / ((p.b2 + lam * p.beta) * cs.v_star)};
}

// Everything the analyze table needs about one mode.
struct ModeData {
  int j = 0;
  double lambda = 0.0;
  ModeBlock block{};
  double trace = 0.0;
  double det = 0.0;
  std::complex<double> mu_minus, mu_plus;
  bool in_region = false;
  std::optional<double> d_star;
  std::optional<double> kappa, kappa_star;
};

inline ModeData mode_data(int j, double d2, const ModelParams& p) {
  ModeData m;
  m.j = j;
  m.lambda = neumann_eigenvalue(j, p.length);
  m.block = mode_block_matrix(j, d2, p);
  m.trace = m.block.trace();
  m.det = m.block.det();
  const auto roots = mode_roots(m.block);
  m.mu_minus = roots.first;
  m.mu_plus = roots.second;
  if (j >= 1) {
    m.in_region = region_membership(j, p);
    m.d_star = critical_d2(j, p);
    if (m.in_region) {
      const KernelRatios k = kernel_ratios(j, p);
      m.kappa = k.kappa;
      m.kappa_star = k.kappa_star;
    }
  }
  return m;
}

struct ModeSet {
  std::vector<int> members;  // indices with region membership, ascending
  double dhat_star = 0.0;    // largest critical value, 0 when empty
  int j_max = 0;
  bool cutoff_certified = false;
};

// Enumerates the destabilizing modes up to j_max.  With beta > 0 membership
// needs lambda_j below an explicit linear bound, so the cutoff is certified
// whenever lambda_{j_max+1} clears it.  With beta = 0 the set can be
// infinite and the truncation is reported as uncertified.
inline ModeSet mode_set_and_threshold(const ModelParams& p, int j_max) {
  if (j_max < 1) throw std::invalid_argument("mode_set_and_threshold: j_max must be >= 1");
  const ConstantState cs = constant_state(p);
  ModeSet out;
  out.j_max = j_max;
  for (int j = 1; j <= j_max; ++j) {
    if (region_membership(j, p)) {
      out.members.push_back(j);
      out.dhat_star = std::max(out.dhat_star, *critical_d2(j, p));
    }
  }
  if (p.beta > 0.0) {
    const double lambda_bound = (p.a2 * cs.v_star * p.alpha / (cs.u_star * p.beta) - p.a1) / p.d1;
    out.cutoff_certified = neumann_eigenvalue(j_max + 1, p.length) > lambda_bound;
  } else {
    // membership for large j reduces to a2 alpha > c2 d1
    out.cutoff_certified = p.a2 * p.alpha <= p.c2 * p.d1;
  }
  return out;
}

// alpha/beta ratio with a representable point at infinity
struct Gamma {
  bool infinite = false;
  double value = 0.0;

  static Gamma finite(double g) {
    if (!(g >= 0.0)) throw std::invalid_argument("Gamma: ratio must be nonnegative");
    return Gamma{false, g};
  }
  static Gamma infinity() { return Gamma{true, 0.0}; }
};

enum class LimitRegime { logistic, scalar_field, degenerate };

// Coefficients of the limiting single equation d_eff v'' + xi* v (v - v*) = 0.
struct LimitCoefficients {
  LimitRegime regime = LimitRegime::degenerate;
  double xi_star = 0.0;
  double d_offset = 0.0;  // d_eff(d2) = d_offset + d_slope * d2
  double d_slope = 0.0;

  double d_eff(double d2) const { return d_offset + d_slope * d2; }
};

inline LimitCoefficients limit_coefficients(const ModelParams& p, Gamma gamma) {
  const ConstantState cs = constant_state(p);
  LimitCoefficients lc;
  if (gamma.infinite) {
    lc.xi_star = p.a2 / cs.v_star;
    lc.d_offset = 0.0;
    lc.d_slope = 1.0;
    lc.regime = LimitRegime::scalar_field;
    return lc;
  }
  lc.xi_star = (gamma.value * p.a2 - cs.tau_star * p.a1) / cs.v_star;
  lc.d_offset = cs.tau_star * p.d1;
  lc.d_slope = gamma.value;
  if (gamma.value < cs.gamma_threshold)
    lc.regime = LimitRegime::logistic;
  else if (gamma.value > cs.gamma_threshold)
    lc.regime = LimitRegime::scalar_field;
  else
    lc.regime = LimitRegime::degenerate;
  return lc;
}

// Onset of the limiting system's mode-j branch; absent when the mode never
// bifurcates.  Requires the scalar-field regime with a finite ratio.
inline std::optional<double> limiting_critical_d2(int j, const ModelParams& p, Gamma gamma) {
  if (j < 1) throw std::invalid_argument("limiting_critical_d2: j must be >= 1");
  if (gamma.infinite) throw std::invalid_argument("limiting_critical_d2: needs a finite ratio");
  const ConstantState cs = constant_state(p);
  const LimitCoefficients lc = limit_coefficients(p, gamma);
  if (lc.regime != LimitRegime::scalar_field)
    throw std::invalid_argument("limiting_critical_d2: scalar-field regime required");
  const double lam = neumann_eigenvalue(j, p.length);
  const double d = (lc.xi_star * cs.v_star / lam - cs.tau_star * p.d1) / gamma.value;
  if (!(d > 0.0)) return std::nullopt;
  return d;
}

}  // namespace crossflux
