#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "crossflux/banded.hpp"

namespace crossflux {

// Stability bookkeeping uses the time-evolution convention: the state is
// unstable when the residual Jacobian J has an eigenvalue with positive
// real part (the mode-block eigenvalues mu are the eigenvalues of -J, so
// "mu with negative real part" and "J-eigenvalue with positive real part"
// count the same thing).
inline constexpr double kStabilityRealTol = 1e-8;

inline Eigen::MatrixXd to_dense(const BandedMatrix& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - a.lower_bandwidth());
         j <= std::min(n - 1, i + a.lower_bandwidth() + a.upper_bandwidth()); ++j)
      m(i, j) = a.get(i, j);
  return m;
}

inline int count_unstable_dense(const BandedMatrix& jac, double re_tol = kStabilityRealTol) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(to_dense(jac), /*computeEigenvectors=*/false);
  int count = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i].real() > re_tol) ++count;
  return count;
}

namespace detail {

// modified Gram-Schmidt on the columns of V
inline bool orthonormalize(std::vector<std::vector<double>>& v) {
  for (std::size_t k = 0; k < v.size(); ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < v[k].size(); ++i) dot += v[j][i] * v[k][i];
      for (std::size_t i = 0; i < v[k].size(); ++i) v[k][i] -= dot * v[j][i];
    }
    double nrm = 0.0;
    for (double x : v[k]) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (!(nrm > 1e-14)) return false;
    for (double& x : v[k]) x /= nrm;
  }
  return true;
}

}  // namespace detail

// Inverse subspace iteration around shift 0 followed by a Rayleigh-Ritz
// projection.  Captures the m eigenvalues nearest the origin, which for
// this operator family includes every candidate unstable mode; the capture
// is validated by requiring comfortably stable Ritz values in the set, and
// an inconclusive run reports unknown instead of guessing.
inline std::optional<int> count_unstable_iterative(const BandedMatrix& jac, int subspace = 24,
                                                   double re_tol = kStabilityRealTol) {
  const std::size_t n = jac.size();
  const int m = std::min<std::size_t>(subspace, n);
  BandedMatrix shifted = jac;
  std::optional<BandedLU> lu;
  try {
    lu.emplace(shifted);
  } catch (const SingularMatrixError&) {
    // exactly singular at the shift: nudge off zero
    const double eps = 1e-10 * std::max(1.0, jac.inf_norm());
    for (std::size_t i = 0; i < n; ++i) shifted.at(i, i) += eps;
    try {
      lu.emplace(shifted);
    } catch (const SingularMatrixError&) {
      return std::nullopt;
    }
  }

  std::mt19937 rng(0x5eed);
  std::normal_distribution<double> gauss;
  std::vector<std::vector<double>> v(m, std::vector<double>(n));
  for (auto& col : v)
    for (double& x : col) x = gauss(rng);
  if (!detail::orthonormalize(v)) return std::nullopt;

  // The unstable cluster near the origin converges within a few sweeps; the
  // outer edge of the captured set keeps creeping, so convergence is judged
  // on the count itself: it must hold steady over a run of sweeps.
  int last_count = -1;
  int stable_sweeps = 0;
  double max_pos = 0.0, min_re = 0.0;
  for (int sweep = 0; sweep < 60; ++sweep) {
    for (auto& col : v) lu->solve_in_place(col);
    if (!detail::orthonormalize(v)) return std::nullopt;

    // Ritz values of J on span(V)
    Eigen::MatrixXd h(m, m);
    std::vector<double> jv(n);
    for (int k = 0; k < m; ++k) {
      jac.multiply(v[k], jv);
      for (int r = 0; r < m; ++r) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += v[r][i] * jv[i];
        h(r, k) = dot;
      }
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(h, false);
    int count = 0;
    max_pos = 0.0;
    min_re = 0.0;
    for (int i = 0; i < m; ++i) {
      const std::complex<double> z = es.eigenvalues()[i];
      if (z.real() > re_tol) {
        ++count;
        max_pos = std::max(max_pos, z.real());
      }
      min_re = std::min(min_re, z.real());
    }
    stable_sweeps = (count == last_count) ? stable_sweeps + 1 : 0;
    last_count = count;
    if (stable_sweeps >= 10) {
      // capture check: the set must reach well past the unstable cluster
      if (min_re > -10.0 * std::max(max_pos, re_tol)) return std::nullopt;
      return count;
    }
  }
  return std::nullopt;
}

inline constexpr std::size_t kDenseEigLimit = 800;  // dof, i.e. n = 400 for the system

inline std::optional<int> count_unstable(const BandedMatrix& jac,
                                         double re_tol = kStabilityRealTol) {
  if (jac.size() <= kDenseEigLimit) return count_unstable_dense(jac, re_tol);
  return count_unstable_iterative(jac, 24, re_tol);
}

// Inverse iteration for the smallest-magnitude eigenvalue and its vector;
// used for kernel diagnostics near bifurcation points.
struct SmallestEig {
  double value = 0.0;  // Rayleigh quotient (real part of the dominant small eigenvalue)
  std::vector<double> vec;
};

inline std::optional<SmallestEig> smallest_eigenpair(const BandedMatrix& jac, int max_sweeps = 200,
                                                     double tol = 1e-12) {
  const std::size_t n = jac.size();
  std::optional<BandedLU> lu;
  try {
    lu.emplace(jac);
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  }
  std::mt19937 rng(0xbadcafe);
  std::normal_distribution<double> gauss;
  std::vector<double> w(n), jw(n);
  for (double& x : w) x = gauss(rng);
  double rq_prev = 0.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    lu->solve_in_place(w);
    double nrm = 0.0;
    for (double x : w) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) return std::nullopt;
    for (double& x : w) x /= nrm;
    jac.multiply(w, jw);
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += w[i] * jw[i];
    if (sweep > 0 && std::abs(rq - rq_prev) <= tol * std::max(1.0, std::abs(rq))) {
      return SmallestEig{rq, std::move(w)};
    }
    rq_prev = rq;
  }
  return SmallestEig{rq_prev, std::move(w)};
}

}  // namespace crossflux
