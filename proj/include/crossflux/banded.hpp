#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crossflux {

struct SingularMatrixError : std::runtime_error {
  std::size_t pivot_index;
  explicit SingularMatrixError(std::size_t k)
      : std::runtime_error("singular banded matrix at pivot " + std::to_string(k)),
        pivot_index(k) {}
};

// General banded matrix in LAPACK-style band storage.  The storage keeps
// kl extra superdiagonal rows so an in-place LU with row pivoting fits
// without reallocation: entry (i,j) is addressable for i-j <= kl and
// j-i <= kl+ku.
class BandedMatrix {
public:
  BandedMatrix(std::size_t n, int kl, int ku)
      : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1),
        a_(static_cast<std::size_t>(ldab_) * n, 0.0) {
    assert(kl >= 0 && ku >= 0 && n > 0);
  }

  std::size_t size() const { return n_; }
  int lower_bandwidth() const { return kl_; }
  int upper_bandwidth() const { return ku_; }

  bool in_band(std::size_t i, std::size_t j) const {
    const auto di = static_cast<long>(i) - static_cast<long>(j);
    return di <= kl_ && -di <= kl_ + ku_;
  }

  double& at(std::size_t i, std::size_t j) {
    assert(i < n_ && j < n_ && in_band(i, j));
    return a_[static_cast<std::size_t>(ldab_) * j + static_cast<std::size_t>(kl_ + ku_) + i - j];
  }
  double at(std::size_t i, std::size_t j) const {
    assert(i < n_ && j < n_ && in_band(i, j));
    return a_[static_cast<std::size_t>(ldab_) * j + static_cast<std::size_t>(kl_ + ku_) + i - j];
  }
  double get(std::size_t i, std::size_t j) const {
    return in_band(i, j) ? at(i, j) : 0.0;
  }

  void clear() { std::fill(a_.begin(), a_.end(), 0.0); }

  // max absolute row sum
  double inf_norm() const {
    double best = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      const std::size_t j0 = i > static_cast<std::size_t>(kl_ + ku_) ? i - (kl_ + ku_) : 0;
      const std::size_t j1 = std::min(n_ - 1, i + static_cast<std::size_t>(kl_));
      for (std::size_t j = j0; j <= j1; ++j)
        if (in_band(i, j)) s += std::abs(at(i, j));
      best = std::max(best, s);
    }
    return best;
  }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const {
    assert(x.size() == n_ && y.size() == n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      const std::size_t j0 = i > static_cast<std::size_t>(kl_) ? i - kl_ : 0;
      const std::size_t j1 = std::min(n_ - 1, i + static_cast<std::size_t>(kl_ + ku_));
      for (std::size_t j = j0; j <= j1; ++j) s += at(i, j) * x[j];
      y[i] = s;
    }
  }

private:
  std::size_t n_;
  int kl_, ku_, ldab_;
  std::vector<double> a_;
};

// LU factorization with partial pivoting of a banded matrix; the factor
// overwrites a private copy, so the same factorization serves many solves.
class BandedLU {
public:
  explicit BandedLU(BandedMatrix a) : a_(std::move(a)), piv_(a_.size()) { factor(); }

  std::size_t size() const { return a_.size(); }

  void solve_in_place(std::span<double> b) const {
    const std::size_t n = a_.size();
    const int kl = a_.lower_bandwidth();
    const int ku = a_.upper_bandwidth();
    assert(b.size() == n);
    for (std::size_t k = 0; k < n; ++k) {
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
      const std::size_t i1 = std::min(n - 1, k + static_cast<std::size_t>(kl));
      for (std::size_t i = k + 1; i <= i1 && k + 1 <= i1; ++i) b[i] -= a_.at(i, k) * b[k];
    }
    for (std::size_t kk = n; kk-- > 0;) {
      b[kk] /= a_.at(kk, kk);
      const std::size_t i0 = kk > static_cast<std::size_t>(kl + ku) ? kk - (kl + ku) : 0;
      for (std::size_t i = i0; i < kk; ++i) b[i] -= a_.at(i, kk) * b[kk];
    }
  }

  std::vector<double> solve(std::vector<double> b) const {
    solve_in_place(b);
    return b;
  }

  // det A = sign * exp(log_abs); kept in log form since products of O(1/h^2)
  // pivots overflow long before n gets interesting.
  int det_sign() const { return det_sign_; }
  double log_abs_det() const { return log_abs_det_; }

private:
  void factor() {
    const std::size_t n = a_.size();
    const int kl = a_.lower_bandwidth();
    const int ku = a_.upper_bandwidth();
    det_sign_ = 1;
    log_abs_det_ = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(a_.at(k, k));
      const std::size_t i1 = std::min(n - 1, k + static_cast<std::size_t>(kl));
      for (std::size_t i = k + 1; i <= i1; ++i) {
        const double v = std::abs(a_.at(i, k));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      if (!(best > 1e-300)) throw SingularMatrixError(k);
      piv_[k] = p;
      const std::size_t j1 = std::min(n - 1, k + static_cast<std::size_t>(kl + ku));
      if (p != k) {
        det_sign_ = -det_sign_;
        for (std::size_t j = k; j <= j1; ++j) std::swap(a_.at(k, j), a_.at(p, j));
      }
      const double pivot = a_.at(k, k);
      det_sign_ *= (pivot < 0.0) ? -1 : 1;
      log_abs_det_ += std::log(std::abs(pivot));
      for (std::size_t i = k + 1; i <= i1 && k + 1 <= i1; ++i) {
        const double m = a_.at(i, k) / pivot;
        a_.at(i, k) = m;
        if (m == 0.0) continue;
        for (std::size_t j = k + 1; j <= j1; ++j) a_.at(i, j) -= m * a_.at(k, j);
      }
    }
  }

  BandedMatrix a_;
  std::vector<std::size_t> piv_;
  int det_sign_ = 1;
  double log_abs_det_ = 0.0;
};

inline std::vector<double> banded_solve(const BandedMatrix& a, std::vector<double> rhs) {
  if (rhs.size() != a.size()) throw std::invalid_argument("banded_solve: size mismatch");
  BandedLU lu(a);
  lu.solve_in_place(rhs);
  return rhs;
}

}  // namespace crossflux
