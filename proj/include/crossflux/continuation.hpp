#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "crossflux/mesh.hpp"
#include "crossflux/newton.hpp"
#include "crossflux/spectral.hpp"
#include "crossflux/stability.hpp"

namespace crossflux {

struct PointMeasures {
  double l2_u = 0, l2_v = 0;
  double sup_u = 0, sup_v = 0;
  double h1_u = 0, h1_v = 0;
  double ratio_defect = 0;  // sup |u - tau* v|
  double min_node = 0;
  double amplitude = 0;  // sup distance to the constant state
};

// The steady system as seen by the Newton/continuation drivers.
class SystemProblem {
public:
  SystemProblem(const ModelParams& p, const Grid& g)
      : params_(p), grid_(g), cs_(constant_state(p)) {}

  std::size_t dof() const { return static_cast<std::size_t>(2 * grid_.n); }
  int lower_bandwidth() const { return kSystemBandwidth; }
  int upper_bandwidth() const { return kSystemBandwidth; }

  void residual(std::span<const double> x, double d2, std::span<double> out) const {
    assemble_residual_packed(x, d2, params_, grid_, out);
  }
  void jacobian(std::span<const double> x, double d2, BandedMatrix& jac) const {
    assemble_jacobian_packed(x, d2, params_, grid_, jac);
  }
  void d2_derivative(std::span<const double> x, std::span<double> out) const {
    d2_derivative_packed(x, grid_, out);
  }

  PointMeasures measure(std::span<const double> x) const {
    const StateVector s = unpack(x);
    const StateNorms nn = norms(s, grid_);
    PointMeasures m;
    m.l2_u = nn.l2_u;
    m.l2_v = nn.l2_v;
    m.sup_u = nn.sup_u;
    m.sup_v = nn.sup_v;
    m.h1_u = nn.h1_u;
    m.h1_v = nn.h1_v;
    m.min_node = s.min_value();
    for (int i = 0; i < s.n(); ++i) {
      m.ratio_defect = std::max(m.ratio_defect, std::abs(s.u[i] - cs_.tau_star * s.v[i]));
      m.amplitude = std::max(m.amplitude, std::max(std::abs(s.u[i] - cs_.u_star),
                                                   std::abs(s.v[i] - cs_.v_star)));
    }
    return m;
  }

  std::vector<double> trivial_state() const {
    return pack(StateVector::constant(grid_.n, cs_.u_star, cs_.v_star));
  }

  const ModelParams& params() const { return params_; }
  const Grid& grid() const { return grid_; }
  const ConstantState& constant() const { return cs_; }

private:
  ModelParams params_;
  Grid grid_;
  ConstantState cs_;
};

struct BranchPoint {
  double d2 = 0;
  std::vector<double> x;  // packed state
  double s = 0;           // arclength coordinate
  PointMeasures m;
  double residual_norm = 0;
  std::optional<int> stability;
  int fold_count = 0;            // folds passed up to this point
  std::vector<double> tangent;   // dof+1 entries (state part, d2 part)
};

enum class Termination {
  d2_floor,
  d2_ceiling,
  step_failure,
  point_budget,
  fold_limit,
  amplitude_floor,
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::d2_floor: return "d2_floor";
    case Termination::d2_ceiling: return "d2_ceiling";
    case Termination::step_failure: return "step_failure";
    case Termination::point_budget: return "point_budget";
    case Termination::fold_limit: return "fold_limit";
    case Termination::amplitude_floor: return "amplitude_floor";
  }
  return "?";
}

struct Branch {
  std::string id;
  std::string family;  // "system", "limit" or "trivial"
  int j_origin = 0;
  int sign = 0;
  std::vector<BranchPoint> points;
  Termination termination = Termination::point_budget;
};

struct StepControls {
  double ds_init = 0.02;
  double ds_min = 1e-6;
  double ds_max = 0.08;
  double grow_factor = 1.3;
  int easy_iterations = 4;   // corrector iterations counted as an easy step
  int easy_before_growth = 2;
  double d2_floor = 0.002;
  std::optional<double> d2_ceiling;
  std::optional<double> amplitude_floor;
  int max_points = 600;
  int max_folds = 20;
  NewtonOptions newton{1e-10, 12, 30};
  int stability_every = 0;       // 0 = never compute stability indices
  double min_node_floor = -1e-8; // converged states below this are nonphysical
  // step-quality guards: reject steps whose corrected point strays too far
  // from the predictor or whose tangent turns too sharply, both symptoms of
  // the corrector cutting a corner onto a neighboring solution family
  double max_correction_frac = 0.5;
  double min_tangent_cos = 0.1;
};

struct BranchSeed {
  std::vector<double> x;
  double d2 = 0;
  std::vector<double> direction_hint;  // dof+1; orients the first tangent
  std::string id = "branch";
  std::string family = "system";
  int j_origin = 0;
  int sign = 0;
};

namespace detail {

// Arclength metric: state entries carry weight 1/dof so step sizes measure
// mean-square state change plus the d2 change.
inline double scaled_dot(std::span<const double> a, std::span<const double> b, std::size_t dof) {
  double sx = 0.0;
  for (std::size_t i = 0; i < dof; ++i) sx += a[i] * b[i];
  return sx / static_cast<double>(dof) + a[dof] * b[dof];
}

inline void scaled_normalize(std::vector<double>& y, std::size_t dof) {
  const double nrm = std::sqrt(scaled_dot(y, y, dof));
  if (!(nrm > 0.0)) throw std::runtime_error("continuation: zero tangent");
  for (double& x : y) x /= nrm;
}

}  // namespace detail

// First tangent at a regular branch point: solve J a = -F_d2 and normalize
// (a, 1), oriented along the caller's hint.
template <ContinuationProblem P>
std::vector<double> branch_tangent(const P& prob, std::span<const double> x, double d2,
                                   std::span<const double> hint) {
  const std::size_t n = prob.dof();
  BandedMatrix jac(n, prob.lower_bandwidth(), prob.upper_bandwidth());
  prob.jacobian(x, d2, jac);
  std::vector<double> fd2(n);
  prob.d2_derivative(x, fd2);
  std::vector<double> t(n + 1);
  try {
    BandedLU lu(jac);
    std::vector<double> a(fd2);
    for (double& z : a) z = -z;
    lu.solve_in_place(a);
    std::copy(a.begin(), a.end(), t.begin());
    t[n] = 1.0;
  } catch (const SingularMatrixError&) {
    // at a singular point fall back to the hint itself
    std::copy(hint.begin(), hint.end(), t.begin());
  }
  detail::scaled_normalize(t, n);
  if (!hint.empty() && detail::scaled_dot(t, hint, n) < 0.0)
    for (double& z : t) z = -z;
  return t;
}

namespace detail {

struct CorrectorResult {
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0;
};

// One Keller corrector: Newton on the residual augmented with the
// tangent-orthogonality constraint, solved by block elimination.
template <ContinuationProblem P>
CorrectorResult keller_correct(const P& prob, std::span<const double> tangent,
                               std::span<const double> base_x, double base_d2, double ds,
                               std::vector<double>& x, double& d2, const NewtonOptions& opt) {
  const std::size_t n = prob.dof();
  std::vector<double> r(n), fd2(n), a(n), b(n);
  BandedMatrix jac(n, prob.lower_bandwidth(), prob.upper_bandwidth());
  CorrectorResult res;
  for (int it = 0; it <= opt.max_iter; ++it) {
    prob.residual(x, d2, r);
    const double rn = sup_norm(r);
    double cn = -ds;
    for (std::size_t i = 0; i < n; ++i) cn += tangent[i] * (x[i] - base_x[i]) / n;
    cn += tangent[n] * (d2 - base_d2);
    if (rn <= opt.tol && std::abs(cn) <= 1e-10 * std::max(1.0, std::abs(ds))) {
      res.converged = true;
      res.residual_norm = rn;
      return res;
    }
    if (it == opt.max_iter) break;
    prob.jacobian(x, d2, jac);
    BandedLU lu(jac);
    prob.d2_derivative(x, fd2);
    a = fd2;
    lu.solve_in_place(a);
    b = r;
    for (double& z : b) z = -z;
    lu.solve_in_place(b);
    double ta = 0.0, tb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ta += tangent[i] * a[i];
      tb += tangent[i] * b[i];
    }
    ta /= static_cast<double>(n);
    tb /= static_cast<double>(n);
    const double denom = tangent[n] - ta;
    if (std::abs(denom) < 1e-14) break;
    const double dd2 = (-cn - tb) / denom;
    for (std::size_t i = 0; i < n; ++i) x[i] += b[i] - dd2 * a[i];
    d2 += dd2;
    ++res.iterations;
    if (!(d2 > 0.0)) break;  // left the physical parameter range
  }
  prob.residual(x, d2, r);
  res.residual_norm = sup_norm(r);
  return res;
}

}  // namespace detail

// Pseudo-arclength trace from a certified seed.  The first tangent comes
// from the bordered system at the seed (hint-oriented), later tangents from
// secants; the step length adapts to corrector effort.
template <ContinuationProblem P>
Branch continue_branch(const P& prob, const BranchSeed& seed, const StepControls& c) {
  const std::size_t n = prob.dof();
  Branch br;
  br.id = seed.id;
  br.family = seed.family;
  br.j_origin = seed.j_origin;
  br.sign = seed.sign;

  auto make_point = [&](const std::vector<double>& x, double d2, double s, double rn,
                        int folds) {
    BranchPoint pt;
    pt.d2 = d2;
    pt.x = x;
    pt.s = s;
    pt.m = prob.measure(x);
    pt.residual_norm = rn;
    pt.fold_count = folds;
    return pt;
  };

  auto maybe_stability = [&](BranchPoint& pt, std::size_t index) {
    if (c.stability_every <= 0 || index % static_cast<std::size_t>(c.stability_every) != 0)
      return;
    BandedMatrix jac(n, prob.lower_bandwidth(), prob.upper_bandwidth());
    prob.jacobian(pt.x, pt.d2, jac);
    pt.stability = count_unstable(jac);
  };

  {
    std::vector<double> r(n);
    prob.residual(seed.x, seed.d2, r);
    BranchPoint p0 = make_point(seed.x, seed.d2, 0.0, sup_norm(r), 0);
    p0.tangent = branch_tangent(prob, seed.x, seed.d2, seed.direction_hint);
    maybe_stability(p0, 0);
    br.points.push_back(std::move(p0));
  }

  double ds = c.ds_init;
  int easy_streak = 0;
  int consecutive_failures = 0;
  int folds = 0;

  while (static_cast<int>(br.points.size()) < c.max_points) {
    const BranchPoint& last = br.points.back();
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = last.x[i] + ds * last.tangent[i];
    double d2 = last.d2 + ds * last.tangent[n];

    const std::vector<double> x_pred = x;
    const double d2_pred = d2;

    detail::CorrectorResult cr;
    bool ok = false;
    try {
      cr = detail::keller_correct(prob, last.tangent, last.x, last.d2, ds, x, d2, c.newton);
      ok = cr.converged && d2 > 0.0;
    } catch (const SingularMatrixError&) {
      ok = false;
    }
    std::vector<double> t(n + 1);
    if (ok) {
      const PointMeasures m = prob.measure(x);
      if (m.min_node < c.min_node_floor) ok = false;  // nonphysical
    }
    if (ok) {
      // corner-cutting guards
      std::vector<double> corr(n + 1);
      for (std::size_t i = 0; i < n; ++i) corr[i] = x[i] - x_pred[i];
      corr[n] = d2 - d2_pred;
      const double corr_norm = std::sqrt(detail::scaled_dot(corr, corr, n));
      if (corr_norm > c.max_correction_frac * ds) ok = false;
      if (ok) {
        for (std::size_t i = 0; i < n; ++i) t[i] = x[i] - last.x[i];
        t[n] = d2 - last.d2;
        detail::scaled_normalize(t, n);
        if (detail::scaled_dot(t, last.tangent, n) < c.min_tangent_cos) ok = false;
      }
    }
    if (!ok) {
      if (ds <= c.ds_min * (1.0 + 1e-12)) {
        if (++consecutive_failures >= 2) {
          br.termination = Termination::step_failure;
          return br;
        }
      }
      ds = std::max(c.ds_min, 0.5 * ds);
      easy_streak = 0;
      continue;
    }
    consecutive_failures = 0;

    // the d2 sign of the secant tangent vs the previous tangent detects folds
    if (std::abs(t[n]) > 1e-12 && std::abs(last.tangent[n]) > 1e-12 &&
        t[n] * last.tangent[n] < 0.0)
      ++folds;

    BranchPoint pt = make_point(x, d2, last.s + ds, cr.residual_norm, folds);
    pt.tangent = std::move(t);
    maybe_stability(pt, br.points.size());
    br.points.push_back(std::move(pt));

    if (cr.iterations <= c.easy_iterations) {
      if (++easy_streak >= c.easy_before_growth) {
        ds = std::min(c.ds_max, ds * c.grow_factor);
        easy_streak = 0;
      }
    } else {
      easy_streak = 0;
    }

    const BranchPoint& now = br.points.back();
    if (now.d2 <= c.d2_floor) {
      br.termination = Termination::d2_floor;
      return br;
    }
    if (c.d2_ceiling && now.d2 >= *c.d2_ceiling) {
      br.termination = Termination::d2_ceiling;
      return br;
    }
    if (c.amplitude_floor && now.m.amplitude <= *c.amplitude_floor) {
      br.termination = Termination::amplitude_floor;
      return br;
    }
    if (folds >= c.max_folds) {
      br.termination = Termination::fold_limit;
      return br;
    }
  }
  br.termination = Termination::point_budget;
  return br;
}

// ---------------------------------------------------------------------------
// trivial-branch analysis

// For each sampled d2, the number of modes j <= j_max whose block
// determinant is negative (unstable directions of the constant state).
inline std::vector<int> trivial_branch_stability(const ModelParams& p,
                                                 std::span<const double> d2_samples, int j_max) {
  std::vector<int> counts;
  counts.reserve(d2_samples.size());
  for (double d2 : d2_samples) {
    if (!(d2 > 0.0)) throw std::invalid_argument("trivial_branch_stability: d2 must be positive");
    int c = 0;
    for (int j = 0; j <= j_max; ++j)
      if (mode_block_matrix(j, d2, p).det() < 0.0) ++c;
    counts.push_back(c);
  }
  return counts;
}

struct DetectedBifurcation {
  int j = 0;
  double d_star = 0;           // closed form
  double d_star_discrete = 0;  // det-sign root of the discrete Jacobian
  double gap = 0;              // |discrete - analytic|
};

namespace detail {

inline int trivial_jacobian_det_sign(const SystemProblem& prob, double d2) {
  const std::size_t n = prob.dof();
  BandedMatrix jac(n, prob.lower_bandwidth(), prob.upper_bandwidth());
  const std::vector<double> x = prob.trivial_state();
  prob.jacobian(x, d2, jac);
  try {
    return BandedLU(std::move(jac)).det_sign();
  } catch (const SingularMatrixError&) {
    return 0;
  }
}

}  // namespace detail

// Analytic bifurcation points in range, each verified against a sign change
// of the discrete Jacobian determinant inside a bracketing interval.
inline std::vector<DetectedBifurcation> detect_bifurcations(const ModelParams& p, const Grid& g,
                                                            double d2_lo, double d2_hi,
                                                            int j_max) {
  if (!(d2_lo > 0.0) || !(d2_hi > d2_lo))
    throw std::invalid_argument("detect_bifurcations: invalid d2 range");
  SystemProblem prob(p, g);
  std::vector<DetectedBifurcation> out;
  for (int j = 1; j <= j_max; ++j) {
    const auto ds = critical_d2(j, p);
    if (!ds || *ds < d2_lo || *ds > d2_hi) continue;
    DetectedBifurcation det;
    det.j = j;
    det.d_star = *ds;

    double lo = *ds * 0.95, hi = *ds * 1.05;
    int slo = detail::trivial_jacobian_det_sign(prob, lo);
    int shi = detail::trivial_jacobian_det_sign(prob, hi);
    for (int widen = 0; widen < 4 && slo * shi >= 0; ++widen) {
      lo *= 0.9;
      hi *= 1.1;
      slo = detail::trivial_jacobian_det_sign(prob, lo);
      shi = detail::trivial_jacobian_det_sign(prob, hi);
    }
    if (slo * shi < 0) {
      for (int it = 0; it < 80 && hi - lo > 1e-15 * *ds; ++it) {
        const double mid = 0.5 * (lo + hi);
        const int sm = detail::trivial_jacobian_det_sign(prob, mid);
        if (sm == 0) {
          lo = hi = mid;
          break;
        }
        if (sm == slo)
          lo = mid;
        else
          hi = mid;
      }
      det.d_star_discrete = 0.5 * (lo + hi);
      det.gap = std::abs(det.d_star_discrete - det.d_star);
    } else {
      det.d_star_discrete = std::numeric_limits<double>::quiet_NaN();
      det.gap = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(det);
  }
  std::sort(out.begin(), out.end(),
            [](const DetectedBifurcation& a, const DetectedBifurcation& b) {
              return a.d_star > b.d_star;
            });
  return out;
}

// ---------------------------------------------------------------------------
// branch switching

struct SwitchFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SwitchCollapse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SwitchOptions {
  double delta_rel = 0.02;  // relative detuning below the bifurcation point
  NewtonOptions newton{1e-10, 25, 30};
};

struct SwitchResult {
  BranchPoint point;
  double d_star = 0;
  double d2 = 0;
  KernelRatios ratios{};
  std::vector<double> kernel_dir;  // packed, unit amplitude
};

// Kernel-direction predictor at slightly detuned d2, corrected by Newton at
// fixed d2.  sign = -1 gives the branch whose v is increasing at the left
// end (the upper branch), sign = +1 the reflected one.
inline SwitchResult switch_branch(int j, int sign, double amplitude, const ModelParams& p,
                                  const Grid& g, const SwitchOptions& opt = {}) {
  if (!(amplitude > 0.0)) throw std::invalid_argument("switch_branch: amplitude must be positive");
  if (sign != 1 && sign != -1) throw std::invalid_argument("switch_branch: sign must be +-1");
  if (!region_membership(j, p))
    throw SwitchFailure("switch_branch: mode " + std::to_string(j) +
                        " has no bifurcation point for this flux pair");
  SystemProblem prob(p, g);
  const double d_star = *critical_d2(j, p);
  const KernelRatios kr = kernel_ratios(j, p);
  const NeumannMode mode(j, p.length, g.x_left);

  std::vector<double> kernel(prob.dof());
  for (int i = 0; i < g.n; ++i) {
    const double phi = mode(g.node(i));
    kernel[2 * i] = phi;
    kernel[2 * i + 1] = kr.kappa * phi;
  }

  const double d2 = d_star * (1.0 - opt.delta_rel);
  std::vector<double> x = prob.trivial_state();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += sign * amplitude * kernel[i];

  const NewtonReport rep = newton_solve(prob, d2, x, opt.newton);
  if (!rep.converged)
    throw SwitchFailure("switch_branch: corrector failed at mode " + std::to_string(j) +
                        "; try a smaller amplitude");
  const StateVector s = unpack(x);
  double umin = s.u[0], umax = s.u[0];
  for (double w : s.u) {
    umin = std::min(umin, w);
    umax = std::max(umax, w);
  }
  if (umax - umin <= 10.0 * opt.newton.tol)
    throw SwitchCollapse("switch_branch: corrector collapsed to the constant state at mode " +
                         std::to_string(j));
  if (s.min_value() < -1e-8)
    throw SwitchFailure("switch_branch: converged state is nonphysical (negative nodes)");

  SwitchResult res;
  res.d_star = d_star;
  res.d2 = d2;
  res.ratios = kr;
  res.kernel_dir = kernel;
  BranchPoint pt;
  pt.d2 = d2;
  pt.x = std::move(x);
  pt.s = 0.0;
  pt.m = prob.measure(pt.x);
  pt.residual_norm = rep.final_residual_norm;
  res.point = std::move(pt);
  return res;
}

// direction hint for continuing a switched branch away from (toward) the
// bifurcation point: the kernel direction with a d2 component pointing down
// (up).
inline std::vector<double> switch_direction_hint(const SwitchResult& sw, int sign,
                                                 bool toward_onset = false) {
  std::vector<double> hint(sw.kernel_dir.size() + 1);
  for (std::size_t i = 0; i < sw.kernel_dir.size(); ++i)
    hint[i] = (toward_onset ? -1.0 : 1.0) * sign * sw.kernel_dir[i];
  hint[sw.kernel_dir.size()] = toward_onset ? 0.1 : -0.1;
  return hint;
}

// ---------------------------------------------------------------------------
// per-point diagnostics

template <ContinuationProblem P>
std::optional<int> stability_index(const P& prob, std::span<const double> x, double d2) {
  BandedMatrix jac(prob.dof(), prob.lower_bandwidth(), prob.upper_bandwidth());
  prob.jacobian(x, d2, jac);
  return count_unstable(jac);
}

// Sign changes of the discrete derivative of w across interior midpoints,
// ignoring slopes below 1e-8 * sup|w|.  A mode-j profile reports j-1.
inline int node_count(std::span<const double> w, const Grid& g) {
  if (static_cast<int>(w.size()) != g.n)
    throw std::invalid_argument("node_count: state/grid size mismatch");
  const double floor = 1e-8 * sup_norm(w);
  int count = 0;
  int prev_sign = 0;
  bool any = false;
  for (int i = 0; i + 1 < g.n; ++i) {
    const double deriv = (w[i + 1] - w[i]) / g.h;
    if (std::abs(deriv) < floor) continue;
    const int sign = deriv > 0.0 ? 1 : -1;
    if (any && sign != prev_sign) ++count;
    prev_sign = sign;
    any = true;
  }
  if (!any) throw std::domain_error("node_count: state is constant, classification undefined");
  return count;
}

inline int node_count(const StateVector& s, const Grid& g) { return node_count(s.v, g); }

// Onset of a branch, extrapolated as amplitude -> 0 by fitting
// d2 = c0 + c1 a^2 + c2 a^4 over points with amplitude in [lo, hi].
inline std::optional<double> extrapolate_onset(const Branch& br, double amp_lo = 1e-4,
                                               double amp_hi = 0.15) {
  std::vector<std::pair<double, double>> pts;  // (a^2, d2)
  for (const BranchPoint& p : br.points) {
    const double a = p.m.amplitude;
    if (a >= amp_lo && a <= amp_hi) pts.emplace_back(a * a, p.d2);
  }
  if (pts.size() < 3) return std::nullopt;
  const bool quartic = pts.size() >= 5;
  const int k = quartic ? 3 : 2;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(k);
  for (const auto& [a2, d2] : pts) {
    Eigen::VectorXd row(k);
    row(0) = 1.0;
    row(1) = a2;
    if (quartic) row(2) = a2 * a2;
    ata += row * row.transpose();
    atb += row * d2;
  }
  const Eigen::VectorXd c = ata.ldlt().solve(atb);
  return c(0);
}

}  // namespace crossflux
