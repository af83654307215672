#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossflux/continuation.hpp"
#include "crossflux/spectral.hpp"

namespace crossflux {

// The limiting single equation d_eff(d2) v'' + xi* v (v - v*) = 0 with the
// same Neumann closure as the full system, continued in d2 through the
// shared machinery.
class ScalarProblem {
public:
  ScalarProblem(const ModelParams& p, Gamma gamma, const Grid& g)
      : grid_(g), cs_(constant_state(p)), lc_(limit_coefficients(p, gamma)) {
    if (lc_.regime != LimitRegime::scalar_field)
      throw std::invalid_argument(
          "ScalarProblem: the flux ratio is not in the scalar-field regime");
  }

  std::size_t dof() const { return static_cast<std::size_t>(grid_.n); }
  int lower_bandwidth() const { return 1; }
  int upper_bandwidth() const { return 1; }

  void residual(std::span<const double> v, double d2, std::span<double> out) const {
    const int n = grid_.n;
    if (v.size() != static_cast<std::size_t>(n) || out.size() != v.size())
      throw std::invalid_argument("scalar residual: size mismatch");
    const double d = lc_.d_eff(d2);
    const double h = grid_.h;
    double left = 0.0;
    for (int i = 0; i < n; ++i) {
      const double right = (i < n - 1) ? d * (v[i + 1] - v[i]) / h : 0.0;
      out[i] = (right - left) / grid_.cell_width(i) + lc_.xi_star * v[i] * (v[i] - cs_.v_star);
      left = right;
    }
  }

  void jacobian(std::span<const double> v, double d2, BandedMatrix& jac) const {
    const int n = grid_.n;
    if (v.size() != static_cast<std::size_t>(n) || jac.size() != v.size())
      throw std::invalid_argument("scalar jacobian: size mismatch");
    jac.clear();
    const double d = lc_.d_eff(d2);
    const double h = grid_.h;
    for (int e = 0; e < n - 1; ++e) {
      const double wl = grid_.cell_width(e), wr = grid_.cell_width(e + 1);
      jac.at(e, e) += -d / (h * wl);
      jac.at(e, e + 1) += d / (h * wl);
      jac.at(e + 1, e) += d / (h * wr);
      jac.at(e + 1, e + 1) += -d / (h * wr);
    }
    for (int i = 0; i < n; ++i)
      jac.at(i, i) += lc_.xi_star * (2.0 * v[i] - cs_.v_star);
  }

  void d2_derivative(std::span<const double> v, std::span<double> out) const {
    const int n = grid_.n;
    const double h = grid_.h;
    double left = 0.0;
    for (int i = 0; i < n; ++i) {
      const double right = (i < n - 1) ? lc_.d_slope * (v[i + 1] - v[i]) / h : 0.0;
      out[i] = (right - left) / grid_.cell_width(i);
      left = right;
    }
  }

  PointMeasures measure(std::span<const double> v) const {
    PointMeasures m;
    m.l2_v = l2_norm(v, grid_);
    m.sup_v = sup_norm(v);
    m.h1_v = h1_seminorm(v, grid_);
    // the limit pair is (tau* v, v); report u measures accordingly
    m.l2_u = cs_.tau_star * m.l2_v;
    m.sup_u = cs_.tau_star * m.sup_v;
    m.h1_u = cs_.tau_star * m.h1_v;
    m.ratio_defect = 0.0;
    m.min_node = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
    for (double w : v) m.amplitude = std::max(m.amplitude, std::abs(w - cs_.v_star));
    return m;
  }

  const Grid& grid() const { return grid_; }
  const ConstantState& constant() const { return cs_; }
  const LimitCoefficients& coefficients() const { return lc_; }

private:
  Grid grid_;
  ConstantState cs_;
  LimitCoefficients lc_;
};

inline std::vector<double> scalar_residual(std::span<const double> v, double d2,
                                           const ModelParams& p, Gamma gamma, const Grid& g) {
  ScalarProblem prob(p, gamma, g);
  std::vector<double> out(v.size());
  prob.residual(v, d2, out);
  return out;
}

// Switch onto the limiting branch of mode j at its onset and trace down.
inline Branch trace_scalar_branch(const ModelParams& p, Gamma gamma, int j, int sign,
                                  double amplitude, const Grid& g, StepControls controls,
                                  double delta_rel = 0.02) {
  ScalarProblem prob(p, gamma, g);
  const auto onset = limiting_critical_d2(j, p, gamma);
  if (!onset)
    throw SwitchFailure("trace_scalar_branch: mode " + std::to_string(j) +
                        " never bifurcates in the limiting system");
  const NeumannMode mode(j, p.length, g.x_left);
  const ConstantState cs = prob.constant();

  const double d2 = *onset * (1.0 - delta_rel);
  std::vector<double> v(g.n), kernel(g.n);
  for (int i = 0; i < g.n; ++i) {
    kernel[i] = mode(g.node(i));
    v[i] = cs.v_star + sign * amplitude * kernel[i];
  }
  const NewtonReport rep = newton_solve(prob, d2, v, controls.newton);
  if (!rep.converged)
    throw SwitchFailure("trace_scalar_branch: corrector failed at mode " + std::to_string(j));
  double vmin = v[0], vmax = v[0];
  for (double w : v) {
    vmin = std::min(vmin, w);
    vmax = std::max(vmax, w);
  }
  if (vmax - vmin <= 10.0 * controls.newton.tol)
    throw SwitchCollapse("trace_scalar_branch: collapsed to the constant state at mode " +
                         std::to_string(j));

  BranchSeed seed;
  seed.x = std::move(v);
  seed.d2 = d2;
  seed.id = "S" + std::to_string(j) + (sign > 0 ? "+" : "-");
  seed.family = "limit";
  seed.j_origin = j;
  seed.sign = sign;
  seed.direction_hint.assign(g.n + 1, 0.0);
  for (int i = 0; i < g.n; ++i) seed.direction_hint[i] = sign * kernel[i];
  seed.direction_hint[g.n] = -0.1;
  return continue_branch(prob, seed, controls);
}

inline std::vector<Branch> trace_scalar_branches(const ModelParams& p, Gamma gamma,
                                                 std::span<const int> j_list, double d2_floor,
                                                 const Grid& g, StepControls controls,
                                                 double amplitude = 0.05) {
  controls.d2_floor = d2_floor;
  std::vector<Branch> out;
  for (int j : j_list)
    for (int sign : {-1, +1})
      out.push_back(trace_scalar_branch(p, gamma, j, sign, amplitude, g, controls));
  return out;
}

// ---------------------------------------------------------------------------
// shooting oracle for the limiting equation

struct ShootingResult {
  bool found = false;
  double eta = 0;               // left boundary value
  std::vector<double> profile;  // v at the grid nodes
  int interior_nodes = 0;       // sign changes of v' strictly inside
};

namespace detail {

struct ShotOutcome {
  double end_slope = 0;
  int nodes = 0;
};

// RK4 integration of v'' = -(xi/d) v (v - v*) from the left end with
// v' = 0, recording the profile at the grid nodes.
inline ShotOutcome shoot(double d_eff, double xi, double v_star, const Grid& g, double eta,
                         std::vector<double>* profile, int steps_per_cell) {
  const int cells = g.n - 1;
  const int nsteps = cells * steps_per_cell;
  const double h = g.length / nsteps;
  const auto accel = [&](double y) { return -(xi / d_eff) * y * (y - v_star); };
  double y = eta, w = 0.0;
  if (profile) {
    profile->assign(g.n, 0.0);
    (*profile)[0] = y;
  }
  ShotOutcome out;
  int prev_sign = 0;
  double max_w = 0.0;
  std::vector<double> slopes;
  slopes.reserve(nsteps);
  for (int s = 0; s < nsteps; ++s) {
    const double k1y = w, k1w = accel(y);
    const double k2y = w + 0.5 * h * k1w, k2w = accel(y + 0.5 * h * k1y);
    const double k3y = w + 0.5 * h * k2w, k3w = accel(y + 0.5 * h * k2y);
    const double k4y = w + h * k3w, k4w = accel(y + h * k3y);
    y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    if (s + 1 < nsteps) {
      slopes.push_back(w);
      max_w = std::max(max_w, std::abs(w));
    }
    if (profile && (s + 1) % steps_per_cell == 0) (*profile)[(s + 1) / steps_per_cell] = y;
  }
  const double floor = 1e-9 * std::max(max_w, 1e-30);
  for (double sw : slopes) {
    if (std::abs(sw) < floor) continue;
    const int sign = sw > 0 ? 1 : -1;
    if (prev_sign != 0 && sign != prev_sign) ++out.nodes;
    prev_sign = sign;
  }
  out.end_slope = w;
  return out;
}

}  // namespace detail

// Finds a nonconstant profile of the limiting equation with the requested
// number of interior zeros of v' by bisecting on the left boundary value.
// eta_below_vstar selects the family rising from the left end.
inline ShootingResult shooting_oracle(double d_eff, double xi_star, double v_star, const Grid& g,
                                      int target_nodes, bool eta_below_vstar = true,
                                      int steps_per_cell = 16) {
  if (!(d_eff > 0.0) || !(xi_star > 0.0))
    throw std::invalid_argument("shooting_oracle: needs scalar-field coefficients");
  ShootingResult res;
  const int scan = 400;
  const double lo = eta_below_vstar ? 1e-4 * v_star : v_star * (1.0 + 1e-4);
  const double hi = eta_below_vstar ? v_star * (1.0 - 1e-4) : 1.5 * v_star * (1.0 - 1e-6);
  double prev_eta = lo;
  auto outcome_at = [&](double eta) {
    return detail::shoot(d_eff, xi_star, v_star, g, eta, nullptr, steps_per_cell);
  };
  detail::ShotOutcome prev = outcome_at(prev_eta);
  for (int k = 1; k <= scan; ++k) {
    const double eta = lo + (hi - lo) * k / scan;
    const detail::ShotOutcome cur = outcome_at(eta);
    if (prev.end_slope * cur.end_slope < 0.0 &&
        (prev.nodes == target_nodes || cur.nodes == target_nodes)) {
      double a = prev_eta, b = eta;
      double fa = prev.end_slope;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (a + b);
        const detail::ShotOutcome m = outcome_at(mid);
        if (m.end_slope == 0.0) {
          a = b = mid;
          break;
        }
        if (fa * m.end_slope < 0.0)
          b = mid;
        else {
          a = mid;
          fa = m.end_slope;
        }
      }
      const double eta_root = 0.5 * (a + b);
      std::vector<double> profile;
      const detail::ShotOutcome fin =
          detail::shoot(d_eff, xi_star, v_star, g, eta_root, &profile, steps_per_cell);
      if (fin.nodes == target_nodes) {
        res.found = true;
        res.eta = eta_root;
        res.profile = std::move(profile);
        res.interior_nodes = fin.nodes;
        return res;
      }
    }
    prev = cur;
    prev_eta = eta;
  }
  return res;  // no-solution report
}

// ---------------------------------------------------------------------------
// branch-to-branch metrics in the (d2, measure) plane

enum class PlotMeasure { sup_v, l2_v };

inline const char* to_string(PlotMeasure m) {
  return m == PlotMeasure::sup_v ? "sup_v" : "l2_v";
}

using PlanePoint = std::array<double, 2>;

inline std::vector<PlanePoint> branch_polyline(const Branch& br, PlotMeasure measure) {
  std::vector<PlanePoint> out;
  out.reserve(br.points.size());
  for (const BranchPoint& p : br.points)
    out.push_back({p.d2, measure == PlotMeasure::sup_v ? p.m.sup_v : p.m.l2_v});
  return out;
}

namespace detail {

inline double dist2(const PlanePoint& a, const PlanePoint& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

inline double point_segment_dist2(const PlanePoint& p, const PlanePoint& a, const PlanePoint& b) {
  const double abx = b[0] - a[0], aby = b[1] - a[1];
  const double len2 = abx * abx + aby * aby;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2, 0.0, 1.0);
  const PlanePoint q{a[0] + t * abx, a[1] + t * aby};
  return dist2(p, q);
}

inline std::vector<PlanePoint> resample_by_arclength(const std::vector<PlanePoint>& poly,
                                                     int samples) {
  if (poly.size() < 2) return poly;
  std::vector<double> cum(poly.size(), 0.0);
  for (std::size_t i = 1; i < poly.size(); ++i)
    cum[i] = cum[i - 1] + std::sqrt(dist2(poly[i - 1], poly[i]));
  const double total = cum.back();
  std::vector<PlanePoint> out;
  out.reserve(samples);
  std::size_t seg = 0;
  for (int k = 0; k < samples; ++k) {
    const double target = total * k / (samples - 1);
    while (seg + 2 < poly.size() && cum[seg + 1] < target) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? (target - cum[seg]) / len : 0.0;
    out.push_back({poly[seg][0] + t * (poly[seg + 1][0] - poly[seg][0]),
                   poly[seg][1] + t * (poly[seg + 1][1] - poly[seg][1])});
  }
  return out;
}

inline double one_sided_hausdorff(const std::vector<PlanePoint>& a,
                                  const std::vector<PlanePoint>& b) {
  double worst = 0.0;
  for (const PlanePoint& p : a) {
    double best = std::numeric_limits<double>::infinity();
    if (b.size() == 1) best = dist2(p, b[0]);
    for (std::size_t i = 0; i + 1 < b.size(); ++i)
      best = std::min(best, point_segment_dist2(p, b[i], b[i + 1]));
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace detail

struct BranchDistance {
  double hausdorff_ab = 0;  // sup over a of dist to b
  double hausdorff_ba = 0;
  double hausdorff = 0;  // symmetric
  double onset_gap = 0;  // |onset(a) - onset(b)|, amplitude -> 0 extrapolations
};

inline constexpr int kResampleCount = 512;

inline BranchDistance branch_distance(const Branch& system_branch, const Branch& scalar_branch,
                                      PlotMeasure measure = PlotMeasure::sup_v) {
  if (system_branch.points.empty() || scalar_branch.points.empty())
    throw std::invalid_argument("branch_distance: empty branch");
  const auto pa =
      detail::resample_by_arclength(branch_polyline(system_branch, measure), kResampleCount);
  const auto pb =
      detail::resample_by_arclength(branch_polyline(scalar_branch, measure), kResampleCount);
  BranchDistance d;
  d.hausdorff_ab = detail::one_sided_hausdorff(pa, pb);
  d.hausdorff_ba = detail::one_sided_hausdorff(pb, pa);
  d.hausdorff = std::max(d.hausdorff_ab, d.hausdorff_ba);
  const auto oa = extrapolate_onset(system_branch);
  const auto ob = extrapolate_onset(scalar_branch);
  const double da = oa ? *oa : system_branch.points.front().d2;
  const double db = ob ? *ob : scalar_branch.points.front().d2;
  d.onset_gap = std::abs(da - db);
  return d;
}

struct RatioDefectProfile {
  std::vector<double> normalized;  // per point: sup|u - tau* v| / sup|v|
  double max = 0;
};

inline RatioDefectProfile ratio_defect_profile(const Branch& br) {
  RatioDefectProfile out;
  out.normalized.reserve(br.points.size());
  for (const BranchPoint& p : br.points) {
    const double r = p.m.sup_v > 0.0 ? p.m.ratio_defect / p.m.sup_v : 0.0;
    out.normalized.push_back(r);
    out.max = std::max(out.max, r);
  }
  return out;
}

}  // namespace crossflux
