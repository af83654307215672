#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossflux/config.hpp"
#include "crossflux/continuation.hpp"
#include "crossflux/csv.hpp"
#include "crossflux/evolve.hpp"
#include "crossflux/limit.hpp"
#include "crossflux/model.hpp"
#include "crossflux/spectral.hpp"
#include "crossflux/svg.hpp"
#include "crossflux/version.hpp"

namespace crossflux {

using json = nlohmann::ordered_json;

struct RegimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cmd_detail {

inline std::filesystem::path prepare_out_dir(const ExperimentConfig& cfg,
                                             const std::optional<std::string>& out_override) {
  const std::filesystem::path dir = out_override ? *out_override : cfg.output.dir;
  std::filesystem::create_directories(dir);
  write_text_file(dir / "resolved_config.ini", cfg.serialize());
  return dir;
}

inline Gamma flux_ratio(double alpha, double beta) {
  if (beta > 0.0) return Gamma::finite(alpha / beta);
  if (alpha > 0.0) return Gamma::infinity();
  return Gamma::finite(0.0);
}

// fixed palette keyed by mode index
inline std::string mode_color(int j) {
  switch (j % 6) {
    case 1: return "#1f4e9c";  // blue
    case 2: return "#c23b22";  // red
    case 3: return "#2e7d32";  // green
    case 4: return "#7b1fa2";
    case 5: return "#ef6c00";
    default: return "#455a64";
  }
}

inline bool branch_has_unstable(const Branch& br) {
  for (const auto& p : br.points)
    if (p.stability && *p.stability > 0) return true;
  return false;
}

inline SvgSeries branch_series(const Branch& br, PlotMeasure measure) {
  SvgSeries s;
  s.points = branch_polyline(br, measure);
  s.color = br.family == "trivial" ? "#455a64" : mode_color(br.j_origin);
  s.dashed = branch_has_unstable(br);
  s.label = br.id;
  return s;
}

// Sampled constant-state branch split into its stable and unstable parts.
inline std::vector<Branch> trivial_branch_segments(const ModelParams& p, const Grid& g,
                                                   double d2_lo, double d2_hi, int j_max,
                                                   int samples = 48) {
  const ConstantState cs = constant_state(p);
  const ModeSet ms = mode_set_and_threshold(p, j_max);
  SystemProblem prob(p, g);
  auto sample_segment = [&](double lo, double hi, const std::string& id) {
    Branch br;
    br.id = id;
    br.family = "trivial";
    br.j_origin = 0;
    if (!(hi > lo)) return br;
    for (int k = 0; k < samples; ++k) {
      const double d2 = lo + (hi - lo) * k / (samples - 1);
      BranchPoint pt;
      pt.d2 = d2;
      pt.x = prob.trivial_state();
      pt.s = static_cast<double>(k);
      pt.m = prob.measure(pt.x);
      pt.residual_norm = 0.0;
      const std::vector<double> one{d2};
      pt.stability = trivial_branch_stability(p, one, j_max)[0];
      br.points.push_back(std::move(pt));
    }
    br.termination = Termination::point_budget;
    return br;
  };
  std::vector<Branch> out;
  if (ms.dhat_star > d2_lo) {
    Branch unstable = sample_segment(d2_lo, std::min(ms.dhat_star, d2_hi), "trivial_unstable");
    if (!unstable.points.empty()) out.push_back(std::move(unstable));
  }
  if (d2_hi > ms.dhat_star) {
    Branch stable = sample_segment(std::max(ms.dhat_star, d2_lo), d2_hi, "trivial_stable");
    if (!stable.points.empty()) out.push_back(std::move(stable));
  }
  return out;
}

// run tasks on up to `threads` workers, preserving result order
template <typename Task>
void run_parallel(std::vector<Task>& tasks, int threads) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::vector<std::future<void>> futs;
  futs.reserve(tasks.size());
  std::size_t next = 0;
  while (next < tasks.size()) {
    const std::size_t batch = std::min<std::size_t>(threads, tasks.size() - next);
    for (std::size_t k = 0; k < batch; ++k)
      futs.push_back(std::async(std::launch::async, [&tasks, i = next + k] { tasks[i](); }));
    for (std::size_t k = 0; k < batch; ++k) futs[futs.size() - batch + k].get();
    next += batch;
  }
}

}  // namespace cmd_detail

// ---------------------------------------------------------------------------
// analyze: spectral table

inline int cmd_analyze(const ExperimentConfig& cfg,
                       const std::optional<std::string>& out_override = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cmd_detail::prepare_out_dir(cfg, out_override);
  const ModelParams& p = cfg.model;
  const ConstantState cs = constant_state(p);
  const Gamma gamma = cmd_detail::flux_ratio(p.alpha, p.beta);
  const LimitCoefficients lc = limit_coefficients(p, gamma);
  const ModeSet ms = mode_set_and_threshold(p, 50);

  int j_table = 10;
  for (int j : ms.members) j_table = std::max(j_table, j + 2);
  for (int j : cfg.continuation.j_list) j_table = std::max(j_table, j + 2);

  std::ostringstream csv;
  csv << "# crossflux " << kVersion << " dhat_star=" << sci(ms.dhat_star)
      << " cutoff_certified=" << (ms.cutoff_certified ? 1 : 0) << " regime="
      << (lc.regime == LimitRegime::scalar_field
              ? "scalar_field"
              : (lc.regime == LimitRegime::logistic ? "logistic" : "degenerate"))
      << "\n";
  csv << "j,lambda,member,d_star,kappa,kappa_star,d_star_limit\n";
  json jmodes = json::array();
  for (int j = 0; j <= j_table; ++j) {
    const ModeData md = mode_data(j, p.d2, p);
    std::optional<double> dlim;
    if (j >= 1 && !gamma.infinite && lc.regime == LimitRegime::scalar_field)
      dlim = limiting_critical_d2(j, p, gamma);
    csv << j << "," << sci(md.lambda) << "," << (md.in_region ? 1 : 0) << ","
        << (md.d_star ? sci(*md.d_star) : "") << "," << (md.kappa ? sci(*md.kappa) : "") << ","
        << (md.kappa_star ? sci(*md.kappa_star) : "") << "," << (dlim ? sci(*dlim) : "") << "\n";
    json row;
    row["j"] = j;
    row["lambda"] = md.lambda;
    row["member"] = md.in_region;
    row["d_star"] = md.d_star ? json(*md.d_star) : json(nullptr);
    row["kappa"] = md.kappa ? json(*md.kappa) : json(nullptr);
    row["kappa_star"] = md.kappa_star ? json(*md.kappa_star) : json(nullptr);
    row["d_star_limit"] = dlim ? json(*dlim) : json(nullptr);
    jmodes.push_back(std::move(row));
  }
  write_text_file(dir / "modes.csv", csv.str());

  json out;
  out["version"] = kVersion;
  out["u_star"] = cs.u_star;
  out["v_star"] = cs.v_star;
  out["tau_star"] = cs.tau_star;
  out["gamma"] = gamma.infinite ? json("inf") : json(gamma.value);
  out["gamma_threshold"] = cs.gamma_threshold;
  out["regime"] = lc.regime == LimitRegime::scalar_field
                      ? "scalar_field"
                      : (lc.regime == LimitRegime::logistic ? "logistic" : "degenerate");
  out["xi_star"] = lc.xi_star;
  out["dhat_star"] = ms.dhat_star;
  out["mode_set"] = ms.members;
  out["cutoff_certified"] = ms.cutoff_certified;
  out["modes"] = std::move(jmodes);
  write_text_file(dir / "modes.json", out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// branches: trace the bifurcating branches and draw the diagram

inline int cmd_branches(const ExperimentConfig& cfg,
                        const std::optional<std::string>& out_override = {}, int threads = 1) {
  namespace fs = std::filesystem;
  const fs::path dir = cmd_detail::prepare_out_dir(cfg, out_override);
  const ModelParams& p = cfg.model;
  const Grid g = cfg.make_grid();
  StepControls controls = cfg.step_controls();
  SwitchOptions sw_opt;
  sw_opt.delta_rel = cfg.continuation.delta_rel;
  sw_opt.newton.tol = cfg.newton_tolerance();

  struct Traced {
    std::optional<Branch> branch;
    std::string error;
    int j = 0;
    int sign = 0;
  };
  std::vector<Traced> traced;
  for (int j : cfg.continuation.j_list)
    for (int sign : {-1, +1}) traced.push_back(Traced{{}, "", j, sign});

  std::vector<std::function<void()>> tasks;
  for (Traced& t : traced) {
    tasks.emplace_back([&t, &p, &g, &controls, &sw_opt, &cfg] {
      try {
        const SwitchResult sw =
            switch_branch(t.j, t.sign, cfg.continuation.amplitude, p, g, sw_opt);
        SystemProblem prob(p, g);
        BranchSeed seed;
        seed.x = sw.point.x;
        seed.d2 = sw.point.d2;
        seed.direction_hint = switch_direction_hint(sw, t.sign);
        seed.id = "G" + std::to_string(t.j) + (t.sign < 0 ? "u" : "l");
        seed.family = "system";
        seed.j_origin = t.j;
        seed.sign = t.sign;
        t.branch = continue_branch(prob, seed, controls);
      } catch (const std::exception& e) {
        t.error = e.what();
      }
    });
  }
  cmd_detail::run_parallel(tasks, threads);

  std::vector<Branch> diagram_branches;
  json failures = json::array();
  for (Traced& t : traced) {
    if (!t.branch) {
      json f;
      f["j"] = t.j;
      f["sign"] = t.sign;
      f["error"] = t.error;
      failures.push_back(std::move(f));
      std::cerr << "branch switch failed (j=" << t.j << ", sign=" << t.sign << "): " << t.error
                << "\n";
      continue;
    }
    write_branch_csv(dir / ("branch_" + t.branch->id + ".csv"), *t.branch);
    if (cfg.output.snapshot_stride > 0) {
      for (std::size_t k = 0; k < t.branch->points.size();
           k += static_cast<std::size_t>(cfg.output.snapshot_stride)) {
        char name[64];
        std::snprintf(name, sizeof(name), "state_%s_%04zu.csv", t.branch->id.c_str(), k);
        write_state_csv(dir / name, unpack(t.branch->points[k].x), g);
      }
    }
    diagram_branches.push_back(std::move(*t.branch));
  }

  const ModeSet ms = mode_set_and_threshold(p, 50);
  const double view_hi = std::max(p.d2, ms.dhat_star * 1.25);
  for (Branch& tb :
       cmd_detail::trivial_branch_segments(p, g, cfg.continuation.d2_floor, view_hi, 50)) {
    write_branch_csv(dir / ("branch_" + tb.id + ".csv"), tb);
    diagram_branches.push_back(std::move(tb));
  }

  SvgPanel panel;
  panel.title = "bifurcation diagram";
  panel.y_label = to_string(cfg.output.plot_measure);
  for (const Branch& br : diagram_branches)
    panel.series.push_back(cmd_detail::branch_series(br, cfg.output.plot_measure));
  write_text_file(dir / "bifurcation_diagram.svg", render_svg({panel}, 1));

  json report;
  report["version"] = kVersion;
  report["dhat_star"] = ms.dhat_star;
  report["failures"] = std::move(failures);
  json jb = json::array();
  for (const Branch& br : diagram_branches) {
    json row;
    row["id"] = br.id;
    row["family"] = br.family;
    row["j_origin"] = br.j_origin;
    row["points"] = br.points.size();
    row["termination"] = to_string(br.termination);
    const auto onset = extrapolate_onset(br);
    row["onset_extrapolated"] = onset ? json(*onset) : json(nullptr);
    jb.push_back(std::move(row));
  }
  report["branches"] = std::move(jb);
  write_text_file(dir / "branches.json", report.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// limit: branches of the limiting scalar equation

inline int cmd_limit(const ExperimentConfig& cfg,
                     const std::optional<std::string>& out_override = {}, int threads = 1) {
  namespace fs = std::filesystem;
  const ModelParams& p = cfg.model;
  const Gamma gamma = cmd_detail::flux_ratio(p.alpha, p.beta);
  const LimitCoefficients lc = limit_coefficients(p, gamma);
  if (lc.regime != LimitRegime::scalar_field)
    throw RegimeError("limit: flux ratio is not in the scalar-field regime (gamma <= A tau*)");
  if (gamma.infinite)
    throw RegimeError("limit: branch tracing needs a finite flux ratio");

  const fs::path dir = cmd_detail::prepare_out_dir(cfg, out_override);
  const Grid g = cfg.make_grid();
  StepControls controls = cfg.step_controls();

  struct Traced {
    std::optional<Branch> branch;
    std::string error;
    int j = 0;
    int sign = 0;
  };
  std::vector<Traced> traced;
  for (int j : cfg.continuation.j_list) {
    if (!limiting_critical_d2(j, p, gamma)) continue;  // mode never bifurcates in the limit
    for (int sign : {-1, +1}) traced.push_back(Traced{{}, "", j, sign});
  }

  std::vector<std::function<void()>> tasks;
  for (Traced& t : traced) {
    tasks.emplace_back([&t, &p, &g, &controls, &cfg, gamma] {
      try {
        t.branch = trace_scalar_branch(p, gamma, t.j, t.sign, cfg.continuation.amplitude, g,
                                       controls, cfg.continuation.delta_rel);
      } catch (const std::exception& e) {
        t.error = e.what();
      }
    });
  }
  cmd_detail::run_parallel(tasks, threads);

  SvgPanel panel;
  panel.title = "limiting-system branches";
  panel.y_label = to_string(cfg.output.plot_measure);
  json report;
  report["version"] = kVersion;
  report["xi_star"] = lc.xi_star;
  report["gamma"] = gamma.value;
  json jb = json::array();
  json failures = json::array();
  for (Traced& t : traced) {
    if (!t.branch) {
      json f;
      f["j"] = t.j;
      f["sign"] = t.sign;
      f["error"] = t.error;
      failures.push_back(std::move(f));
      std::cerr << "limit branch failed (j=" << t.j << ", sign=" << t.sign << "): " << t.error
                << "\n";
      continue;
    }
    write_branch_csv(dir / ("branch_" + t.branch->id + ".csv"), *t.branch);
    panel.series.push_back(cmd_detail::branch_series(*t.branch, cfg.output.plot_measure));
    json row;
    row["id"] = t.branch->id;
    row["j"] = t.j;
    row["onset"] = *limiting_critical_d2(t.j, p, gamma);
    row["points"] = t.branch->points.size();
    row["termination"] = to_string(t.branch->termination);
    jb.push_back(std::move(row));
  }
  report["branches"] = std::move(jb);
  report["failures"] = std::move(failures);
  write_text_file(dir / "limit_diagram.svg", render_svg({panel}, 1));
  write_text_file(dir / "limit.json", report.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// compare: branch convergence toward the limiting system along a flux ray

inline int cmd_compare(const ExperimentConfig& cfg,
                       const std::optional<std::string>& out_override = {}, int threads = 1) {
  namespace fs = std::filesystem;
  const ModelParams& base = cfg.model;
  if (!(cfg.sweep.beta0 > 0.0))
    throw RegimeError("compare: the sweep ray needs beta0 > 0 for a finite ratio");
  const Gamma gamma = Gamma::finite(cfg.sweep.alpha0 / cfg.sweep.beta0);
  const LimitCoefficients lc = limit_coefficients(base, gamma);
  if (lc.regime != LimitRegime::scalar_field)
    throw RegimeError("compare: flux ratio is not in the scalar-field regime");

  const fs::path dir = cmd_detail::prepare_out_dir(cfg, out_override);
  const Grid g = cfg.make_grid();
  StepControls controls = cfg.step_controls();
  controls.stability_every = 0;  // metric sweeps do not need indices

  // one scalar reference branch per requested mode (upper branch)
  struct ScalarRef {
    int j;
    Branch branch;
    double onset;
  };
  std::vector<ScalarRef> refs;
  for (int j : cfg.sweep.compare_j) {
    const auto onset = limiting_critical_d2(j, base, gamma);
    if (!onset) continue;
    refs.push_back(
        ScalarRef{j, trace_scalar_branch(base, gamma, j, -1, cfg.continuation.amplitude, g,
                                         controls, cfg.continuation.delta_rel),
                  *onset});
    write_branch_csv(dir / ("branch_S" + std::to_string(j) + "u.csv"), refs.back().branch);
  }
  if (refs.empty()) throw RegimeError("compare: no limiting branches exist for compare_j");

  struct ScaleResult {
    double s = 0;
    std::vector<Branch> branches;
    json rows = json::array();
    std::string error;
  };
  std::vector<ScaleResult> results(cfg.sweep.scales.size());

  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < cfg.sweep.scales.size(); ++i) {
    tasks.emplace_back([&, i] {
      ScaleResult& res = results[i];
      res.s = cfg.sweep.scales[i];
      const ModelParams ps =
          base.with_flux(res.s * cfg.sweep.alpha0, res.s * cfg.sweep.beta0);
      SwitchOptions sw_opt;
      sw_opt.delta_rel = cfg.continuation.delta_rel;
      sw_opt.newton.tol = cfg.newton_tolerance();
      for (const ScalarRef& ref : refs) {
        try {
          const SwitchResult sw =
              switch_branch(ref.j, -1, cfg.continuation.amplitude, ps, g, sw_opt);
          SystemProblem prob(ps, g);
          BranchSeed seed;
          seed.x = sw.point.x;
          seed.d2 = sw.point.d2;
          seed.direction_hint = switch_direction_hint(sw, -1);
          char id[48];
          std::snprintf(id, sizeof(id), "s%g_G%du", res.s, ref.j);
          seed.id = id;
          seed.family = "system";
          seed.j_origin = ref.j;
          seed.sign = -1;
          Branch br = continue_branch(prob, seed, controls);

          const BranchDistance bd =
              branch_distance(br, ref.branch, cfg.output.plot_measure);
          const RatioDefectProfile rd = ratio_defect_profile(br);
          const double d_star = *critical_d2(ref.j, ps);
          json row;
          row["s"] = res.s;
          row["alpha"] = ps.alpha;
          row["beta"] = ps.beta;
          row["j"] = ref.j;
          row["d_star"] = d_star;
          row["d_star_limit"] = ref.onset;
          row["onset_gap_analytic"] = std::abs(d_star - ref.onset);
          const auto oc = extrapolate_onset(br);
          row["onset_continuation"] = oc ? json(*oc) : json(nullptr);
          row["hausdorff"] = bd.hausdorff;
          row["hausdorff_system_to_limit"] = bd.hausdorff_ab;
          row["hausdorff_limit_to_system"] = bd.hausdorff_ba;
          row["onset_gap_extrapolated"] = bd.onset_gap;
          row["max_ratio_defect"] = rd.max;
          res.rows.push_back(std::move(row));
          res.branches.push_back(std::move(br));
        } catch (const std::exception& e) {
          res.error += std::string(e.what()) + "; ";
        }
      }
    });
  }
  cmd_detail::run_parallel(tasks, threads);

  std::vector<SvgPanel> panels;
  json scales_out = json::array();
  for (ScaleResult& res : results) {
    for (const Branch& br : res.branches)
      write_branch_csv(dir / ("branch_" + br.id + ".csv"), br);
    SvgPanel panel;
    char title[64];
    std::snprintf(title, sizeof(title), "(alpha,beta) = (%g,%g)", res.s * cfg.sweep.alpha0,
                  res.s * cfg.sweep.beta0);
    panel.title = title;
    panel.y_label = to_string(cfg.output.plot_measure);
    for (const Branch& br : res.branches)
      panel.series.push_back(cmd_detail::branch_series(br, cfg.output.plot_measure));
    for (const ScalarRef& ref : refs) {
      SvgSeries ghost = cmd_detail::branch_series(ref.branch, cfg.output.plot_measure);
      ghost.color = "#9e9e9e";
      ghost.dashed = true;
      ghost.label = "limit-" + std::to_string(ref.j);
      panel.series.push_back(std::move(ghost));
    }
    panels.push_back(std::move(panel));
    json srow;
    srow["s"] = res.s;
    srow["results"] = std::move(res.rows);
    if (!res.error.empty()) srow["error"] = res.error;
    scales_out.push_back(std::move(srow));
  }
  SvgPanel limit_panel;
  limit_panel.title = "limiting system";
  limit_panel.y_label = to_string(cfg.output.plot_measure);
  for (const ScalarRef& ref : refs)
    limit_panel.series.push_back(cmd_detail::branch_series(ref.branch, cfg.output.plot_measure));
  panels.push_back(std::move(limit_panel));
  write_text_file(dir / "compare_diagram.svg", render_svg(panels, 2));

  json report;
  report["version"] = kVersion;
  report["gamma"] = gamma.value;
  report["measure"] = to_string(cfg.output.plot_measure);
  report["scales"] = std::move(scales_out);
  write_text_file(dir / "compare_report.json", report.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// evolve: time integration from a seeded random perturbation

inline int cmd_evolve(const ExperimentConfig& cfg,
                      const std::optional<std::string>& out_override = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cmd_detail::prepare_out_dir(cfg, out_override);
  const ModelParams& p = cfg.model;
  const Grid g = cfg.make_grid();
  const ConstantState cs = constant_state(p);

  std::mt19937 rng(cfg.evolve.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  StateVector s0 = StateVector::constant(g.n, cs.u_star, cs.v_star);
  for (int i = 0; i < g.n; ++i) s0.u[i] *= 1.0 + cfg.evolve.perturbation * unit(rng);
  for (int i = 0; i < g.n; ++i) s0.v[i] *= 1.0 + cfg.evolve.perturbation * unit(rng);

  EvolveControls controls;
  controls.dt = cfg.evolve.dt;
  controls.t_max = cfg.evolve.t_max;
  controls.steady_tol = cfg.evolve.steady_tol;
  const EvolutionRun run = evolve(s0, p.d2, p, g, controls);

  for (std::size_t k = 0; k < run.snapshots.size(); ++k) {
    char name[48];
    std::snprintf(name, sizeof(name), "snapshot_%04zu.csv", k);
    write_state_csv(dir / name, run.snapshots[k].second, g);
  }
  std::ostringstream hist;
  hist << "t,distance_to_constant\n";
  for (const auto& [t, d] : run.distance_history) hist << sci(t) << "," << sci(d) << "\n";
  write_text_file(dir / "distance_history.csv", hist.str());

  json summary;
  summary["version"] = kVersion;
  summary["termination"] = to_string(run.termination);
  summary["final_time"] = run.final_time;
  summary["final_distance_to_constant"] = run.final_distance;
  summary["final_elliptic_residual"] = run.final_elliptic_residual;
  summary["accepted_steps"] = run.accepted;
  summary["rejected_steps"] = run.rejected;
  summary["seed"] = cfg.evolve.seed;
  const StateVector& final_state = run.snapshots.back().second;
  if (run.final_distance > 1e-6) {
    summary["node_count_v"] = node_count(final_state, g);
  } else {
    summary["node_count_v"] = json(nullptr);
  }
  write_text_file(dir / "evolve_summary.json", summary.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// verify: property suite over the analytic layer and stored branches

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::vector<VerifyCheck> run_verification(const ExperimentConfig& cfg,
                                                 const std::filesystem::path& audit_dir) {
  namespace fs = std::filesystem;
  const ModelParams& p = cfg.model;
  std::vector<VerifyCheck> checks;

  {  // Jacobian vs central finite differences on random states
    VerifyCheck c{"jacobian_vs_fd", false, ""};
    const Grid g(31, p.length, p.x_left);
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> unit(0.05, 1.5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      StateVector s(std::vector<double>(g.n), std::vector<double>(g.n));
      for (int i = 0; i < g.n; ++i) {
        s.u[i] = unit(rng);
        s.v[i] = unit(rng);
      }
      const double d2 = 0.002 + 0.05 * (trial % 10) / 10.0;
      const BandedMatrix jac = assemble_jacobian(s, d2, p, g);
      std::vector<double> x = pack(s);
      const double scale = jac.inf_norm();
      const double eps = 1e-6;
      std::vector<double> rp(x.size()), rm(x.size());
      for (std::size_t col = 0; col < x.size(); ++col) {
        const double save = x[col];
        x[col] = save + eps;
        assemble_residual_packed(x, d2, p, g, rp);
        x[col] = save - eps;
        assemble_residual_packed(x, d2, p, g, rm);
        x[col] = save;
        for (std::size_t row = 0; row < x.size(); ++row) {
          if (!jac.in_band(row, col)) continue;
          const double fd = (rp[row] - rm[row]) / (2.0 * eps);
          worst = std::max(worst, std::abs(fd - jac.at(row, col)) / scale);
        }
      }
    }
    c.pass = worst <= 1e-6;
    c.detail = "max relative entry error " + sci(worst) + " (tol 1e-6)";
    checks.push_back(std::move(c));
  }

  {  // determinant sign classification on a (j, d2) sample grid
    VerifyCheck c{"det_sign_classification", true, ""};
    int tested = 0;
    for (int j = 1; j <= 20 && c.pass; ++j) {
      const auto ds = critical_d2(j, p);
      for (int k = 0; k < 20 && c.pass; ++k) {
        const double d2 = 1e-4 * std::pow(1.0 / 1e-4, k / 19.0);
        const double det = mode_block_matrix(j, d2, p).det();
        ++tested;
        if (ds) {
          if (std::abs(d2 - *ds) < 1e-9 * *ds) continue;  // too close to call
          if (d2 < *ds && !(det < 0.0)) c.pass = false;
          if (d2 > *ds && !(det > 0.0)) c.pass = false;
        } else if (!(det > 0.0)) {
          c.pass = false;
        }
      }
    }
    for (int k = 0; k < 20; ++k) {  // mode 0 determinant stays positive
      const double d2 = 1e-4 * std::pow(1e4, k / 19.0);
      if (!(mode_block_matrix(0, d2, p).det() > 0.0)) c.pass = false;
    }
    c.detail = std::to_string(tested) + " (j,d2) samples against the sign chart";
    checks.push_back(std::move(c));
  }

  {  // kernel and adjoint-kernel residuals at each critical point
    VerifyCheck c{"kernel_residuals", true, ""};
    const ModeSet ms = mode_set_and_threshold(p, 50);
    double worst = 0.0;
    for (int j : ms.members) {
      const double ds = *critical_d2(j, p);
      const ModeBlock a = mode_block_matrix(j, ds, p);
      const KernelRatios kr = kernel_ratios(j, p);
      const double scale = a.frobenius();
      const double r1 = std::hypot(a.a11 + a.a12 * kr.kappa, a.a21 + a.a22 * kr.kappa);
      const double r2 = std::hypot(a.a11 + a.a21 * kr.kappa_star, a.a12 + a.a22 * kr.kappa_star);
      worst = std::max(worst, std::max(r1, r2) / scale);
    }
    c.pass = worst <= 1e-10;
    c.detail = "max kernel residual " + sci(worst) + " of |A| (tol 1e-10)";
    checks.push_back(std::move(c));
  }

  {  // root classification of the mode blocks
    VerifyCheck c{"mu_root_classification", true, ""};
    for (int j = 0; j <= 20 && c.pass; ++j)
      for (int k = 0; k < 20 && c.pass; ++k) {
        const double d2 = 1e-4 * std::pow(1e4, k / 19.0);
        const ModeBlock b = mode_block_matrix(j, d2, p);
        if (!(b.trace() > 0.0)) c.pass = false;
        const auto [mm, mp] = mode_roots(b);
        if (b.det() < 0.0 && !(mm.real() < 0.0 && mp.real() > 0.0)) c.pass = false;
        if (b.det() > 0.0 && !(mm.real() > 0.0 && mp.real() > 0.0)) c.pass = false;
      }
    c.detail = "trace positivity and root signs on the sample grid";
    checks.push_back(std::move(c));
  }

  // audits over stored branch tables
  const L2Bounds box = l2_bounds(p);
  const ConstantState cs = constant_state(p);
  std::size_t rows_seen = 0, box_violations = 0, nonexistence_violations = 0, files = 0;
  if (fs::exists(audit_dir)) {
    for (const auto& entry : fs::directory_iterator(audit_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("branch_", 0) != 0 || entry.path().extension() != ".csv") continue;
      ++files;
      for (const BranchRow& row : read_branch_csv(entry.path())) {
        ++rows_seen;
        if (row.l2_u > box.u_bound * (1.0 + 1e-9) || row.l2_v > box.v_bound * (1.0 + 1e-9))
          ++box_violations;
        const bool nonconstant = std::abs(row.sup_v - cs.v_star) > 1e-8 ||
                                 std::abs(row.sup_u - cs.u_star) > 1e-8;
        if (nonconstant && row.j_origin != "trivial" && row.j_origin.rfind("limit", 0) != 0) {
          ModelParams pr = p;
          pr.d2 = row.d2;
          if (!nonexistence_check(pr, std::max(row.sup_u, row.sup_v))) ++nonexistence_violations;
        }
      }
    }
  }
  {
    VerifyCheck c{"l2_box_audit", box_violations == 0, ""};
    c.detail = std::to_string(rows_seen) + " rows in " + std::to_string(files) + " files, " +
               std::to_string(box_violations) + " violations of (" + sci(box.u_bound) + ", " +
               sci(box.v_bound) + ")";
    checks.push_back(std::move(c));
  }
  {
    VerifyCheck c{"nonexistence_audit", nonexistence_violations == 0, ""};
    c.detail = std::to_string(nonexistence_violations) +
               " nonconstant rows violate the small-diffusion inequalities";
    checks.push_back(std::move(c));
  }
  return checks;
}

inline int cmd_verify(const ExperimentConfig& cfg,
                      const std::optional<std::string>& out_override = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cmd_detail::prepare_out_dir(cfg, out_override);
  const std::vector<VerifyCheck> checks = run_verification(cfg, dir);
  bool all = true;
  json rows = json::array();
  for (const VerifyCheck& c : checks) {
    all = all && c.pass;
    std::printf("%-28s %s  %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.detail.c_str());
    json row;
    row["name"] = c.name;
    row["pass"] = c.pass;
    row["detail"] = c.detail;
    rows.push_back(std::move(row));
  }
  json report;
  report["version"] = kVersion;
  report["all_pass"] = all;
  report["checks"] = std::move(rows);
  write_text_file(dir / "verify_report.json", report.dump(2) + "\n");
  return all ? 0 : 4;
}

}  // namespace crossflux
