#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossflux/continuation.hpp"
#include "crossflux/evolve.hpp"
#include "crossflux/limit.hpp"
#include "crossflux/model.hpp"
#include "crossflux/version.hpp"

namespace crossflux {

struct ConfigError : std::runtime_error {
  int line;
  ConfigError(const std::string& msg, int line_)
      : std::runtime_error("config line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct GridConfig {
  int n = 201;
};

struct ContinuationConfig {
  std::vector<int> j_list{1, 2, 3};
  double ds_init = 0.01;
  double ds_min = 1e-6;
  double ds_max = 0.05;
  int max_points = 600;
  double d2_floor = 0.002;
  double amplitude = 0.05;
  double delta_rel = 0.02;
  int stability_every = 5;
  int max_folds = 20;
};

struct SweepConfig {
  double alpha0 = 2.0;
  double beta0 = 1.0;
  std::vector<double> scales{1.0, 2.5, 5.0, 10.0, 25.0};
  std::vector<int> compare_j{1};
};

struct EvolveConfig {
  double dt = 0.01;
  double t_max = 600.0;
  double steady_tol = 1e-8;
  double perturbation = 0.01;
  unsigned seed = 12345;
};

struct OutputConfig {
  std::string dir = "out";
  int snapshot_stride = 10;
  PlotMeasure plot_measure = PlotMeasure::sup_v;
};

struct ExperimentConfig {
  ModelParams model;
  GridConfig grid;
  ContinuationConfig continuation;
  SweepConfig sweep;
  EvolveConfig evolve;
  OutputConfig output;

  Grid make_grid() const { return Grid(grid.n, model.length, model.x_left); }

  StepControls step_controls() const {
    StepControls c;
    c.ds_init = continuation.ds_init;
    c.ds_min = continuation.ds_min;
    c.ds_max = continuation.ds_max;
    c.max_points = continuation.max_points;
    c.d2_floor = continuation.d2_floor;
    c.stability_every = continuation.stability_every;
    c.max_folds = continuation.max_folds;
    c.newton.tol = newton_tolerance();
    return c;
  }

  // the attainable residual floor scales like eps * ||J|| with ||J|| ~ h^-2,
  // so fine grids get a relaxed absolute tolerance
  double newton_tolerance() const { return grid.n > 400 ? 1e-9 : 1e-10; }

  std::string serialize() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
}

inline int parse_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& v, int line, F parse_one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list entry", line);
    out.push_back(parse_one(item, line));
  }
  if (out.empty()) throw ConfigError("empty list", line);
  return out;
}

}  // namespace detail

// Plain-text configuration: [section] headers and key = value lines.
// Unknown sections or keys are errors; anything omitted keeps its default,
// and the resolved values are echoed into each run directory.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  bool have_x_left = false;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = detail::trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header", line);
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section != "model" && section != "grid" && section != "continuation" &&
          section != "sweep" && section != "evolve" && section != "output")
        throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line);
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string val = detail::trim(s.substr(eq + 1));
    if (key.empty() || val.empty()) throw ConfigError("expected key = value", line);
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section", line);

    auto num = [&] { return detail::parse_double(val, line); };
    auto integer = [&] { return detail::parse_int(val, line); };

    if (section == "model") {
      if (key == "d1") cfg.model.d1 = num();
      else if (key == "d2") cfg.model.d2 = num();
      else if (key == "a1") cfg.model.a1 = num();
      else if (key == "a2") cfg.model.a2 = num();
      else if (key == "b1") cfg.model.b1 = num();
      else if (key == "b2") cfg.model.b2 = num();
      else if (key == "c1") cfg.model.c1 = num();
      else if (key == "c2") cfg.model.c2 = num();
      else if (key == "alpha") cfg.model.alpha = num();
      else if (key == "beta") cfg.model.beta = num();
      else if (key == "length") cfg.model.length = num();
      else if (key == "x_left") { cfg.model.x_left = num(); have_x_left = true; }
      else throw ConfigError("unknown key '" + key + "' in [model]", line);
    } else if (section == "grid") {
      if (key == "n") cfg.grid.n = integer();
      else throw ConfigError("unknown key '" + key + "' in [grid]", line);
    } else if (section == "continuation") {
      if (key == "j_list") cfg.continuation.j_list = detail::parse_list<int>(val, line, detail::parse_int);
      else if (key == "ds_init") cfg.continuation.ds_init = num();
      else if (key == "ds_min") cfg.continuation.ds_min = num();
      else if (key == "ds_max") cfg.continuation.ds_max = num();
      else if (key == "max_points") cfg.continuation.max_points = integer();
      else if (key == "d2_floor") cfg.continuation.d2_floor = num();
      else if (key == "amplitude") cfg.continuation.amplitude = num();
      else if (key == "delta_rel") cfg.continuation.delta_rel = num();
      else if (key == "stability_every") cfg.continuation.stability_every = integer();
      else if (key == "max_folds") cfg.continuation.max_folds = integer();
      else throw ConfigError("unknown key '" + key + "' in [continuation]", line);
    } else if (section == "sweep") {
      if (key == "alpha0") cfg.sweep.alpha0 = num();
      else if (key == "beta0") cfg.sweep.beta0 = num();
      else if (key == "scales") cfg.sweep.scales = detail::parse_list<double>(val, line, detail::parse_double);
      else if (key == "compare_j") cfg.sweep.compare_j = detail::parse_list<int>(val, line, detail::parse_int);
      else throw ConfigError("unknown key '" + key + "' in [sweep]", line);
    } else if (section == "evolve") {
      if (key == "dt") cfg.evolve.dt = num();
      else if (key == "t_max") cfg.evolve.t_max = num();
      else if (key == "steady_tol") cfg.evolve.steady_tol = num();
      else if (key == "perturbation") cfg.evolve.perturbation = num();
      else if (key == "seed") cfg.evolve.seed = static_cast<unsigned>(integer());
      else throw ConfigError("unknown key '" + key + "' in [evolve]", line);
    } else if (section == "output") {
      if (key == "dir") cfg.output.dir = val;
      else if (key == "snapshot_stride") cfg.output.snapshot_stride = integer();
      else if (key == "plot_measure") {
        if (val == "sup_v") cfg.output.plot_measure = PlotMeasure::sup_v;
        else if (val == "l2_v") cfg.output.plot_measure = PlotMeasure::l2_v;
        else throw ConfigError("plot_measure must be sup_v or l2_v", line);
      } else throw ConfigError("unknown key '" + key + "' in [output]", line);
    }
  }
  if (!have_x_left) cfg.model.x_left = -0.5 * cfg.model.length;
  try {
    cfg.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
  if (cfg.grid.n < 3) throw ConfigError("[grid] n must be at least 3", 0);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(in);
}

namespace detail {

inline std::string num_str(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os << "# crossflux " << kVersion << " resolved configuration\n";
  os << "[model]\n";
  os << "d1 = " << detail::num_str(model.d1) << "\n";
  os << "d2 = " << detail::num_str(model.d2) << "\n";
  os << "a1 = " << detail::num_str(model.a1) << "\n";
  os << "a2 = " << detail::num_str(model.a2) << "\n";
  os << "b1 = " << detail::num_str(model.b1) << "\n";
  os << "b2 = " << detail::num_str(model.b2) << "\n";
  os << "c1 = " << detail::num_str(model.c1) << "\n";
  os << "c2 = " << detail::num_str(model.c2) << "\n";
  os << "alpha = " << detail::num_str(model.alpha) << "\n";
  os << "beta = " << detail::num_str(model.beta) << "\n";
  os << "length = " << detail::num_str(model.length) << "\n";
  os << "x_left = " << detail::num_str(model.x_left) << "\n";
  os << "[grid]\n";
  os << "n = " << grid.n << "\n";
  os << "[continuation]\n";
  os << "j_list = ";
  for (std::size_t i = 0; i < continuation.j_list.size(); ++i)
    os << (i ? "," : "") << continuation.j_list[i];
  os << "\n";
  os << "ds_init = " << detail::num_str(continuation.ds_init) << "\n";
  os << "ds_min = " << detail::num_str(continuation.ds_min) << "\n";
  os << "ds_max = " << detail::num_str(continuation.ds_max) << "\n";
  os << "max_points = " << continuation.max_points << "\n";
  os << "d2_floor = " << detail::num_str(continuation.d2_floor) << "\n";
  os << "amplitude = " << detail::num_str(continuation.amplitude) << "\n";
  os << "delta_rel = " << detail::num_str(continuation.delta_rel) << "\n";
  os << "stability_every = " << continuation.stability_every << "\n";
  os << "max_folds = " << continuation.max_folds << "\n";
  os << "[sweep]\n";
  os << "alpha0 = " << detail::num_str(sweep.alpha0) << "\n";
  os << "beta0 = " << detail::num_str(sweep.beta0) << "\n";
  os << "scales = ";
  for (std::size_t i = 0; i < sweep.scales.size(); ++i)
    os << (i ? "," : "") << detail::num_str(sweep.scales[i]);
  os << "\n";
  os << "compare_j = ";
  for (std::size_t i = 0; i < sweep.compare_j.size(); ++i)
    os << (i ? "," : "") << sweep.compare_j[i];
  os << "\n";
  os << "[evolve]\n";
  os << "dt = " << detail::num_str(evolve.dt) << "\n";
  os << "t_max = " << detail::num_str(evolve.t_max) << "\n";
  os << "steady_tol = " << detail::num_str(evolve.steady_tol) << "\n";
  os << "perturbation = " << detail::num_str(evolve.perturbation) << "\n";
  os << "seed = " << evolve.seed << "\n";
  os << "[output]\n";
  os << "dir = " << output.dir << "\n";
  os << "snapshot_stride = " << output.snapshot_stride << "\n";
  os << "plot_measure = " << to_string(output.plot_measure) << "\n";
  return os.str();
}

}  // namespace crossflux
