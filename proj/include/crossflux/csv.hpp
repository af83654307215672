#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossflux/continuation.hpp"
#include "crossflux/grid.hpp"

namespace crossflux {

// Full-precision scientific notation so values survive a round trip exactly.
inline std::string sci(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17e", x);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// ---------------------------------------------------------------------------
// state snapshots: "# n=<n> L=<L> x_left=<x>" then x,u,v rows

inline std::string state_csv(const StateVector& s, const Grid& g) {
  std::ostringstream os;
  os << "# n=" << g.n << " L=" << sci(g.length) << " x_left=" << sci(g.x_left) << "\n";
  os << "x,u,v\n";
  for (int i = 0; i < g.n; ++i)
    os << sci(g.node(i)) << "," << sci(s.u[i]) << "," << sci(s.v[i]) << "\n";
  return os.str();
}

inline void write_state_csv(const std::filesystem::path& path, const StateVector& s,
                            const Grid& g) {
  write_text_file(path, state_csv(s, g));
}

struct LoadedState {
  StateVector state;
  Grid grid;
};

inline LoadedState read_state_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  int n = 0;
  double length = 0, x_left = 0;
  if (std::sscanf(header.c_str(), "# n=%d L=%lf x_left=%lf", &n, &length, &x_left) != 3)
    throw std::runtime_error("malformed state header in " + path.string());
  std::string line;
  std::getline(in, line);  // column names
  StateVector s{std::vector<double>(static_cast<std::size_t>(n)),
                std::vector<double>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated state file " + path.string());
    double x, u, v;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &u, &v) != 3)
      throw std::runtime_error("malformed state row in " + path.string());
    s.u[i] = u;
    s.v[i] = v;
  }
  return LoadedState{std::move(s), Grid(n, length, x_left)};
}

// ---------------------------------------------------------------------------
// branch tables

inline std::string branch_csv_header() {
  return "id,j_origin,s,d2,l2_u,l2_v,sup_u,sup_v,ratio_defect,stability_index,fold_count\n";
}

inline std::string branch_j_label(const Branch& br) {
  if (br.family == "limit") return "limit-" + std::to_string(br.j_origin);
  if (br.family == "trivial") return "trivial";
  return std::to_string(br.j_origin);
}

inline std::string branch_csv(const Branch& br) {
  std::ostringstream os;
  os << branch_csv_header();
  const std::string jlab = branch_j_label(br);
  for (const BranchPoint& p : br.points) {
    os << br.id << "," << jlab << "," << sci(p.s) << "," << sci(p.d2) << "," << sci(p.m.l2_u)
       << "," << sci(p.m.l2_v) << "," << sci(p.m.sup_u) << "," << sci(p.m.sup_v) << ","
       << sci(p.m.ratio_defect) << "," << (p.stability ? std::to_string(*p.stability) : "-1")
       << "," << p.fold_count << "\n";
  }
  return os.str();
}

inline void write_branch_csv(const std::filesystem::path& path, const Branch& br) {
  write_text_file(path, branch_csv(br));
}

struct BranchRow {
  std::string id;
  std::string j_origin;
  double s = 0, d2 = 0;
  double l2_u = 0, l2_v = 0, sup_u = 0, sup_v = 0;
  double ratio_defect = 0;
  int stability_index = -1;
  int fold_count = 0;
};

inline std::vector<BranchRow> read_branch_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<BranchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 11) throw std::runtime_error("malformed branch row in " + path.string());
    BranchRow r;
    r.id = f[0];
    r.j_origin = f[1];
    r.s = std::stod(f[2]);
    r.d2 = std::stod(f[3]);
    r.l2_u = std::stod(f[4]);
    r.l2_v = std::stod(f[5]);
    r.sup_u = std::stod(f[6]);
    r.sup_v = std::stod(f[7]);
    r.ratio_defect = std::stod(f[8]);
    r.stability_index = std::stoi(f[9]);
    r.fold_count = std::stoi(f[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace crossflux
