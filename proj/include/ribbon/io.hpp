#pragma once

// Plain-text outputs: CSV traces and snapshots, ribbon OBJ meshes, and the
// flat `key = value` configuration format.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ribbon/energy.hpp"
#include "ribbon/frames.hpp"
#include "ribbon/gradient_flow.hpp"
#include "ribbon/mesh_fe.hpp"

namespace ribbon {

/// Shortest round-trip decimal representation; locale independent.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw std::runtime_error("format_number: conversion failed");
  return std::string(buf, res.ptr);
}

inline std::string format_number(int v) { return std::to_string(v); }

/// Comma-joined fields terminated by '\n'.
template <class... Ts>
std::string csv_row(const Ts&... fields) {
  std::string out;
  ((out += format_number(fields), out += ','), ...);
  out.back() = '\n';
  return out;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

inline constexpr std::string_view kEnergyCsvHeader =
    "k,t,E_total,bend,twist,psi,penalty1,penalty2,E_bend,E_twist,dt_star,dt_dagger,drift_y,drift_b\n";

inline std::string energy_csv_row(const StepReport& r) {
  const auto& e = r.energy;
  return csv_row(r.k, r.t, e.total, e.bend, e.twist, e.psi, e.penalty1, e.penalty2, e.e_bend, e.e_twist, r.dt_star,
                 r.dt_dagger, r.drift.tangent, r.drift.director);
}

/// Nodal frame: x_j, y, y', b and d = y' x b.
inline void write_frame_csv(const std::filesystem::path& path, const Mesh& mesh, const FrameState& s) {
  auto out = open_output(path);
  out << "j,x,y_x,y_y,y_z,dy_x,dy_y,dy_z,b_x,b_y,b_z,d_x,d_y,d_z\n";
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    const Vec3 y = s.y.value(j), t = s.y.slope(j), b = s.b.value(j), d = t.cross(b);
    out << csv_row(j, mesh.node(j), y.x(), y.y(), y.z(), t.x(), t.y(), t.z(), b.x(), b.y(), b.z(), d.x(), d.y(),
                   d.z());
  }
}

/// Per element: curvature |A_h y''|, torsion |b'| and whether torsion
/// dominates curvature.
inline void write_element_csv(const std::filesystem::path& path, const Mesh& mesh, const FrameState& s) {
  auto out = open_output(path);
  out << "e,x_mid,curvature,torsion,torsion_dominates\n";
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double kappa = element_avg_second_derivative(mesh, s.y, e).norm();
    const double tors = element_derivative(mesh, s.b, e).norm();
    out << csv_row(e, 0.5 * (mesh.node(e) + mesh.node(e + 1)), kappa, tors, tors >= kappa ? 1 : 0);
  }
}

/// Strip with vertices y(x_j) -/+ (width/2) b(x_j); two triangles per element.
inline void write_ribbon_obj(const std::filesystem::path& path, const Mesh& mesh, const FrameState& s, double width) {
  auto out = open_output(path);
  out << "# ribbon strip: " << mesh.num_nodes() << " nodes, width " << format_number(width) << '\n';
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    const Vec3 y = s.y.value(j), b = s.b.value(j);
    for (const double side : {-0.5, 0.5}) {
      const Vec3 v = y + side * width * b;
      out << "v " << format_number(v.x()) << ' ' << format_number(v.y()) << ' ' << format_number(v.z()) << '\n';
    }
  }
  // OBJ indices are 1-based; node j owns vertices 2j+1 and 2j+2
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const int a = 2 * e + 1, b = a + 1, c = a + 2, d = a + 3;
    out << "f " << a << ' ' << c << ' ' << b << '\n';
    out << "f " << b << ' ' << c << ' ' << d << '\n';
  }
}

/// Flat `key = value` configuration. '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline KeyValues parse_key_values(std::istream& in, const std::string& source = "config") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected `key = value`");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": empty key");
    if (kv.contains(key)) throw std::invalid_argument(source + ": duplicate key `" + key + "`");
    kv[key] = value;
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return parse_key_values(in, path.string());
}

inline double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(v))
    throw std::invalid_argument("invalid number for `" + key + "`: " + value);
  return v;
}

inline int parse_int(const std::string& key, const std::string& value) {
  int v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw std::invalid_argument("invalid integer for `" + key + "`: " + value);
  return v;
}

}  // namespace ribbon
