#pragma once

// Admissible initial frames, clamped boundary data, and nodal constraint
// diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ribbon/frame_state.hpp"
#include "ribbon/mesh_fe.hpp"

namespace ribbon {

/// Clamped data: y, y' and b at both endpoints.
struct BoundaryConditions {
  Vec3 y_start, dy_start, y_end, dy_end;
  Vec3 b_start, b_end;

  /// Throws unless the endpoint frames are orthonormal pairs to `tol`.
  void validate(double tol = 1e-10) const {
    auto unit = [&](const Vec3& v) { return std::abs(v.squaredNorm() - 1.0) <= tol; };
    if (!unit(dy_start) || !unit(dy_end) || !unit(b_start) || !unit(b_end))
      throw std::invalid_argument("BoundaryConditions: endpoint tangents and directors must be unit vectors");
    if (std::abs(dy_start.dot(b_start)) > tol || std::abs(dy_end.dot(b_end)) > tol)
      throw std::invalid_argument("BoundaryConditions: endpoint director not orthogonal to tangent");
  }
};

using CurveFunction = std::function<CurveSample(double)>;
using VectorFunction = std::function<Vec3(double)>;

/// Continuous initial frame on (0, length).
struct InitialData {
  double length = 0.0;
  CurveFunction centerline;
  VectorFunction director;
};

/// Director obtained by rotating n_0 = [y_0']_2^perp (first two components
/// of the tangent turned by pi/2) about the tangent with angle twist_rate * x:
///   b_0 = cos(a x) (t x n_0) x t + sin(a x) t x n_0.
/// With `normalize` the result is projected onto the unit sphere.
inline VectorFunction rotated_director(VectorFunction tangent, double twist_rate, bool normalize) {
  return [tangent = std::move(tangent), twist_rate, normalize](double x) -> Vec3 {
    const Vec3 t = tangent(x);
    if (std::hypot(t.x(), t.y()) < 1e-12)
      throw std::domain_error("rotated_director: vertical tangent at x = " + std::to_string(x));
    const Vec3 n(-t.y(), t.x(), 0.0);
    const Vec3 txn = t.cross(n);
    Vec3 b = std::cos(twist_rate * x) * txn.cross(t) + std::sin(twist_rate * x) * txn;
    if (normalize) b.normalize();
    return b;
  };
}

/// Unit circle with three half-turns of director twist (closes to a Moebius band).
inline InitialData moebius_initial(double length = 2.0 * std::numbers::pi, double twist_rate = 1.5) {
  InitialData d;
  d.length = length;
  d.centerline = [](double x) {
    return CurveSample{Vec3(std::cos(x), std::sin(x), 0.0), Vec3(-std::sin(x), std::cos(x), 0.0)};
  };
  d.director = rotated_director([](double x) { return Vec3(-std::sin(x), std::cos(x), 0.0); }, twist_rate, false);
  return d;
}

enum class HelixAxis { x, z };

/// Helix of unit speed with pitch component c and winding rate beta,
/// d = sqrt(1 - c^2) / beta. Wound about e_3 by default,
///   y_0 = (d cos(beta x), d sin(beta x), c x);
/// HelixAxis::x gives y_0 = (c x, d cos(beta x), d sin(beta x)).
struct HelixShape {
  double pitch = 0.95;   // c
  double winding = 2.0;  // beta
  HelixAxis axis = HelixAxis::z;
  [[nodiscard]] double radius() const { return std::sqrt(1.0 - pitch * pitch) / winding; }
};

inline InitialData helix_initial(HelixShape shape = {}, double twist_rate = 1.0,
                                 double length = 2.0 * std::numbers::pi) {
  const double c = shape.pitch, beta = shape.winding, d = shape.radius();
  // component slots of (axis, cos, sin)
  const std::array<int, 3> slot = shape.axis == HelixAxis::z ? std::array<int, 3>{2, 0, 1}
                                                             : std::array<int, 3>{0, 1, 2};
  auto tangent = [=](double x) {
    Vec3 t;
    t[slot[0]] = c;
    t[slot[1]] = -d * beta * std::sin(beta * x);
    t[slot[2]] = d * beta * std::cos(beta * x);
    return t;
  };
  InitialData data;
  data.length = length;
  data.centerline = [=](double x) {
    Vec3 y;
    y[slot[0]] = c * x;
    y[slot[1]] = d * std::cos(beta * x);
    y[slot[2]] = d * std::sin(beta * x);
    return CurveSample{y, tangent(x)};
  };
  data.director = rotated_director(tangent, twist_rate, true);
  return data;
}

/// Straight segment along e_x with constant director e_y.
inline InitialData straight_initial(double length = 1.0) {
  InitialData d;
  d.length = length;
  d.centerline = [](double x) { return CurveSample{Vec3(x, 0.0, 0.0), Vec3::UnitX()}; };
  d.director = [](double) { return Vec3::UnitY(); };
  return d;
}

/// Unit circle in the xy-plane with the untwisted director e_z.
inline InitialData flat_circle_initial(double length = 2.0 * std::numbers::pi) {
  InitialData d;
  d.length = length;
  d.centerline = [](double x) {
    return CurveSample{Vec3(std::cos(x), std::sin(x), 0.0), Vec3(-std::sin(x), std::cos(x), 0.0)};
  };
  d.director = [](double) { return Vec3::UnitZ(); };
  return d;
}

struct DiscreteInitial {
  FrameState state;
  BoundaryConditions bc;
};

/// Nodal interpolation of a continuous frame. Rejects samplers that violate
/// |y'| = |b| = 1 or y'.b = 0 at a node by more than 1e-10.
inline DiscreteInitial discretize_initial(const InitialData& data, const Mesh& mesh) {
  if (std::abs(mesh.length() - data.length) > 1e-12 * std::max(1.0, data.length))
    throw std::invalid_argument("discretize_initial: mesh length differs from the frame length");
  DiscreteInitial out;
  out.state.y = interpolate_hermite(data.centerline, mesh);
  out.state.b = interpolate_nodal(data.director, mesh);
  constexpr double tol = 1e-10;
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    const Vec3 t = out.state.y.slope(j), b = out.state.b.value(j);
    if (std::abs(t.squaredNorm() - 1.0) > tol || std::abs(b.squaredNorm() - 1.0) > tol ||
        std::abs(t.dot(b)) > tol)
      throw std::invalid_argument("discretize_initial: frame constraint violated at node " + std::to_string(j));
  }
  const int last = mesh.num_nodes() - 1;
  out.bc = {out.state.y.value(0), out.state.y.slope(0),  out.state.y.value(last),
            out.state.y.slope(last), out.state.b.value(0), out.state.b.value(last)};
  return out;
}

/// Maximal nodal violation of the unit-length constraints.
struct NodalDrift {
  double tangent = 0.0;   // max_j | |y'(x_j)|^2 - 1 |
  double director = 0.0;  // max_j | |b(x_j)|^2 - 1 |
};

inline NodalDrift check_nodal_constraints(const FrameState& state) {
  NodalDrift d;
  for (int j = 0; j < state.num_nodes(); ++j) {
    d.tangent = std::max(d.tangent, std::abs(state.y.slope(j).squaredNorm() - 1.0));
    d.director = std::max(d.director, std::abs(state.b.value(j).squaredNorm() - 1.0));
  }
  return d;
}

/// Second director d = y' x b at x.
inline Vec3 reconstruct_d(const Mesh& mesh, const FrameState& state, double x) {
  return eval(mesh, state.y, x, 1).cross(eval(mesh, state.b, x, 0));
}

}  // namespace ribbon
