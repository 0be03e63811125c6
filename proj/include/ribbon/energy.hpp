#pragma once

// Energy densities of the corrected Sadowsky model, their regularization,
// and the discrete energy with exact quadrature.

#include <cmath>
#include <optional>
#include <tuple>
#include <stdexcept>
#include <utility>

#include "ribbon/frame_state.hpp"
#include "ribbon/mesh_fe.hpp"

namespace ribbon {

/// Regularization and penalty parameters.
struct RegParams {
  double delta = 0.0;
  double eps1 = 1.0;
  double eps2 = 1.0;

  /// delta = 0 is admissible for evaluation only; the flow needs delta > 0.
  void validate(bool for_flow) const {
    if (!(delta >= 0.0)) throw std::invalid_argument("RegParams: delta must be >= 0");
    if (for_flow && !(delta > 0.0)) throw std::invalid_argument("RegParams: delta must be > 0 for the flow");
    if (!(eps1 > 0.0) || !(eps2 > 0.0)) throw std::invalid_argument("RegParams: penalty parameters must be > 0");
  }
};

/// Regularized modulus |x|_delta = sqrt(x^2 + delta^2) and its first two
/// derivatives. The second derivative is undefined for x = delta = 0.
struct ModulusDelta {
  double value;
  double slope;
  std::optional<double> curvature;
};

inline ModulusDelta mod_delta(double x, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("mod_delta: delta must be >= 0");
  const double v = std::hypot(x, delta);
  if (v == 0.0) return {0.0, 0.0, std::nullopt};
  return {v, x / v, delta * delta / (v * v * v)};
}

/// Corrected Sadowsky density for curvature alpha and torsion beta.
inline double q_bar(double alpha, double beta) {
  const double a2 = alpha * alpha, b2 = beta * beta;
  if (a2 > b2) return (a2 + b2) * (a2 + b2) / a2;
  return 4.0 * b2;
}

/// Gradient of q_bar; continuous across alpha = beta.
inline std::pair<double, double> q_bar_gradient(double alpha, double beta) {
  if (alpha > beta) {
    const double b3 = beta * beta * beta;
    return {2.0 * alpha - 2.0 * b3 * beta / (alpha * alpha * alpha), 4.0 * beta + 4.0 * b3 / (alpha * alpha)};
  }
  return {0.0, 8.0 * beta};
}

/// Regularized density; equals q_bar for delta = 0.
inline double q_bar_delta(double alpha, double beta, double delta) {
  const double a2 = alpha * alpha, b2 = beta * beta;
  const double m = mod_delta(a2 - b2, delta).value;
  const double denom = a2 + b2 + m;
  const double rational = denom > 0.0 ? 2.0 * b2 * b2 / denom : 0.0;
  return 2.0 * b2 + 0.5 * a2 + 0.5 * b2 + 0.5 * m + rational;
}

/// psi_delta(r, s) with its partial derivatives in r and s.
struct PsiEval {
  double value;
  double d_r;
  double d_s;
};

/// Nonquadratic part of the regularized density,
///   psi_delta(r, s) = |r - s|_delta + 4 s^2 / (r + s + |r - s|_delta),
/// so that q_bar_delta(a, b) = a^2/2 + 5 b^2/2 + psi_delta(a^2, b^2)/2.
/// Requires delta > 0, which keeps the denominator >= delta.
inline PsiEval psi_delta(double r, double s, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("psi_delta: delta must be > 0");
  const ModulusDelta m = mod_delta(r - s, delta);
  const double denom = r + s + m.value;
  const double q = 4.0 * s * s / (denom * denom);
  return {m.value + 4.0 * s * s / denom,
          m.slope - q * (1.0 + m.slope),
          -m.slope + 8.0 * s / denom - q * (1.0 - m.slope)};
}

/// Value-only variant admitting delta = 0 (with psi(0, 0) = 0).
inline double psi_value(double r, double s, double delta) {
  const double m = mod_delta(r - s, delta).value;
  const double denom = r + s + m;
  return m + (denom > 0.0 ? 4.0 * s * s / denom : 0.0);
}

/// Components of the discrete energy. `bend` through `penalty2` sum to
/// `total`; `e_bend` and `e_twist` are the plain bending and twist energies.
struct EnergyBreakdown {
  double bend = 0.0;      // 1/2 int |y''|^2
  double twist = 0.0;     // 5/2 int |b'|^2
  double psi = 0.0;       // 1/2 int psi_delta(|A_h y''|^2, |b'|^2)
  double penalty1 = 0.0;  // 1/(2 eps1) int I_h[(y'.b)^2]
  double penalty2 = 0.0;  // 1/(2 eps2) int (M_h y'.b')^2
  double total = 0.0;
  double e_bend = 0.0;    // 1/2 int |y''|^2
  double e_twist = 0.0;   // 1/2 int |b'|^2
};

/// Plain bending and twist energies 1/2 int |y''|^2 and 1/2 int |b'|^2.
inline std::pair<double, double> bend_twist(const FrameState& state, const FEMatrices& fe) {
  const Vector& y = state.y.coeffs();
  const Vector& b = state.b.coeffs();
  return {0.5 * y.dot(fe.hermite_stiffness_vec * y), 0.5 * b.dot(fe.nodal_stiffness_vec * b)};
}

/// Discrete energy with averaging operators, evaluated exactly. Quadratic
/// terms use the assembled matrices; the psi and penalty2 integrands are
/// elementwise constant; penalty1 integrates the nodal interpolant.
inline EnergyBreakdown energy_quad(const FrameState& state, const RegParams& params, const Mesh& mesh,
                                   const FEMatrices& fe) {
  state.check(mesh);
  params.validate(false);
  if (static_cast<int>(fe.node_weights.size()) != mesh.num_nodes())
    throw std::invalid_argument("energy_quad: matrices do not match mesh");

  EnergyBreakdown out;
  std::tie(out.e_bend, out.e_twist) = bend_twist(state, fe);
  out.bend = out.e_bend;
  out.twist = 5.0 * out.e_twist;

  double psi = 0.0, pen2 = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double hT = mesh.element_size(e);
    const Vec3 curv = element_avg_second_derivative(mesh, state.y, e);
    const Vec3 tors = element_derivative(mesh, state.b, e);
    const Vec3 tang = element_nodal_avg_first_derivative(mesh, state.y, e);
    psi += hT * psi_value(curv.squaredNorm(), tors.squaredNorm(), params.delta);
    const double c = tang.dot(tors);
    pen2 += hT * c * c;
  }
  double pen1 = 0.0;
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    const double c = state.y.slope(j).dot(state.b.value(j));
    pen1 += fe.node_weights[j] * c * c;
  }
  out.psi = 0.5 * psi;
  out.penalty1 = pen1 / (2.0 * params.eps1);
  out.penalty2 = pen2 / (2.0 * params.eps2);
  out.total = out.bend + out.twist + out.psi + out.penalty1 + out.penalty2;
  return out;
}

}  // namespace ribbon
