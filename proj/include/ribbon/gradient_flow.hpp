#pragma once

// Decoupled discrete gradient flow for the penalized, regularized ribbon
// energy. Each iteration solves two linear saddle-point problems: one for
// the centerline with the director frozen, then one for the director. The
// unit-length conditions are linearized at the previous iterate and imposed
// at interior nodes through Lagrange multipliers; endpoint data are clamped.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ribbon/energy.hpp"
#include "ribbon/frames.hpp"
#include "ribbon/linear_solver.hpp"
#include "ribbon/mesh_fe.hpp"

namespace ribbon {

enum class MonotonicityGuard { off, halve_step };

/// Relative slack below which an energy increase is attributed to roundoff.
inline constexpr double kEnergyIncreaseTolerance = 1e-12;

struct FlowParams {
  double tau = 0.0;
  RegParams reg;
  std::optional<double> horizon;  // T
  std::optional<int> steps;       // K
  std::optional<double> eps_stop; // stop once ||d_t y||_star + ||d_t b||_dagger <= eps_stop
  MonotonicityGuard guard = MonotonicityGuard::off;
  double solver_tolerance = 1e-9;

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("FlowParams: tau must be positive");
    reg.validate(true);
    if (horizon.has_value() == steps.has_value())
      throw std::invalid_argument("FlowParams: set exactly one of horizon T and step count K");
    if (horizon && !(*horizon > 0.0)) throw std::invalid_argument("FlowParams: horizon must be positive");
    if (steps && *steps < 0) throw std::invalid_argument("FlowParams: step count must be nonnegative");
    if (eps_stop && !(*eps_stop > 0.0)) throw std::invalid_argument("FlowParams: eps_stop must be positive");
  }

  /// K = floor(T / tau) for a horizon, else the given count. The quotient
  /// is nudged up by a few ulps so that exact ratios such as 10 / 0.005 are
  /// not floored to one step less.
  [[nodiscard]] int step_count() const {
    if (steps) return *steps;
    const double q = *horizon / tau;
    return static_cast<int>(std::floor(q * (1.0 + 8.0 * std::numeric_limits<double>::epsilon())));
  }
};

/// Linear system of one step before elimination of the clamped endpoint
/// unknowns. Its quadratic objective 1/2 u^T A u - f^T u is the step's
/// implicit objective, minimized over {B u = g, u[fixed] = fixed_values}.
struct StepSystem {
  SaddleSystem system;
  std::vector<int> fixed;
  Vector fixed_values;

  [[nodiscard]] double objective(const Vector& u) const {
    return 0.5 * u.dot(system.A * u) - system.f.dot(u);
  }
};

/// Result of one linear step.
template <class Field>
struct StepSolution {
  Field field;
  Vector multipliers;  // one per interior node
  double residual = 0.0;
};

namespace detail {

inline std::vector<int> endpoint_dofs(int num_nodes, int dofs_per_node) {
  std::vector<int> out;
  for (int c = 0; c < dofs_per_node; ++c) out.push_back(c);
  for (int c = 0; c < dofs_per_node; ++c) out.push_back((num_nodes - 1) * dofs_per_node + c);
  return out;
}

inline void add_block(std::vector<Triplet>& t, const std::array<int, 2>& rows0, const Eigen::Matrix3d& blk,
                      int ri, int ci) {
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) t.emplace_back(rows0[ri] + a, rows0[ci] + b, blk(a, b));
}

}  // namespace detail

/// Centerline update. y_k solves
///   tau^{-1}(y_k - y_{k-1}, w)_star + (y_k'', w'') + eps1^{-1} int I_h[(y_k'.b)(w'.b)]
///     + eps2^{-1} sum_T h_T (M_h y_k'.b')(M_h w'.b')
///   = -sum_T h_T psi_{,1}(|A_h y_{k-1}''|^2, |b'|^2) A_h y_{k-1}'' . A_h w''
/// with b = b_{k-1}, subject to y_k'(x_j).y_{k-1}'(x_j) = |y_{k-1}'(x_j)|^2 at
/// interior nodes and the clamped endpoint data.
inline StepSystem assemble_y_system(const Mesh& mesh, const FrameState& prev, const FlowParams& params,
                                    const FEMatrices& fe, const BoundaryConditions& bc) {
  prev.check(mesh);
  params.reg.validate(true);
  const int nn = mesh.num_nodes();
  const int n = 6 * nn;
  const double tau = params.tau;
  const auto& reg = params.reg;

  std::vector<Triplet> pen;
  pen.reserve(9 * nn + 36 * mesh.num_elements());
  Vector rhs = (fe.star_vec * prev.y.coeffs()) / tau;

  for (int j = 0; j < nn; ++j) {
    const Vec3 b = prev.b.value(j);
    const Eigen::Matrix3d blk = (fe.node_weights[j] / reg.eps1) * (b * b.transpose());
    const int s = HermiteField::slope_dof(j, 0);
    detail::add_block(pen, {s, s}, blk, 0, 0);
  }
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double hT = mesh.element_size(e);
    const Vec3 tors = element_derivative(mesh, prev.b, e);
    const std::array<int, 2> s{HermiteField::slope_dof(e, 0), HermiteField::slope_dof(e + 1, 0)};
    // (M_h w').b' = (w'_e + w'_{e+1}).b'/2
    const Eigen::Matrix3d blk = (hT / reg.eps2) * 0.25 * (tors * tors.transpose());
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c) detail::add_block(pen, s, blk, a, c);

    const Vec3 curv = element_avg_second_derivative(mesh, prev.y, e);
    const PsiEval p = psi_delta(curv.squaredNorm(), tors.squaredNorm(), reg.delta);
    // A_h w'' = (w'_{e+1} - w'_e) / h_T
    const Vec3 force = p.d_r * curv;
    rhs.segment<3>(s[0]) += force;
    rhs.segment<3>(s[1]) -= force;
  }
  SparseMatrix penalty(n, n);
  penalty.setFromTriplets(pen.begin(), pen.end());

  SaddleSystem sys;
  sys.A = fe.star_vec / tau + fe.hermite_stiffness_vec + penalty;
  sys.f = std::move(rhs);
  const int m = std::max(nn - 2, 0);
  std::vector<Triplet> cons;
  cons.reserve(3 * m);
  sys.g.resize(m);
  for (int j = 1; j + 1 < nn; ++j) {
    const Vec3 t = prev.y.slope(j);
    for (int c = 0; c < 3; ++c) cons.emplace_back(j - 1, HermiteField::slope_dof(j, c), t[c]);
    sys.g[j - 1] = t.squaredNorm();
  }
  sys.B.resize(m, n);
  sys.B.setFromTriplets(cons.begin(), cons.end());

  StepSystem out{std::move(sys), detail::endpoint_dofs(nn, 6), Vector(12)};
  out.fixed_values << bc.y_start, bc.dy_start, bc.y_end, bc.dy_end;
  return out;
}

inline StepSolution<HermiteField> y_step(const Mesh& mesh, const FrameState& prev, const FlowParams& params,
                                         const FEMatrices& fe, const BoundaryConditions& bc) {
  const StepSystem step = assemble_y_system(mesh, prev, params, fe, bc);
  const ReducedSystem red = eliminate_fixed_dofs(step.system, step.fixed, step.fixed_values);
  const SaddleSolution sol = solve_saddle(red.system, params.solver_tolerance);
  return {HermiteField(red.expand(sol.u)), sol.lambda, sol.residual};
}

/// Director update. b_k solves
///   tau^{-1}(b_k - b_{k-1}, r)_dagger + 5 (b_k', r') + eps1^{-1} int I_h[(y_k'.b_k)(y_k'.r)]
///     + eps2^{-1} sum_T h_T (M_h y_k'.b_k')(M_h y_k'.r')
///   = -sum_T h_T psi_{,2}(|A_h y_{k-1}''|^2, |b_{k-1}'|^2) b_{k-1}'.r'
/// subject to b_k(x_j).b_{k-1}(x_j) = |b_{k-1}(x_j)|^2 at interior nodes and
/// the clamped endpoint directors.
inline StepSystem assemble_b_system(const Mesh& mesh, const HermiteField& y_new, const FrameState& prev,
                                    const FlowParams& params, const FEMatrices& fe, const BoundaryConditions& bc) {
  prev.check(mesh);
  if (y_new.num_nodes() != mesh.num_nodes()) throw std::invalid_argument("b_step: y_k does not match mesh");
  params.reg.validate(true);
  const int nn = mesh.num_nodes();
  const int n = 3 * nn;
  const double tau = params.tau;
  const auto& reg = params.reg;

  std::vector<Triplet> pen;
  pen.reserve(9 * nn + 36 * mesh.num_elements());
  Vector rhs = (fe.dagger_vec * prev.b.coeffs()) / tau;

  for (int j = 0; j < nn; ++j) {
    const Vec3 t = y_new.slope(j);
    const Eigen::Matrix3d blk = (fe.node_weights[j] / reg.eps1) * (t * t.transpose());
    const int s = NodalField::dof(j, 0);
    detail::add_block(pen, {s, s}, blk, 0, 0);
  }
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double hT = mesh.element_size(e);
    const Vec3 mean_tangent = element_nodal_avg_first_derivative(mesh, y_new, e);
    const std::array<int, 2> s{NodalField::dof(e, 0), NodalField::dof(e + 1, 0)};
    // r' = (r_{e+1} - r_e) / h_T
    const Eigen::Matrix3d blk = (1.0 / (hT * reg.eps2)) * (mean_tangent * mean_tangent.transpose());
    const std::array<double, 2> sign{-1.0, 1.0};
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c) detail::add_block(pen, s, (sign[a] * sign[c]) * blk, a, c);

    const Vec3 curv = element_avg_second_derivative(mesh, prev.y, e);
    const Vec3 tors = element_derivative(mesh, prev.b, e);
    const PsiEval p = psi_delta(curv.squaredNorm(), tors.squaredNorm(), reg.delta);
    const Vec3 force = p.d_s * tors;
    rhs.segment<3>(s[0]) += force;
    rhs.segment<3>(s[1]) -= force;
  }
  SparseMatrix penalty(n, n);
  penalty.setFromTriplets(pen.begin(), pen.end());

  SaddleSystem sys;
  sys.A = fe.dagger_vec / tau + 5.0 * fe.nodal_stiffness_vec + penalty;
  sys.f = std::move(rhs);
  const int m = std::max(nn - 2, 0);
  std::vector<Triplet> cons;
  cons.reserve(3 * m);
  sys.g.resize(m);
  for (int j = 1; j + 1 < nn; ++j) {
    const Vec3 b = prev.b.value(j);
    for (int c = 0; c < 3; ++c) cons.emplace_back(j - 1, NodalField::dof(j, c), b[c]);
    sys.g[j - 1] = b.squaredNorm();
  }
  sys.B.resize(m, n);
  sys.B.setFromTriplets(cons.begin(), cons.end());

  StepSystem out{std::move(sys), detail::endpoint_dofs(nn, 3), Vector(6)};
  out.fixed_values << bc.b_start, bc.b_end;
  return out;
}

inline StepSolution<NodalField> b_step(const Mesh& mesh, const HermiteField& y_new, const FrameState& prev,
                                       const FlowParams& params, const FEMatrices& fe,
                                       const BoundaryConditions& bc) {
  const StepSystem step = assemble_b_system(mesh, y_new, prev, params, fe, bc);
  const ReducedSystem red = eliminate_fixed_dofs(step.system, step.fixed, step.fixed_values);
  const SaddleSolution sol = solve_saddle(red.system, params.solver_tolerance);
  return {NodalField(red.expand(sol.u)), sol.lambda, sol.residual};
}

/// (||d_t y||_star, ||d_t b||_dagger) for consecutive iterates.
inline std::pair<double, double> dt_norms(const FrameState& prev, const FrameState& next, const FEMatrices& fe,
                                          double tau) {
  const Vector dy = next.y.coeffs() - prev.y.coeffs();
  const Vector db = next.b.coeffs() - prev.b.coeffs();
  return {std::sqrt(std::max(0.0, dy.dot(fe.star_vec * dy))) / tau,
          std::sqrt(std::max(0.0, db.dot(fe.dagger_vec * db))) / tau};
}

struct StepReport {
  int k = 0;
  double t = 0.0;
  double tau = 0.0;
  EnergyBreakdown energy;
  double dt_star = 0.0;
  double dt_dagger = 0.0;
  NodalDrift drift;
  /// max_j | |a_k|^2 - |a_{k-1}|^2 - |a_k - a_{k-1}|^2 | for a = y'(x_j), b(x_j)
  double identity_defect_y = 0.0;
  double identity_defect_b = 0.0;
  double residual_y = 0.0;
  double residual_b = 0.0;
  bool energy_increased = false;
};

using StepSink = std::function<void(const StepReport&, const FrameState&)>;

struct FlowResult {
  FrameState final_state;
  EnergyBreakdown initial_energy;
  EnergyBreakdown final_energy;
  int steps = 0;
  double time = 0.0;
  bool stopped_by_tolerance = false;
  int energy_increases = 0;
  /// Per node, sum over steps of |a_k - a_{k-1}|^2 (= tau^2 sum |d_t a_k|^2).
  std::vector<double> increment_sum_y;
  std::vector<double> increment_sum_b;
};

/// Runs the flow from `initial` until K steps are done or the stopping
/// criterion holds. Each completed step is reported to `sink`.
inline FlowResult run_flow(const Mesh& mesh, const FEMatrices& fe, const FrameState& initial,
                           const BoundaryConditions& bc, FlowParams params, const StepSink& sink = {}) {
  params.validate();
  initial.check(mesh);
  const int nn = mesh.num_nodes();

  FlowResult res;
  res.increment_sum_y.assign(nn, 0.0);
  res.increment_sum_b.assign(nn, 0.0);
  res.initial_energy = energy_quad(initial, params.reg, mesh, fe);

  FrameState state = initial;
  EnergyBreakdown energy = res.initial_energy;
  int target = params.step_count();
  const double tau0 = params.tau;
  double t = 0.0;
  int k = 0;
  while (k < target) {
    auto ys = y_step(mesh, state, params, fe, bc);
    auto bs = b_step(mesh, ys.field, state, params, fe, bc);
    FrameState next{std::move(ys.field), std::move(bs.field)};
    const EnergyBreakdown e_next = energy_quad(next, params.reg, mesh, fe);
    const bool increased = e_next.total > energy.total + kEnergyIncreaseTolerance * std::abs(energy.total);

    if (increased && params.guard == MonotonicityGuard::halve_step) {
      params.tau *= 0.5;
      if (params.tau < 1e-12 * tau0)
        throw std::runtime_error("run_flow: step size underflow while enforcing energy decrease");
      if (params.horizon) target = k + static_cast<int>(std::floor((*params.horizon - t) / params.tau));
      continue;
    }

    StepReport rep;
    rep.k = ++k;
    t += params.tau;
    rep.t = t;
    rep.tau = params.tau;
    rep.energy = e_next;
    std::tie(rep.dt_star, rep.dt_dagger) = dt_norms(state, next, fe, params.tau);
    rep.drift = check_nodal_constraints(next);
    for (int j = 0; j < nn; ++j) {
      const Vec3 ty0 = state.y.slope(j), ty1 = next.y.slope(j);
      const Vec3 b0 = state.b.value(j), b1 = next.b.value(j);
      const double iy = (ty1 - ty0).squaredNorm(), ib = (b1 - b0).squaredNorm();
      res.increment_sum_y[j] += iy;
      res.increment_sum_b[j] += ib;
      rep.identity_defect_y = std::max(rep.identity_defect_y, std::abs(ty1.squaredNorm() - ty0.squaredNorm() - iy));
      rep.identity_defect_b = std::max(rep.identity_defect_b, std::abs(b1.squaredNorm() - b0.squaredNorm() - ib));
    }
    rep.residual_y = ys.residual;
    rep.residual_b = bs.residual;
    rep.energy_increased = increased;
    if (increased) ++res.energy_increases;

    state = std::move(next);
    energy = e_next;
    if (sink) sink(rep, state);
    if (params.eps_stop && rep.dt_star + rep.dt_dagger <= *params.eps_stop) {
      res.stopped_by_tolerance = true;
      break;
    }
  }
  res.steps = k;
  res.time = t;
  res.final_energy = energy;
  res.final_state = std::move(state);
  return res;
}

}  // namespace ribbon
