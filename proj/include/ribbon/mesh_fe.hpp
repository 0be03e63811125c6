#pragma once

// Interval partitions and the two finite element spaces used for ribbon
// frames: C^1 piecewise cubic Hermite functions for the centerline and C^0
// piecewise linear functions for the director.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ribbon/quadrature.hpp"

namespace ribbon {

using Vec3 = Eigen::Vector3d;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Partition 0 = x_0 < x_1 < ... < x_N = L of the parameter interval.
/// Element e spans [x_e, x_{e+1}].
class Mesh {
 public:
  explicit Mesh(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 3) throw std::invalid_argument("Mesh: need at least two elements");
    if (nodes_.front() != 0.0) throw std::invalid_argument("Mesh: first node must be 0");
    sizes_.reserve(nodes_.size() - 1);
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      const double hT = nodes_[i] - nodes_[i - 1];
      if (!(hT > 0.0)) throw std::invalid_argument("Mesh: nodes must be strictly increasing");
      sizes_.push_back(hT);
    }
  }

  [[nodiscard]] double length() const { return nodes_.back(); }
  [[nodiscard]] int num_elements() const { return static_cast<int>(sizes_.size()); }
  [[nodiscard]] int num_nodes() const { return static_cast<int>(nodes_.size()); }
  [[nodiscard]] double node(int j) const { return nodes_.at(j); }
  [[nodiscard]] const std::vector<double>& nodes() const { return nodes_; }
  [[nodiscard]] double element_size(int e) const { return sizes_.at(e); }
  [[nodiscard]] const std::vector<double>& element_sizes() const { return sizes_; }
  [[nodiscard]] double h() const { return *std::max_element(sizes_.begin(), sizes_.end()); }
  [[nodiscard]] double h_min() const { return *std::min_element(sizes_.begin(), sizes_.end()); }
  [[nodiscard]] double quasiuniformity() const { return h() / h_min(); }

  /// Element containing x. Elements are left-closed, [x_e, x_{e+1}); the
  /// right endpoint L belongs to the last element.
  [[nodiscard]] int locate(double x) const {
    if (!(x >= 0.0 && x <= length()))
      throw std::out_of_range("Mesh::locate: x = " + std::to_string(x) + " outside [0, L]");
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const int e = static_cast<int>(it - nodes_.begin()) - 1;
    return std::min(e, num_elements() - 1);
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> sizes_;
};

inline Mesh make_uniform_mesh(double length, int num_elements) {
  if (!(length > 0.0)) throw std::invalid_argument("make_uniform_mesh: length must be positive");
  if (num_elements < 2) throw std::invalid_argument("make_uniform_mesh: need N >= 2 elements");
  std::vector<double> nodes(num_elements + 1);
  const double h = length / num_elements;
  for (int j = 0; j <= num_elements; ++j) nodes[j] = j * h;
  nodes.back() = length;
  return Mesh(std::move(nodes));
}

/// Vector-valued function in S^{3,1}: per node a value and a physical
/// derivative. Coefficients are stored node-major as [v_x v_y v_z d_x d_y d_z].
class HermiteField {
 public:
  HermiteField() = default;
  explicit HermiteField(int num_nodes) : coeffs_(Vector::Zero(6 * num_nodes)) {}
  explicit HermiteField(Vector coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.size() % 6 != 0) throw std::invalid_argument("HermiteField: size not a multiple of 6");
  }

  static constexpr int value_dof(int node, int comp) { return 6 * node + comp; }
  static constexpr int slope_dof(int node, int comp) { return 6 * node + 3 + comp; }

  [[nodiscard]] int num_nodes() const { return static_cast<int>(coeffs_.size() / 6); }
  [[nodiscard]] Vec3 value(int j) const { return coeffs_.segment<3>(6 * j); }
  [[nodiscard]] Vec3 slope(int j) const { return coeffs_.segment<3>(6 * j + 3); }
  void set_value(int j, const Vec3& v) { coeffs_.segment<3>(6 * j) = v; }
  void set_slope(int j, const Vec3& d) { coeffs_.segment<3>(6 * j + 3) = d; }

  [[nodiscard]] const Vector& coeffs() const { return coeffs_; }
  [[nodiscard]] Vector& coeffs() { return coeffs_; }

 private:
  Vector coeffs_;
};

/// Vector-valued function in S^{1,0}, stored node-major as [v_x v_y v_z].
class NodalField {
 public:
  NodalField() = default;
  explicit NodalField(int num_nodes) : coeffs_(Vector::Zero(3 * num_nodes)) {}
  explicit NodalField(Vector coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.size() % 3 != 0) throw std::invalid_argument("NodalField: size not a multiple of 3");
  }

  static constexpr int dof(int node, int comp) { return 3 * node + comp; }

  [[nodiscard]] int num_nodes() const { return static_cast<int>(coeffs_.size() / 3); }
  [[nodiscard]] Vec3 value(int j) const { return coeffs_.segment<3>(3 * j); }
  void set_value(int j, const Vec3& v) { coeffs_.segment<3>(3 * j) = v; }

  [[nodiscard]] const Vector& coeffs() const { return coeffs_; }
  [[nodiscard]] Vector& coeffs() { return coeffs_; }

 private:
  Vector coeffs_;
};

/// Sample of a C^1 curve: value and first derivative.
struct CurveSample {
  Vec3 value;
  Vec3 derivative;
};

template <class F>
concept CurveSampler = requires(const F& f, double x) {
  { f(x) } -> std::convertible_to<CurveSample>;
};

template <class F>
concept PointSampler = requires(const F& f, double x) {
  { f(x) } -> std::convertible_to<Vec3>;
};

/// Cubic Hermite shape functions on an element of size h at local
/// coordinate t in [0, 1], ordered (v_0, d_0, v_1, d_1). `order` is the
/// derivative order in the physical coordinate (0..3).
inline std::array<double, 4> hermite_shape(double t, double h, int order) {
  const double t2 = t * t, t3 = t2 * t;
  switch (order) {
    case 0:
      return {1.0 - 3.0 * t2 + 2.0 * t3, h * (t - 2.0 * t2 + t3), 3.0 * t2 - 2.0 * t3, h * (t3 - t2)};
    case 1:
      return {(6.0 * t2 - 6.0 * t) / h, 1.0 - 4.0 * t + 3.0 * t2, (6.0 * t - 6.0 * t2) / h, 3.0 * t2 - 2.0 * t};
    case 2:
      return {(12.0 * t - 6.0) / (h * h), (6.0 * t - 4.0) / h, (6.0 - 12.0 * t) / (h * h), (6.0 * t - 2.0) / h};
    case 3:
      return {12.0 / (h * h * h), 6.0 / (h * h), -12.0 / (h * h * h), 6.0 / (h * h)};
    default:
      throw std::out_of_range("hermite_shape: derivative order must be 0..3");
  }
}

/// Linear shape functions (node e, node e+1).
inline std::array<double, 2> linear_shape(double t, double h, int order) {
  switch (order) {
    case 0: return {1.0 - t, t};
    case 1: return {-1.0 / h, 1.0 / h};
    default: throw std::out_of_range("linear_shape: derivative order must be 0..1");
  }
}

namespace detail {

inline void check_field(const Mesh& mesh, int field_nodes) {
  if (field_nodes != mesh.num_nodes())
    throw std::invalid_argument("field has " + std::to_string(field_nodes) + " nodes, mesh has " +
                                std::to_string(mesh.num_nodes()));
}

}  // namespace detail

/// Evaluates y^(order) restricted to element e at local coordinate t.
inline Vec3 eval_on_element(const Mesh& mesh, const HermiteField& y, int e, double t, int order) {
  const auto s = hermite_shape(t, mesh.element_size(e), order);
  return s[0] * y.value(e) + s[1] * y.slope(e) + s[2] * y.value(e + 1) + s[3] * y.slope(e + 1);
}

inline Vec3 eval_on_element(const Mesh& mesh, const NodalField& b, int e, double t, int order) {
  const auto s = linear_shape(t, mesh.element_size(e), order);
  return s[0] * b.value(e) + s[1] * b.value(e + 1);
}

/// Point evaluation of a Hermite field or one of its first two derivatives.
/// Discontinuous derivatives are taken from the element to the right of a
/// node (left-closed elements), except at x = L.
inline Vec3 eval(const Mesh& mesh, const HermiteField& y, double x, int order) {
  detail::check_field(mesh, y.num_nodes());
  if (order < 0 || order > 2) throw std::out_of_range("eval: Hermite derivative order must be 0..2");
  const int e = mesh.locate(x);
  return eval_on_element(mesh, y, e, (x - mesh.node(e)) / mesh.element_size(e), order);
}

inline Vec3 eval(const Mesh& mesh, const NodalField& b, double x, int order) {
  detail::check_field(mesh, b.num_nodes());
  if (order < 0 || order > 1) throw std::out_of_range("eval: nodal derivative order must be 0..1");
  const int e = mesh.locate(x);
  return eval_on_element(mesh, b, e, (x - mesh.node(e)) / mesh.element_size(e), order);
}

/// Nodal interpolant I_h^{3,1}: matches values and first derivatives at nodes.
template <CurveSampler F>
HermiteField interpolate_hermite(const F& sampler, const Mesh& mesh) {
  HermiteField y(mesh.num_nodes());
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    const CurveSample s = sampler(mesh.node(j));
    y.set_value(j, s.value);
    y.set_slope(j, s.derivative);
  }
  return y;
}

/// Nodal interpolant I_h^{1,0}.
template <PointSampler F>
NodalField interpolate_nodal(const F& sampler, const Mesh& mesh) {
  NodalField b(mesh.num_nodes());
  for (int j = 0; j < mesh.num_nodes(); ++j) b.set_value(j, sampler(mesh.node(j)));
  return b;
}

/// Elementwise average of y'' (the operator A_h), h_T^{-1}(y'(x_{e+1}) - y'(x_e)).
inline Vec3 element_avg_second_derivative(const Mesh& mesh, const HermiteField& y, int e) {
  if (e < 0 || e >= mesh.num_elements()) throw std::out_of_range("element index out of range");
  return (y.slope(e + 1) - y.slope(e)) / mesh.element_size(e);
}

/// Elementwise mean of the nodal interpolant of y' (the operator M_h).
inline Vec3 element_nodal_avg_first_derivative(const Mesh& mesh, const HermiteField& y, int e) {
  if (e < 0 || e >= mesh.num_elements()) throw std::out_of_range("element index out of range");
  return 0.5 * (y.slope(e) + y.slope(e + 1));
}

/// Constant derivative of a piecewise linear field on element e.
inline Vec3 element_derivative(const Mesh& mesh, const NodalField& b, int e) {
  if (e < 0 || e >= mesh.num_elements()) throw std::out_of_range("element index out of range");
  return (b.value(e + 1) - b.value(e)) / mesh.element_size(e);
}

/// Kronecker product S (x) I_3, matching the node-major vector layouts above.
inline SparseMatrix expand3(const SparseMatrix& scalar) {
  std::vector<Triplet> trips;
  trips.reserve(3 * scalar.nonZeros());
  for (int k = 0; k < scalar.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(scalar, k); it; ++it)
      for (int c = 0; c < 3; ++c)
        trips.emplace_back(3 * static_cast<int>(it.row()) + c, 3 * static_cast<int>(it.col()) + c, it.value());
  SparseMatrix out(3 * scalar.rows(), 3 * scalar.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

/// Mass and stiffness matrices of both spaces.
///
/// Scalar Hermite matrices act on [v_0 d_0 v_1 d_1 ...]; scalar nodal
/// matrices on [v_0 v_1 ...]. The `*_vec` members are the expansions to
/// R^3-valued fields in the layouts of HermiteField and NodalField.
struct FEMatrices {
  SparseMatrix hermite_mass;        // int w v
  SparseMatrix hermite_stiffness;   // int w'' v''
  SparseMatrix nodal_mass;          // int r s
  SparseMatrix nodal_stiffness;     // int r' s'
  std::vector<double> node_weights; // trapezoidal weights, sum = L

  SparseMatrix hermite_mass_vec, hermite_stiffness_vec;
  SparseMatrix nodal_mass_vec, nodal_stiffness_vec;
  SparseMatrix star_vec;     // (.,.)_star = mass + second-derivative stiffness
  SparseMatrix dagger_vec;   // (.,.)_dagger = mass + first-derivative stiffness
};

inline FEMatrices assemble_matrices(const Mesh& mesh) {
  const int ne = mesh.num_elements();
  const int nn = mesh.num_nodes();
  // degree 6 integrand for the cubic mass, degree 2 for y'' products,
  // degree 2 for the linear mass, degree 0 for b' products
  const QuadratureRule g4 = gauss_legendre(4);
  const QuadratureRule g2 = gauss_legendre(2);
  const QuadratureRule g1 = gauss_legendre(1);

  std::vector<Triplet> hm, hk, nm, nk;
  for (int e = 0; e < ne; ++e) {
    const double hT = mesh.element_size(e);
    const std::array<int, 4> hd{2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3};
    auto accumulate4 = [&](std::vector<Triplet>& out, const QuadratureRule& q, int order) {
      double loc[4][4] = {};
      for (std::size_t p = 0; p < q.points.size(); ++p) {
        const auto s = hermite_shape(q.points[p], hT, order);
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) loc[a][b] += q.weights[p] * hT * s[a] * s[b];
      }
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) out.emplace_back(hd[a], hd[b], loc[a][b]);
    };
    accumulate4(hm, g4, 0);
    accumulate4(hk, g2, 2);

    auto accumulate2 = [&](std::vector<Triplet>& out, const QuadratureRule& q, int order) {
      double loc[2][2] = {};
      for (std::size_t p = 0; p < q.points.size(); ++p) {
        const auto s = linear_shape(q.points[p], hT, order);
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) loc[a][b] += q.weights[p] * hT * s[a] * s[b];
      }
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) out.emplace_back(e + a, e + b, loc[a][b]);
    };
    accumulate2(nm, g2, 0);
    accumulate2(nk, g1, 1);
  }

  FEMatrices m;
  m.hermite_mass.resize(2 * nn, 2 * nn);
  m.hermite_mass.setFromTriplets(hm.begin(), hm.end());
  m.hermite_stiffness.resize(2 * nn, 2 * nn);
  m.hermite_stiffness.setFromTriplets(hk.begin(), hk.end());
  m.nodal_mass.resize(nn, nn);
  m.nodal_mass.setFromTriplets(nm.begin(), nm.end());
  m.nodal_stiffness.resize(nn, nn);
  m.nodal_stiffness.setFromTriplets(nk.begin(), nk.end());

  m.node_weights.assign(nn, 0.0);
  for (int e = 0; e < ne; ++e) {
    m.node_weights[e] += 0.5 * mesh.element_size(e);
    m.node_weights[e + 1] += 0.5 * mesh.element_size(e);
  }

  m.hermite_mass_vec = expand3(m.hermite_mass);
  m.hermite_stiffness_vec = expand3(m.hermite_stiffness);
  m.nodal_mass_vec = expand3(m.nodal_mass);
  m.nodal_stiffness_vec = expand3(m.nodal_stiffness);
  m.star_vec = m.hermite_mass_vec + m.hermite_stiffness_vec;
  m.dagger_vec = m.nodal_mass_vec + m.nodal_stiffness_vec;
  return m;
}

}  // namespace ribbon
