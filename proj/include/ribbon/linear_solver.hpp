#pragma once

// Direct solution of symmetric saddle-point systems
//   [A  B^T] [u]   [f]
//   [B  0  ] [l] = [g]
// with A symmetric positive definite on ker B.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ribbon/mesh_fe.hpp"

namespace ribbon {

struct SaddleSystem {
  SparseMatrix A;  // n x n
  SparseMatrix B;  // m x n
  Vector f;        // n
  Vector g;        // m

  [[nodiscard]] int n() const { return static_cast<int>(A.rows()); }
  [[nodiscard]] int m() const { return static_cast<int>(B.rows()); }
};

struct SaddleSolution {
  Vector u;
  Vector lambda;
  double residual = 0.0;  // relative residual of the full system
};

/// Solver failure. `row` names the offending constraint row, or is -1 when
/// the failure cannot be attributed to a single constraint.
class SaddleError : public std::runtime_error {
 public:
  SaddleError(const std::string& what, int row) : std::runtime_error(what), row_(row) {}
  [[nodiscard]] int row() const { return row_; }

 private:
  int row_;
};

namespace detail {

inline void check_shapes(const SaddleSystem& s) {
  const auto n = s.A.rows();
  if (s.A.cols() != n || s.f.size() != n) throw std::invalid_argument("SaddleSystem: A/f size mismatch");
  if (s.B.rows() > 0 && s.B.cols() != n) throw std::invalid_argument("SaddleSystem: B has wrong column count");
  if (s.g.size() != s.B.rows()) throw std::invalid_argument("SaddleSystem: g size mismatch");
  if (s.B.rows() >= std::max<Eigen::Index>(n, 1) && n > 0)
    throw std::invalid_argument("SaddleSystem: need fewer constraints than unknowns");
}

/// First row of B lying in the span of the preceding rows, or -1. Computed
/// from the pivots of an unpivoted LDL^T factorization of B B^T: pivot i is
/// the squared distance of row i to the span of rows 0..i-1.
inline int first_dependent_row(const SparseMatrix& B) {
  const int m = static_cast<int>(B.rows());
  if (m == 0) return -1;
  const SparseMatrix rowmajor_t = B.transpose();
  const Eigen::MatrixXd gram = Eigen::MatrixXd(B * rowmajor_t);
  Eigen::MatrixXd work = gram;
  for (int i = 0; i < m; ++i) {
    const double norm2 = gram(i, i);
    if (norm2 == 0.0) return i;
    const double pivot = work(i, i);
    if (pivot <= 1e-12 * norm2) return i;
    for (int r = i + 1; r < m; ++r) {
      const double factor = work(r, i) / pivot;
      if (factor == 0.0) continue;
      for (int c = i + 1; c < m; ++c) work(r, c) -= factor * work(i, c);
    }
  }
  return -1;
}

/// Same test specialized to constraint blocks where every row touches its
/// own disjoint set of columns (the nodal constraints of the flow).
inline int first_dependent_row_disjoint(const SparseMatrix& B, bool& disjoint) {
  const SparseMatrix Bt = B.transpose();  // column i of Bt is row i of B
  std::vector<int> owner(B.cols(), -1);
  disjoint = true;
  int zero_row = -1;
  for (int i = 0; i < Bt.outerSize() && disjoint; ++i) {
    double norm2 = 0.0;
    for (SparseMatrix::InnerIterator it(Bt, i); it; ++it) {
      if (it.value() == 0.0) continue;
      if (owner[it.row()] != -1) { disjoint = false; break; }
      owner[it.row()] = i;
      norm2 += it.value() * it.value();
    }
    if (norm2 == 0.0 && zero_row < 0) zero_row = i;
  }
  return zero_row;
}

/// Diagonal D with the rows and columns of D K D of unit max-norm, by a few
/// sweeps of Ruiz's iteration. Powers of two keep the scaling exact.
inline Vector ruiz_scaling(const SparseMatrix& K, int sweeps = 8) {
  const Eigen::Index n = K.rows();
  Vector d = Vector::Ones(n);
  for (int it = 0; it < sweeps; ++it) {
    Vector rowmax = Vector::Zero(n);
    for (int k = 0; k < K.outerSize(); ++k)
      for (SparseMatrix::InnerIterator e(K, k); e; ++e) {
        const double v = std::abs(d[e.row()] * e.value() * d[e.col()]);
        rowmax[e.row()] = std::max(rowmax[e.row()], v);
      }
    for (Eigen::Index i = 0; i < n; ++i)
      if (rowmax[i] > 0.0) d[i] *= std::exp2(std::round(-0.5 * std::log2(rowmax[i])));
  }
  return d;
}

}  // namespace detail

/// Solves the saddle-point system by sparse LU of the assembled KKT matrix
/// (equilibrated, partial pivoting, COLAMD ordering) followed by one
/// refinement step. Throws SaddleError if B is rank deficient or the
/// relative residual exceeds `tolerance`.
inline SaddleSolution solve_saddle(const SaddleSystem& sys, double tolerance = 1e-9) {
  detail::check_shapes(sys);
  const int n = sys.n(), m = sys.m();
  SaddleSolution out;
  if (n == 0) {
    out.u = Vector(0);
    out.lambda = Vector(0);
    return out;
  }

  bool disjoint = false;
  int dep = m > 0 ? detail::first_dependent_row_disjoint(sys.B, disjoint) : -1;
  if (m > 0 && !disjoint) dep = detail::first_dependent_row(sys.B);
  if (dep >= 0)
    throw SaddleError("solve_saddle: constraint row " + std::to_string(dep) + " is linearly dependent", dep);

  std::vector<Triplet> trips;
  trips.reserve(sys.A.nonZeros() + 2 * sys.B.nonZeros());
  for (int k = 0; k < sys.A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.A, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < sys.B.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.B, k); it; ++it) {
      trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
    }
  SparseMatrix kkt(n + m, n + m);
  kkt.setFromTriplets(trips.begin(), trips.end());
  kkt.makeCompressed();

  Vector rhs(n + m);
  rhs << sys.f, sys.g;

  // Symmetric equilibration D K D: the constraint rows are O(1) while the
  // rows of A scale like 1/(tau h^3), and without it the constraints are
  // only met to the accuracy of the large rows.
  const Vector d = detail::ruiz_scaling(kkt);
  const SparseMatrix scaled = d.asDiagonal() * kkt * d.asDiagonal();

  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(scaled);
  lu.factorize(scaled);
  if (lu.info() != Eigen::Success)
    throw SaddleError("solve_saddle: singular KKT matrix (" + lu.lastErrorMessage() + ")", -1);
  auto solve = [&](const Vector& b) -> Vector { return d.cwiseProduct(lu.solve(Vector(d.cwiseProduct(b)))); };
  Vector x = solve(rhs);
  // one step of iterative refinement with the same factors
  Vector r = rhs - kkt * x;
  const Vector x2 = x + solve(r);
  const Vector r2 = rhs - kkt * x2;
  if (r2.norm() < r.norm()) {
    x = x2;
    r = r2;
  }

  const double scale = std::max(rhs.norm(), std::numeric_limits<double>::min());
  out.residual = r.norm() / scale;
  if (!std::isfinite(out.residual) || out.residual > tolerance)
    throw SaddleError("solve_saddle: relative residual " + std::to_string(out.residual) + " above tolerance", -1);
  out.u = x.head(n);
  out.lambda = x.tail(m);
  return out;
}

/// Saddle system with a subset of primal unknowns eliminated.
struct ReducedSystem {
  SaddleSystem system;
  std::vector<int> free_dofs;  // reduced index -> original index
  std::vector<int> fixed_dofs;
  Vector fixed_values;
  int full_size = 0;

  /// Reinserts the fixed values into a reduced primal vector.
  [[nodiscard]] Vector expand(const Vector& reduced) const {
    Vector full(full_size);
    for (std::size_t i = 0; i < free_dofs.size(); ++i) full[free_dofs[i]] = reduced[static_cast<Eigen::Index>(i)];
    for (std::size_t i = 0; i < fixed_dofs.size(); ++i) full[fixed_dofs[i]] = fixed_values[static_cast<Eigen::Index>(i)];
    return full;
  }
};

/// Removes the unknowns `fixed` (with prescribed `values`) from the system;
/// their coupling through A and B moves to the right-hand sides.
inline ReducedSystem eliminate_fixed_dofs(const SaddleSystem& sys, std::span<const int> fixed, const Vector& values) {
  detail::check_shapes(sys);
  const int n = sys.n();
  if (static_cast<Eigen::Index>(fixed.size()) != values.size())
    throw std::invalid_argument("eliminate_fixed_dofs: one value per fixed index required");
  std::vector<int> map(n, 0);
  Vector full_fixed = Vector::Zero(n);
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    const int idx = fixed[i];
    if (idx < 0 || idx >= n) throw std::out_of_range("eliminate_fixed_dofs: index " + std::to_string(idx));
    if (map[idx] == -1) throw std::invalid_argument("eliminate_fixed_dofs: duplicate index " + std::to_string(idx));
    map[idx] = -1;
    full_fixed[idx] = values[static_cast<Eigen::Index>(i)];
  }

  ReducedSystem red;
  red.full_size = n;
  red.fixed_dofs.assign(fixed.begin(), fixed.end());
  red.fixed_values = values;
  for (int i = 0; i < n; ++i)
    if (map[i] == 0) {
      map[i] = static_cast<int>(red.free_dofs.size());
      red.free_dofs.push_back(i);
    }
  const int nf = static_cast<int>(red.free_dofs.size());

  const Vector f_shift = sys.A * full_fixed;
  const Vector g_shift = sys.m() > 0 ? Vector(sys.B * full_fixed) : Vector(0);

  std::vector<Triplet> ta, tb;
  ta.reserve(sys.A.nonZeros());
  for (int k = 0; k < sys.A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.A, k); it; ++it) {
      const int r = map[it.row()], c = map[it.col()];
      if (r >= 0 && c >= 0) ta.emplace_back(r, c, it.value());
    }
  for (int k = 0; k < sys.B.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.B, k); it; ++it) {
      const int c = map[it.col()];
      if (c >= 0) tb.emplace_back(static_cast<int>(it.row()), c, it.value());
    }

  red.system.A.resize(nf, nf);
  red.system.A.setFromTriplets(ta.begin(), ta.end());
  red.system.B.resize(sys.m(), nf);
  red.system.B.setFromTriplets(tb.begin(), tb.end());
  red.system.f.resize(nf);
  for (int i = 0; i < nf; ++i) red.system.f[i] = sys.f[red.free_dofs[i]] - f_shift[red.free_dofs[i]];
  red.system.g = sys.g - g_shift;
  return red;
}

}  // namespace ribbon
