#pragma once

// Seeded property suites for every module, and the `verify` command that
// runs them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ribbon/commands.hpp"
#include "ribbon/energy.hpp"
#include "ribbon/frames.hpp"
#include "ribbon/gradient_flow.hpp"
#include "ribbon/io.hpp"
#include "ribbon/linear_solver.hpp"
#include "ribbon/mesh_fe.hpp"
#include "ribbon/quadrature.hpp"

namespace ribbon {

struct PropertyResult {
  std::string module;
  std::string property;
  bool passed = false;
  std::string detail;
};

using PsiFunction = std::function<PsiEval(double, double, double)>;

struct VerifyOptions {
  std::uint64_t seed = 20240611;
  long samples = 1'000'000;  // size of the random sweeps of the density lemmas
  std::string fault;         // "" or "psi-ds-sign"
};

inline constexpr const char* kFaultPsiSign = "psi-ds-sign";

/// psi_delta, or the deliberately broken variant with the sign of the
/// second partial flipped.
inline PsiFunction psi_under_test(const std::string& fault) {
  if (fault.empty()) return psi_delta;
  if (fault == kFaultPsiSign)
    return [](double r, double s, double d) {
      PsiEval p = psi_delta(r, s, d);
      p.d_s = -p.d_s;
      return p;
    };
  throw std::invalid_argument("unknown fault `" + fault + "` (known: " + kFaultPsiSign + ")");
}

namespace detail {

using Rng = std::mt19937_64;

/// Independent stream per suite so that suites reproduce in isolation.
inline Rng suite_rng(std::uint64_t seed, std::uint64_t suite) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(suite)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

inline Vec3 random_vec(Rng& rng, double scale = 1.0) {
  return Vec3(uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale));
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline Mesh random_mesh(Rng& rng, double length, int n) {
  std::vector<double> w(n);
  for (auto& x : w) x = uniform(rng, 0.5, 1.5);
  double total = 0.0;
  for (const double x : w) total += x;
  std::vector<double> nodes{0.0};
  double acc = 0.0;
  for (int e = 0; e < n; ++e) {
    acc += w[e];
    nodes.push_back(e + 1 == n ? length : length * acc / total);
  }
  return Mesh(std::move(nodes));
}

inline FrameState random_state(Rng& rng, int num_nodes) {
  FrameState s{HermiteField(num_nodes), NodalField(num_nodes)};
  for (int i = 0; i < s.y.coeffs().size(); ++i) s.y.coeffs()[i] = uniform(rng, -1.0, 1.0);
  for (int i = 0; i < s.b.coeffs().size(); ++i) s.b.coeffs()[i] = uniform(rng, -1.0, 1.0);
  return s;
}

/// (a_0, a_1, ...) -> sum_i a_i, with a_i = int_T f over element T by a
/// 10-point Gauss rule.
template <class F>
double integrate(const Mesh& mesh, const F& f) {
  static const QuadratureRule g = gauss_legendre(10);
  double sum = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double hT = mesh.element_size(e);
    for (std::size_t p = 0; p < g.points.size(); ++p) sum += g.weights[p] * hT * f(e, g.points[p]);
  }
  return sum;
}

}  // namespace detail

// ---------------------------------------------------------------- mesh_fe

/// Interpolation error seminorms |f - I f|_{H^r} for r = 0..max_order.
template <class Interp>
std::vector<double> interpolation_errors(const Mesh& mesh, const Interp& interp_eval,
                                         const std::function<double(double, int)>& f, int max_order) {
  std::vector<double> out;
  for (int r = 0; r <= max_order; ++r) {
    const double e2 = detail::integrate(mesh, [&](int e, double t) {
      const double x = mesh.node(e) + t * mesh.element_size(e);
      const double d = f(x, r) - interp_eval(e, t, r);
      return d * d;
    });
    out.push_back(std::sqrt(e2));
  }
  return out;
}

/// log2 ratios of errors on meshes N and 2N, per derivative order.
inline std::vector<double> observed_orders(const std::vector<double>& coarse, const std::vector<double>& fine) {
  std::vector<double> out;
  for (std::size_t r = 0; r < coarse.size(); ++r) out.push_back(std::log2(coarse[r] / fine[r]));
  return out;
}

/// Hermite interpolation orders of a scalar function given with its first
/// three derivatives, on uniform meshes of [0, length] with N and 2N cells.
inline std::vector<double> hermite_orders(const std::function<double(double, int)>& f, double length, int N) {
  std::vector<std::vector<double>> errs;
  for (const int n : {N, 2 * N}) {
    const Mesh mesh = make_uniform_mesh(length, n);
    const HermiteField y =
        interpolate_hermite([&](double x) { return CurveSample{Vec3(f(x, 0), 0, 0), Vec3(f(x, 1), 0, 0)}; }, mesh);
    errs.push_back(interpolation_errors(
        mesh, [&](int e, double t, int r) { return eval_on_element(mesh, y, e, t, r).x(); }, f, 2));
  }
  return observed_orders(errs[0], errs[1]);
}

inline std::vector<double> nodal_orders(const std::function<double(double, int)>& f, double length, int N) {
  std::vector<std::vector<double>> errs;
  for (const int n : {N, 2 * N}) {
    const Mesh mesh = make_uniform_mesh(length, n);
    const NodalField b = interpolate_nodal([&](double x) { return Vec3(f(x, 0), 0, 0); }, mesh);
    errs.push_back(interpolation_errors(
        mesh, [&](int e, double t, int r) { return eval_on_element(mesh, b, e, t, r).x(); }, f, 1));
  }
  return observed_orders(errs[0], errs[1]);
}

inline std::vector<PropertyResult> verify_mesh_fe(const VerifyOptions& opt) {
  auto rng = detail::suite_rng(opt.seed, 1);
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({"mesh_fe", std::move(name), ok, std::move(detail)});
  };

  {  // I o I = I and exactness on the own polynomial degree
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Mesh mesh = detail::random_mesh(rng, detail::uniform(rng, 0.5, 3.0), 2 + trial % 9);
      const FrameState s = detail::random_state(rng, mesh.num_nodes());
      auto as_curve = [&](double x) { return CurveSample{eval(mesh, s.y, x, 0), eval(mesh, s.y, x, 1)}; };
      auto as_point = [&](double x) { return eval(mesh, s.b, x, 0); };
      worst = std::max(worst, (interpolate_hermite(as_curve, mesh).coeffs() - s.y.coeffs()).lpNorm<Eigen::Infinity>());
      worst = std::max(worst, (interpolate_nodal(as_point, mesh).coeffs() - s.b.coeffs()).lpNorm<Eigen::Infinity>());
      // a global cubic is reproduced exactly inside elements
      const Vec3 c0 = detail::random_vec(rng), c1 = detail::random_vec(rng), c2 = detail::random_vec(rng),
                 c3 = detail::random_vec(rng);
      const HermiteField cubic = interpolate_hermite(
          [&](double x) { return CurveSample{c0 + x * (c1 + x * (c2 + x * c3)), c1 + x * (2.0 * c2 + 3.0 * x * c3)}; },
          mesh);
      const NodalField line = interpolate_nodal([&](double x) { return Vec3(c0 + x * c1); }, mesh);
      for (int q = 0; q < 20; ++q) {
        const double x = detail::uniform(rng, 0.0, mesh.length());
        worst = std::max(worst, (eval(mesh, cubic, x, 0) - (c0 + x * (c1 + x * (c2 + x * c3)))).norm() /
                                    std::max(1.0, std::pow(mesh.length(), 3)));
        worst = std::max(worst, (eval(mesh, line, x, 0) - (c0 + x * c1)).norm());
      }
    }
    add("interpolation idempotent and exact on its space", worst <= 1e-12, "max deviation " + detail::fmt(worst));
  }

  {  // convergence orders; the H^3 function has |x - 1|^{2.55} behaviour at a node
    auto smooth = [](double x, int r) {
      switch (r) {
        case 0: return std::sin(2.0 * x);
        case 1: return 2.0 * std::cos(2.0 * x);
        case 2: return -4.0 * std::sin(2.0 * x);
        default: return -8.0 * std::cos(2.0 * x);
      }
    };
    constexpr double a = 2.55;
    auto rough = [](double x, int r) {
      const double u = x - 1.0, m = std::abs(u), sg = u < 0.0 ? -1.0 : 1.0;
      switch (r) {
        case 0: return std::pow(m, a);
        case 1: return a * std::pow(m, a - 1.0) * sg;
        case 2: return a * (a - 1.0) * std::pow(m, a - 2.0);
        default: return a * (a - 1.0) * (a - 2.0) * std::pow(m, a - 3.0) * sg;
      }
    };
    const auto p1 = nodal_orders(smooth, 2.0, 64);
    const auto h_rough = hermite_orders(rough, 2.0, 64);
    const auto h_smooth = hermite_orders(smooth, 2.0, 32);
    bool ok = true;
    std::string d = "P1 (r=0,1):";
    for (int r = 0; r <= 1; ++r) {
      ok = ok && std::abs(p1[r] - (2 - r)) <= 0.15;
      d += " " + detail::fmt(p1[r]);
    }
    d += "; Hermite, H^3 data (r=0,1,2):";
    for (int r = 0; r <= 2; ++r) {
      ok = ok && std::abs(h_rough[r] - (3 - r)) <= 0.15;
      d += " " + detail::fmt(h_rough[r]);
    }
    d += "; Hermite, smooth data:";
    for (int r = 0; r <= 2; ++r) {
      ok = ok && h_smooth[r] >= (3 - r) - 0.15;
      d += " " + detail::fmt(h_smooth[r]);
    }
    add("interpolation orders 2-r and 3-r", ok, d);
  }

  {  // A_h: self-adjoint on elementwise data, L^2 contraction
    double sym = 0.0, contr = -1.0;
    for (int trial = 0; trial < 200; ++trial) {
      const Mesh mesh = detail::random_mesh(rng, detail::uniform(rng, 0.5, 3.0), 2 + trial % 12);
      const FrameState s = detail::random_state(rng, mesh.num_nodes());
      const FrameState t = detail::random_state(rng, mesh.num_nodes());
      auto av = [&](const HermiteField& y, int e) { return element_avg_second_derivative(mesh, y, e); };
      const double lhs = detail::integrate(mesh, [&](int e, double q) {
        return av(s.y, e).dot(eval_on_element(mesh, t.y, e, q, 2));
      });
      const double rhs = detail::integrate(mesh, [&](int e, double q) {
        return eval_on_element(mesh, s.y, e, q, 2).dot(av(t.y, e));
      });
      sym = std::max(sym, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      const double na = detail::integrate(mesh, [&](int e, double) { return av(s.y, e).squaredNorm(); });
      const double nv = detail::integrate(mesh, [&](int e, double q) {
        return eval_on_element(mesh, s.y, e, q, 2).squaredNorm();
      });
      contr = std::max(contr, (na - nv) / nv);
    }
    add("A_h self-adjoint", sym <= 1e-12, "max relative asymmetry " + detail::fmt(sym));
    add("A_h contractive in L2", contr <= 1e-12, "max (|Av|^2 - |v|^2)/|v|^2 = " + detail::fmt(contr));
  }

  {  // inverse estimate on single cubic elements of widely varying size
    double ratio = 0.0;
    for (int trial = 0; trial < 10'000; ++trial) {
      const double hT = std::pow(10.0, detail::uniform(rng, -4.0, 1.0));
      const Mesh mesh({0.0, hT, 2.0 * hT});
      const FrameState s = detail::random_state(rng, 3);
      const double l2 = std::sqrt(detail::integrate(mesh, [&](int e, double q) {
        if (e != 0) return 0.0;
        return eval_on_element(mesh, s.y, e, q, 0).squaredNorm();
      }));
      double sup = 0.0;
      for (int i = 0; i <= 200; ++i) sup = std::max(sup, eval_on_element(mesh, s.y, 0, i / 200.0, 0).norm());
      ratio = std::max(ratio, sup * std::sqrt(hT) / l2);
    }
    // sup |p| <= (n+1) |I|^{-1/2} ||p|| for polynomials of degree n
    add("inverse estimate ratio bounded", ratio <= 4.0, "max |v|_inf h^{1/2} / |v|_L2 = " + detail::fmt(ratio));
  }

  {  // assembled forms against 10-point Gauss
    double mass = 0.0, star = 0.0, rows = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Mesh mesh = detail::random_mesh(rng, detail::uniform(rng, 0.5, 3.0), 2 + trial % 10);
      const FEMatrices fe = assemble_matrices(mesh);
      const FrameState s = detail::random_state(rng, mesh.num_nodes());
      const Vector& y = s.y.coeffs();
      const Vector& b = s.b.coeffs();
      const double m_ref = detail::integrate(mesh, [&](int e, double q) {
        return eval_on_element(mesh, s.y, e, q, 0).squaredNorm();
      });
      const double k_ref = detail::integrate(mesh, [&](int e, double q) {
        return eval_on_element(mesh, s.y, e, q, 2).squaredNorm();
      });
      const double bm_ref = detail::integrate(mesh, [&](int e, double q) {
        return eval_on_element(mesh, s.b, e, q, 0).squaredNorm();
      });
      const double bk_ref = detail::integrate(mesh, [&](int e, double q) {
        return eval_on_element(mesh, s.b, e, q, 1).squaredNorm();
      });
      mass = std::max(mass, std::abs(y.dot(fe.hermite_mass_vec * y) - m_ref) / m_ref);
      mass = std::max(mass, std::abs(b.dot(fe.nodal_mass_vec * b) - bm_ref) / bm_ref);
      star = std::max(star, std::abs(y.dot(fe.star_vec * y) - (m_ref + k_ref)) / (m_ref + k_ref));
      star = std::max(star, std::abs(b.dot(fe.dagger_vec * b) - (bm_ref + bk_ref)) / (bm_ref + bk_ref));
      const Vector ones = Vector::Ones(mesh.num_nodes());
      rows = std::max(rows, (fe.nodal_stiffness * ones).lpNorm<Eigen::Infinity>() * mesh.h_min());
    }
    add("mass forms match 10-point Gauss", mass <= 1e-12, "max relative error " + detail::fmt(mass));
    add("star and dagger forms match 10-point Gauss", star <= 1e-12, "max relative error " + detail::fmt(star));
    add("nodal stiffness annihilates constants", rows <= 1e-12, "max row sum * h " + detail::fmt(rows));
  }
  return out;
}

// ----------------------------------------------------------------- energy

/// Max relative deviation of the partials of `psi` from central differences
/// at delta, normalized by max(|grad psi|, 1).
inline double psi_fd_error(const PsiFunction& psi, double delta, int samples, detail::Rng& rng) {
  double worst = 0.0;
  const double step = 1e-5 * delta;
  for (int i = 0; i < samples; ++i) {
    double r = detail::uniform(rng, 0.0, 4.0), s = detail::uniform(rng, 0.0, 4.0);
    if (i % 2 == 1) s = std::max(0.0, r + delta * detail::uniform(rng, -3.0, 3.0));
    const PsiEval p = psi(r, s, delta);
    const double fr = (psi(r + step, s, delta).value - psi(r - step, s, delta).value) / (2.0 * step);
    const double fs = (psi(r, s + step, delta).value - psi(r, s - step, delta).value) / (2.0 * step);
    const double scale = std::max(std::hypot(p.d_r, p.d_s), 1.0);
    worst = std::max(worst, std::max(std::abs(fr - p.d_r), std::abs(fs - p.d_s)) / scale);
  }
  return worst;
}

/// Samples (alpha, beta) with a mix of scales and near-diagonal pairs.
inline std::pair<double, double> sample_density_point(detail::Rng& rng) {
  const double scale = std::pow(10.0, detail::uniform(rng, -2.0, 1.0));
  const double a = detail::uniform(rng, -scale, scale);
  const double b = detail::uniform(rng, 0.0, 1.0) < 0.3 ? a * (1.0 + detail::uniform(rng, -0.05, 0.05))
                                                         : detail::uniform(rng, -scale, scale);
  return {a, b};
}

inline std::vector<PropertyResult> verify_energy(const VerifyOptions& opt) {
  auto rng = detail::suite_rng(opt.seed, 2);
  const PsiFunction psi = psi_under_test(opt.fault);
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({"energy", std::move(name), ok, std::move(detail)});
  };
  const long n = opt.samples;

  {
    double worst = -1.0;
    for (long i = 0; i < n; ++i) {
      const double x = detail::uniform(rng, -10.0, 10.0), d = detail::uniform(rng, 0.0, 1.0);
      const auto m = mod_delta(x, d);
      worst = std::max(worst, std::abs(m.value - std::abs(x)) - d);
      if (m.value < d || std::abs(m.slope) > 1.0 || (d > 0 && *m.curvature > 1.0 / d * (1.0 + 1e-15)))
        worst = std::max(worst, 1.0);
    }
    add("regularized modulus bounds", worst <= 1e-15, "max(| |x|_d - |x| | - d) = " + detail::fmt(worst));
  }

  {  // local Lipschitz continuity with constant 21
    std::string d;
    bool ok = true;
    for (const double delta : {0.0, 1e-1, 1e-2}) {
      double ratio = 0.0;
      for (long i = 0; i < n; ++i) {
        const auto [a, b] = sample_density_point(rng);
        double at, bt;
        if (i % 2 == 0) {
          at = a + detail::uniform(rng, -0.1, 0.1) * std::max(std::abs(a), 0.01);
          bt = b + detail::uniform(rng, -0.1, 0.1) * std::max(std::abs(b), 0.01);
        } else {
          std::tie(at, bt) = sample_density_point(rng);
        }
        const double lhs = std::abs(q_bar(a, b) - q_bar_delta(at, bt, delta));
        const double rhs = std::abs(b - bt) * std::abs(b + bt) + std::abs(a - at) * std::abs(a + at) + delta;
        if (lhs > 0.0) ratio = std::max(ratio, rhs > 0.0 ? lhs / rhs : INFINITY);
      }
      ok = ok && ratio <= 21.0;
      d += "delta=" + detail::fmt(delta) + ": max ratio " + detail::fmt(ratio) + "; ";
    }
    add("local Lipschitz bound (constant 21)", ok, d);
  }

  {  // midpoint convexity of the corrected density
    double worst = -1.0;
    for (long i = 0; i < n; ++i) {
      const auto [a, b] = sample_density_point(rng);
      const auto [c, e] = sample_density_point(rng);
      const double pa = std::abs(a), pb = std::abs(b), pc = std::abs(c), pe = std::abs(e);
      const double mid = q_bar(0.5 * (pa + pc), 0.5 * (pb + pe));
      const double avg = 0.5 * (q_bar(pa, pb) + q_bar(pc, pe));
      worst = std::max(worst, (mid - avg) / std::max(avg, 1e-300));
    }
    add("midpoint convexity of the corrected density", worst <= 1e-12,
        "max (Q(mid) - mean Q) / mean Q = " + detail::fmt(worst));
  }

  {  // delta = 0 reproduces the unregularized density
    double worst = 0.0;
    for (int i = 0; i <= 400; ++i)
      for (int j = 0; j <= 400; ++j) {
        const double a = 0.0125 * i, b = 0.0125 * j;
        const double ref = q_bar(a, b);
        worst = std::max(worst, std::abs(q_bar_delta(a, b, 0.0) - ref) / std::max(ref, 1.0));
      }
    add("regularized density at delta=0 equals the density", worst <= 1e-12, "max deviation " + detail::fmt(worst));
  }

  {  // C^1 across alpha = beta
    double worst = 0.0;
    for (int i = 1; i <= 200; ++i) {
      const double b = 0.05 * i;
      for (const double eps : {1e-6, -1e-6}) {
        const auto g = q_bar_gradient(b * (1.0 + eps), b);
        worst = std::max(worst, std::hypot(g.first, g.second - 8.0 * b) / (8.0 * b));
        worst = std::max(worst, std::abs(q_bar(b * (1.0 + eps), b) - 4.0 * b * b) / (4.0 * b * b));
      }
    }
    add("density continuous and C^1 across alpha = beta", worst <= 1e-5, "max one-sided jump " + detail::fmt(worst));
  }

  {
    const double err = psi_fd_error(psi, 1e-2, 10'000, rng);
    add("psi_delta partials match finite differences", err <= 1e-6, "delta=1e-2: max relative error " + detail::fmt(err));
  }

  {  // derivative bounds: |grad| uniform in delta, second differences ~ 1/delta
    std::string d;
    double gsup = 0.0;
    std::vector<double> hess_delta;
    for (const double delta : {1e-1, 1e-2, 1e-3}) {
      double g = 0.0, hmax = 0.0;
      const double step = 1e-4 * delta;
      for (long i = 0; i < std::min<long>(n, 200'000); ++i) {
        double r = detail::uniform(rng, 0.0, 4.0), s = detail::uniform(rng, 0.0, 4.0);
        if (i % 3 == 1) s = std::max(0.0, r + delta * detail::uniform(rng, -3.0, 3.0));
        if (i % 3 == 2) {
          r = delta * detail::uniform(rng, 0.0, 3.0);
          s = delta * detail::uniform(rng, 0.0, 3.0);
        }
        const PsiEval p = psi(r, s, delta);
        g = std::max(g, std::hypot(p.d_r, p.d_s));
        const PsiEval pr = psi(r + step, s, delta), ps = psi(r, s + step, delta);
        const double h11 = (pr.d_r - p.d_r) / step, h12 = (ps.d_r - p.d_r) / step, h22 = (ps.d_s - p.d_s) / step;
        hmax = std::max({hmax, std::abs(h11), std::abs(h12), std::abs(h22)});
      }
      gsup = std::max(gsup, g);
      hess_delta.push_back(hmax * delta);
      d += "delta=" + detail::fmt(delta) + ": sup|grad| " + detail::fmt(g) + ", delta*sup|D2| " + detail::fmt(hmax * delta) + "; ";
    }
    // |sigma| <= 1, 4 s^2 / D^2 <= 1 and 8 s / D <= 4 give |grad psi| <= sqrt(3^2 + 7^2)
    const bool ok = gsup <= std::sqrt(58.0) && hess_delta.back() <= 2.0 * hess_delta.front();
    add("psi_delta derivative bounds", ok, d);
  }

  {  // Taylor remainder of g(a, b) = psi(|a|^2, |b|^2) / 2 about (a~, b~)
    std::string d;
    std::vector<double> fitted;
    for (const double delta : {1e-1, 1e-2, 1e-3}) {
      double c = 0.0;
      for (long i = 0; i < std::min<long>(n, 200'000); ++i) {
        const Vec3 a = detail::random_vec(rng), b = detail::random_vec(rng);
        const double scale = std::pow(10.0, detail::uniform(rng, -4.0, 0.0));
        const Vec3 at = a + detail::random_vec(rng, scale), bt = b + detail::random_vec(rng, scale);
        const PsiEval pt = psi(at.squaredNorm(), bt.squaredNorm(), delta);
        const double gamma = 0.5 * (psi(a.squaredNorm(), b.squaredNorm(), delta).value - pt.value) -
                             (pt.d_r * at.dot(a - at) + pt.d_s * bt.dot(b - bt));
        const double norms = a.squaredNorm() + at.squaredNorm() + b.squaredNorm() + bt.squaredNorm();
        const double dist = (a - at).squaredNorm() + (b - bt).squaredNorm();
        c = std::max(c, std::abs(gamma) / ((norms / delta + 1.0) * dist));
      }
      fitted.push_back(c);
      d += "delta=" + detail::fmt(delta) + ": fitted c_Gamma " + detail::fmt(c) + "; ";
    }
    const bool ok = *std::max_element(fitted.begin(), fitted.end()) <= 2.0 * fitted.front();
    add("Taylor remainder controlled", ok, d);
  }

  {  // quadrature functional: components and brute-force oracle
    double worst = 0.0, sum_err = 0.0, neg = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Mesh mesh = detail::random_mesh(rng, detail::uniform(rng, 0.5, 3.0), 2 + trial % 10);
      const FEMatrices fe = assemble_matrices(mesh);
      const FrameState s = detail::random_state(rng, mesh.num_nodes());
      const RegParams reg{detail::uniform(rng, 0.0, 0.5), detail::uniform(rng, 0.05, 1.0), detail::uniform(rng, 0.05, 1.0)};
      const EnergyBreakdown e = energy_quad(s, reg, mesh, fe);
      auto mean = [&](const std::function<Vec3(int, double)>& v, int el) {
        static const QuadratureRule g = gauss_legendre(10);
        Vec3 acc = Vec3::Zero();
        for (std::size_t p = 0; p < g.points.size(); ++p) acc += g.weights[p] * v(el, g.points[p]);
        return acc;
      };
      auto ypp = [&](int el, double q) { return eval_on_element(mesh, s.y, el, q, 2); };
      const double bend = 0.5 * detail::integrate(mesh, [&](int el, double q) { return ypp(el, q).squaredNorm(); });
      const double tw = 2.5 * detail::integrate(mesh, [&](int el, double q) {
        return eval_on_element(mesh, s.b, el, q, 1).squaredNorm();
      });
      const double ps = 0.5 * detail::integrate(mesh, [&](int el, double q) {
        return psi_value(mean(ypp, el).squaredNorm(), eval_on_element(mesh, s.b, el, q, 1).squaredNorm(), reg.delta);
      });
      const double p1 = detail::integrate(mesh, [&](int el, double q) {
        auto c = [&](int j) { return s.y.slope(j).dot(s.b.value(j)); };
        const double v = (1.0 - q) * c(el) * c(el) + q * c(el + 1) * c(el + 1);
        return v;
      }) / (2.0 * reg.eps1);
      const double p2 = detail::integrate(mesh, [&](int el, double q) {
        const Vec3 m = 0.5 * (eval(mesh, s.y, mesh.node(el), 1) + eval_on_element(mesh, s.y, el, 1.0, 1));
        const double c = m.dot(eval_on_element(mesh, s.b, el, q, 1));
        return c * c;
      }) / (2.0 * reg.eps2);
      const double ref = bend + tw + ps + p1 + p2;
      worst = std::max(worst, std::abs(e.total - ref) / ref);
      sum_err = std::max(sum_err, std::abs(e.bend + e.twist + e.psi + e.penalty1 + e.penalty2 - e.total));
      neg = std::min({neg, e.bend, e.twist, e.psi, e.penalty1, e.penalty2});
    }
    add("quadrature energy matches 10-point Gauss oracle", worst <= 1e-10, "max relative error " + detail::fmt(worst));
    add("energy components nonnegative and summing to total", sum_err == 0.0 && neg >= 0.0,
        "sum defect " + detail::fmt(sum_err) + ", min component " + detail::fmt(neg));
  }
  return out;
}

// ----------------------------------------------------------------- frames

inline std::vector<PropertyResult> verify_frames(const VerifyOptions& opt) {
  auto rng = detail::suite_rng(opt.seed, 3);
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({"frames", std::move(name), ok, std::move(detail)});
  };

  {  // random smooth unit tangents with nonvertical direction
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const double w1 = detail::uniform(rng, -3, 3), w2 = detail::uniform(rng, -3, 3), tilt = detail::uniform(rng, -1.2, 1.2);
      const double alpha = detail::uniform(rng, -3, 3);
      const bool normalize = trial % 2 == 0;
      auto tangent = [=](double x) {
        const double th = w1 * x, ph = tilt * std::sin(w2 * x);
        return Vec3(std::cos(ph) * std::cos(th), std::cos(ph) * std::sin(th), std::sin(ph));
      };
      const auto dir = rotated_director(tangent, alpha, normalize);
      for (int i = 0; i < 50; ++i) {
        const double x = detail::uniform(rng, 0.0, 5.0);
        worst = std::max(worst, std::abs(tangent(x).dot(dir(x))));
      }
    }
    add("rotated director orthogonal to tangent", worst <= 1e-13, "max |t.b| " + detail::fmt(worst));
  }

  {
    const InitialData m = moebius_initial();
    double det_dev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const double x = m.length * i / 1000.0;
      const Vec3 t = m.centerline(x).derivative, b = m.director(x);
      Eigen::Matrix3d f;
      f << t, b, t.cross(b);
      det_dev = std::max(det_dev, std::abs(f.determinant() - 1.0));
    }
    add("Moebius frame right-handed orthonormal", det_dev <= 1e-12, "max |det - 1| " + detail::fmt(det_dev));
  }

  {
    double worst = 0.0;
    const InitialData h = helix_initial();
    for (int i = 0; i <= 1000; ++i) {
      const double x = h.length * i / 1000.0;
      const Vec3 t = h.centerline(x).derivative, b = h.director(x);
      worst = std::max({worst, std::abs(b.norm() - 1.0), std::abs(t.dot(b)), std::abs(t.norm() - 1.0)});
    }
    add("helix frame unit and orthogonal", worst <= 1e-12, "max deviation " + detail::fmt(worst));
  }

  {
    bool exact = true;
    for (const int N : {3, 10, 80}) {
      for (const InitialData& d : {moebius_initial(), helix_initial()}) {
        const DiscreteInitial di = discretize_initial(d, make_uniform_mesh(d.length, N));
        const CurveSample s0 = d.centerline(0.0), s1 = d.centerline(d.length);
        exact = exact && di.bc.y_start == s0.value && di.bc.dy_start == s0.derivative && di.bc.y_end == s1.value &&
                di.bc.dy_end == s1.derivative && di.bc.b_start == d.director(0.0) && di.bc.b_end == d.director(d.length);
        const NodalDrift drift = check_nodal_constraints(di.state);
        exact = exact && drift.tangent <= 1e-14 && drift.director <= 1e-14;
      }
    }
    add("discretization keeps endpoint data", exact, exact ? "bitwise equal" : "endpoint data changed");
  }
  return out;
}

// ----------------------------------------------------------- linear_solver

/// Random well-posed saddle system: A SPD, B of full row rank.
inline SaddleSystem random_saddle(detail::Rng& rng, int n, int m) {
  Eigen::MatrixXd G = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return detail::uniform(rng, -1, 1); });
  Eigen::MatrixXd A = G * G.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return detail::uniform(rng, -1, 1); });
  // sparsify B a little; keep a diagonal-ish entry so rank is preserved
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i && detail::uniform(rng, 0, 1) < 0.5) B(i, j) = 0.0;
  SaddleSystem s;
  s.A = A.sparseView();
  s.B = B.sparseView();
  s.f = Vector::NullaryExpr(n, [&] { return detail::uniform(rng, -1, 1); });
  s.g = Vector::NullaryExpr(m, [&] { return detail::uniform(rng, -1, 1); });
  return s;
}

/// Dense reference solve of the full KKT matrix.
inline Vector dense_kkt_solve(const SaddleSystem& s) {
  const int n = s.n(), m = s.m();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = Eigen::MatrixXd(s.A);
  if (m > 0) {
    K.bottomLeftCorner(m, n) = Eigen::MatrixXd(s.B);
    K.topRightCorner(n, m) = Eigen::MatrixXd(s.B).transpose();
  }
  Vector rhs(n + m);
  rhs << s.f, s.g;
  return K.fullPivLu().solve(rhs);
}

inline std::vector<PropertyResult> verify_linear_solver(const VerifyOptions& opt) {
  auto rng = detail::suite_rng(opt.seed, 4);
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({"linear_solver", std::move(name), ok, std::move(detail)});
  };
  double oracle = 0.0, feas = 0.0, opt_gap = 0.0;
  bool deterministic = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 39);
    const int m = static_cast<int>(rng() % std::min(11, n));
    const SaddleSystem s = random_saddle(rng, n, m);
    const SaddleSolution sol = solve_saddle(s);
    const Vector ref = dense_kkt_solve(s);
    Vector x(n + m);
    x << sol.u, sol.lambda;
    oracle = std::max(oracle, (x - ref).norm() / std::max(ref.norm(), 1e-300));
    if (m > 0) feas = std::max(feas, (s.B * sol.u - s.g).norm() / std::max(s.g.norm(), 1.0));
    // feasible perturbations along ker B never lower the objective
    const Eigen::MatrixXd Bd = Eigen::MatrixXd(s.B);
    const Eigen::MatrixXd Z = m > 0 ? Eigen::MatrixXd(Bd.fullPivLu().kernel()) : Eigen::MatrixXd::Identity(n, n);
    auto J = [&](const Vector& u) { return 0.5 * u.dot(s.A * u) - s.f.dot(u); };
    const double j0 = J(sol.u);
    for (int p = 0; p < 5 && Z.cols() > 0; ++p) {
      const Vector z = Z * Vector::NullaryExpr(Z.cols(), [&] { return detail::uniform(rng, -1, 1); });
      opt_gap = std::max(opt_gap, (j0 - J(sol.u + 1e-3 * z)) / std::max(1.0, std::abs(j0)));
    }
    const SaddleSolution again = solve_saddle(s);
    deterministic = deterministic && again.u == sol.u && again.lambda == sol.lambda;
  }
  add("matches dense KKT solve", oracle <= 1e-9, "200 systems, max relative error " + detail::fmt(oracle));
  add("constraints satisfied", feas <= 1e-9, "max relative |Bu - g| " + detail::fmt(feas));
  add("solution minimizes the constrained objective", opt_gap <= 1e-12, "max objective decrease " + detail::fmt(opt_gap));
  add("bitwise deterministic", deterministic, deterministic ? "repeat solves identical" : "repeat solves differ");
  return out;
}

// ----------------------------------------------------------- gradient_flow

inline std::vector<PropertyResult> verify_gradient_flow(const VerifyOptions& opt) {
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({"gradient_flow", std::move(name), ok, std::move(detail)});
  };
  const int N = 24;
  const InitialData data = moebius_initial();
  const Mesh mesh = make_uniform_mesh(data.length, N);
  const FEMatrices fe = assemble_matrices(mesh);
  const DiscreteInitial init = discretize_initial(data, mesh);
  FlowParams p;
  p.tau = mesh.h() / 10.0;
  p.reg = {std::sqrt(mesh.h()), mesh.h(), std::sqrt(mesh.h())};
  p.steps = 60;

  double ident = 0.0, defect_sum = 0.0, resid = 0.0, obj_y = -INFINITY, obj_b = -INFINITY;
  bool bc_fixed = true;
  FrameState prev = init.state;
  const auto sink = [&](const StepReport& r, const FrameState& s) {
    ident = std::max({ident, r.identity_defect_y, r.identity_defect_b});
    defect_sum += std::max(r.identity_defect_y, r.identity_defect_b);
    resid = std::max({resid, r.residual_y, r.residual_b});
    const int last = mesh.num_nodes() - 1;
    for (const int j : {0, last}) {
      bc_fixed = bc_fixed && s.y.value(j) == prev.y.value(j) && s.y.slope(j) == prev.y.slope(j) &&
                 s.b.value(j) == prev.b.value(j);
    }
    // each step's iterate beats the previous one in that step's own objective
    const StepSystem ys = assemble_y_system(mesh, prev, p, fe, init.bc);
    const double jy0 = ys.objective(prev.y.coeffs()), jy1 = ys.objective(s.y.coeffs());
    obj_y = std::max(obj_y, (jy1 - jy0) / std::max(1.0, std::abs(jy0)));
    const StepSystem bs = assemble_b_system(mesh, s.y, prev, p, fe, init.bc);
    const double jb0 = bs.objective(prev.b.coeffs()), jb1 = bs.objective(s.b.coeffs());
    obj_b = std::max(obj_b, (jb1 - jb0) / std::max(1.0, std::abs(jb0)));
    prev = s;
  };
  const FlowResult res = run_flow(mesh, fe, init.state, init.bc, p, sink);

  add("nodal binomial identities per step", ident <= 1e-10, "max defect " + detail::fmt(ident));
  const NodalDrift drift = check_nodal_constraints(res.final_state);
  const double tel_y = *std::max_element(res.increment_sum_y.begin(), res.increment_sum_y.end());
  const double tel_b = *std::max_element(res.increment_sum_b.begin(), res.increment_sum_b.end());
  const double tel = std::max(std::abs(drift.tangent - tel_y), std::abs(drift.director - tel_b));
  // exact up to the per-step defects, which bound the mismatch
  add("telescoped drift equals accumulated increments", tel <= defect_sum + 1e-15,
      "drift (" + detail::fmt(drift.tangent) + ", " + detail::fmt(drift.director) + "), mismatch " + detail::fmt(tel) +
          ", summed step defects " + detail::fmt(defect_sum));
  add("each step decreases its own objective", obj_y <= 1e-12 && obj_b <= 1e-12,
      "max relative increase y " + detail::fmt(obj_y) + ", b " + detail::fmt(obj_b));
  add("boundary data bitwise fixed", bc_fixed, bc_fixed ? "endpoint DOFs unchanged" : "endpoint DOFs moved");
  add("KKT residuals below 1e-9", resid <= 1e-9, "max residual " + detail::fmt(resid));
  add("energy nonincreasing", res.energy_increases == 0,
      std::to_string(res.energy_increases) + " increases in " + std::to_string(res.steps) + " steps");

  {
    const InitialData sd = straight_initial();
    const Mesh sm = make_uniform_mesh(sd.length, 16);
    const FEMatrices sfe = assemble_matrices(sm);
    const DiscreteInitial si = discretize_initial(sd, sm);
    FlowParams sp = p;
    sp.tau = sm.h() / 10.0;
    sp.reg = {std::sqrt(sm.h()), sm.h(), std::sqrt(sm.h())};
    sp.steps = 20;
    const FlowResult r = run_flow(sm, sfe, si.state, si.bc, sp);
    const double dy = (r.final_state.y.coeffs() - si.state.y.coeffs()).lpNorm<Eigen::Infinity>();
    const double db = (r.final_state.b.coeffs() - si.state.b.coeffs()).lpNorm<Eigen::Infinity>();
    add("straight ribbon is a fixed point", std::max(dy, db) <= 1e-12, "max update " + detail::fmt(std::max(dy, db)));
  }
  return out;
}

// ------------------------------------------------------------------ cli_io

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Concatenated contents of all regular files below `dir`, in path order.
inline std::string directory_digest(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += std::filesystem::relative(f, dir).string() + '\n' + read_file(f);
  return out;
}

struct DirectorBounds {
  double excess = 0.0;             // violation of 1 - (y'.b)^2 <= |d|^2 <= (1 + drift_y)(1 + drift_b)
  double max_orthogonality = 0.0;  // max_j |y'.b|
  double drift_only_excess = 0.0;  // max_j | |d| - 1 | - (drift_y + drift_b)
};

inline DirectorBounds snapshot_director_bounds(const FrameState& s, const NodalDrift& drift) {
  DirectorBounds out;
  const double upper = (1.0 + drift.tangent) * (1.0 + drift.director);
  out.drift_only_excess = -INFINITY;
  for (int j = 0; j < s.num_nodes(); ++j) {
    const Vec3 t = s.y.slope(j), b = s.b.value(j);
    const double d2 = t.cross(b).squaredNorm(), c = t.dot(b);
    out.excess = std::max({out.excess, d2 - upper, (1.0 - c * c) - d2});
    out.max_orthogonality = std::max(out.max_orthogonality, std::abs(c));
    out.drift_only_excess =
        std::max(out.drift_only_excess, std::abs(std::sqrt(d2) - 1.0) - (drift.tangent + drift.director));
  }
  return out;
}

inline std::vector<PropertyResult> verify_cli_io(const VerifyOptions& opt) {
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({"cli_io", std::move(name), ok, std::move(detail)});
  };
  const auto root = std::filesystem::temp_directory_path() / ("ribbon-verify-" + std::to_string(opt.seed));
  std::filesystem::remove_all(root);

  RunConfig cfg;
  cfg.preset = "moebius";
  cfg.N = 16;
  cfg.steps = 40;
  cfg.snapshot_stride = 10;
  cfg.output_dir = root / "a";
  const RunSummary first = cmd_run(cfg);
  cfg.output_dir = root / "b";
  cmd_run(cfg);

  {
    std::istringstream csv(read_file(root / "a" / "energies.csv"));
    std::string line;
    std::getline(csv, line);
    bool ordered = line + "\n" == kEnergyCsvHeader;
    int expect = 1, rows = 0;
    while (std::getline(csv, line)) {
      ordered = ordered && line.substr(0, line.find(',')) == std::to_string(expect++);
      ++rows;
    }
    ordered = ordered && rows == 40 && first.csv_rows == 40;
    add("energy CSV header stable and rows ordered in k", ordered, std::to_string(rows) + " rows");
  }
  {
    const bool same = directory_digest(root / "a") == directory_digest(root / "b");
    add("reruns byte-identical", same, same ? "all outputs identical" : "outputs differ");
  }
  {
    // |d|^2 = |y'|^2 |b|^2 - (y'.b)^2, and y'.b = 0 is only penalized
    const FrameState& s = first.flow.final_state;
    const NodalDrift drift = check_nodal_constraints(s);
    const auto b = snapshot_director_bounds(s, drift);
    add("snapshot |d| within drift and orthogonality defect", b.excess <= 1e-14,
        "max excess " + detail::fmt(b.excess) + "; max |y'.b| " + detail::fmt(b.max_orthogonality) +
            "; max (| |d| - 1 | - drift) " + detail::fmt(b.drift_only_excess));
  }
  std::filesystem::remove_all(root);
  return out;
}

/// Runs all suites, prints one line per property, returns the number of
/// failures.
inline int cmd_verify(const VerifyOptions& opt, std::ostream& log) {
  log << "seed = " << opt.seed << '\n';
  if (!opt.fault.empty()) log << "fault = " << opt.fault << '\n';
  std::vector<PropertyResult> all;
  for (auto* suite : {verify_mesh_fe, verify_energy, verify_frames, verify_linear_solver, verify_gradient_flow,
                      verify_cli_io}) {
    auto r = suite(opt);
    for (const auto& p : r)
      log << (p.passed ? "[PASS] " : "[FAIL] ") << p.module << " / " << p.property << ": " << p.detail << '\n';
    all.insert(all.end(), r.begin(), r.end());
  }
  const auto failed = std::count_if(all.begin(), all.end(), [](const auto& p) { return !p.passed; });
  if (failed > 0) {
    log << failed << " of " << all.size() << " properties failed:\n";
    for (const auto& p : all)
      if (!p.passed) log << "  " << p.module << " / " << p.property << '\n';
  } else {
    log << "all " << all.size() << " properties passed\n";
  }
  return static_cast<int>(failed);
}

}  // namespace ribbon
