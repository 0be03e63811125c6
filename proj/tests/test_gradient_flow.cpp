#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ribbon/commands.hpp"
#include "ribbon/gradient_flow.hpp"

using namespace ribbon;
using std::numbers::pi;

namespace {

FlowParams default_params(const Mesh& mesh) {
  FlowParams p;
  const double h = mesh.h();
  p.tau = h / 10;
  p.reg = {std::sqrt(h), h, std::sqrt(h)};
  p.horizon = 10.0;
  return p;
}

struct FlowCase {
  Mesh mesh;
  FEMatrices fe;
  DiscreteInitial init;
  FlowParams params;
};

FlowCase make_setup(const InitialData& data, int N) {
  Mesh mesh = make_uniform_mesh(data.length, N);
  FEMatrices fe = assemble_matrices(mesh);
  DiscreteInitial init = discretize_initial(data, mesh);
  FlowParams p = default_params(mesh);
  return {std::move(mesh), std::move(fe), std::move(init), p};
}

}  // namespace

TEST(FlowParams, StepCountAndValidation) {
  const Mesh m80 = make_uniform_mesh(2 * pi, 80), m320 = make_uniform_mesh(2 * pi, 320);
  EXPECT_EQ(default_params(m80).step_count(), 1273);
  EXPECT_EQ(default_params(m320).step_count(), 5092);
  // h = 1/20 gives tau = 0.005, and 10 / 0.005 rounds to just below 2000
  EXPECT_EQ(default_params(make_uniform_mesh(1.0, 20)).step_count(), 2000);

  FlowParams p = default_params(m80);
  EXPECT_NO_THROW(p.validate());
  p.steps = 3;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.horizon.reset();
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.step_count(), 3);
  p.steps.reset();
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = default_params(m80);
  p.tau = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = default_params(m80);
  p.reg.delta = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = default_params(m80);
  p.eps_stop = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Flow, StraightSegmentIsFixedPoint) {
  FlowCase s = make_setup(straight_initial(), 16);
  const auto ys = y_step(s.mesh, s.init.state, s.params, s.fe, s.init.bc);
  EXPECT_LE((ys.field.coeffs() - s.init.state.y.coeffs()).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_EQ(ys.multipliers.size(), 15);
  EXPECT_LE(ys.multipliers.lpNorm<Eigen::Infinity>(), 1e-9);
  const auto bs = b_step(s.mesh, ys.field, s.init.state, s.params, s.fe, s.init.bc);
  EXPECT_LE((bs.field.coeffs() - s.init.state.b.coeffs()).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LE(bs.multipliers.lpNorm<Eigen::Infinity>(), 1e-9);

  s.params.horizon.reset();
  s.params.steps = 25;
  const FlowResult r = run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params);
  EXPECT_LE((r.final_state.y.coeffs() - s.init.state.y.coeffs()).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LE((r.final_state.b.coeffs() - s.init.state.b.coeffs()).lpNorm<Eigen::Infinity>(), 1e-12);
  // only psi contributes, psi_delta(0, 0) = delta on (0, 1); the bending
  // form carries roundoff of its 12/h^3 entries
  EXPECT_NEAR(r.final_energy.psi, 0.5 * s.params.reg.delta, 1e-15);
  EXPECT_NEAR(r.final_energy.total, 0.5 * s.params.reg.delta, 1e-10);
}

TEST(Flow, OneMoebiusStepLowersEnergy) {
  FlowCase s = make_setup(moebius_initial(), 80);
  s.params.horizon.reset();
  s.params.steps = 1;
  std::vector<StepReport> reports;
  const FlowResult r = run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params,
                                [&](const StepReport& rep, const FrameState&) { reports.push_back(rep); });
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_GT(reports[0].dt_star, 0.0);
  EXPECT_GT(reports[0].dt_dagger, 0.0);
  EXPECT_LT(r.final_energy.total, r.initial_energy.total);
  EXPECT_FALSE(reports[0].energy_increased);
  EXPECT_LE(reports[0].identity_defect_y, 1e-10);
  EXPECT_LE(reports[0].identity_defect_b, 1e-10);
  EXPECT_NEAR(reports[0].t, s.params.tau, 1e-17);
}

TEST(StepSystems, ConstraintRowsAnnihilateTangentialDirections) {
  FlowCase s = make_setup(moebius_initial(), 80);
  const StepSystem ysys = assemble_y_system(s.mesh, s.init.state, s.params, s.fe, s.init.bc);
  ASSERT_EQ(ysys.system.m(), 79);
  ASSERT_EQ(ysys.system.n(), 6 * 81);
  EXPECT_EQ(ysys.fixed.size(), 12u);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  HermiteField w(81);
  for (int j = 0; j < 81; ++j) {
    const Vec3 t = s.init.state.y.slope(j);
    Vec3 r(n01(rng), n01(rng), n01(rng));
    w.set_value(j, Vec3(n01(rng), n01(rng), n01(rng)));
    w.set_slope(j, r - r.dot(t) / t.squaredNorm() * t);
  }
  EXPECT_LE((ysys.system.B * w.coeffs()).lpNorm<Eigen::Infinity>(), 1e-14);
  // the previous iterate satisfies the linearized constraint
  EXPECT_LE((ysys.system.B * s.init.state.y.coeffs() - ysys.system.g).lpNorm<Eigen::Infinity>(), 1e-14);

  const StepSystem bsys = assemble_b_system(s.mesh, s.init.state.y, s.init.state, s.params, s.fe, s.init.bc);
  ASSERT_EQ(bsys.system.m(), 79);
  ASSERT_EQ(bsys.system.n(), 3 * 81);
  EXPECT_LE((bsys.system.B * s.init.state.b.coeffs() - bsys.system.g).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(StepSystems, SolutionMinimizesStepObjective) {
  FlowCase s = make_setup(helix_initial(), 12);
  const StepSystem ysys = assemble_y_system(s.mesh, s.init.state, s.params, s.fe, s.init.bc);
  const auto ys = y_step(s.mesh, s.init.state, s.params, s.fe, s.init.bc);
  const double j0 = ysys.objective(ys.field.coeffs());

  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    // feasible direction: zero at the clamped dofs, orthogonal slopes at interior nodes
    HermiteField w(13);
    for (int j = 1; j < 12; ++j) {
      const Vec3 t = s.init.state.y.slope(j);
      const Vec3 r(n01(rng), n01(rng), n01(rng));
      w.set_value(j, Vec3(n01(rng), n01(rng), n01(rng)));
      w.set_slope(j, r - r.dot(t) / t.squaredNorm() * t);
    }
    for (const double eps : {1e-2, 1e-4}) {
      const double j1 = ysys.objective(ys.field.coeffs() + eps * w.coeffs());
      EXPECT_GE(j1 - j0, -1e-12 * std::abs(j0)) << "trial " << trial;
    }
  }
}

TEST(Flow, BinomialIdentityAndBoundaryData) {
  FlowCase s = make_setup(moebius_initial(), 40);
  s.params.horizon.reset();
  s.params.steps = 30;
  FrameState prev = s.init.state;
  double worst = 0.0;
  const int last = 40;
  run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params, [&](const StepReport&, const FrameState& st) {
    for (int j = 1; j < last; ++j) {
      const Vec3 a0 = prev.y.slope(j), a1 = st.y.slope(j);
      worst = std::max(worst, std::abs(a1.squaredNorm() - a0.squaredNorm() - (a1 - a0).squaredNorm()));
      const Vec3 b0 = prev.b.value(j), b1 = st.b.value(j);
      worst = std::max(worst, std::abs(b1.squaredNorm() - b0.squaredNorm() - (b1 - b0).squaredNorm()));
    }
    EXPECT_EQ(st.y.value(0), s.init.bc.y_start);
    EXPECT_EQ(st.y.slope(0), s.init.bc.dy_start);
    EXPECT_EQ(st.y.value(last), s.init.bc.y_end);
    EXPECT_EQ(st.y.slope(last), s.init.bc.dy_end);
    EXPECT_EQ(st.b.value(0), s.init.bc.b_start);
    EXPECT_EQ(st.b.value(last), s.init.bc.b_end);
    prev = st;
  });
  EXPECT_LE(worst, 1e-10);
}

TEST(Flow, DriftBoundedByIncrementSums) {
  FlowCase s = make_setup(moebius_initial(), 40);
  s.params.horizon.reset();
  s.params.steps = 30;
  const FlowResult r = run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params);
  double sum_y = 0.0;
  for (int j = 0; j <= 40; ++j) {
    const double grow = r.final_state.y.slope(j).squaredNorm() - s.init.state.y.slope(j).squaredNorm();
    EXPECT_NEAR(grow, r.increment_sum_y[j], 1e-9);
    EXPECT_GE(grow, -1e-12);
    sum_y = std::max(sum_y, r.increment_sum_y[j]);
  }
  EXPECT_GT(sum_y, 0.0);
}

TEST(DtNorms, ZeroAndHandComputed) {
  FlowCase s = make_setup(moebius_initial(), 8);
  const auto [a, b] = dt_norms(s.init.state, s.init.state, s.fe, 0.1);
  EXPECT_EQ(a, 0.0);
  EXPECT_EQ(b, 0.0);
  FrameState next = s.init.state;
  const int iy = HermiteField::slope_dof(3, 1), ib = NodalField::dof(5, 2);
  next.y.coeffs()[iy] += 1.0;
  next.b.coeffs()[ib] += 2.0;
  const auto [c, d] = dt_norms(s.init.state, next, s.fe, 0.5);
  EXPECT_NEAR(c, std::sqrt(s.fe.star_vec.coeff(iy, iy)) / 0.5, 1e-14);
  EXPECT_NEAR(d, 2.0 * std::sqrt(s.fe.dagger_vec.coeff(ib, ib)) / 0.5, 1e-14);
}

TEST(Flow, StoppingCriterion) {
  FlowCase s = make_setup(straight_initial(), 8);
  s.params.eps_stop = 1e-6;
  const FlowResult r = run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params);
  EXPECT_TRUE(r.stopped_by_tolerance);
  EXPECT_EQ(r.steps, 1);
}

TEST(Flow, EnergyDecreasesAndGuardIsInertWithoutIncreases) {
  FlowCase s = make_setup(moebius_initial(), 24);
  s.params.horizon.reset();
  s.params.steps = 60;
  std::vector<double> energies;
  const FlowResult off = run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params,
                                  [&](const StepReport& r, const FrameState&) { energies.push_back(r.energy.total); });
  EXPECT_EQ(off.energy_increases, 0);
  double prev = off.initial_energy.total;
  for (const double e : energies) {
    EXPECT_LE(e, prev);
    prev = e;
  }
  s.params.guard = MonotonicityGuard::halve_step;
  const FlowResult on = run_flow(s.mesh, s.fe, s.init.state, s.init.bc, s.params);
  EXPECT_EQ(on.steps, off.steps);
  EXPECT_EQ(on.final_state.y.coeffs(), off.final_state.y.coeffs());
}

TEST(Flow, RejectsMismatchedState) {
  FlowCase s = make_setup(moebius_initial(), 8);
  const Mesh other = make_uniform_mesh(2 * pi, 9);
  EXPECT_THROW(run_flow(other, assemble_matrices(other), s.init.state, s.init.bc, s.params), std::invalid_argument);
}
