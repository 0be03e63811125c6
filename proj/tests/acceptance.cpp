// Acceptance run: one PASS/FAIL line per criterion, details on the lines
// below it. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ribbon/commands.hpp"
#include "ribbon/properties.hpp"

using namespace ribbon;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  int id;
  std::string title;
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

std::string num(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Per-step history of one flow.
struct Trace {
  std::string preset;
  int N = 0;
  FlowResult flow;
  std::string echo;
  std::vector<double> energy, penalty, e_bend, e_twist;
  double max_defect = 0.0;      // max over steps of the nodal identity defects
  double summed_defect_y = 0.0; // sum over steps of the per-step maxima
  double summed_defect_b = 0.0;
  double max_update = 0.0;      // max over steps of the coefficient change
  FrameState initial;
};

Trace run_preset(const std::string& preset, int N, std::optional<double> tau = {}) {
  RunConfig cfg;
  cfg.preset = preset;
  cfg.N = N;
  cfg.tau = tau;
  const ResolvedRun run = resolve(cfg);
  const FEMatrices fe = assemble_matrices(run.mesh);
  const DiscreteInitial init = discretize_initial(run.data, run.mesh);

  Trace t;
  t.preset = preset;
  t.N = N;
  t.echo = parameter_echo(cfg, run);
  t.initial = init.state;
  FrameState prev = init.state;
  const auto sink = [&](const StepReport& r, const FrameState& s) {
    t.energy.push_back(r.energy.total);
    t.penalty.push_back(r.energy.penalty1 + r.energy.penalty2);
    t.e_bend.push_back(r.energy.e_bend);
    t.e_twist.push_back(r.energy.e_twist);
    t.max_defect = std::max({t.max_defect, r.identity_defect_y, r.identity_defect_b});
    t.summed_defect_y += r.identity_defect_y;
    t.summed_defect_b += r.identity_defect_b;
    t.max_update = std::max({t.max_update, (s.y.coeffs() - prev.y.coeffs()).lpNorm<Eigen::Infinity>(),
                             (s.b.coeffs() - prev.b.coeffs()).lpNorm<Eigen::Infinity>()});
    prev = s;
  };
  t.flow = run_flow(run.mesh, fe, init.state, init.bc, run.params, sink);
  return t;
}

double relative(double a, double b) { return std::abs(a - b) / std::abs(b); }

// max_j | |a_K(x_j)|^2 - 1 | for the tangents and directors of a state
std::pair<double, double> final_drift(const FrameState& s) {
  const NodalDrift d = check_nodal_constraints(s);
  return {d.tangent, d.director};
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Verdict> verdicts;
  std::map<std::pair<std::string, int>, Trace> traces;

  for (const std::string preset : {"moebius", "helix"})
    for (const int N : {80, 160, 320}) {
      std::cerr << "running " << preset << " N=" << N << '\n';
      traces.emplace(std::make_pair(preset, N), run_preset(preset, N));
    }

  {
    Verdict v{1, "table reproduction within 5%"};
    const std::map<std::string, std::vector<double>> published = {{"moebius", {14.9255, 32.0886, 35.5842}},
                                                                  {"helix", {27.7554, 26.5432, 26.3554}}};
    for (const auto& [preset, values] : published) {
      std::vector<TableEntry> entries;
      int i = 0;
      for (const int N : {80, 160, 320}) {
        const Trace& t = traces.at({preset, N});
        entries.push_back({N, t.flow.final_energy.total, {}, t.echo});
        const double rel = relative(t.flow.final_energy.total, values[i]);
        v.check(rel <= 0.05, preset + " N=" + std::to_string(N) + ": " + num(t.flow.final_energy.total, "%.4f") +
                                 " vs " + num(values[i], "%.4f") + " (rel " + num(rel, "%.2e") + ")");
        ++i;
      }
      std::string table = format_table(entries);
      for (std::size_t p = 0, q; p < table.size(); p = q + 1) {
        q = table.find('\n', p);
        if (q == std::string::npos) q = table.size();
        v.note(preset + " | " + table.substr(p, q - p));
      }
    }
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{2, "energy monotonicity, penalty decay, Moebius bend/twist exchange"};
    for (const std::string preset : {"moebius", "helix"})
      for (const int N : {80, 320}) {
        const Trace& t = traces.at({preset, N});
        const std::string tag = preset + " N=" + std::to_string(N);
        int increases = 0;
        double worst = -INFINITY, prev = t.flow.initial_energy.total;
        for (const double e : t.energy) {
          if (e > prev) ++increases;
          worst = std::max(worst, e - prev);
          prev = e;
        }
        v.check(increases == 0, tag + ": " + std::to_string(increases) + " increases in " +
                                     std::to_string(t.energy.size()) + " steps, max E_k - E_{k-1} = " + num(worst));
        // penalty: ends below its initial value and changes by at most 10%
        // over the last tenth of the run
        const double p0 = t.flow.initial_energy.penalty1 + t.flow.initial_energy.penalty2;
        const double pk = t.penalty.back();
        const double p9 = t.penalty[static_cast<std::size_t>(0.9 * static_cast<double>(t.penalty.size()))];
        const double late = std::abs(pk - p9) / p9;
        v.check(pk < p0 && late <= 0.1, tag + ": penalty " + num(p0) + " -> " + num(pk) + " (peak " +
                                            num(*std::max_element(t.penalty.begin(), t.penalty.end())) +
                                            "), last-10% relative change " + num(late, "%.2e"));
        int twist_up = 0;
        double tw = t.flow.initial_energy.e_twist;
        for (const double e : t.e_twist) {
          if (e > tw) ++twist_up;
          tw = e;
        }
        v.note(tag + ": E_twist increased in " + std::to_string(twist_up) + " of " + std::to_string(t.e_twist.size()) +
               " steps");
        if (preset == "moebius") {
          v.check(t.flow.final_energy.e_bend > t.flow.initial_energy.e_bend,
                  tag + ": E_bend " + num(t.flow.initial_energy.e_bend) + " -> " + num(t.flow.final_energy.e_bend));
          v.check(t.flow.final_energy.e_twist < t.flow.initial_energy.e_twist,
                  tag + ": E_twist " + num(t.flow.initial_energy.e_twist) + " -> " + num(t.flow.final_energy.e_twist));
        }
      }
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{3, "constraint-drift identities and linear-in-tau drift"};
    double worst = 0.0;
    for (const auto& [key, t] : traces) worst = std::max(worst, t.max_defect);
    v.check(worst <= 1e-10, "max per-step nodal identity defect over all table runs: " + num(worst, "%.2e"));

    const Trace& full = traces.at({"moebius", 80});
    double tele_y = 0.0, tele_b = 0.0;
    for (int j = 0; j < full.initial.num_nodes(); ++j) {
      const double gy = full.flow.final_state.y.slope(j).squaredNorm() - full.initial.y.slope(j).squaredNorm();
      const double gb = full.flow.final_state.b.value(j).squaredNorm() - full.initial.b.value(j).squaredNorm();
      tele_y = std::max(tele_y, std::abs(gy - full.flow.increment_sum_y[j]));
      tele_b = std::max(tele_b, std::abs(gb - full.flow.increment_sum_b[j]));
    }
    // each step contributes at most its defect, plus rounding of the sums
    const double slack = 1e-15 * static_cast<double>(full.flow.steps);
    v.check(tele_y <= full.summed_defect_y + slack && tele_b <= full.summed_defect_b + slack,
            "moebius N=80: |final drift - tau^2 sum| = " + num(tele_y, "%.2e") + " (y), " + num(tele_b, "%.2e") +
                " (b); summed step defects " + num(full.summed_defect_y, "%.2e") + ", " +
                num(full.summed_defect_b, "%.2e"));

    const double tau = 2 * std::numbers::pi / 80 / 10;
    std::cerr << "running moebius N=80 with tau/2\n";
    const Trace half = run_preset("moebius", 80, tau / 2);
    const auto [dy1, db1] = final_drift(full.flow.final_state);
    const auto [dy2, db2] = final_drift(half.flow.final_state);
    v.check(half.max_defect <= 1e-10, "tau/2 run: max identity defect " + num(half.max_defect, "%.2e"));
    const double ry = dy1 / dy2, rb = db1 / db2;
    v.check(ry >= 1.5 && ry <= 2.5, "tangent drift " + num(dy1) + " (tau) / " + num(dy2) + " (tau/2) = " + num(ry));
    v.check(rb >= 1.5 && rb <= 2.5, "director drift " + num(db1) + " (tau) / " + num(db2) + " (tau/2) = " + num(rb));
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{4, "density lemma suites on 10^6 samples"};
    VerifyOptions opt;
    opt.samples = 1'000'000;
    const std::vector<std::string> wanted = {
        "local Lipschitz bound (constant 21)", "midpoint convexity of the corrected density",
        "regularized density at delta=0 equals the density", "psi_delta partials match finite differences",
        "psi_delta derivative bounds"};
    const auto results = verify_energy(opt);
    for (const auto& name : wanted) {
      const auto it = std::find_if(results.begin(), results.end(), [&](const auto& r) { return r.property == name; });
      if (it == results.end()) v.check(false, name + ": missing from the suite");
      else v.check(it->passed, name + ": " + it->detail);
    }
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{5, "flat circle energy converges to 2 pi"};
    double prev = INFINITY, last = 0.0;
    for (const int N : {20, 40, 80, 160}) {
      RunConfig cfg;
      cfg.preset = "circle";
      cfg.N = N;
      const ResolvedRun run = resolve(cfg);
      const FEMatrices fe = assemble_matrices(run.mesh);
      const FrameState s = discretize_initial(run.data, run.mesh).state;
      const double e = energy_quad(s, run.params.reg, run.mesh, fe).total;
      const double err = relative(e, 2 * std::numbers::pi);
      v.check(err < prev, "N=" + std::to_string(N) + ": E_quad " + num(e, "%.8f") + ", relative error " +
                              num(err, "%.3e"));
      prev = last = err;
    }
    v.check(last < 0.01, "relative error at N=160 below 1%: " + num(last, "%.3e"));
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{6, "straight clamped ribbon is stationary"};
    const Trace t = run_preset("straight", 20);
    v.check(t.max_update <= 1e-12, "N=20, " + std::to_string(t.flow.steps) +
                                       " steps: max coefficient update per step " + num(t.max_update, "%.2e"));
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{7, "saddle solver against dense KKT oracle"};
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::uniform_int_distribution<int> pick_n(2, 40);
    std::bernoulli_distribution drop(0.3);
    double worst = 0.0;
    int failures = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const int n = pick_n(rng);
      const int m = std::uniform_int_distribution<int>(0, std::min(10, n - 1))(rng);
      Eigen::MatrixXd G = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return U(rng); });
      const Eigen::MatrixXd A = G * G.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
      Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return U(rng); });
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          if (j != i && drop(rng)) B(i, j) = 0.0;
      SaddleSystem s{A.sparseView(), B.sparseView(), Vector::NullaryExpr(n, [&] { return U(rng); }),
                     Vector::NullaryExpr(m, [&] { return U(rng); })};
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
      K.topLeftCorner(n, n) = A;
      K.topRightCorner(n, m) = B.transpose();
      K.bottomLeftCorner(m, n) = B;
      Vector rhs(n + m);
      rhs << s.f, s.g;
      const Vector ref = K.fullPivLu().solve(rhs);
      try {
        const SaddleSolution sol = solve_saddle(s);
        Vector x(n + m);
        x << sol.u, sol.lambda;
        worst = std::max(worst, (x - ref).norm() / ref.norm());
      } catch (const std::exception&) {
        ++failures;
      }
    }
    v.check(failures == 0 && worst <= 1e-9, "200 systems with n <= 40, m <= 10: max relative error " +
                                                num(worst, "%.2e") + ", " + std::to_string(failures) + " solver errors");
    verdicts.push_back(std::move(v));
  }

  {
    Verdict v{8, "repeated runs give byte-identical outputs"};
    RunConfig cfg;
    cfg.preset = "moebius";
    cfg.N = 20;
    cfg.steps = 50;
    cfg.snapshot_stride = 10;
    const fs::path base = fs::temp_directory_path() / "ribbon_acceptance";
    fs::remove_all(base);
    cfg.output_dir = base / "a";
    cmd_run(cfg);
    cfg.output_dir = base / "b";
    cmd_run(cfg);
    const std::string da = directory_digest(base / "a"), db = directory_digest(base / "b");
    int files = 0;
    for (const auto& e : fs::recursive_directory_iterator(base / "a")) files += e.is_regular_file() ? 1 : 0;
    v.check(!da.empty() && da == db, std::to_string(files) + " files compared byte for byte");
    fs::remove_all(base);
    verdicts.push_back(std::move(v));
  }

  int failed = 0;
  for (const auto& v : verdicts) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << v.id << ": " << v.title << '\n';
    for (const auto& d : v.details) std::cout << "    " << d << '\n';
    failed += v.pass ? 0 : 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << (failed == 0 ? "all 8 criteria passed" : std::to_string(failed) + " of 8 criteria failed") << " ("
            << num(secs, "%.0f") << " s)\n";
  return failed;
}
