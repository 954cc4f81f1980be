// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "morwave/dmd.hpp"
#include "morwave/integrate_rom.hpp"
#include "morwave/metrics.hpp"
#include "morwave/mrdmd.hpp"
#include "morwave/opinf.hpp"
#include "morwave/pod.hpp"
#include "morwave/snapshots.hpp"
#include "morwave/wave_fom.hpp"

using namespace morwave;

namespace
{

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void Report(int id, bool pass, const std::string &what, const std::string &detail)
{
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << id << " " << what << ": " << detail
            << std::endl;
  if (!pass)
  {
    ++failures;
  }
}

void Info(const std::string &text) { std::cout << "[INFO] " << text << std::endl; }

std::string Fmt(double v, int prec = 4)
{
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// One benchmark run plus everything the reduced models need from it.
struct Benchmark
{
  WaveProblem problem;
  WaveOperators ops;
  FomSolution sol;
  double fom_seconds = 0.0;
};

Benchmark RunBenchmark(double tau, InitialVelocity velocity = InitialVelocity::derivative)
{
  Benchmark b;
  b.problem.tau = tau;
  b.problem.initial_velocity = velocity;
  const auto start = Clock::now();
  b.sol = SimulateWave(b.problem, &b.ops);
  b.fom_seconds = Since(start);
  return b;
}

struct MethodTiming
{
  double offline = 0.0;
  double online = 0.0;
};

Vector SensorOf(const DenseMatrix &field, int row) { return field.row(row).transpose(); }

double PodError(const Benchmark &b, const PodSpectrum &spectrum, int r, MethodTiming *timing = nullptr,
                double svd_seconds = 0.0)
{
  const auto build = Clock::now();
  const ReducedBasis basis = spectrum.Basis(r);
  const PodRom rom = ProjectRom(b.ops.mass, b.ops.stiffness, basis.phi);
  const double build_seconds = Since(build);
  const auto online = Clock::now();
  SecondOrderSystem sys{rom.mass, rom.stiffness, {}, {}, {},
                        basis.phi.transpose() * b.sol.displacements.col(0),
                        basis.phi.transpose() * b.sol.velocities.col(0)};
  const auto traj = Newmark(sys, b.problem.tau, b.sol.displacements.cols());
  const DenseMatrix field = Reconstruct(basis, traj.displacement);
  if (timing != nullptr)
  {
    timing->offline = b.fom_seconds + svd_seconds + build_seconds;
    timing->online = Since(online);
  }
  return SensorError(b.sol.sensor_signal, SensorOf(field, b.sol.sensor_row), b.problem.tau);
}

struct DmdErrors
{
  double projected = 0.0;
  double optimal = 0.0;
};

DmdErrors DmdError(const Benchmark &b, int r, MethodTiming *timing = nullptr)
{
  const auto build = Clock::now();
  DmdModel model = FitDmd(b.sol.displacements, r, b.problem.tau);
  const ComplexVector optimal = AmplitudesOptimal(model);
  const double build_seconds = Since(build);
  DmdErrors out;
  const Eigen::Index count = b.sol.displacements.cols();
  model.amplitudes = AmplitudesProjected(model);
  out.projected = SensorError(b.sol.sensor_signal,
                              ReconstructDmdRow(model, b.sol.sensor_row, count), b.problem.tau);
  model.amplitudes = optimal;
  const auto online = Clock::now();
  const DenseMatrix field = ReconstructDmd(model, count);
  if (timing != nullptr)
  {
    timing->offline = b.fom_seconds + build_seconds;
    timing->online = Since(online);
  }
  out.optimal = SensorError(b.sol.sensor_signal, SensorOf(field, b.sol.sensor_row), b.problem.tau);
  return out;
}

double OpInfError(const Benchmark &b, int r, MethodTiming *timing = nullptr)
{
  const auto build = Clock::now();
  SnapshotSet set;
  set.states = b.sol.displacements;
  set.times = b.sol.times;
  set.accelerations = Differentiate8th(b.sol.displacements, b.problem.tau);
  const auto [scaled, scaling] = Scale(set);
  ReducedBasis basis = PodBasis(scaled.states, r);
  basis.source_scaling = scaling;
  const ReducedData data = ReduceData(scaled, basis);
  OpInfModel model;
  model.variant = OpInfVariant::forces_informed;
  model.scaling = scaling;
  model.basis = basis;
  model.lambda = 1.0e-8;
  const OptimizerConfig config;
  const ForcesInformedResult res =
      InferForcesInformed(data.states, data.accelerations, data.inputs, model.lambda, config);
  model.mass = res.mass;
  model.stiffness = res.stiffness;
  const RomDescriptor rom = AssembleRom(model);
  const double build_seconds = Since(build);
  const auto online = Clock::now();
  SecondOrderSystem sys{rom.mass, rom.stiffness, {}, {}, {},
                        basis.phi.transpose() * b.sol.displacements.col(0),
                        basis.phi.transpose() * b.sol.velocities.col(0)};
  const auto traj = Newmark(sys, b.problem.tau, b.sol.displacements.cols());
  const DenseMatrix field = rom.lift_scale * (basis.phi * traj.displacement);
  if (timing != nullptr)
  {
    timing->offline = b.fom_seconds + build_seconds;
    timing->online = Since(online);
  }
  Info("forces-informed fit tau=" + Fmt(b.problem.tau) + " r=" + std::to_string(r) + ": loss " +
       Fmt(res.initial_loss) + " -> " + Fmt(res.final_loss) + " in " +
       std::to_string(res.iterations) + " iterations");
  return SensorError(b.sol.sensor_signal, SensorOf(field, b.sol.sensor_row), b.problem.tau);
}

// Synthetic linear system with known eigenvalues living on a 5-dimensional subspace.
struct LinearSystem
{
  DenseMatrix a;
  ComplexVector eigenvalues;
  DenseMatrix snapshots;
};

LinearSystem MakeLinearSystem(int n, int m, std::mt19937_64 &rng)
{
  std::normal_distribution<double> normal;
  DenseMatrix g(n, n);
  for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = normal(rng);
  const DenseMatrix q = Eigen::HouseholderQR<DenseMatrix>(g).householderQ();
  // Block-diagonal core: two rotations and one real decay.
  DenseMatrix core = DenseMatrix::Zero(5, 5);
  const auto rot = [&](int i, double rho, double theta) {
    core(i, i) = rho * std::cos(theta);
    core(i, i + 1) = -rho * std::sin(theta);
    core(i + 1, i) = rho * std::sin(theta);
    core(i + 1, i + 1) = rho * std::cos(theta);
  };
  rot(0, 0.99, 0.3);
  rot(2, 0.95, 0.9);
  core(4, 4) = 0.9;
  LinearSystem sys;
  sys.eigenvalues.resize(5);
  sys.eigenvalues << std::polar(0.99, 0.3), std::polar(0.99, -0.3), std::polar(0.95, 0.9),
      std::polar(0.95, -0.9), Complex(0.9, 0.0);
  const DenseMatrix basis = q.leftCols(5);
  sys.a = basis * core * basis.transpose();
  sys.snapshots.resize(n, m);
  Vector c(5);
  for (int k = 0; k < 5; ++k) c(k) = normal(rng);
  sys.snapshots.col(0) = basis * c;
  for (int k = 1; k < m; ++k) sys.snapshots.col(k) = sys.a * sys.snapshots.col(k - 1);
  return sys;
}

bool MatchSpectrum(const ComplexVector &found, const ComplexVector &expected, double tol)
{
  if (found.size() != expected.size()) return false;
  std::vector<bool> used(static_cast<std::size_t>(expected.size()), false);
  for (Eigen::Index i = 0; i < found.size(); ++i)
  {
    double best = 1e300;
    Eigen::Index arg = -1;
    for (Eigen::Index j = 0; j < expected.size(); ++j)
    {
      if (!used[static_cast<std::size_t>(j)] && std::abs(found(i) - expected(j)) < best)
      {
        best = std::abs(found(i) - expected(j));
        arg = j;
      }
    }
    if (arg < 0 || best > tol) return false;
    used[static_cast<std::size_t>(arg)] = true;
  }
  return true;
}

DenseMatrix RandomMatrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng)
{
  std::normal_distribution<double> normal;
  DenseMatrix a(rows, cols);
  for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = normal(rng);
  return a;
}

DenseMatrix RandomSpd(Eigen::Index n, std::mt19937_64 &rng)
{
  const DenseMatrix g = RandomMatrix(n, n, rng);
  return g.transpose() * g + DenseMatrix::Identity(n, n);
}

}  // namespace

int main()
{
  std::cout << std::setprecision(6);
  // --- 1: snapshot counts and runtime -----------------------------------------------
  const Benchmark coarse = RunBenchmark(0.02);
  const Benchmark fine = RunBenchmark(0.01);
  Report(1, coarse.sol.displacements.cols() == 245 && fine.sol.displacements.cols() == 490 &&
                coarse.fom_seconds < 60.0 && fine.fom_seconds < 60.0,
         "snapshot counts",
         "M = " + std::to_string(coarse.sol.displacements.cols()) + " (tau 0.02), " +
             std::to_string(fine.sol.displacements.cols()) + " (tau 0.01); N = " +
             std::to_string(coarse.sol.displacements.rows()) + "; FOM " + Fmt(coarse.fom_seconds) +
             " s / " + Fmt(fine.fom_seconds) + " s");

  // --- 2: cumulative energy ---------------------------------------------------------
  const auto svd_start = Clock::now();
  const PodSpectrum spectrum(coarse.sol.displacements);
  const double svd_seconds = Since(svd_start);
  {
    const auto r95 = RankForEnergy(spectrum.SingularValues(), 0.95);
    const auto r99 = RankForEnergy(spectrum.SingularValues(), 0.99);
    Report(2, r95 >= 20 && r95 <= 55 && r99 >= 40 && r99 <= 85, "cumulative energy",
           "r(95%) = " + std::to_string(r95) + " in [20,55], r(99%) = " + std::to_string(r99) +
               " in [40,85]");
    const Benchmark still = RunBenchmark(0.02, InitialVelocity::zero);
    const PodSpectrum s0(still.sol.displacements);
    Info("zero initial velocity: r(95%) = " +
         std::to_string(RankForEnergy(s0.SingularValues(), 0.95)) + ", r(99%) = " +
         std::to_string(RankForEnergy(s0.SingularValues(), 0.99)));
  }

  // --- 3: POD accuracy ----------------------------------------------------------------
  MethodTiming pod_timing;
  {
    std::vector<double> eps;
    std::string detail;
    for (int r : {20, 40, 60, 80})
    {
      eps.push_back(PodError(coarse, spectrum, r, r == 80 ? &pod_timing : nullptr, svd_seconds));
      detail += "r" + std::to_string(r) + " " + Fmt(eps.back()) + "% ";
    }
    const auto steps = NonMonotoneSteps(eps);
    Report(3, eps[1] <= 7.0 && eps[3] <= 1.0e-3 && steps.size() <= 1, "POD accuracy",
           detail + "(non-monotone steps " + std::to_string(steps.size()) + ")");
  }

  // --- 4: DMD ordering ----------------------------------------------------------------
  MethodTiming dmd_timing;
  {
    const DmdErrors e40 = DmdError(coarse, 40);
    const DmdErrors e80 = DmdError(coarse, 80, &dmd_timing);
    Report(4, e40.optimal < e40.projected && e80.optimal < e80.projected && e80.optimal <= 0.1,
           "DMD ordering",
           "r40 projected " + Fmt(e40.projected) + "% optimal " + Fmt(e40.optimal) +
               "%; r80 projected " + Fmt(e80.projected) + "% optimal " + Fmt(e80.optimal) + "%");
  }

  // --- 5: OpInf trend -----------------------------------------------------------------
  MethodTiming opinf_timing;
  {
    const double e_coarse = OpInfError(coarse, 80, &opinf_timing);
    const double e_fine = OpInfError(fine, 80);
    const double gain = 1.0 - e_fine / e_coarse;
    Report(5, gain >= 0.30 && e_coarse <= 10.0 && e_fine <= 10.0, "OpInf trend",
           "r80 tau 0.02 " + Fmt(e_coarse) + "%, tau 0.01 " + Fmt(e_fine) + "%, improvement " +
               Fmt(100.0 * gain) + "%");
  }

  // --- 6: timing ordering -------------------------------------------------------------
  {
    const double lo = std::min({pod_timing.online, dmd_timing.online, opinf_timing.online});
    const double hi = std::max({pod_timing.online, dmd_timing.online, opinf_timing.online});
    Report(6, opinf_timing.offline > pod_timing.offline && opinf_timing.offline > dmd_timing.offline &&
                  hi <= 10.0 * lo,
           "timing ordering",
           "offline POD " + Fmt(pod_timing.offline) + " s, DMD " + Fmt(dmd_timing.offline) +
               " s, OpInf " + Fmt(opinf_timing.offline) + " s; online " + Fmt(pod_timing.online) +
               " / " + Fmt(dmd_timing.online) + " / " + Fmt(opinf_timing.online) + " s");
  }

  // --- 7: DMD spectral recovery -------------------------------------------------------
  {
    const auto start = Clock::now();
    std::mt19937_64 rng(7);
    bool ok = true;
    double worst_recon = 0.0;
    for (int trial = 0; trial < 5; ++trial)
    {
      const LinearSystem sys = MakeLinearSystem(50, 40, rng);
      DmdModel model = FitDmd(sys.snapshots, 5, 1.0);
      ok = ok && MatchSpectrum(model.eigenvalues, sys.eigenvalues, 1.0e-8);
      model.amplitudes = AmplitudesOptimal(model);
      const DenseMatrix recon = ReconstructDmd(model, sys.snapshots.cols());
      worst_recon = std::max(worst_recon, (recon - sys.snapshots).norm() / sys.snapshots.norm());
    }
    const double seconds = Since(start);
    Report(7, ok && worst_recon <= 1.0e-8 && seconds < 1.0, "DMD spectral recovery",
           std::string("eigenvalues ") + (ok ? "match" : "differ") + " to 1e-8, reconstruction " +
               Fmt(worst_recon) + ", " + Fmt(seconds) + " s");
  }

  // --- 8: OpInf exact recovery --------------------------------------------------------
  {
    const auto start = Clock::now();
    std::mt19937_64 rng(8);
    const int r = 6, ni = 2, m = 60;
    const DenseMatrix k_true = RandomSpd(r, rng);
    const DenseMatrix b_true = RandomMatrix(r, ni, rng);
    const DenseMatrix u = RandomMatrix(r, m, rng);
    const DenseMatrix z = RandomMatrix(ni, m, rng);
    const DenseMatrix udd = -k_true * u + b_true * z;
    const auto closed = InferUnconstrained(u, udd, z, 0.0);
    const double recovery = std::max((closed.stiffness - k_true).norm() / k_true.norm(),
                                     (closed.input_map - b_true).norm() / b_true.norm());
    const auto iterative = InferUnconstrainedIterative(u, udd, z, 0.0);
    const double parity =
        std::max((iterative.operators.stiffness - closed.stiffness).norm() / closed.stiffness.norm(),
                 (iterative.operators.input_map - closed.input_map).norm() / closed.input_map.norm());
    const double seconds = Since(start);
    Report(8, recovery <= 1.0e-6 && parity <= 1.0e-4 && seconds < 30.0, "OpInf exact recovery",
           "recovery " + Fmt(recovery) + ", closed form vs gradient " + Fmt(parity) + " after " +
               std::to_string(iterative.iterations) + " iterations, " + Fmt(seconds) + " s");
  }

  // --- 9: gradient check --------------------------------------------------------------
  {
    double worst = 0.0;
    for (int seed = 0; seed < 10; ++seed)
    {
      std::mt19937_64 rng(900 + seed);
      const DenseMatrix l = RandomMatrix(3, 3, rng), w = RandomMatrix(3, 3, rng);
      const DenseMatrix u = RandomMatrix(3, 12, rng), udd = RandomMatrix(3, 12, rng);
      const DenseMatrix f = RandomMatrix(3, 12, rng);
      const double lambda = 0.1;
      const FactorGradient g = AnalyticGradient(l, w, u, udd, f, lambda);
      DenseMatrix fd_l(3, 3), fd_w(3, 3);
      const double h = 1.0e-6;
      for (int k = 0; k < 9; ++k)
      {
        DenseMatrix lp = l, lm = l, wp = w, wm = w;
        lp.data()[k] += h;
        lm.data()[k] -= h;
        wp.data()[k] += h;
        wm.data()[k] -= h;
        fd_l.data()[k] = (FactorLoss(lp, w, u, udd, f, lambda) - FactorLoss(lm, w, u, udd, f, lambda)) / (2 * h);
        fd_w.data()[k] = (FactorLoss(l, wp, u, udd, f, lambda) - FactorLoss(l, wm, u, udd, f, lambda)) / (2 * h);
      }
      worst = std::max({worst, (fd_l - g.wrt_l).norm() / g.wrt_l.norm(),
                        (fd_w - g.wrt_w).norm() / g.wrt_w.norm()});
    }
    Report(9, worst <= 1.0e-5, "gradient check", "worst relative error " + Fmt(worst) + " over 10 seeds");
  }

  // --- 10: SPD guarantee --------------------------------------------------------------
  {
    int spd = 0, total = 0;
    for (int seed = 0; seed < 10; ++seed)
    {
      std::mt19937_64 rng(1000 + seed);
      const int r = 5, m = 80;
      const DenseMatrix u = RandomMatrix(r, m, rng), udd = RandomMatrix(r, m, rng);
      const DenseMatrix f = RandomSpd(r, rng) * udd + RandomSpd(r, rng) * u + 0.1 * RandomMatrix(r, m, rng);
      for (const bool zero_force : {false, true})
      {
        OptimizerConfig config;
        config.seed = static_cast<std::uint64_t>(seed);
        config.max_iterations = 3000;
        config.init_perturbation = 0.2;
        const auto res = InferForcesInformed(u, udd, zero_force ? DenseMatrix() : f, 1.0e-8, config);
        ++total;
        spd += (IsSpd(res.mass) && IsSpd(res.stiffness)) ? 1 : 0;
      }
    }
    Report(10, spd == total, "forces-informed SPD",
           std::to_string(spd) + "/" + std::to_string(total) + " fits pass Cholesky (10 seeds, with and without forces)");
  }

  // --- 11: conservation ---------------------------------------------------------------
  {
    const Vector e = DiscreteEnergy(coarse.ops.mass, coarse.ops.stiffness, coarse.sol.displacements,
                                    coarse.sol.velocities);
    const double fom_drift = (e.array() - e(0)).abs().maxCoeff() / e(0);
    std::mt19937_64 rng(11);
    SecondOrderSystem sys;
    sys.mass = RandomSpd(10, rng);
    sys.stiffness = RandomSpd(10, rng);
    sys.initial_displacement = RandomMatrix(10, 1, rng);
    sys.initial_velocity = RandomMatrix(10, 1, rng);
    const auto traj = Newmark(sys, 0.05, 10001);
    const Vector en = TrajectoryEnergy(sys, traj);
    const double newmark_drift = (en.array() - en(0)).abs().maxCoeff() / en(0);
    Report(11, fom_drift <= 1.0e-8 && newmark_drift <= 1.0e-8, "conservation",
           "FOM drift " + Fmt(fom_drift) + " over 245 points, Newmark drift " + Fmt(newmark_drift) +
               " over 1e4 steps");
  }

  // --- 12: differentiation order ------------------------------------------------------
  {
    const auto max_error = [](int m) {
      const double dt = 2.0 * std::numbers::pi / (m - 1);
      DenseMatrix u(1, m);
      Vector exact(m);
      for (int k = 0; k < m; ++k)
      {
        u(0, k) = std::sin(k * dt);
        exact(k) = -std::sin(k * dt);
      }
      return (Differentiate8th(u, dt).row(0).transpose() - exact).cwiseAbs().maxCoeff();
    };
    const double e1 = max_error(41), e2 = max_error(81);
    const double order = std::log2(e1 / e2);
    double poly = 0.0;
    const double dt = 0.1;
    DenseMatrix p(3, 30);
    for (int k = 0; k < 30; ++k)
    {
      const double t = 1.0 + k * dt;
      p(0, k) = 3.0;
      p(1, k) = 2.0 * t - 1.0;
      p(2, k) = t * t;
    }
    const DenseMatrix d = Differentiate8th(p, dt);
    poly = std::max({d.row(0).cwiseAbs().maxCoeff(), d.row(1).cwiseAbs().maxCoeff(),
                     (d.row(2).array() - 2.0).abs().maxCoeff()});
    Report(12, order >= 7.5 && poly <= 1.0e-9, "differentiation order",
           "observed order " + Fmt(order) + ", polynomial error " + Fmt(poly));
  }

  // --- 13: mrDMD two-scale test -------------------------------------------------------
  {
    const int n = 64, m = 512;
    const double dt = 1.0 / m;
    const double pi = std::numbers::pi;
    DenseMatrix u(n, m);
    for (int i = 0; i < n; ++i)
    {
      const double x = static_cast<double>(i) / (n - 1);
      for (int k = 0; k < m; ++k)
      {
        const double t = k * dt;
        double burst = 0.0;
        if (t >= 0.75)
        {
          const double env = std::sin(pi * (t - 0.75) / 0.25);
          burst = 0.5 * env *
                  (std::cos(2 * pi * x) * std::cos(8 * pi * t) + std::sin(3 * pi * x) * std::sin(8 * pi * t));
        }
        u(i, k) = std::sin(pi * x) * std::sin(pi * t) + burst;
      }
    }
    const int sensor = n / 3;
    const MrDmdTree tree = FitMrDmd(u, dt, 4, 2, 1.0, 6);
    const DenseMatrix mr = ReconstructMrDmd(tree);
    const double e_mr = SensorError(u.row(sensor).transpose(), mr.row(sensor).transpose(), dt);
    const Eigen::Index budget = std::min<Eigen::Index>(
        tree.TotalModes(), NumericalRank(SingularValues(u.leftCols(m - 1)), kMrDmdRankTolerance));
    DmdModel single = FitDmd(u, budget, dt);
    single.amplitudes = AmplitudesOptimal(single);
    const double e_dmd = SensorError(u.row(sensor).transpose(),
                                     ReconstructDmdRow(single, sensor, m), dt);
    Report(13, e_mr < 5.0 && e_dmd > e_mr, "mrDMD two-scale",
           "mrDMD " + Fmt(e_mr) + "% with " + std::to_string(tree.TotalModes()) +
               " modes, single-window DMD " + Fmt(e_dmd) + "% at rank " + std::to_string(budget));
  }

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
