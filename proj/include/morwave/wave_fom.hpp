// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/SparseCholesky>

#include "morwave/error.hpp"
#include "morwave/mesh_fem.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

struct DamageParams
{
  Point location{3.0, 3.0};
  double size = 0.06;       // d_D, length^2
  double depth = 0.05;      // c_D, squared wave speed at the damage centre

  void Validate(double domain_length = 5.0) const
  {
    detail::Require(location.x1 > 0.0 && location.x1 < domain_length && location.x2 > 0.0 &&
                        location.x2 < domain_length,
                    "damage location must lie inside the domain");
    detail::Require(size > 0.0, "damage size d_D must be positive");
    detail::Require(depth > 0.0 && depth <= 0.25, "damage depth c_D must lie in (0, 0.25]");
  }
};

// Initial velocity: the time derivative of the excitation (default) or zero,
// the latter kept for sensitivity studies.
enum class InitialVelocity
{
  derivative,
  zero
};

struct WaveProblem
{
  double domain_length = 5.0;
  double t0 = 0.1;
  double t_end = 5.0;
  double tau = 0.02;
  DamageParams damage;
  double excitation_amplitude = 450000.0;  // A in u_xM(t) = 10 + sin(2 pi A t)
  Point sensor_location{3.5, 2.5};
  int nodes_per_side = 101;
  InitialVelocity initial_velocity = InitialVelocity::derivative;

  // Number of stored time points, t0 + k tau for k = 0 .. count-1.
  [[nodiscard]] int SnapshotCount() const
  {
    const double steps = (t_end - t0) / tau;
    const double rounded = std::round(steps);
    if (std::abs(steps - rounded) > 1.0e-9 * std::max(1.0, steps))
    {
      throw InvalidArgument("(t_end - t0) / tau = " + std::to_string(steps) +
                            " is not an integer");
    }
    return static_cast<int>(rounded);
  }

  void Validate() const
  {
    detail::Require(t0 < t_end, "t0 must be smaller than t_end");
    detail::Require(tau > 0.0, "tau must be positive");
    detail::Require(nodes_per_side >= 3, "nodes_per_side must be >= 3");
    damage.Validate(domain_length);
    (void)SnapshotCount();
  }
};

struct FomTimings
{
  double assembly_seconds = 0.0;
  double factorization_seconds = 0.0;
  double stepping_seconds = 0.0;

  [[nodiscard]] double Total() const
  {
    return assembly_seconds + factorization_seconds + stepping_seconds;
  }
};

struct FomSolution
{
  DenseMatrix displacements;  // interior nodes x time points
  DenseMatrix velocities;
  Vector sensor_signal;
  Vector times;
  int sensor_node = -1;
  int sensor_row = -1;  // interior index of the sensor node, -1 on the boundary
  FomTimings timings;
};

// Squared wave speed with a Gaussian dip of depth c_D centred on the damage.
inline auto DamageField(const DamageParams &params)
{
  return [params](double x1, double x2) {
    const double dx = x1 - params.location.x1;
    const double dy = x2 - params.location.x2;
    return 0.25 - (0.25 - params.depth) * std::exp(-(dx * dx + dy * dy) / params.size);
  };
}

// Smooth bump of radius 0.3 around (2.5, 2.5).
inline double InitialBump(double x1, double x2)
{
  const double dx = x1 - 2.5;
  const double dy = x2 - 2.5;
  const double r2 = dx * dx + dy * dy;
  if (std::sqrt(r2) >= 0.3)
  {
    return 0.0;
  }
  return std::exp(1.0 + 0.09 / (r2 - 0.09));
}

struct InitialState
{
  Vector displacement;
  Vector velocity;
};

// Nodal interpolation of u_xM(t0) g(x) and u_xM'(t0) g(x) on interior nodes.
inline InitialState InitialConditions(const WaveProblem &problem, const StructuredMesh &mesh)
{
  const double two_pi_a = 2.0 * std::numbers::pi * problem.excitation_amplitude;
  const double amp_u = 10.0 + std::sin(two_pi_a * problem.t0);
  const double amp_v = problem.initial_velocity == InitialVelocity::derivative
                           ? two_pi_a * std::cos(two_pi_a * problem.t0)
                           : 0.0;
  const Vector g = InterpolateInterior(mesh, InitialBump);
  return {amp_u * g, amp_v * g};
}

// Nearest mesh node; ties go to the lowest index.
inline int SensorIndex(const StructuredMesh &mesh, const Point &location)
{
  int best = -1;
  double best_d2 = 0.0;
  for (int k = 0; k < mesh.NodeCount(); ++k)
  {
    const Point &p = mesh.node_coords[static_cast<std::size_t>(k)];
    const double d2 = (p.x1 - location.x1) * (p.x1 - location.x1) +
                      (p.x2 - location.x2) * (p.x2 - location.x2);
    if (best < 0 || d2 < best_d2)
    {
      best = k;
      best_d2 = d2;
    }
  }
  return best;
}

struct TrapezoidalTrajectory
{
  DenseMatrix displacements;
  DenseMatrix velocities;
};

// Trapezoidal rule on (u, v) for M v' = -K u, u' = v, with one factorization of
// M + (tau^2 / 4) K. Returns `count` time points including the initial state.
inline TrapezoidalTrajectory SolveTrapezoidalSparse(const SparseMatrix &mass,
                                                    const SparseMatrix &stiffness,
                                                    const Vector &u0, const Vector &v0,
                                                    double tau, int count,
                                                    FomTimings *timings = nullptr)
{
  const Eigen::Index n = mass.rows();
  detail::Require(mass.cols() == n && stiffness.rows() == n && stiffness.cols() == n,
                  "trapezoidal: operator dimensions differ");
  detail::Require(u0.size() == n && v0.size() == n, "trapezoidal: initial state size mismatch");
  detail::Require(tau > 0.0 && count >= 1, "trapezoidal: invalid time grid");

  auto start = std::chrono::steady_clock::now();
  const SparseMatrix system = mass + (0.25 * tau * tau) * stiffness;
  Eigen::SimplicialLDLT<SparseMatrix> solver(system);
  if (solver.info() != Eigen::Success)
  {
    throw NumericalError("trapezoidal: factorization of M + tau^2/4 K failed");
  }
  auto factored = std::chrono::steady_clock::now();

  TrapezoidalTrajectory out{DenseMatrix(n, count), DenseMatrix(n, count)};
  out.displacements.col(0) = u0;
  out.velocities.col(0) = v0;
  Vector u = u0;
  Vector v = v0;
  Vector rhs(n);
  for (int k = 1; k < count; ++k)
  {
    rhs.noalias() = mass * v;
    rhs.noalias() -= stiffness * (tau * u + (0.25 * tau * tau) * v);
    Vector v_next = solver.solve(rhs);
    u += (0.5 * tau) * (v + v_next);
    v = std::move(v_next);
    if (!u.allFinite() || !v.allFinite())
    {
      throw NumericalError("trapezoidal: non-finite state at step " + std::to_string(k));
    }
    out.displacements.col(k) = u;
    out.velocities.col(k) = v;
  }
  auto done = std::chrono::steady_clock::now();
  if (timings != nullptr)
  {
    timings->factorization_seconds = std::chrono::duration<double>(factored - start).count();
    timings->stepping_seconds = std::chrono::duration<double>(done - factored).count();
  }
  return out;
}

// Discrete energy 1/2 v'Mv + 1/2 u'Ku per stored time point.
inline Vector DiscreteEnergy(const SparseMatrix &mass, const SparseMatrix &stiffness,
                             const DenseMatrix &u, const DenseMatrix &v)
{
  Vector e(u.cols());
  for (Eigen::Index k = 0; k < u.cols(); ++k)
  {
    e(k) = 0.5 * v.col(k).dot(mass * v.col(k)) + 0.5 * u.col(k).dot(stiffness * u.col(k));
  }
  return e;
}

// Crank-Nicolson solve of the damaged wave benchmark. `mass` and `stiffness`
// are the Dirichlet-eliminated operators on the mesh interior.
inline FomSolution SolveCrankNicolson(const WaveProblem &problem, const StructuredMesh &mesh,
                                      const SparseMatrix &mass, const SparseMatrix &stiffness)
{
  problem.Validate();
  detail::Require(mass.rows() == mesh.InteriorCount(),
                  "solve_crank_nicolson: operators must be Dirichlet-eliminated");
  const int count = problem.SnapshotCount();
  const InitialState init = InitialConditions(problem, mesh);

  FomSolution out;
  auto traj = SolveTrapezoidalSparse(mass, stiffness, init.displacement, init.velocity,
                                     problem.tau, count, &out.timings);
  out.displacements = std::move(traj.displacements);
  out.velocities = std::move(traj.velocities);
  out.times = Vector::LinSpaced(count, problem.t0, problem.t0 + (count - 1) * problem.tau);
  out.sensor_node = SensorIndex(mesh, problem.sensor_location);
  out.sensor_row = mesh.interior_index[static_cast<std::size_t>(out.sensor_node)];
  out.sensor_signal = out.sensor_row >= 0
                          ? Vector(out.displacements.row(out.sensor_row).transpose())
                          : Vector::Zero(count);
  return out;
}

struct WaveOperators
{
  StructuredMesh mesh;
  SparseMatrix mass;       // interior
  SparseMatrix stiffness;  // interior
  double assembly_seconds = 0.0;
};

inline WaveOperators AssembleWaveOperators(const WaveProblem &problem)
{
  problem.Validate();
  auto start = std::chrono::steady_clock::now();
  WaveOperators ops;
  ops.mesh = BuildMesh(problem.nodes_per_side, problem.domain_length);
  ops.mass = EliminateDirichlet(AssembleMass(ops.mesh), ops.mesh);
  ops.stiffness =
      EliminateDirichlet(AssembleStiffness(ops.mesh, DamageField(problem.damage)), ops.mesh);
  ops.assembly_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return ops;
}

// Assemble and solve in one call.
inline FomSolution SimulateWave(const WaveProblem &problem, WaveOperators *operators = nullptr)
{
  WaveOperators ops = AssembleWaveOperators(problem);
  FomSolution sol = SolveCrankNicolson(problem, ops.mesh, ops.mass, ops.stiffness);
  sol.timings.assembly_seconds = ops.assembly_seconds;
  if (operators != nullptr)
  {
    *operators = std::move(ops);
  }
  return sol;
}

}  // namespace morwave
