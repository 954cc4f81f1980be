// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <Eigen/LU>

#include "morwave/error.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

// mass q'' + stiffness q = f(t). Forcing is either a sampled trajectory
// (r x count) or an input map B with samples Z (N_I x count); both empty
// means f = 0.
struct SecondOrderSystem
{
  DenseMatrix mass;
  DenseMatrix stiffness;
  DenseMatrix forces;
  DenseMatrix input_map;
  DenseMatrix input_samples;
  Vector initial_displacement;
  Vector initial_velocity;

  [[nodiscard]] Eigen::Index Dimension() const { return stiffness.rows(); }

  // Forcing vector at grid index n.
  [[nodiscard]] Vector ForceAt(Eigen::Index n) const
  {
    if (forces.size() > 0)
    {
      return forces.col(n);
    }
    if (input_map.size() > 0)
    {
      return input_map * input_samples.col(n);
    }
    return Vector::Zero(Dimension());
  }

  void Validate(Eigen::Index count) const
  {
    const Eigen::Index r = stiffness.rows();
    detail::Require(stiffness.cols() == r, "second-order system: stiffness must be square");
    detail::Require(mass.rows() == r && mass.cols() == r,
                    "second-order system: mass and stiffness sizes differ");
    detail::Require(initial_displacement.size() == r && initial_velocity.size() == r,
                    "second-order system: initial state size mismatch");
    if (forces.size() > 0)
    {
      detail::Require(forces.rows() == r && forces.cols() >= count,
                      "second-order system: force samples do not cover the time grid");
    }
    if (input_map.size() > 0)
    {
      detail::Require(input_map.rows() == r && input_samples.rows() == input_map.cols() &&
                          input_samples.cols() >= count,
                      "second-order system: input samples do not cover the time grid");
    }
  }
};

// Diagonal mass helper for systems with a scalar mass coefficient.
inline DenseMatrix ScalarMass(double coefficient, Eigen::Index r)
{
  return coefficient * DenseMatrix::Identity(r, r);
}

struct ReducedTrajectory
{
  DenseMatrix displacement;  // r x count
  DenseMatrix velocity;
  DenseMatrix acceleration;
};

namespace detail
{

inline Eigen::PartialPivLU<DenseMatrix> Factorize(const DenseMatrix &a, const char *what)
{
  if (!a.allFinite())
  {
    throw NumericalError(std::string(what) + ": non-finite system matrix");
  }
  Eigen::PartialPivLU<DenseMatrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond > 1.0e-15))
  {
    throw NumericalError(std::string(what) + ": system matrix is singular (rcond " +
                         std::to_string(rcond) + ")");
  }
  return lu;
}

}  // namespace detail

// Newmark-beta; (1/4, 1/2) is the average-acceleration scheme. The initial
// acceleration comes from the equation of motion at the first grid point.
inline ReducedTrajectory Newmark(const SecondOrderSystem &system, double tau, Eigen::Index count,
                                 double beta = 0.25, double gamma = 0.5)
{
  detail::Require(tau > 0.0 && count >= 1, "newmark: invalid time grid");
  detail::Require(beta >= 0.0 && gamma >= 0.0, "newmark: beta and gamma must be >= 0");
  system.Validate(count);
  const Eigen::Index r = system.Dimension();
  ReducedTrajectory out{DenseMatrix(r, count), DenseMatrix(r, count), DenseMatrix(r, count)};

  const auto mass_lu = detail::Factorize(system.mass, "newmark (mass)");
  const auto lu = detail::Factorize(system.mass + (beta * tau * tau) * system.stiffness, "newmark");

  Vector u = system.initial_displacement;
  Vector v = system.initial_velocity;
  Vector a = mass_lu.solve(system.ForceAt(0) - system.stiffness * u);
  out.displacement.col(0) = u;
  out.velocity.col(0) = v;
  out.acceleration.col(0) = a;
  for (Eigen::Index n = 1; n < count; ++n)
  {
    const Vector u_pred = u + tau * v + (tau * tau * (0.5 - beta)) * a;
    const Vector v_pred = v + (tau * (1.0 - gamma)) * a;
    a = lu.solve(system.ForceAt(n) - system.stiffness * u_pred);
    u = u_pred + (beta * tau * tau) * a;
    v = v_pred + (gamma * tau) * a;
    if (!u.allFinite() || !v.allFinite())
    {
      throw NumericalError("newmark: non-finite state at step " + std::to_string(n));
    }
    out.displacement.col(n) = u;
    out.velocity.col(n) = v;
    out.acceleration.col(n) = a;
  }
  return out;
}

// Trapezoidal rule on the first-order form (q, q'). Forcing enters as the
// average of the two end samples, i.e. the linear interpolant at the half step.
inline ReducedTrajectory Trapezoidal(const SecondOrderSystem &system, double tau, Eigen::Index count)
{
  detail::Require(tau > 0.0 && count >= 1, "trapezoidal: invalid time grid");
  system.Validate(count);
  const Eigen::Index r = system.Dimension();
  ReducedTrajectory out{DenseMatrix(r, count), DenseMatrix(r, count), DenseMatrix(r, count)};

  const auto mass_lu = detail::Factorize(system.mass, "trapezoidal (mass)");
  const auto lu =
      detail::Factorize(system.mass + (0.25 * tau * tau) * system.stiffness, "trapezoidal");

  Vector u = system.initial_displacement;
  Vector v = system.initial_velocity;
  Vector f = system.ForceAt(0);
  out.displacement.col(0) = u;
  out.velocity.col(0) = v;
  out.acceleration.col(0) = mass_lu.solve(f - system.stiffness * u);
  for (Eigen::Index n = 1; n < count; ++n)
  {
    const Vector f_next = system.ForceAt(n);
    const Vector rhs = system.mass * v - system.stiffness * (tau * u + (0.25 * tau * tau) * v) +
                       (0.5 * tau) * (f + f_next);
    const Vector v_next = lu.solve(rhs);
    u += (0.5 * tau) * (v + v_next);
    v = v_next;
    f = f_next;
    if (!u.allFinite() || !v.allFinite())
    {
      throw NumericalError("trapezoidal: non-finite state at step " + std::to_string(n));
    }
    out.displacement.col(n) = u;
    out.velocity.col(n) = v;
    out.acceleration.col(n) = mass_lu.solve(f - system.stiffness * u);
  }
  return out;
}

// 1/2 v'Mv + 1/2 u'Ku per time point.
inline Vector TrajectoryEnergy(const SecondOrderSystem &system, const ReducedTrajectory &traj)
{
  Vector e(traj.displacement.cols());
  for (Eigen::Index k = 0; k < e.size(); ++k)
  {
    const auto u = traj.displacement.col(k);
    const auto v = traj.velocity.col(k);
    e(k) = 0.5 * v.dot(system.mass * v) + 0.5 * u.dot(system.stiffness * u);
  }
  return e;
}

}  // namespace morwave
