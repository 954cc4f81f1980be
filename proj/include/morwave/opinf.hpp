// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "morwave/error.hpp"
#include "morwave/integrate_rom.hpp"
#include "morwave/numerics.hpp"
#include "morwave/pod.hpp"
#include "morwave/snapshots.hpp"

namespace morwave
{

enum class OpInfVariant
{
  unconstrained,
  forces_informed
};

// How the scale of (M^, K^) is pinned when F^ = 0, where the factor loss is
// homogeneous and L = W = 0 would otherwise be optimal.
enum class ZeroForceGauge
{
  mass_floor,  // M^ = I + L^T L, so M^ >= I
  unit_mass,   // M^ = I, only W is optimized
  unit_trace   // trace(L^T L) = r after every step
};

enum class FactorInit
{
  least_squares,    // SPD projection of the linear least-squares operators
  scaled_identity   // L = W = delta I
};

// Adaptive-moment first-order optimizer settings.
struct OptimizerConfig
{
  double step_size = 1.0e-3;
  int max_iterations = 50000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1.0e-8;
  double tolerance = 1.0e-10;  // relative loss change over `window` iterations
  int window = 100;
  std::uint64_t seed = 0;
  FactorInit init = FactorInit::least_squares;
  ZeroForceGauge gauge = ZeroForceGauge::mass_floor;
  double init_perturbation = 0.0;  // relative size of seeded noise on the initial factors

  void Validate() const
  {
    detail::Require(step_size > 0.0, "optimizer: step_size must be positive");
    detail::Require(max_iterations > 0, "optimizer: max_iterations must be positive");
    detail::Require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0,
                    "optimizer: moment decay rates must lie in (0, 1)");
    detail::Require(epsilon > 0.0 && tolerance > 0.0 && window > 0,
                    "optimizer: epsilon, tolerance and window must be positive");
    detail::Require(init_perturbation >= 0.0, "optimizer: init_perturbation must be >= 0");
  }
};

// Reduced (projected) regression data; columns are time instants.
struct ReducedData
{
  DenseMatrix states;         // U^ = Phi^T U~
  DenseMatrix accelerations;  // UDD^ = Phi^T UDD~
  DenseMatrix inputs;         // Z~ (unprojected) or F^ = Phi^T F~; empty if absent
};

// Projects scaled snapshot data onto the basis. Inputs Z pass through;
// forces F are projected.
inline ReducedData ReduceData(const SnapshotSet &set, const ReducedBasis &basis)
{
  const DenseMatrix &phi = basis.phi;
  if (set.states.rows() != phi.rows())
  {
    throw InvalidArgument("reduce_data: snapshot rows " + std::to_string(set.states.rows()) +
                          " != basis rows " + std::to_string(phi.rows()));
  }
  detail::Require(set.accelerations.has_value(), "reduce_data: accelerations UDD are required");
  ReducedData out;
  out.states = phi.transpose() * set.states;
  out.accelerations = phi.transpose() * *set.accelerations;
  if (set.forces)
  {
    out.inputs = phi.transpose() * *set.forces;
  }
  else if (set.inputs)
  {
    out.inputs = *set.inputs;
  }
  return out;
}

struct UnconstrainedOperators
{
  DenseMatrix stiffness;  // K^_M, r x r
  DenseMatrix input_map;  // B^_M, r x N_I (empty without inputs)
};

// Ridge solution of min ||UDD^ + K U^ - B Z||_F^2 + lambda (||K||^2 + ||B||^2).
inline UnconstrainedOperators InferUnconstrained(const DenseMatrix &states,
                                                 const DenseMatrix &accelerations,
                                                 const DenseMatrix &inputs, double lambda)
{
  const Eigen::Index r = states.rows();
  const Eigen::Index m = states.cols();
  const Eigen::Index ni = inputs.rows();
  detail::Require(lambda >= 0.0, "infer_unconstrained: lambda must be >= 0");
  detail::Require(accelerations.rows() == r && accelerations.cols() == m,
                  "infer_unconstrained: acceleration data shape mismatch");
  detail::Require(inputs.size() == 0 || inputs.cols() == m,
                  "infer_unconstrained: input data shape mismatch");
  const Eigen::Index p = r + ni;
  // Rows: [D; sqrt(lambda) I] with D = [U^T, -Z^T]; targets [-UDD^T; 0].
  DenseMatrix design = DenseMatrix::Zero(m + p, p);
  design.topLeftCorner(m, r) = states.transpose();
  if (ni > 0)
  {
    design.topRightCorner(m, ni) = -inputs.transpose();
  }
  design.bottomRows(p).diagonal().setConstant(std::sqrt(lambda));
  DenseMatrix target = DenseMatrix::Zero(m + p, r);
  target.topRows(m) = -accelerations.transpose();

  Eigen::ColPivHouseholderQR<DenseMatrix> qr(design);
  qr.setThreshold(1.0e-13);
  if (qr.rank() < p)
  {
    throw NumericalError("infer_unconstrained: regression matrix is rank deficient (rank " +
                         std::to_string(qr.rank()) + " < " + std::to_string(p) +
                         "); increase lambda");
  }
  const DenseMatrix o = qr.solve(target);
  UnconstrainedOperators out;
  out.stiffness = o.topRows(r).transpose();
  if (ni > 0)
  {
    out.input_map = o.bottomRows(ni).transpose();
  }
  return out;
}

struct IterativeResult
{
  UnconstrainedOperators operators;
  int iterations = 0;
  bool converged = false;
};

// Same objective as InferUnconstrained, minimized by Nesterov-accelerated
// gradient descent with step 1/L. Used to cross-check the closed form.
inline IterativeResult InferUnconstrainedIterative(const DenseMatrix &states,
                                                   const DenseMatrix &accelerations,
                                                   const DenseMatrix &inputs, double lambda,
                                                   int max_iterations = 200000,
                                                   double tolerance = 1.0e-12)
{
  const Eigen::Index r = states.rows();
  const Eigen::Index ni = inputs.rows();
  detail::Require(lambda >= 0.0, "infer_unconstrained: lambda must be >= 0");
  detail::Require(accelerations.rows() == r && accelerations.cols() == states.cols(),
                  "infer_unconstrained: acceleration data shape mismatch");
  const Eigen::Index p = r + ni;
  DenseMatrix d(p, states.cols());  // regressors, one column per sample
  d.topRows(r) = states;
  if (ni > 0)
  {
    d.bottomRows(ni) = -inputs;
  }
  DenseMatrix gram = d * d.transpose();
  gram.diagonal().array() += lambda;
  const DenseMatrix rhs = -accelerations * d.transpose();  // r x p
  const double lipschitz = Eigen::SelfAdjointEigenSolver<DenseMatrix>(gram).eigenvalues().maxCoeff();
  detail::Require(lipschitz > 0.0, "infer_unconstrained: regression data is zero");
  const double step = 1.0 / lipschitz;

  // Rows of X are [K_M B_M]; the gradient of the half objective is X G - rhs.
  DenseMatrix x = DenseMatrix::Zero(r, p);
  DenseMatrix y = x;
  double t = 1.0;
  IterativeResult out;
  const double scale = std::max(rhs.norm(), 1.0e-300);
  for (int it = 0; it < max_iterations; ++it)
  {
    const DenseMatrix grad = y * gram - rhs;
    const DenseMatrix x_next = y - step * grad;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    const double change = (x_next - x).norm();
    x = x_next;
    t = t_next;
    out.iterations = it + 1;
    if ((x * gram - rhs).norm() <= tolerance * scale && change <= tolerance * std::max(x.norm(), 1.0))
    {
      out.converged = true;
      break;
    }
  }
  out.operators.stiffness = x.leftCols(r);
  if (ni > 0)
  {
    out.operators.input_map = x.rightCols(ni);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forces-informed inference with M^ = L^T L, K^ = W^T W.
// ---------------------------------------------------------------------------

struct FactorGradient
{
  DenseMatrix wrt_l;
  DenseMatrix wrt_w;
};

// ||L^T L UDD^ + W^T W U^ - F^||_F^2 + lambda (||L^T L||_F^2 + ||W^T W||_F^2).
// An empty `forces` means F^ = 0.
inline double FactorLoss(const DenseMatrix &l, const DenseMatrix &w, const DenseMatrix &states,
                         const DenseMatrix &accelerations, const DenseMatrix &forces, double lambda)
{
  const DenseMatrix mass = l.transpose() * l;
  const DenseMatrix stiff = w.transpose() * w;
  DenseMatrix residual = mass * accelerations + stiff * states;
  if (forces.size() > 0)
  {
    residual -= forces;
  }
  return residual.squaredNorm() + lambda * (mass.squaredNorm() + stiff.squaredNorm());
}

// Exact gradient of FactorLoss. With R the residual,
//   dL = 2 L (R UDD^T + UDD R^T) + 4 lambda L (L^T L), and likewise for W with U^.
inline FactorGradient AnalyticGradient(const DenseMatrix &l, const DenseMatrix &w,
                                       const DenseMatrix &states, const DenseMatrix &accelerations,
                                       const DenseMatrix &forces, double lambda)
{
  const DenseMatrix mass = l.transpose() * l;
  const DenseMatrix stiff = w.transpose() * w;
  DenseMatrix residual = mass * accelerations + stiff * states;
  if (forces.size() > 0)
  {
    residual -= forces;
  }
  const DenseMatrix ra = residual * accelerations.transpose();
  const DenseMatrix ru = residual * states.transpose();
  FactorGradient g;
  g.wrt_l = 2.0 * l * (ra + ra.transpose()) + (4.0 * lambda) * l * mass;
  g.wrt_w = 2.0 * w * (ru + ru.transpose()) + (4.0 * lambda) * w * stiff;
  return g;
}

struct ForcesInformedResult
{
  DenseMatrix mass;       // L^T L + eps I
  DenseMatrix stiffness;  // W^T W + eps I
  DenseMatrix l;
  DenseMatrix w;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  bool gauge_fixed = false;  // F^ = 0: scale of the pair pinned by the gauge
  double mass_offset = 0.0;  // mass = mass_offset I + L^T L
  std::vector<double> loss_history;  // every `window` iterations
};

namespace detail
{

// Loss and gradient through Gram matrices of the stacked data D = [UDD^; U^]:
// cost per evaluation is O(r^3) instead of O(r^2 M).
class FactorObjective
{
public:
  FactorObjective(const DenseMatrix &states, const DenseMatrix &accelerations,
                  const DenseMatrix &forces, double lambda, double mass_offset = 0.0)
      : r_(states.rows()), lambda_(lambda), mass_offset_(mass_offset)
  {
    DenseMatrix d(2 * r_, states.cols());
    d.topRows(r_) = accelerations;
    d.bottomRows(r_) = states;
    gram_ = d * d.transpose();
    if (forces.size() > 0)
    {
      cross_ = forces * d.transpose();
      force_energy_ = forces.squaredNorm();
    }
    else
    {
      cross_ = DenseMatrix::Zero(r_, 2 * r_);
    }
  }

  double Evaluate(const DenseMatrix &l, const DenseMatrix &w, DenseMatrix &grad_l,
                  DenseMatrix &grad_w) const
  {
    DenseMatrix x(r_, 2 * r_);
    x.leftCols(r_).noalias() = l.transpose() * l;
    x.leftCols(r_).diagonal().array() += mass_offset_;
    x.rightCols(r_).noalias() = w.transpose() * w;
    const DenseMatrix xg = x * gram_;
    const double loss_fit = (xg.cwiseProduct(x)).sum() - 2.0 * x.cwiseProduct(cross_).sum() +
                            force_energy_;
    const double loss_reg = lambda_ * x.squaredNorm();
    // d/dX = 2 (X G - H) + 2 lambda X
    const DenseMatrix dx = 2.0 * (xg - cross_) + (2.0 * lambda_) * x;
    const auto dm = dx.leftCols(r_);
    const auto dk = dx.rightCols(r_);
    grad_l.noalias() = l * (dm + dm.transpose());
    grad_w.noalias() = w * (dk + dk.transpose());
    return std::max(loss_fit, 0.0) + loss_reg;
  }

private:
  Eigen::Index r_;
  double lambda_;
  double mass_offset_;
  DenseMatrix gram_;
  DenseMatrix cross_;
  double force_energy_ = 0.0;
};

// Symmetric square root of the SPD projection of sym(a).
inline DenseMatrix SpdFactor(const DenseMatrix &a, double relative_floor = 1.0e-6)
{
  const DenseMatrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(sym);
  Vector ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1.0e-300);
  ev = ev.cwiseMax(relative_floor * top);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Shift that makes the assembled operators strictly positive definite.
inline double SpdShift(const DenseMatrix &a)
{
  const double scale = a.rows() > 0 ? std::abs(a.trace()) / static_cast<double>(a.rows()) : 0.0;
  return 1.0e-10 * std::max(scale, 1.0e-300);
}

inline ForcesInformedResult InferForcesInformed(const DenseMatrix &states,
                                                const DenseMatrix &accelerations,
                                                const DenseMatrix &forces, double lambda,
                                                const OptimizerConfig &config)
{
  config.Validate();
  const Eigen::Index r = states.rows();
  detail::Require(lambda >= 0.0, "infer_forces_informed: lambda must be >= 0");
  detail::Require(accelerations.rows() == r && accelerations.cols() == states.cols(),
                  "infer_forces_informed: acceleration data shape mismatch");
  detail::Require(forces.size() == 0 || (forces.rows() == r && forces.cols() == states.cols()),
                  "infer_forces_informed: force data shape mismatch");

  const bool zero_forces = forces.size() == 0 || forces.norm() == 0.0;
  ForcesInformedResult out;
  out.gauge_fixed = zero_forces;
  const ZeroForceGauge gauge = config.gauge;
  const bool freeze_l = zero_forces && gauge == ZeroForceGauge::unit_mass;
  const bool trace_gauge = zero_forces && gauge == ZeroForceGauge::unit_trace;
  out.mass_offset = zero_forces && gauge == ZeroForceGauge::mass_floor ? 1.0 : 0.0;

  // Initial factors.
  DenseMatrix l;
  DenseMatrix w;
  if (config.init == FactorInit::scaled_identity)
  {
    const double acc = accelerations.norm();
    const double delta = (!zero_forces && acc > 0.0) ? std::sqrt(forces.norm() / acc) : 1.0;
    l = delta * DenseMatrix::Identity(r, r);
    w = delta * DenseMatrix::Identity(r, r);
  }
  else if (zero_forces)
  {
    // With M^ fixed near I the least-squares stiffness is the unconstrained one.
    const auto op = InferUnconstrained(states, accelerations, DenseMatrix(), std::max(lambda, 0.0));
    l = DenseMatrix::Identity(r, r);
    w = detail::SpdFactor(op.stiffness);
  }
  else
  {
    // Linear least squares for X = [M K] in X [UDD^; U^] = F^.
    DenseMatrix d(2 * r, states.cols());
    d.topRows(r) = accelerations;
    d.bottomRows(r) = states;
    DenseMatrix design(states.cols() + 2 * r, 2 * r);
    design.topRows(states.cols()) = d.transpose();
    design.bottomRows(2 * r) = std::sqrt(std::max(lambda, 1.0e-14)) * DenseMatrix::Identity(2 * r, 2 * r);
    DenseMatrix target = DenseMatrix::Zero(states.cols() + 2 * r, r);
    target.topRows(states.cols()) = forces.transpose();
    const DenseMatrix xt = design.colPivHouseholderQr().solve(target);
    l = detail::SpdFactor(xt.topRows(r).transpose());
    w = detail::SpdFactor(xt.bottomRows(r).transpose());
  }
  if (out.mass_offset > 0.0)
  {
    // L = 0 is a stationary point of L^T L; start slightly off it.
    l *= 1.0e-3;
  }
  if (config.init_perturbation > 0.0)
  {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sl = config.init_perturbation * l.norm() / std::sqrt(static_cast<double>(l.size()));
    const double sw = config.init_perturbation * w.norm() / std::sqrt(static_cast<double>(w.size()));
    if (!freeze_l)
    {
      for (Eigen::Index k = 0; k < l.size(); ++k) l.data()[k] += sl * normal(rng);
    }
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] += sw * normal(rng);
  }
  const auto fix_gauge = [&]() {
    if (!trace_gauge)
    {
      return;
    }
    const double trace = l.squaredNorm();
    if (trace > 0.0)
    {
      const double c = std::sqrt(static_cast<double>(r) / trace);
      l *= c;
      w *= c;
    }
  };
  fix_gauge();

  const detail::FactorObjective objective(states, accelerations, zero_forces ? DenseMatrix() : forces,
                                          lambda, out.mass_offset);
  DenseMatrix gl(r, r);
  DenseMatrix gw(r, r);
  DenseMatrix ml = DenseMatrix::Zero(r, r), vl = DenseMatrix::Zero(r, r);
  DenseMatrix mw = DenseMatrix::Zero(r, r), vw = DenseMatrix::Zero(r, r);
  double loss = objective.Evaluate(l, w, gl, gw);
  out.initial_loss = loss;
  out.loss_history.push_back(loss);
  double window_start_loss = loss;
  double b1t = 1.0;
  double b2t = 1.0;
  DenseMatrix best_l = l, best_w = w;
  double best_loss = loss;
  int it = 0;
  for (; it < config.max_iterations; ++it)
  {
    b1t *= config.beta1;
    b2t *= config.beta2;
    ml = config.beta1 * ml + (1.0 - config.beta1) * gl;
    mw = config.beta1 * mw + (1.0 - config.beta1) * gw;
    vl = config.beta2 * vl + (1.0 - config.beta2) * gl.cwiseAbs2();
    vw = config.beta2 * vw + (1.0 - config.beta2) * gw.cwiseAbs2();
    const double step = config.step_size * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    if (!freeze_l)
    {
      l.array() -= step * ml.array() / (vl.array().sqrt() + config.epsilon);
    }
    w.array() -= step * mw.array() / (vw.array().sqrt() + config.epsilon);
    fix_gauge();
    loss = objective.Evaluate(l, w, gl, gw);
    if (!std::isfinite(loss))
    {
      throw NumericalError("infer_forces_informed: loss became non-finite at iteration " +
                           std::to_string(it + 1));
    }
    if (loss < best_loss)
    {
      best_loss = loss;
      best_l = l;
      best_w = w;
    }
    if ((it + 1) % config.window == 0)
    {
      out.loss_history.push_back(loss);
      const double change = std::abs(window_start_loss - loss) /
                            std::max(std::abs(window_start_loss), 1.0e-300);
      window_start_loss = loss;
      if (change < config.tolerance)
      {
        ++it;
        out.converged = true;
        break;
      }
    }
  }
  out.iterations = it;
  out.l = std::move(best_l);
  out.w = std::move(best_w);
  out.final_loss = best_loss;
  DenseMatrix mass = out.l.transpose() * out.l;
  mass.diagonal().array() += out.mass_offset;
  const DenseMatrix stiff = out.w.transpose() * out.w;
  out.mass = mass + SpdShift(mass) * DenseMatrix::Identity(r, r);
  out.stiffness = stiff + SpdShift(stiff) * DenseMatrix::Identity(r, r);
  return out;
}

// ---------------------------------------------------------------------------
// Model and ROM assembly
// ---------------------------------------------------------------------------

struct OpInfModel
{
  OpInfVariant variant = OpInfVariant::unconstrained;
  DenseMatrix stiffness_m;  // K^_M (unconstrained)
  DenseMatrix input_map_m;  // B^_M (unconstrained)
  DenseMatrix mass;         // M^ (forces-informed)
  DenseMatrix stiffness;    // K^ (forces-informed)
  DenseMatrix l;
  DenseMatrix w;
  ScalingRecord scaling;
  ReducedBasis basis;
  double lambda = 0.0;
  std::optional<ForcesInformedResult> optimizer;
};

// Reduced second-order system in unscaled reduced coordinates q = Phi^T u:
//   mass q'' + stiffness q = input_map * (z / input_scale)
// Lift: u = lift_scale * Phi q. The data scaling is folded into the
// operators, so lift_scale is 1.
struct RomDescriptor
{
  DenseMatrix mass;
  DenseMatrix stiffness;
  DenseMatrix input_map;   // empty when there is no forcing
  double input_scale = 1.0;
  double lift_scale = 1.0;
};

inline RomDescriptor AssembleRom(const OpInfModel &model)
{
  const double su = model.scaling.states;
  const double sa = model.scaling.accelerations;
  detail::Require(su > 0.0 && sa > 0.0, "assemble_rom: scaling norms must be positive");
  RomDescriptor out;
  out.input_scale = model.scaling.inputs;
  if (model.variant == OpInfVariant::unconstrained)
  {
    detail::Require(model.stiffness_m.size() > 0, "assemble_rom: model has no K^_M");
    const Eigen::Index r = model.stiffness_m.rows();
    out.mass = ScalarMass(1.0 / sa, r);
    out.stiffness = model.stiffness_m / su;
    out.input_map = model.input_map_m;
  }
  else
  {
    detail::Require(model.mass.size() > 0 && model.stiffness.size() > 0,
                    "assemble_rom: model has no M^/K^");
    out.mass = model.mass / sa;
    out.stiffness = model.stiffness / su;
    if (model.scaling.has_inputs)
    {
      out.input_map = DenseMatrix::Identity(model.mass.rows(), model.mass.rows());
    }
  }
  return out;
}

}  // namespace morwave
