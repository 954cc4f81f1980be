// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "morwave/error.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

// Exact DMD of a snapshot sequence x_1 .. x_M with x_{k+1} ~ A x_k.
//
// Modes are normalized so that V^T phi_j = psi_j, i.e. the exact modes
// X_2 W S^-1 Psi with column j divided by lambda_j. Projected and optimal
// amplitudes are then expressed in the same reduced coordinates as the modes.
struct DmdModel
{
  ComplexMatrix modes;        // N x r
  ComplexVector eigenvalues;  // lambda_j
  ComplexVector rates;        // omega_j = log(lambda_j) / dt
  ComplexVector amplitudes;   // b_j, empty until computed
  double dt = 0.0;

  DenseMatrix pod_left;       // V, N x r
  Vector pod_sigma;           // r
  DenseMatrix pod_right;      // W, (M - 1) x r
  DenseMatrix reduced_operator;     // A~ = V^T X_2 W S^-1
  ComplexMatrix reduced_eigenvectors;  // Psi, r x r_kept
  Vector initial_reduced;     // V^T x_1
  Vector second_reduced;      // V^T x_2
  Eigen::Index snapshot_count = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::Index Rank() const { return pod_left.cols(); }
  [[nodiscard]] Eigen::Index ModeCount() const { return eigenvalues.size(); }
};

enum class ProjectedAmplitudeVariant
{
  first_snapshot,   // Psi b = V^T x_1
  lambda_shifted    // Psi Lambda b = V^T x_2
};

// Eigenvalues this small make log(lambda) meaningless; such modes are dropped.
inline constexpr double kDmdEigenvalueFloor = 1.0e-12;
// Truncation must not divide by negligible singular values.
inline constexpr double kDmdSigmaFloor = 1.0e-13;

// Numerical rank of U (cutoff `tol * sigma_1`).
inline Eigen::Index NumericalRank(const Vector &singular_values, double tol)
{
  if (singular_values.size() == 0 || singular_values(0) == 0.0)
  {
    return 0;
  }
  Eigen::Index rank = 0;
  while (rank < singular_values.size() && singular_values(rank) > tol * singular_values(0))
  {
    ++rank;
  }
  return rank;
}

inline DmdModel FitDmd(const DenseMatrix &u, Eigen::Index r, double dt)
{
  detail::RequireFinite(u, "fit_dmd");
  const Eigen::Index m = u.cols();
  if (m < 2)
  {
    throw InvalidArgument("fit_dmd: need at least 2 snapshots, got " + std::to_string(m));
  }
  detail::Require(dt > 0.0, "fit_dmd: dt must be positive");
  const Eigen::Index kmax = std::min(u.rows(), m - 1);
  if (r < 1 || r > kmax)
  {
    throw InvalidArgument("fit_dmd: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(kmax) + "]");
  }
  const auto x1 = u.leftCols(m - 1);
  const auto x2 = u.rightCols(m - 1);
  const auto svd = detail::ThinSvd(x1);
  const Vector &s = svd.singularValues();
  if (!(s(r - 1) > kDmdSigmaFloor * s(0)))
  {
    throw InvalidArgument("fit_dmd: rank " + std::to_string(r) +
                          " exceeds the numerical rank of the data");
  }

  DmdModel model;
  model.dt = dt;
  model.snapshot_count = m;
  model.pod_left = svd.matrixU().leftCols(r);
  model.pod_sigma = s.head(r);
  model.pod_right = svd.matrixV().leftCols(r);
  const DenseMatrix x2_w_sinv =
      (x2 * model.pod_right) * model.pod_sigma.cwiseInverse().asDiagonal();
  model.reduced_operator = model.pod_left.transpose() * x2_w_sinv;
  model.initial_reduced = model.pod_left.transpose() * u.col(0);
  model.second_reduced = model.pod_left.transpose() * u.col(1);

  const EigResult eig = EigDense(model.reduced_operator);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < eig.eigenvalues.size(); ++j)
  {
    if (std::abs(eig.eigenvalues(j)) >= kDmdEigenvalueFloor)
    {
      keep.push_back(j);
    }
    else
    {
      model.warnings.push_back("dropped DMD mode " + std::to_string(j) +
                               " with |lambda| below the log floor");
    }
  }
  const auto kept = static_cast<Eigen::Index>(keep.size());
  model.eigenvalues.resize(kept);
  model.reduced_eigenvectors.resize(r, kept);
  for (Eigen::Index k = 0; k < kept; ++k)
  {
    model.eigenvalues(k) = eig.eigenvalues(keep[static_cast<std::size_t>(k)]);
    model.reduced_eigenvectors.col(k) = eig.eigenvectors.col(keep[static_cast<std::size_t>(k)]);
  }
  model.rates = model.eigenvalues.array().log() / dt;
  model.modes = x2_w_sinv.cast<Complex>() * model.reduced_eigenvectors *
                model.eigenvalues.cwiseInverse().asDiagonal();
  return model;
}

// r x count matrix with entries lambda_j^k, k = 0 .. count-1.
inline ComplexMatrix Vandermonde(const ComplexVector &eigenvalues, Eigen::Index count)
{
  ComplexMatrix v(eigenvalues.size(), count);
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j)
  {
    Complex p = 1.0;
    for (Eigen::Index k = 0; k < count; ++k)
    {
      v(j, k) = p;
      p *= eigenvalues(j);
    }
  }
  return v;
}

namespace detail
{

inline void RequireWellConditioned(const ComplexMatrix &psi, const char *what)
{
  Eigen::JacobiSVD<ComplexMatrix> svd(psi);
  const auto &s = svd.singularValues();
  if (s.size() == 0 || !(s(s.size() - 1) > 1.0e-12 * s(0)))
  {
    throw NumericalError(std::string(what) +
                         ": reduced eigenvector matrix is singular (defective operator)");
  }
}

inline ComplexVector LeastSquares(const ComplexMatrix &a, const ComplexVector &b)
{
  return a.completeOrthogonalDecomposition().solve(b);
}

}  // namespace detail

// Amplitudes from the POD projection of the first snapshot (or of the second
// snapshot with the Lambda-shifted relation).
inline ComplexVector AmplitudesProjected(const DmdModel &model,
                                         ProjectedAmplitudeVariant variant =
                                             ProjectedAmplitudeVariant::first_snapshot)
{
  const ComplexMatrix &psi = model.reduced_eigenvectors;
  detail::RequireWellConditioned(psi, "amplitudes_projected");
  if (variant == ProjectedAmplitudeVariant::first_snapshot)
  {
    return detail::LeastSquares(psi, model.initial_reduced.cast<Complex>());
  }
  const ComplexMatrix psi_lambda = psi * model.eigenvalues.asDiagonal();
  return detail::LeastSquares(psi_lambda, model.second_reduced.cast<Complex>());
}

// Amplitudes minimizing ||S W^T - Psi diag(b) V_and||_F over the M-1 fitted
// snapshots, solved through the Hadamard-product normal equations
//   ((Psi^* Psi) o conj(V_and V_and^*)) b = conj(diag(V_and W S Psi)).
inline ComplexVector AmplitudesOptimal(const DmdModel &model)
{
  const ComplexMatrix &psi = model.reduced_eigenvectors;
  const Eigen::Index count = model.pod_right.rows();
  const ComplexMatrix vand = Vandermonde(model.eigenvalues, count);
  const ComplexMatrix gram_modes = psi.adjoint() * psi;
  const ComplexMatrix gram_time = (vand * vand.adjoint()).conjugate();
  const ComplexMatrix p = gram_modes.cwiseProduct(gram_time);
  const ComplexMatrix v_ws =
      vand * (model.pod_right * model.pod_sigma.asDiagonal()).cast<Complex>();
  ComplexVector q(psi.cols());
  for (Eigen::Index j = 0; j < psi.cols(); ++j)
  {
    Complex d = 0.0;
    for (Eigen::Index k = 0; k < psi.rows(); ++k)
    {
      d += v_ws(j, k) * psi(k, j);
    }
    q(j) = std::conj(d);
  }
  Eigen::FullPivLU<ComplexMatrix> lu(p);
  if (!lu.isInvertible())
  {
    throw NumericalError("amplitudes_optimal: Gram matrix is singular");
  }
  return lu.solve(q);
}

// Re(Phi diag(b) V_and) with `count` columns; `imaginary_residue` receives
// the Frobenius norm of the discarded imaginary part.
inline DenseMatrix ReconstructDmd(const DmdModel &model, Eigen::Index count,
                                  double *imaginary_residue = nullptr)
{
  detail::Require(model.amplitudes.size() == model.ModeCount(),
                  "reconstruct_dmd: amplitudes not set");
  const ComplexMatrix vand = Vandermonde(model.eigenvalues, count);
  const ComplexMatrix x = model.modes * model.amplitudes.asDiagonal() * vand;
  if (imaginary_residue != nullptr)
  {
    *imaginary_residue = x.imag().norm();
  }
  return x.real();
}

// Single row of the reconstruction.
inline Vector ReconstructDmdRow(const DmdModel &model, Eigen::Index row, Eigen::Index count)
{
  detail::Require(model.amplitudes.size() == model.ModeCount(),
                  "reconstruct_dmd: amplitudes not set");
  const ComplexMatrix vand = Vandermonde(model.eigenvalues, count);
  const ComplexVector weights = model.modes.row(row).transpose().cwiseProduct(model.amplitudes);
  return (vand.transpose() * weights).real();
}

// Reduced recursion u~_{k+1} = A~ u~_k from u~_1 = V^T x_1; r x count.
inline DenseMatrix AdvanceDmdReduced(const DmdModel &model, Eigen::Index count)
{
  detail::Require(count >= 1, "advance_dmd: need at least one step");
  DenseMatrix out(model.Rank(), count);
  out.col(0) = model.initial_reduced;
  for (Eigen::Index k = 1; k < count; ++k)
  {
    out.col(k) = model.reduced_operator * out.col(k - 1);
  }
  return out;
}

// Lifted trajectory V u~_k, N x count.
inline DenseMatrix AdvanceDmd(const DmdModel &model, Eigen::Index count)
{
  return model.pod_left * AdvanceDmdReduced(model, count);
}

}  // namespace morwave
