// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "morwave/error.hpp"

namespace morwave
{

// All dense data is column-major binary64.
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct SvdResult
{
  DenseMatrix left_vectors;   // N x k
  Vector singular_values;     // k, descending
  DenseMatrix right_vectors;  // M x k
};

struct EigResult
{
  ComplexVector eigenvalues;
  ComplexMatrix eigenvectors;  // unit-norm columns
};

enum class MatrixStructure
{
  general,
  symmetric_positive_definite
};

// Default relative cutoff below sigma_max for rank decisions.
inline constexpr double kDefaultRankTolerance = 1.0e-12;

template <typename Derived>
bool AllFinite(const Eigen::MatrixBase<Derived> &a)
{
  return a.allFinite();
}

namespace detail
{

template <typename Derived>
void RequireFinite(const Eigen::MatrixBase<Derived> &a, const char *what)
{
  if (!a.allFinite())
  {
    throw InvalidArgument(std::string(what) + ": non-finite entries");
  }
}

// Thin SVD of the full matrix. Eigen's divide and conquer SVD falls back to
// one-sided Jacobi for small inputs.
inline Eigen::BDCSVD<DenseMatrix> ThinSvd(const DenseMatrix &a)
{
  return Eigen::BDCSVD<DenseMatrix>(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

}  // namespace detail

// Leading `rank` singular triplets of `a`.
inline SvdResult TruncatedSvd(const DenseMatrix &a, Eigen::Index rank)
{
  detail::RequireFinite(a, "truncated_svd");
  const Eigen::Index kmax = std::min(a.rows(), a.cols());
  if (rank < 1 || rank > kmax)
  {
    throw InvalidArgument("truncated_svd: rank " + std::to_string(rank) +
                          " outside [1, " + std::to_string(kmax) + "]");
  }
  const auto svd = detail::ThinSvd(a);
  return {svd.matrixU().leftCols(rank), svd.singularValues().head(rank),
          svd.matrixV().leftCols(rank)};
}

// Full thin SVD, with the rank chosen by the relative cutoff `tol * sigma_max`.
inline SvdResult TruncatedSvd(const DenseMatrix &a)
{
  detail::RequireFinite(a, "truncated_svd");
  if (a.size() == 0)
  {
    throw InvalidArgument("truncated_svd: empty matrix");
  }
  const auto svd = detail::ThinSvd(a);
  const Vector &s = svd.singularValues();
  Eigen::Index rank = 0;
  const double cutoff = kDefaultRankTolerance * s(0);
  while (rank < s.size() && s(rank) > cutoff)
  {
    ++rank;
  }
  rank = std::max<Eigen::Index>(rank, 1);
  return {svd.matrixU().leftCols(rank), s.head(rank), svd.matrixV().leftCols(rank)};
}

// Singular values only.
inline Vector SingularValues(const DenseMatrix &a)
{
  detail::RequireFinite(a, "singular_values");
  return Eigen::BDCSVD<DenseMatrix>(a).singularValues();
}

// Complete complex spectrum of a small dense matrix.
inline EigResult EigDense(const DenseMatrix &a)
{
  if (a.rows() != a.cols())
  {
    throw InvalidArgument("eig_dense: matrix is " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + ", expected square");
  }
  detail::RequireFinite(a, "eig_dense");
  if (a.rows() == 0)
  {
    return {};
  }
  Eigen::EigenSolver<DenseMatrix> solver(a, true);
  if (solver.info() != Eigen::Success)
  {
    throw NumericalError("eig_dense: eigen-iteration did not converge");
  }
  EigResult out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index j = 0; j < out.eigenvectors.cols(); ++j)
  {
    const double n = out.eigenvectors.col(j).norm();
    if (n > 0.0)
    {
      out.eigenvectors.col(j) /= n;
    }
  }
  return out;
}

// Moore-Penrose pseudoinverse; singular values below tol * sigma_max are dropped.
inline DenseMatrix PseudoInverse(const DenseMatrix &a, double tol = kDefaultRankTolerance)
{
  detail::RequireFinite(a, "pseudo_inverse");
  detail::Require(tol >= 0.0, "pseudo_inverse: tol must be >= 0");
  DenseMatrix out = DenseMatrix::Zero(a.cols(), a.rows());
  if (a.size() == 0)
  {
    return out;
  }
  const auto svd = detail::ThinSvd(a);
  const Vector &s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0)
  {
    return out;
  }
  const double cutoff = tol * s(0);
  for (Eigen::Index k = 0; k < s.size(); ++k)
  {
    if (s(k) > cutoff)
    {
      out.noalias() += (svd.matrixV().col(k) / s(k)) * svd.matrixU().col(k).transpose();
    }
  }
  return out;
}

// True when a Cholesky factorization of the symmetric part succeeds.
inline bool IsSpd(const DenseMatrix &a)
{
  if (a.rows() != a.cols() || !a.allFinite())
  {
    return false;
  }
  if (a.rows() == 0)
  {
    return true;
  }
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1.0e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()))
  {
    return false;
  }
  Eigen::LLT<DenseMatrix> llt(0.5 * (a + a.transpose()));
  return llt.info() == Eigen::Success;
}

// Solves A X = B.
inline DenseMatrix SolveLinear(const DenseMatrix &a, const DenseMatrix &b,
                               MatrixStructure structure = MatrixStructure::general)
{
  detail::Require(a.rows() == a.cols(), "solve_linear: matrix is not square");
  detail::Require(a.rows() == b.rows(), "solve_linear: right-hand side row mismatch");
  detail::RequireFinite(a, "solve_linear");
  detail::RequireFinite(b, "solve_linear");
  if (structure == MatrixStructure::symmetric_positive_definite)
  {
    Eigen::LLT<DenseMatrix> llt(a);
    if (llt.info() != Eigen::Success)
    {
      throw NumericalError("solve_linear: matrix flagged SPD is not positive definite");
    }
    return llt.solve(b);
  }
  Eigen::FullPivLU<DenseMatrix> lu(a);
  if (!lu.isInvertible())
  {
    throw NumericalError("solve_linear: matrix is singular");
  }
  return lu.solve(b);
}

// Complex counterpart used by the amplitude solves.
inline ComplexMatrix SolveLinear(const ComplexMatrix &a, const ComplexMatrix &b)
{
  detail::Require(a.rows() == a.cols(), "solve_linear: matrix is not square");
  detail::Require(a.rows() == b.rows(), "solve_linear: right-hand side row mismatch");
  Eigen::FullPivLU<ComplexMatrix> lu(a);
  if (!lu.isInvertible())
  {
    throw NumericalError("solve_linear: complex matrix is singular");
  }
  return lu.solve(b);
}

// sqrt(sum |a_ij|^2)
template <typename Derived>
double FrobNorm(const Eigen::MatrixBase<Derived> &a)
{
  return a.norm();
}

}  // namespace morwave
