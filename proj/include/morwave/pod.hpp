// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "morwave/error.hpp"
#include "morwave/mesh_fem.hpp"
#include "morwave/numerics.hpp"
#include "morwave/snapshots.hpp"

namespace morwave
{

struct ReducedBasis
{
  DenseMatrix phi;          // N x r, orthonormal columns
  Vector singular_values;   // full spectrum, length min(N, M)
  std::optional<ScalingRecord> source_scaling;

  [[nodiscard]] Eigen::Index Rank() const { return phi.cols(); }
};

// Galerkin-projected second-order system M_r q'' + K_r q = f_r (or B_r z).
struct PodRom
{
  DenseMatrix mass;
  DenseMatrix stiffness;
  DenseMatrix forces;               // r x M reduced force trajectory; empty when f = 0
  std::optional<DenseMatrix> input_map;  // B_r = Phi^T B
};

// Leading `r` left singular vectors of U; the full spectrum is kept.
inline ReducedBasis PodBasis(const DenseMatrix &u, Eigen::Index r)
{
  detail::RequireFinite(u, "pod_basis");
  const Eigen::Index kmax = std::min(u.rows(), u.cols());
  if (r < 1 || r > kmax)
  {
    throw InvalidArgument("pod_basis: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(kmax) + "]");
  }
  const auto svd = detail::ThinSvd(u);
  return {svd.matrixU().leftCols(r), svd.singularValues(), std::nullopt};
}

// Same as PodBasis but keeps the SVD around for several ranks.
class PodSpectrum
{
public:
  explicit PodSpectrum(const DenseMatrix &u) : svd_(detail::ThinSvd(u)) {}

  [[nodiscard]] ReducedBasis Basis(Eigen::Index r) const
  {
    const Eigen::Index kmax = svd_.singularValues().size();
    if (r < 1 || r > kmax)
    {
      throw InvalidArgument("pod_basis: rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(kmax) + "]");
    }
    return {svd_.matrixU().leftCols(r), svd_.singularValues(), std::nullopt};
  }

  [[nodiscard]] const Vector &SingularValues() const { return svd_.singularValues(); }

private:
  Eigen::BDCSVD<DenseMatrix> svd_;
};

// c_r = sum_{k<=r} sigma_k / sum_k sigma_k (plain singular values).
inline double CumulativeEnergy(const Vector &singular_values, Eigen::Index r)
{
  if (r < 1 || r > singular_values.size())
  {
    throw InvalidArgument("cumulative_energy: r " + std::to_string(r) + " outside [1, " +
                          std::to_string(singular_values.size()) + "]");
  }
  const double total = singular_values.sum();
  detail::Require(total > 0.0, "cumulative_energy: all singular values are zero");
  return singular_values.head(r).sum() / total;
}

// Same ratio on sigma_k^2, i.e. the captured fraction of ||U||_F^2.
inline double CumulativeEnergySquared(const Vector &singular_values, Eigen::Index r)
{
  if (r < 1 || r > singular_values.size())
  {
    throw InvalidArgument("cumulative_energy: r out of range");
  }
  const double total = singular_values.squaredNorm();
  detail::Require(total > 0.0, "cumulative_energy: all singular values are zero");
  return singular_values.head(r).squaredNorm() / total;
}

// Smallest r with c_r >= threshold.
inline Eigen::Index RankForEnergy(const Vector &singular_values, double threshold)
{
  for (Eigen::Index r = 1; r <= singular_values.size(); ++r)
  {
    if (CumulativeEnergy(singular_values, r) >= threshold)
    {
      return r;
    }
  }
  return singular_values.size();
}

// Galerkin projection. `forces` (N x M) may be empty for f = 0; `input_map`
// (N x N_I) is optional.
template <typename MassOp, typename StiffOp>
PodRom ProjectRom(const MassOp &mass, const StiffOp &stiffness, const DenseMatrix &phi,
                  const DenseMatrix &forces = {}, const std::optional<DenseMatrix> &input_map = {})
{
  const Eigen::Index n = phi.rows();
  if (mass.rows() != n || mass.cols() != n || stiffness.rows() != n || stiffness.cols() != n)
  {
    throw InvalidArgument("project_rom: operator size does not match basis rows " +
                          std::to_string(n));
  }
  PodRom rom;
  const DenseMatrix m_phi = mass * phi;
  const DenseMatrix k_phi = stiffness * phi;
  rom.mass = phi.transpose() * m_phi;
  rom.stiffness = phi.transpose() * k_phi;
  // Exact symmetry for the downstream Cholesky solves.
  rom.mass = 0.5 * (rom.mass + rom.mass.transpose()).eval();
  rom.stiffness = 0.5 * (rom.stiffness + rom.stiffness.transpose()).eval();
  if (forces.size() > 0)
  {
    if (forces.rows() != n)
    {
      throw InvalidArgument("project_rom: force rows do not match basis rows");
    }
    rom.forces = phi.transpose() * forces;
  }
  if (input_map)
  {
    if (input_map->rows() != n)
    {
      throw InvalidArgument("project_rom: input map rows do not match basis rows");
    }
    rom.input_map = phi.transpose() * *input_map;
  }
  return rom;
}

// Lift a reduced trajectory (r x M) back to N x M; undoes state scaling when
// the basis was built from scaled data.
inline DenseMatrix Reconstruct(const ReducedBasis &basis, const DenseMatrix &reduced)
{
  if (reduced.rows() != basis.phi.cols())
  {
    throw InvalidArgument("reconstruct: trajectory has " + std::to_string(reduced.rows()) +
                          " rows, basis rank is " + std::to_string(basis.phi.cols()));
  }
  DenseMatrix out = basis.phi * reduced;
  if (basis.source_scaling)
  {
    out *= basis.source_scaling->states;
  }
  return out;
}

// One row of the lift, phi.row(i) * reduced, without forming the full field.
inline Vector ReconstructRow(const ReducedBasis &basis, const DenseMatrix &reduced, Eigen::Index row)
{
  detail::Require(reduced.rows() == basis.phi.cols(), "reconstruct: rank mismatch");
  Vector out = (basis.phi.row(row) * reduced).transpose();
  if (basis.source_scaling)
  {
    out *= basis.source_scaling->states;
  }
  return out;
}

}  // namespace morwave
