// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "morwave/dmd.hpp"
#include "morwave/error.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

// Multiresolution DMD. Each node fits DMD on its window of the current
// residual, keeps the modes that oscillate at most `rho` cycles across the
// window, removes their reconstruction and hands the rest to its children.
struct MrDmdNode
{
  int level = 1;                 // 1-based
  int window = 0;                // index within the level
  Eigen::Index first = 0;        // snapshot range, inclusive
  Eigen::Index last = 0;
  ComplexMatrix modes;           // N x k slow modes
  ComplexVector rates;           // omega_k
  ComplexVector amplitudes;      // b_k
  Eigen::Index rank_used = 0;    // DMD rank before the slow filter
  double residual_before = 0.0;  // Frobenius norm of the window residual
  double residual_after = 0.0;

  [[nodiscard]] Eigen::Index Length() const { return last - first + 1; }
  [[nodiscard]] Eigen::Index SlowCount() const { return rates.size(); }
};

struct MrDmdTree
{
  std::vector<MrDmdNode> nodes;  // level-major, windows left to right
  int max_levels = 1;
  int branching = 2;
  double rho = 1.0;
  Eigen::Index rank_cap = 0;
  double dt = 0.0;
  Eigen::Index rows = 0;
  Eigen::Index snapshots = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::Index TotalModes() const
  {
    Eigen::Index n = 0;
    for (const auto &node : nodes) n += node.SlowCount();
    return n;
  }
};

// Rank of the snapshot pairs used for a node fit; below this relative
// singular value the window is treated as empty.
inline constexpr double kMrDmdRankTolerance = 1.0e-10;

namespace detail
{

// Split [first, last] into `parts` contiguous ranges whose lengths differ by at most one.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> SplitRange(Eigen::Index first,
                                                                     Eigen::Index last, int parts)
{
  const Eigen::Index len = last - first + 1;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  Eigen::Index start = first;
  for (int p = 0; p < parts; ++p)
  {
    const Eigen::Index size = len / parts + (p < len % parts ? 1 : 0);
    out.emplace_back(start, start + size - 1);
    start += size;
  }
  return out;
}

// Least-squares amplitudes for fixed modes and rates on a window of m snapshots:
// min_b || X - Phi diag(b) V ||_F with V_{jk} = exp(omega_j k dt).
inline ComplexVector WindowAmplitudes(const ComplexMatrix &modes, const ComplexMatrix &vand,
                                      const DenseMatrix &x)
{
  const ComplexMatrix p = (modes.adjoint() * modes).cwiseProduct((vand * vand.adjoint()).conjugate());
  const ComplexMatrix phi_x = modes.adjoint() * x.cast<Complex>();  // k x m
  ComplexVector q(modes.cols());
  for (Eigen::Index j = 0; j < modes.cols(); ++j)
  {
    q(j) = vand.row(j).dot(phi_x.row(j));  // sum_k conj(V_jk) (Phi^* X)_jk
  }
  return p.completeOrthogonalDecomposition().solve(q);
}

inline ComplexMatrix RateVandermonde(const ComplexVector &rates, double dt, Eigen::Index count)
{
  ComplexMatrix v(rates.size(), count);
  for (Eigen::Index j = 0; j < rates.size(); ++j)
  {
    for (Eigen::Index k = 0; k < count; ++k)
    {
      v(j, k) = std::exp(rates(j) * (dt * static_cast<double>(k)));
    }
  }
  return v;
}

}  // namespace detail

// Deepest window length for a given split schedule.
inline Eigen::Index ShortestWindow(Eigen::Index snapshots, int levels, int branching)
{
  Eigen::Index len = snapshots;
  for (int j = 1; j < levels; ++j)
  {
    len /= branching;
  }
  return len;
}

inline MrDmdTree FitMrDmd(const DenseMatrix &u, double dt, int max_levels, int branching,
                          double rho, Eigen::Index rank_cap)
{
  detail::RequireFinite(u, "fit_mrdmd");
  detail::Require(dt > 0.0, "fit_mrdmd: dt must be positive");
  detail::Require(max_levels >= 1, "fit_mrdmd: max_levels must be >= 1");
  detail::Require(branching >= 2, "fit_mrdmd: branching must be >= 2");
  detail::Require(rho > 0.0, "fit_mrdmd: rho must be positive");
  detail::Require(rank_cap >= 1, "fit_mrdmd: rank cap must be >= 1");
  const Eigen::Index shortest = ShortestWindow(u.cols(), max_levels, branching);
  if (shortest < 9)
  {
    throw InvalidArgument("fit_mrdmd: deepest windows would hold " + std::to_string(shortest) +
                          " snapshots, need at least 9");
  }

  MrDmdTree tree;
  tree.max_levels = max_levels;
  tree.branching = branching;
  tree.rho = rho;
  tree.rank_cap = rank_cap;
  tree.dt = dt;
  tree.rows = u.rows();
  tree.snapshots = u.cols();

  DenseMatrix residual = u;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> windows{{0, u.cols() - 1}};
  for (int level = 1; level <= max_levels; ++level)
  {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> next;
    for (std::size_t w = 0; w < windows.size(); ++w)
    {
      const auto [first, last] = windows[w];
      MrDmdNode node;
      node.level = level;
      node.window = static_cast<int>(w);
      node.first = first;
      node.last = last;
      const Eigen::Index m = last - first + 1;
      auto block = residual.middleCols(first, m);
      node.residual_before = block.norm();
      node.residual_after = node.residual_before;

      const Vector sigma = SingularValues(block.leftCols(m - 1));
      const Eigen::Index numeric = NumericalRank(sigma, kMrDmdRankTolerance);
      const Eigen::Index rank = std::min({rank_cap, numeric, m - 1, u.rows()});
      node.rank_used = rank;
      if (rank >= 1)
      {
        const DmdModel fit = FitDmd(block, rank, dt);
        for (const auto &msg : fit.warnings)
        {
          tree.warnings.push_back("level " + std::to_string(level) + " window " +
                                  std::to_string(w) + ": " + msg);
        }
        const double span = dt * static_cast<double>(m);
        std::vector<Eigen::Index> slow;
        for (Eigen::Index k = 0; k < fit.rates.size(); ++k)
        {
          const double cycles = std::abs(fit.rates(k).imag()) / (2.0 * std::numbers::pi) * span;
          if (cycles <= rho)
          {
            slow.push_back(k);
          }
        }
        const auto ns = static_cast<Eigen::Index>(slow.size());
        node.modes.resize(u.rows(), ns);
        node.rates.resize(ns);
        for (Eigen::Index k = 0; k < ns; ++k)
        {
          node.modes.col(k) = fit.modes.col(slow[static_cast<std::size_t>(k)]);
          node.rates(k) = fit.rates(slow[static_cast<std::size_t>(k)]);
        }
        if (ns > 0)
        {
          const ComplexMatrix vand = detail::RateVandermonde(node.rates, dt, m);
          node.amplitudes = detail::WindowAmplitudes(node.modes, vand, block);
          block -= (node.modes * node.amplitudes.asDiagonal() * vand).real();
          node.residual_after = block.norm();
        }
      }
      tree.nodes.push_back(std::move(node));
      if (level < max_levels)
      {
        for (const auto &child : detail::SplitRange(first, last, branching))
        {
          next.push_back(child);
        }
      }
    }
    windows = std::move(next);
  }
  return tree;
}

// Per-mode traces b_k exp(omega_k (t - t_start)); `times` are offsets from
// the window start in the same unit as the rates.
inline ComplexMatrix NodeDynamics(const MrDmdNode &node, const Vector &times)
{
  ComplexMatrix out(node.SlowCount(), times.size());
  for (Eigen::Index k = 0; k < node.SlowCount(); ++k)
  {
    for (Eigen::Index t = 0; t < times.size(); ++t)
    {
      out(k, t) = node.amplitudes(k) * std::exp(node.rates(k) * times(t));
    }
  }
  return out;
}

// Sum of slow-mode contributions over snapshots [first, last]. Only rows in
// `rows` are formed when it is non-empty.
inline DenseMatrix ReconstructMrDmd(const MrDmdTree &tree, Eigen::Index first, Eigen::Index last,
                                    const std::vector<Eigen::Index> &rows = {},
                                    double *imaginary_residue = nullptr)
{
  if (first < 0 || last >= tree.snapshots || first > last)
  {
    throw InvalidArgument("reconstruct_mrdmd: range [" + std::to_string(first) + ", " +
                          std::to_string(last) + "] outside [0, " +
                          std::to_string(tree.snapshots - 1) + "]");
  }
  const Eigen::Index nrows = rows.empty() ? tree.rows : static_cast<Eigen::Index>(rows.size());
  ComplexMatrix out = ComplexMatrix::Zero(nrows, last - first + 1);
  for (const auto &node : tree.nodes)
  {
    const Eigen::Index lo = std::max(first, node.first);
    const Eigen::Index hi = std::min(last, node.last);
    if (lo > hi || node.SlowCount() == 0)
    {
      continue;
    }
    ComplexMatrix vand(node.SlowCount(), hi - lo + 1);
    for (Eigen::Index k = 0; k < node.SlowCount(); ++k)
    {
      for (Eigen::Index t = lo; t <= hi; ++t)
      {
        vand(k, t - lo) = node.amplitudes(k) *
                          std::exp(node.rates(k) * (tree.dt * static_cast<double>(t - node.first)));
      }
    }
    if (rows.empty())
    {
      out.middleCols(lo - first, hi - lo + 1) += node.modes * vand;
    }
    else
    {
      ComplexMatrix sub(nrows, node.SlowCount());
      for (Eigen::Index i = 0; i < nrows; ++i)
      {
        sub.row(i) = node.modes.row(rows[static_cast<std::size_t>(i)]);
      }
      out.middleCols(lo - first, hi - lo + 1) += sub * vand;
    }
  }
  if (imaginary_residue != nullptr)
  {
    *imaginary_residue = out.imag().norm();
  }
  return out.real();
}

inline DenseMatrix ReconstructMrDmd(const MrDmdTree &tree)
{
  return ReconstructMrDmd(tree, 0, tree.snapshots - 1);
}

}  // namespace morwave
