// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "morwave/error.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

struct Point
{
  double x1 = 0.0;
  double x2 = 0.0;
};

// Uniform P1 triangulation of the square [0, length]^2. Node (i, j) sits at
// (i h, j h) with flat index i + j n; every cell is cut along its
// lower-left to upper-right diagonal.
struct StructuredMesh
{
  int nodes_per_side = 0;
  double length = 5.0;
  double h = 0.0;
  std::vector<Point> node_coords;
  std::vector<std::array<int, 3>> triangles;
  std::vector<bool> interior_mask;
  std::vector<int> interior_nodes;    // interior index -> node index
  std::vector<int> interior_index;    // node index -> interior index or -1

  [[nodiscard]] int NodeCount() const { return static_cast<int>(node_coords.size()); }
  [[nodiscard]] int InteriorCount() const { return static_cast<int>(interior_nodes.size()); }
};

inline StructuredMesh BuildMesh(int nodes_per_side, double length = 5.0)
{
  if (nodes_per_side < 3)
  {
    throw InvalidArgument("build_mesh: nodes_per_side must be >= 3, got " +
                          std::to_string(nodes_per_side));
  }
  detail::Require(length > 0.0, "build_mesh: domain length must be positive");
  StructuredMesh mesh;
  const int n = nodes_per_side;
  mesh.nodes_per_side = n;
  mesh.length = length;
  mesh.h = length / (n - 1);
  mesh.node_coords.reserve(static_cast<std::size_t>(n) * n);
  mesh.interior_mask.reserve(static_cast<std::size_t>(n) * n);
  mesh.interior_index.assign(static_cast<std::size_t>(n) * n, -1);
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      // Exact endpoints so that boundary tests compare against 0 and length.
      const double x1 = (i == n - 1) ? length : i * mesh.h;
      const double x2 = (j == n - 1) ? length : j * mesh.h;
      mesh.node_coords.push_back({x1, x2});
      const bool interior = i > 0 && i < n - 1 && j > 0 && j < n - 1;
      mesh.interior_mask.push_back(interior);
      if (interior)
      {
        mesh.interior_index[static_cast<std::size_t>(i + j * n)] =
            static_cast<int>(mesh.interior_nodes.size());
        mesh.interior_nodes.push_back(i + j * n);
      }
    }
  }
  mesh.triangles.reserve(static_cast<std::size_t>(2) * (n - 1) * (n - 1));
  for (int j = 0; j + 1 < n; ++j)
  {
    for (int i = 0; i + 1 < n; ++i)
    {
      const int a = i + j * n;
      const int b = a + 1;
      const int c = a + 1 + n;
      const int d = a + n;
      mesh.triangles.push_back({a, b, c});
      mesh.triangles.push_back({a, c, d});
    }
  }
  return mesh;
}

inline double SignedArea(const StructuredMesh &mesh, const std::array<int, 3> &tri)
{
  const Point &p0 = mesh.node_coords[tri[0]];
  const Point &p1 = mesh.node_coords[tri[1]];
  const Point &p2 = mesh.node_coords[tri[2]];
  return 0.5 * ((p1.x1 - p0.x1) * (p2.x2 - p0.x2) - (p2.x1 - p0.x1) * (p1.x2 - p0.x2));
}

namespace detail
{

using Triplets = std::vector<Eigen::Triplet<double>>;

inline SparseMatrix FromTriplets(int dim, const Triplets &entries)
{
  SparseMatrix out(dim, dim);
  out.setFromTriplets(entries.begin(), entries.end());
  out.makeCompressed();
  return out;
}

}  // namespace detail

// Exact P1 element mass: area/12 * (1 + delta_ij).
inline Eigen::Matrix3d ElementMass(double area)
{
  Eigen::Matrix3d m = Eigen::Matrix3d::Constant(1.0);
  m.diagonal().setConstant(2.0);
  return (area / 12.0) * m;
}

// P1 element stiffness for a unit coefficient.
inline Eigen::Matrix3d ElementStiffness(const Point &p0, const Point &p1, const Point &p2)
{
  const double area =
      0.5 * ((p1.x1 - p0.x1) * (p2.x2 - p0.x2) - (p2.x1 - p0.x1) * (p1.x2 - p0.x2));
  // Gradients of barycentric coordinates are (b_i, c_i) / (2 area).
  const Eigen::Vector3d b(p1.x2 - p2.x2, p2.x2 - p0.x2, p0.x2 - p1.x2);
  const Eigen::Vector3d c(p2.x1 - p1.x1, p0.x1 - p2.x1, p1.x1 - p0.x1);
  return (b * b.transpose() + c * c.transpose()) / (4.0 * area);
}

inline SparseMatrix AssembleMass(const StructuredMesh &mesh)
{
  detail::Triplets entries;
  entries.reserve(mesh.triangles.size() * 9);
  for (const auto &tri : mesh.triangles)
  {
    const Eigen::Matrix3d me = ElementMass(SignedArea(mesh, tri));
    for (int a = 0; a < 3; ++a)
    {
      for (int b = 0; b < 3; ++b)
      {
        entries.emplace_back(tri[a], tri[b], me(a, b));
      }
    }
  }
  return detail::FromTriplets(mesh.NodeCount(), entries);
}

// Stiffness for -div(csq grad u); csq sampled at each triangle centroid.
template <typename Field>
SparseMatrix AssembleStiffness(const StructuredMesh &mesh, const Field &csq)
{
  detail::Triplets entries;
  entries.reserve(mesh.triangles.size() * 9);
  for (const auto &tri : mesh.triangles)
  {
    const Point &p0 = mesh.node_coords[tri[0]];
    const Point &p1 = mesh.node_coords[tri[1]];
    const Point &p2 = mesh.node_coords[tri[2]];
    const double cx = (p0.x1 + p1.x1 + p2.x1) / 3.0;
    const double cy = (p0.x2 + p1.x2 + p2.x2) / 3.0;
    const double coeff = csq(cx, cy);
    if (!(coeff > 0.0) || !std::isfinite(coeff))
    {
      throw InvalidArgument("assemble_stiffness: non-positive wave-speed coefficient at (" +
                            std::to_string(cx) + ", " + std::to_string(cy) + ")");
    }
    const Eigen::Matrix3d ke = coeff * ElementStiffness(p0, p1, p2);
    for (int a = 0; a < 3; ++a)
    {
      for (int b = 0; b < 3; ++b)
      {
        entries.emplace_back(tri[a], tri[b], ke(a, b));
      }
    }
  }
  return detail::FromTriplets(mesh.NodeCount(), entries);
}

// Interior-by-interior block (homogeneous Dirichlet data).
inline SparseMatrix EliminateDirichlet(const SparseMatrix &matrix, const StructuredMesh &mesh)
{
  if (matrix.rows() != mesh.NodeCount() || matrix.cols() != mesh.NodeCount())
  {
    throw InvalidArgument("eliminate_dirichlet: matrix dimension " +
                          std::to_string(matrix.rows()) + " != node count " +
                          std::to_string(mesh.NodeCount()));
  }
  detail::Triplets entries;
  entries.reserve(static_cast<std::size_t>(matrix.nonZeros()));
  for (int col = 0; col < matrix.outerSize(); ++col)
  {
    const int jc = mesh.interior_index[static_cast<std::size_t>(col)];
    if (jc < 0)
    {
      continue;
    }
    for (SparseMatrix::InnerIterator it(matrix, col); it; ++it)
    {
      const int ir = mesh.interior_index[static_cast<std::size_t>(it.row())];
      if (ir >= 0)
      {
        entries.emplace_back(ir, jc, it.value());
      }
    }
  }
  return detail::FromTriplets(mesh.InteriorCount(), entries);
}

// Nodal interpolation of a field onto the interior nodes.
template <typename Field>
Vector InterpolateInterior(const StructuredMesh &mesh, const Field &field)
{
  Vector out(mesh.InteriorCount());
  for (int k = 0; k < mesh.InteriorCount(); ++k)
  {
    const Point &p = mesh.node_coords[static_cast<std::size_t>(mesh.interior_nodes[k])];
    out(k) = field(p.x1, p.x2);
  }
  return out;
}

}  // namespace morwave
