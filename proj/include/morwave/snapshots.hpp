// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "morwave/error.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

// States U (N x M) on an equispaced time grid, plus the optional matrices
// that travel with them. Every present matrix has M columns.
struct SnapshotSet
{
  DenseMatrix states;
  Vector times;
  std::optional<DenseMatrix> inputs;         // Z, N_I x M
  std::optional<DenseMatrix> forces;         // F, N x M
  std::optional<DenseMatrix> accelerations;  // UDD, N x M
  std::optional<DenseMatrix> velocities;     // V, N x M
  std::map<std::string, std::string> labels;

  [[nodiscard]] Eigen::Index StateCount() const { return states.rows(); }
  [[nodiscard]] Eigen::Index TimeCount() const { return states.cols(); }

  [[nodiscard]] double TimeStep() const
  {
    return times.size() >= 2 ? times(1) - times(0) : 0.0;
  }

  void Validate() const
  {
    const Eigen::Index m = states.cols();
    if (times.size() != m)
    {
      throw FormatError("snapshot set: " + std::to_string(times.size()) +
                        " time values for " + std::to_string(m) + " columns");
    }
    if (!states.allFinite() || !times.allFinite())
    {
      throw FormatError("snapshot set: non-finite values");
    }
    if (m >= 2)
    {
      const double dt = times(1) - times(0);
      if (!(dt > 0.0))
      {
        throw FormatError("snapshot set: times must be strictly increasing");
      }
      for (Eigen::Index k = 1; k < m; ++k)
      {
        const double step = times(k) - times(k - 1);
        if (std::abs(step - dt) > 1.0e-9 * std::max(std::abs(dt), std::abs(times(k))))
        {
          throw FormatError("snapshot set: times are not equispaced at index " +
                            std::to_string(k));
        }
      }
    }
    const auto check = [&](const std::optional<DenseMatrix> &mat, const char *name,
                           bool state_rows) {
      if (!mat)
      {
        return;
      }
      if (mat->cols() != m || (state_rows && mat->rows() != states.rows()))
      {
        throw FormatError(std::string("snapshot set: matrix ") + name + " has shape " +
                          std::to_string(mat->rows()) + "x" + std::to_string(mat->cols()));
      }
      if (!mat->allFinite())
      {
        throw FormatError(std::string("snapshot set: matrix ") + name + " is not finite");
      }
    };
    check(inputs, "Z", false);
    check(forces, "F", true);
    check(accelerations, "UDD", true);
    check(velocities, "V", true);
  }
};

// ---------------------------------------------------------------------------
// Binary interchange format
//
//   "MORW" | u32 version = 1 | u16 n_matrices
//   per matrix: u16 name_len | name (UTF-8) | u64 rows | u64 cols |
//               rows*cols binary64, column-major
//
// All integers and doubles little-endian. Times are stored as a 1 x M
// matrix named "T".
// ---------------------------------------------------------------------------

inline constexpr char kBinaryMagic[4] = {'M', 'O', 'R', 'W'};
inline constexpr std::uint32_t kBinaryVersion = 1;

namespace detail
{

template <typename T>
void WriteLe(std::ostream &out, T value)
{
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
  {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T>
T ReadLe(std::istream &in, const char *what)
{
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char *>(bytes), sizeof(T));
  if (!in)
  {
    throw FormatError(std::string("binary snapshots: truncated file while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big)
  {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void WriteMatrix(std::ostream &out, const std::string &name, const DenseMatrix &a)
{
  WriteLe<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  WriteLe<std::uint64_t>(out, static_cast<std::uint64_t>(a.rows()));
  WriteLe<std::uint64_t>(out, static_cast<std::uint64_t>(a.cols()));
  if constexpr (std::endian::native == std::endian::little)
  {
    out.write(reinterpret_cast<const char *>(a.data()),
              static_cast<std::streamsize>(sizeof(double) * a.size()));
  }
  else
  {
    for (Eigen::Index k = 0; k < a.size(); ++k)
    {
      WriteLe<double>(out, a.data()[k]);
    }
  }
}

}  // namespace detail

// Named matrices in file order.
using MatrixBundle = std::vector<std::pair<std::string, DenseMatrix>>;

inline void WriteMatrices(const std::filesystem::path &path, const MatrixBundle &bundle)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  out.write(kBinaryMagic, 4);
  detail::WriteLe<std::uint32_t>(out, kBinaryVersion);
  detail::WriteLe<std::uint16_t>(out, static_cast<std::uint16_t>(bundle.size()));
  for (const auto &[name, mat] : bundle)
  {
    detail::WriteMatrix(out, name, mat);
  }
  if (!out)
  {
    throw FormatError("write failed for " + path.string());
  }
}

inline MatrixBundle ReadMatrices(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw FormatError("cannot open " + path.string());
  }
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBinaryMagic, 4) != 0)
  {
    throw FormatError(path.string() + ": bad magic, not a MORW file");
  }
  const auto version = detail::ReadLe<std::uint32_t>(in, "version");
  if (version != kBinaryVersion)
  {
    throw FormatError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  const auto count = detail::ReadLe<std::uint16_t>(in, "matrix count");
  MatrixBundle bundle;
  for (std::uint16_t k = 0; k < count; ++k)
  {
    const auto name_len = detail::ReadLe<std::uint16_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in)
    {
      throw FormatError(path.string() + ": truncated matrix name");
    }
    const auto rows = detail::ReadLe<std::uint64_t>(in, "rows");
    const auto cols = detail::ReadLe<std::uint64_t>(in, "cols");
    if (rows > (1ULL << 32) || cols > (1ULL << 32))
    {
      throw FormatError(path.string() + ": implausible shape for matrix " + name);
    }
    DenseMatrix a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if constexpr (std::endian::native == std::endian::little)
    {
      in.read(reinterpret_cast<char *>(a.data()),
              static_cast<std::streamsize>(sizeof(double) * a.size()));
      if (!in)
      {
        throw FormatError(path.string() + ": truncated payload for matrix " + name);
      }
    }
    else
    {
      for (Eigen::Index i = 0; i < a.size(); ++i)
      {
        a.data()[i] = detail::ReadLe<double>(in, "payload");
      }
    }
    bundle.emplace_back(std::move(name), std::move(a));
  }
  return bundle;
}

inline void WriteSnapshotsBinary(const std::filesystem::path &path, const SnapshotSet &set)
{
  set.Validate();
  MatrixBundle bundle;
  bundle.emplace_back("U", set.states);
  bundle.emplace_back("T", set.times.transpose());
  if (set.inputs) bundle.emplace_back("Z", *set.inputs);
  if (set.forces) bundle.emplace_back("F", *set.forces);
  if (set.accelerations) bundle.emplace_back("UDD", *set.accelerations);
  if (set.velocities) bundle.emplace_back("V", *set.velocities);
  WriteMatrices(path, bundle);
}

inline SnapshotSet ReadSnapshotsBinary(const std::filesystem::path &path)
{
  SnapshotSet set;
  bool have_u = false;
  bool have_t = false;
  for (auto &[name, mat] : ReadMatrices(path))
  {
    if (name == "U")
    {
      set.states = std::move(mat);
      have_u = true;
    }
    else if (name == "T")
    {
      if (mat.rows() != 1 && mat.cols() != 1)
      {
        throw FormatError(path.string() + ": time matrix T must be a vector");
      }
      set.times = Eigen::Map<const Vector>(mat.data(), mat.size());
      have_t = true;
    }
    else if (name == "Z") set.inputs = std::move(mat);
    else if (name == "F") set.forces = std::move(mat);
    else if (name == "UDD") set.accelerations = std::move(mat);
    else if (name == "V") set.velocities = std::move(mat);
    else set.labels["ignored_matrix." + name] = std::to_string(mat.rows()) + "x" + std::to_string(mat.cols());
  }
  if (!have_u || !have_t)
  {
    throw FormatError(path.string() + ": snapshot file needs matrices U and T");
  }
  set.Validate();
  return set;
}

// ---------------------------------------------------------------------------
// Delimited text
// ---------------------------------------------------------------------------

enum class RowOrientation
{
  space,  // one row per state entry, one column per time instant
  time    // one row per time instant
};

struct TextOptions
{
  RowOrientation orientation = RowOrientation::time;
  // rows=time: first column holds t. rows=space: first row holds t.
  bool time_column = true;
  // Used when no time data is present.
  double t0 = 0.0;
  double dt = 1.0;
};

namespace detail
{

inline double ParseDouble(std::string_view token, std::size_t line)
{
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t'))
  {
    token.remove_prefix(1);
  }
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r'))
  {
    token.remove_suffix(1);
  }
  if (!token.empty() && token.front() == '+')
  {
    token.remove_prefix(1);
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
  {
    throw FormatError("line " + std::to_string(line) + ": cannot parse '" +
                      std::string(token) + "' as a number");
  }
  if (!std::isfinite(value))
  {
    throw FormatError("line " + std::to_string(line) + ": non-finite value");
  }
  return value;
}

}  // namespace detail

// Comma-separated rows; lines starting with '#' and blank lines are skipped.
inline DenseMatrix ParseDelimited(std::istream &in)
{
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    std::string_view view(line);
    if (view.find_first_not_of(" \t\r") == std::string_view::npos || view.front() == '#')
    {
      continue;
    }
    std::vector<double> row;
    std::size_t start = 0;
    while (true)
    {
      const std::size_t comma = view.find(',', start);
      row.push_back(detail::ParseDouble(view.substr(start, comma - start), line_no));
      if (comma == std::string_view::npos)
      {
        break;
      }
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
    {
      throw FormatError("line " + std::to_string(line_no) + ": ragged row with " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
  {
    throw FormatError("delimited text: no data rows");
  }
  DenseMatrix out(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
  {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
    {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

inline SnapshotSet SnapshotsFromTable(const DenseMatrix &table, const TextOptions &options)
{
  // Bring the table into (state rows) x (time columns) with an optional time row on top.
  const DenseMatrix oriented =
      options.orientation == RowOrientation::time ? DenseMatrix(table.transpose()) : table;
  SnapshotSet set;
  if (options.time_column)
  {
    if (oriented.rows() < 2)
    {
      throw FormatError("delimited text: time data present but no state entries");
    }
    set.times = oriented.row(0).transpose();
    set.states = oriented.bottomRows(oriented.rows() - 1);
  }
  else
  {
    set.states = oriented;
    set.times = Vector::LinSpaced(oriented.cols(), options.t0,
                                  options.t0 + (oriented.cols() - 1) * options.dt);
  }
  set.Validate();
  return set;
}

inline SnapshotSet ReadSnapshotsText(const std::filesystem::path &path, const TextOptions &options)
{
  std::ifstream in(path);
  if (!in)
  {
    throw FormatError("cannot open " + path.string());
  }
  return SnapshotsFromTable(ParseDelimited(in), options);
}

enum class SnapshotFormat
{
  binary,
  delimited_text
};

inline SnapshotSet ReadSnapshots(const std::filesystem::path &path, SnapshotFormat format,
                                 const TextOptions &options = {})
{
  return format == SnapshotFormat::binary ? ReadSnapshotsBinary(path)
                                          : ReadSnapshotsText(path, options);
}

// ---------------------------------------------------------------------------
// Finite differences in time
// ---------------------------------------------------------------------------

// Weights w_k with sum_k w_k f(offset_k h) ~ h^d f^(d)(0), from Fornberg's
// recursion over the order conditions.
inline Vector FiniteDifferenceWeights(const std::vector<double> &offsets, int derivative)
{
  const int n = static_cast<int>(offsets.size());
  detail::Require(derivative >= 0 && derivative < n,
                  "finite difference: need more nodes than the derivative order");
  // c(j, k) = weight of node j for derivative k.
  DenseMatrix c = DenseMatrix::Zero(n, derivative + 1);
  c(0, 0) = 1.0;
  double c1 = 1.0;
  double c4 = offsets[0];
  for (int i = 1; i < n; ++i)
  {
    const int mn = std::min(i, derivative);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = offsets[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j)
    {
      const double c3 = offsets[static_cast<std::size_t>(i)] - offsets[static_cast<std::size_t>(j)];
      c2 *= c3;
      if (j == i - 1)
      {
        for (int k = mn; k >= 1; --k)
        {
          c(i, k) = c1 * (k * c(i - 1, k - 1) - c5 * c(i - 1, k)) / c2;
        }
        c(i, 0) = -c1 * c5 * c(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k)
      {
        c(j, k) = (c4 * c(j, k) - k * c(j, k - 1)) / c3;
      }
      c(j, 0) = c4 * c(j, 0) / c3;
    }
    c1 = c2;
  }
  return c.col(derivative);
}

// Time derivative of every row of `u` with formal accuracy `order`. Interior
// columns use the centred stencil; the ends use one-sided stencils of the
// same order, so the output keeps all M columns.
inline DenseMatrix DifferentiateTime(const DenseMatrix &u, double dt, int derivative, int order)
{
  detail::Require(dt > 0.0, "differentiate: dt must be positive");
  detail::Require(derivative >= 1 && order >= 2 && order % 2 == 0,
                  "differentiate: unsupported derivative/order");
  const Eigen::Index m = u.cols();
  const int central = 2 * ((derivative + 1) / 2) - 1 + order;  // points in centred stencil
  const int half = central / 2;
  const int minimum = central;
  if (m < minimum)
  {
    throw InvalidArgument("differentiate: need at least " + std::to_string(minimum) +
                          " time points, got " + std::to_string(m));
  }
  const int one_sided = std::min<int>(derivative + order, static_cast<int>(m));
  DenseMatrix out(u.rows(), m);
  const double scale = std::pow(dt, -derivative);
  for (Eigen::Index col = 0; col < m; ++col)
  {
    Eigen::Index start = 0;
    int width = central;
    if (col >= half && col + half < m)
    {
      start = col - half;
    }
    else
    {
      width = one_sided;
      start = col < half ? 0 : m - width;
    }
    std::vector<double> offsets(static_cast<std::size_t>(width));
    for (int k = 0; k < width; ++k)
    {
      offsets[static_cast<std::size_t>(k)] = static_cast<double>(start + k - col);
    }
    const Vector w = FiniteDifferenceWeights(offsets, derivative) * scale;
    out.col(col) = u.middleCols(start, width) * w;
  }
  return out;
}

// Second time derivative, eighth-order accurate.
inline DenseMatrix Differentiate8th(const DenseMatrix &u, double dt)
{
  if (u.cols() < 9)
  {
    throw InvalidArgument("differentiate_8th: need at least 9 time points, got " +
                          std::to_string(u.cols()));
  }
  return DifferentiateTime(u, dt, 2, 8);
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

struct ScalingRecord
{
  double states = 1.0;         // ||U||_F
  double accelerations = 1.0;  // ||UDD||_F
  double inputs = 1.0;         // ||Z||_F or ||F||_F; 1 when no input data exists
  bool inputs_are_forces = false;
  bool has_inputs = false;
};

// Divides U, UDD and Z (or F) by their own Frobenius norms. An absent input
// matrix stands for identically zero forcing and is left absent.
inline std::pair<SnapshotSet, ScalingRecord> Scale(const SnapshotSet &set)
{
  detail::Require(set.accelerations.has_value(), "scale: accelerations UDD are required");
  detail::Require(!(set.inputs && set.forces), "scale: pass either inputs Z or forces F");
  ScalingRecord rec;
  rec.states = FrobNorm(set.states);
  rec.accelerations = FrobNorm(*set.accelerations);
  if (!(rec.states > 0.0))
  {
    throw InvalidArgument("scale: ||U||_F is zero");
  }
  if (!(rec.accelerations > 0.0))
  {
    throw InvalidArgument("scale: ||UDD||_F is zero");
  }
  SnapshotSet out = set;
  out.states /= rec.states;
  *out.accelerations /= rec.accelerations;
  if (out.velocities)
  {
    *out.velocities /= rec.states;
  }
  std::optional<DenseMatrix> *input = set.inputs ? &out.inputs : (set.forces ? &out.forces : nullptr);
  if (input != nullptr)
  {
    rec.has_inputs = true;
    rec.inputs_are_forces = set.forces.has_value();
    rec.inputs = FrobNorm(**input);
    if (!(rec.inputs > 0.0))
    {
      throw InvalidArgument(std::string("scale: ||") + (rec.inputs_are_forces ? "F" : "Z") +
                            "||_F is zero");
    }
    **input /= rec.inputs;
  }
  return {std::move(out), rec};
}

}  // namespace morwave
