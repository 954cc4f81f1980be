// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "morwave/error.hpp"
#include "morwave/mesh_fem.hpp"
#include "morwave/numerics.hpp"

namespace morwave
{

namespace detail
{

// Composite trapezoidal sum of g^2 without the tau factor.
inline double TrapezoidSquares(const Vector &g)
{
  const Eigen::Index m = g.size();
  double s = g.squaredNorm();
  s -= 0.5 * (g(0) * g(0) + g(m - 1) * g(m - 1));
  return s;
}

}  // namespace detail

// Relative L2(0,T) error at the sensor in percent; trapezoidal time quadrature.
inline double SensorError(const Vector &reference, const Vector &approx, double tau)
{
  detail::Require(reference.size() == approx.size(), "sensor_error: signal lengths differ");
  detail::Require(reference.size() >= 2, "sensor_error: need at least two samples");
  detail::Require(tau > 0.0, "sensor_error: tau must be positive");
  const double denom = tau * detail::TrapezoidSquares(reference);
  if (!(denom > 0.0))
  {
    throw NumericalError("sensor_error: reference signal has zero norm");
  }
  const double num = tau * detail::TrapezoidSquares(reference - approx);
  return 100.0 * std::sqrt(std::max(num, 0.0) / denom);
}

// Per-column relative error in percent, in the norm sqrt(v' W v) (W = I when
// `weight` is null). Zero-norm reference columns give NaN.
inline Vector SpatialError(const DenseMatrix &reference, const DenseMatrix &approx,
                           const SparseMatrix *weight = nullptr)
{
  detail::Require(reference.rows() == approx.rows() && reference.cols() == approx.cols(),
                  "spatial_error: shape mismatch");
  if (weight != nullptr)
  {
    detail::Require(weight->rows() == reference.rows() && weight->cols() == reference.rows(),
                    "spatial_error: weight size does not match the fields");
  }
  Vector out(reference.cols());
  for (Eigen::Index k = 0; k < reference.cols(); ++k)
  {
    const Vector ref = reference.col(k);
    const Vector diff = ref - approx.col(k);
    double num = 0.0;
    double den = 0.0;
    if (weight != nullptr)
    {
      num = diff.dot(*weight * diff);
      den = ref.dot(*weight * ref);
    }
    else
    {
      num = diff.squaredNorm();
      den = ref.squaredNorm();
    }
    out(k) = den > 0.0 ? 100.0 * std::sqrt(std::max(num, 0.0) / den)
                       : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct TimingRecord
{
  std::string method;
  double tau = 0.0;
  Eigen::Index rank = 0;
  double fom_seconds = 0.0;
  double build_seconds = 0.0;   // basis, fit or inference
  double online_seconds = 0.0;  // integrate or reconstruct, lift included

  [[nodiscard]] double Offline() const { return fom_seconds + build_seconds; }
};

struct ErrorRecord
{
  std::string method;
  Eigen::Index rank = 0;
  double tau = 0.0;
  double eps_s_percent = 0.0;
};

namespace detail
{

inline std::string FormatNumber(double v)
{
  if (std::isnan(v))
  {
    return "nan";
  }
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline void WriteText(const std::string &path, const std::string &text)
{
  std::ofstream f(path, std::ios::binary);
  if (!f)
  {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  f << text;
  if (!f)
  {
    throw FormatError("write to '" + path + "' failed");
  }
}

}  // namespace detail

inline std::string TimingCsv(const std::vector<TimingRecord> &records)
{
  std::ostringstream os;
  os << "method,tau,rank,fom_s,build_s,offline_s,online_s\n";
  for (const auto &r : records)
  {
    os << r.method << ',' << detail::FormatNumber(r.tau) << ',' << r.rank << ','
       << detail::FormatNumber(r.fom_seconds) << ',' << detail::FormatNumber(r.build_seconds) << ','
       << detail::FormatNumber(r.Offline()) << ',' << detail::FormatNumber(r.online_seconds)
       << '\n';
  }
  return os.str();
}

inline std::string ErrorVsRankCsv(const std::vector<ErrorRecord> &records)
{
  std::ostringstream os;
  os << "rank,method,eps_s_percent\n";
  for (const auto &r : records)
  {
    os << r.rank << ',' << r.method << ',' << detail::FormatNumber(r.eps_s_percent) << '\n';
  }
  return os.str();
}

inline std::string ErrorVsTimeCsv(const Vector &times, const Vector &eps_u)
{
  detail::Require(times.size() == eps_u.size(), "error csv: times and errors differ in length");
  std::ostringstream os;
  os << "time_s,eps_u_percent\n";
  for (Eigen::Index k = 0; k < times.size(); ++k)
  {
    os << detail::FormatNumber(times(k)) << ',' << detail::FormatNumber(eps_u(k)) << '\n';
  }
  return os.str();
}

// Indices i where the sweep fails to decrease from entry i to i + 1.
inline std::vector<std::size_t> NonMonotoneSteps(const std::vector<double> &errors)
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i)
  {
    if (!(errors[i + 1] < errors[i]))
    {
      out.push_back(i);
    }
  }
  return out;
}

// Minimal static line chart. NaN samples break the polyline.
struct PlotSeries
{
  std::string label;
  Vector x;
  Vector y;
};

inline std::string LinePlotSvg(const std::vector<PlotSeries> &series, const std::string &title,
                               const std::string &x_label, const std::string &y_label,
                               bool log_y = false)
{
  constexpr double width = 720.0, height = 440.0;
  constexpr double left = 70.0, right = 160.0, top = 40.0, bottom = 50.0;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  const auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const auto &s : series)
  {
    detail::Require(s.x.size() == s.y.size(), "plot: x and y lengths differ");
    for (Eigen::Index k = 0; k < s.x.size(); ++k)
    {
      if (!std::isfinite(s.y(k)) || (log_y && !(s.y(k) > 0.0)))
      {
        continue;
      }
      xmin = std::min(xmin, s.x(k));
      xmax = std::max(xmax, s.x(k));
      ymin = std::min(ymin, ty(s.y(k)));
      ymax = std::max(ymax, ty(s.y(k)));
    }
  }
  if (!std::isfinite(xmin))
  {
    xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double pw = width - left - right, ph = height - top - bottom;
  const auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  const auto py = [&](double y) { return top + ph - (ty(y) - ymin) / (ymax - ymin) * ph; };

  static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t)
  {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    const double gx = left + pw * t / 4.0;
    const double gy = top + ph - ph * t / 4.0;
    os << "<text x=\"" << gx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << fx
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">"
       << (log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
     << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i)
  {
    const auto &s = series[i];
    const char *color = colors[i % 8];
    std::ostringstream path;
    bool pen = false;
    for (Eigen::Index k = 0; k < s.x.size(); ++k)
    {
      if (!std::isfinite(s.y(k)) || (log_y && !(s.y(k) > 0.0)))
      {
        pen = false;
        continue;
      }
      path << (pen ? " L" : " M") << px(s.x(k)) << ' ' << py(s.y(k));
      pen = true;
    }
    os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    const double ly = top + 14.0 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace morwave
