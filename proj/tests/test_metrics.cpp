// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "morwave/metrics.hpp"

using namespace morwave;

TEST(Metrics, SensorErrorOfScaledSignal)
{
  const Vector ref = Vector::LinSpaced(50, 0.0, 3.0).array().sin();
  EXPECT_NEAR(SensorError(ref, 0.9 * ref, 0.1), 10.0, 1e-12);
  EXPECT_EQ(SensorError(ref, ref, 0.1), 0.0);
  EXPECT_NEAR(SensorError(ref, Vector::Zero(50), 0.1), 100.0, 1e-12);
}

TEST(Metrics, SensorErrorUsesTrapezoidalWeights)
{
  // end samples carry half weight
  Vector ref(3), approx(3);
  ref << 1.0, 1.0, 1.0;
  approx << 0.0, 1.0, 1.0;
  // num = 0.5 * 1, den = 0.5 + 1 + 0.5
  EXPECT_NEAR(SensorError(ref, approx, 0.2), 100.0 * std::sqrt(0.25), 1e-12);
}

TEST(Metrics, SensorErrorQuadratureConverges)
{
  // int_0^pi sin^2 = pi/2, int_0^pi (0.1 sin 3t)^2 = 0.01 pi/2
  const int m = 2001;
  const double tau = std::numbers::pi / (m - 1);
  Vector ref(m), approx(m);
  for (int k = 0; k < m; ++k)
  {
    const double t = k * tau;
    ref(k) = std::sin(t);
    approx(k) = std::sin(t) - 0.1 * std::sin(3 * t);
  }
  EXPECT_NEAR(SensorError(ref, approx, tau), 10.0, 1e-9);
}

TEST(Metrics, SensorErrorRejectsBadInput)
{
  EXPECT_THROW(SensorError(Vector::Zero(4), Vector::Ones(4), 0.1), NumericalError);
  EXPECT_THROW(SensorError(Vector::Ones(4), Vector::Ones(3), 0.1), InvalidArgument);
  EXPECT_THROW(SensorError(Vector::Ones(4), Vector::Ones(4), 0.0), InvalidArgument);
}

TEST(Metrics, SpatialErrorPerColumn)
{
  DenseMatrix ref(2, 3), approx(2, 3);
  ref << 3, 0, 1, 4, 0, 0;
  approx << 3, 1, 0, 3, 0, 0;
  const Vector e = SpatialError(ref, approx);
  EXPECT_NEAR(e(0), 20.0, 1e-12);
  EXPECT_TRUE(std::isnan(e(1)));
  EXPECT_NEAR(e(2), 100.0, 1e-12);
  SparseMatrix w(2, 2);
  w.insert(0, 0) = 4.0;
  w.insert(1, 1) = 1.0;
  const Vector ew = SpatialError(ref, approx, &w);
  EXPECT_NEAR(ew(0), 100.0 * std::sqrt(1.0 / 52.0), 1e-12);
}

TEST(Metrics, CsvLayouts)
{
  TimingRecord t{"POD", 0.02, 40, 1.5, 0.25, 0.125};
  EXPECT_EQ(TimingCsv({t}), "method,tau,rank,fom_s,build_s,offline_s,online_s\nPOD,0.02,40,1.5,0.25,1.75,0.125\n");
  EXPECT_EQ(ErrorVsRankCsv({{"DMD Optimal", 80, 0.02, 0.5}}), "rank,method,eps_s_percent\n80,DMD Optimal,0.5\n");
  Vector times(2), eps(2);
  times << 0.1, 0.12;
  eps << 1.0, std::nan("");
  EXPECT_EQ(ErrorVsTimeCsv(times, eps), "time_s,eps_u_percent\n0.1,1\n0.12,nan\n");
}

TEST(Metrics, NonMonotoneSteps)
{
  EXPECT_TRUE(NonMonotoneSteps({5.0, 3.0, 1.0}).empty());
  EXPECT_EQ(NonMonotoneSteps({5.0, 6.0, 1.0, 1.0}), (std::vector<std::size_t>{0, 2}));
}

TEST(Metrics, SvgPlotIsWellFormed)
{
  PlotSeries s{"POD", Vector::LinSpaced(4, 1, 4), Vector::LinSpaced(4, 1, 0.001)};
  const std::string svg = LinePlotSvg({s}, "error", "rank", "eps", true);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find(">POD<"), std::string::npos);
  EXPECT_NE(svg.find("<path d=\" M"), std::string::npos);
}
