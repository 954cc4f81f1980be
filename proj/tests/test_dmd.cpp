// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "morwave/dmd.hpp"
#include "test_util.hpp"

using namespace morwave;
using morwave::testing::Gaussian;

namespace
{

// x_{k+1} = A x_k on a 4-dimensional invariant subspace of R^30.
struct Linear
{
  DenseMatrix a;
  DenseMatrix data;
  std::vector<Complex> eigenvalues;
};

Linear MakeLinear(std::uint64_t seed, int m = 30)
{
  const DenseMatrix q = Eigen::HouseholderQR<DenseMatrix>(Gaussian(30, 30, seed)).householderQ();
  DenseMatrix core = DenseMatrix::Zero(4, 4);
  core << 0.98 * std::cos(0.4), -0.98 * std::sin(0.4), 0, 0,  //
      0.98 * std::sin(0.4), 0.98 * std::cos(0.4), 0, 0,       //
      0, 0, 0.9, 0,                                            //
      0, 0, 0, 1.01;
  const DenseMatrix b = q.leftCols(4);
  Linear out;
  out.a = b * core * b.transpose();
  out.eigenvalues = {std::polar(0.98, 0.4), std::polar(0.98, -0.4), 0.9, 1.01};
  out.data.resize(30, m);
  out.data.col(0) = b * Gaussian(4, 1, seed + 1);
  for (int k = 1; k < m; ++k) out.data.col(k) = out.a * out.data.col(k - 1);
  return out;
}

double SpectrumDistance(const ComplexVector &found, std::vector<Complex> expected)
{
  double worst = 0.0;
  for (Eigen::Index j = 0; j < found.size(); ++j)
  {
    auto it = std::min_element(expected.begin(), expected.end(), [&](Complex a, Complex b) {
      return std::abs(a - found(j)) < std::abs(b - found(j));
    });
    worst = std::max(worst, std::abs(*it - found(j)));
    expected.erase(it);
  }
  return worst;
}

// Plain least squares on the stacked real system, independent of the Gram path.
ComplexVector DenseAmplitudes(const DmdModel &model, const ComplexMatrix &modes, const DenseMatrix &x)
{
  const Eigen::Index m = x.cols(), n = x.rows(), k = model.ModeCount();
  ComplexMatrix design(n * m, k);
  for (Eigen::Index j = 0; j < k; ++j)
  {
    for (Eigen::Index t = 0; t < m; ++t)
    {
      design.block(t * n, j, n, 1) = modes.col(j) * std::pow(model.eigenvalues(j), static_cast<double>(t));
    }
  }
  ComplexVector rhs(n * m);
  for (Eigen::Index t = 0; t < m; ++t) rhs.segment(t * n, n) = x.col(t).cast<Complex>();
  return design.colPivHouseholderQr().solve(rhs);
}

}  // namespace

TEST(Dmd, RecoversEigenvaluesOfLinearMap)
{
  const Linear sys = MakeLinear(1);
  const DmdModel model = FitDmd(sys.data, 4, 0.1);
  ASSERT_EQ(model.ModeCount(), 4);
  EXPECT_LT(SpectrumDistance(model.eigenvalues, sys.eigenvalues), 1e-10);
  for (Eigen::Index j = 0; j < 4; ++j)
  {
    EXPECT_NEAR(std::abs(model.rates(j) - std::log(model.eigenvalues(j)) / 0.1), 0.0, 1e-12);
  }
}

TEST(Dmd, ModesAreEigenvectorsOfTheTrueOperator)
{
  const Linear sys = MakeLinear(2);
  const DmdModel model = FitDmd(sys.data, 4, 1.0);
  for (Eigen::Index j = 0; j < 4; ++j)
  {
    const ComplexVector phi = model.modes.col(j);
    const ComplexVector res = sys.a.cast<Complex>() * phi - model.eigenvalues(j) * phi;
    EXPECT_LT(res.norm(), 1e-9 * phi.norm());
  }
  // V^T phi_j = psi_j under the 1/lambda normalization
  const ComplexMatrix projected = model.pod_left.cast<Complex>().adjoint() * model.modes;
  EXPECT_LT((projected - model.reduced_eigenvectors).norm(), 1e-9);
}

TEST(Dmd, OptimalAmplitudesMatchDenseLeastSquares)
{
  const Linear sys = MakeLinear(3);
  DenseMatrix noisy = sys.data + 1e-3 * Gaussian(30, 30, 4);
  const DmdModel model = FitDmd(noisy, 4, 1.0);
  const ComplexVector ours = AmplitudesOptimal(model);
  // The fit lives in POD coordinates: V^T X_1 ~ Psi diag(b) Vandermonde.
  const DenseMatrix reduced = model.pod_left.transpose() * noisy.leftCols(29);
  const ComplexVector oracle = DenseAmplitudes(model, model.reduced_eigenvectors, reduced);
  EXPECT_LT((ours - oracle).norm() / oracle.norm(), 1e-8);
}

TEST(Dmd, ExactDataReconstructsAndForecasts)
{
  const Linear sys = MakeLinear(5, 60);
  const DenseMatrix train = sys.data.leftCols(40);
  DmdModel model = FitDmd(train, 4, 1.0);
  model.amplitudes = AmplitudesOptimal(model);
  const DenseMatrix recon = ReconstructDmd(model, 60);
  EXPECT_LT((recon - sys.data).norm() / sys.data.norm(), 1e-9);
  model.amplitudes = AmplitudesProjected(model);
  double imag = -1.0;
  const DenseMatrix projected = ReconstructDmd(model, 60, &imag);
  EXPECT_LT((projected - sys.data).norm() / sys.data.norm(), 1e-9);
  EXPECT_LT(imag, 1e-9 * sys.data.norm());
  EXPECT_LT((ReconstructDmdRow(model, 7, 60) - projected.row(7).transpose()).norm(), 1e-12);
  // reduced recursion equals the matrix-power forecast
  const DenseMatrix advanced = AdvanceDmd(model, 60);
  EXPECT_LT((advanced - sys.data).norm() / sys.data.norm(), 1e-9);
}

TEST(Dmd, RealDataGivesConjugatePairs)
{
  const Linear sys = MakeLinear(6);
  DmdModel model = FitDmd(sys.data, 4, 1.0);
  model.amplitudes = AmplitudesOptimal(model);
  for (Eigen::Index j = 0; j < 4; ++j)
  {
    if (std::abs(model.eigenvalues(j).imag()) < 1e-12) continue;
    bool found = false;
    for (Eigen::Index k = 0; k < 4; ++k)
    {
      if (std::abs(model.eigenvalues(k) - std::conj(model.eigenvalues(j))) < 1e-10)
      {
        found = true;
        EXPECT_LT(std::abs(model.amplitudes(k) - std::conj(model.amplitudes(j))), 1e-8);
        EXPECT_LT((model.modes.col(k) - model.modes.col(j).conjugate()).norm(), 1e-8);
      }
    }
    EXPECT_TRUE(found);
  }
}

TEST(Dmd, LambdaShiftedVariantAgreesOnExactData)
{
  const Linear sys = MakeLinear(7);
  const DmdModel model = FitDmd(sys.data, 4, 1.0);
  const ComplexVector a = AmplitudesProjected(model);
  const ComplexVector b = AmplitudesProjected(model, ProjectedAmplitudeVariant::lambda_shifted);
  EXPECT_LT((a - b).norm() / a.norm(), 1e-8);
}

TEST(Dmd, RankValidation)
{
  const Linear sys = MakeLinear(8);
  EXPECT_THROW(FitDmd(sys.data, 0, 1.0), InvalidArgument);
  EXPECT_THROW(FitDmd(sys.data, 30, 1.0), InvalidArgument);
  EXPECT_THROW(FitDmd(sys.data, 6, 1.0), InvalidArgument);  // beyond numerical rank
  EXPECT_THROW(FitDmd(sys.data.leftCols(1), 1, 1.0), InvalidArgument);
  EXPECT_EQ(NumericalRank(SingularValues(sys.data), 1e-10), 4);
}
