#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "lsd/error.hpp"
#include "lsd/shapes.hpp"
#include "lsd/spectral.hpp"

using namespace lsd;
using ad::Tensor;

namespace {

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

const TriMesh& bumpy() {
  static const TriMesh m = shapes::jittered(shapes::torus(1.0, 0.4, 16, 8), 0.03, 3);
  return m;
}

}  // namespace

TEST(Laplacian, StiffnessIsSymmetricWithZeroRowSums) {
  const Eigen::MatrixXd w = cotangent_stiffness(bumpy());
  EXPECT_LT((w - w.transpose()).norm(), 1e-12);
  EXPECT_LT(w.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(lumped_mass(bumpy()).sum(), bumpy().surface_area(), 1e-12);
}

TEST(Laplacian, BasisIsOrderedAndOrthonormal) {
  const SpectralBasis b = laplacian_basis(bumpy(), 12);
  ASSERT_EQ(b.k(), 12u);
  EXPECT_NEAR(b.eigenvalues(0), 0.0, 1e-9);
  for (Eigen::Index i = 1; i < 12; ++i) EXPECT_LE(b.eigenvalues(i - 1), b.eigenvalues(i));
  const Eigen::MatrixXd gram = b.phi.transpose() * b.mass.asDiagonal() * b.phi;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-9);
  for (Eigen::Index c = 0; c < 12; ++c) {
    Eigen::Index arg;
    b.phi.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(b.phi(arg, c), 0.0);
  }
}

TEST(Laplacian, RejectsOversizedMesh) {
  EXPECT_THROW(laplacian_basis(shapes::grid(40, 40, 1.0, 1.0), 5), ValidationError);
}

TEST(FunctionalMap, RecoversKnownMap) {
  const SpectralBasis b = laplacian_basis(bumpy(), 8);
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd fx = to_matrix(Tensor::uniform({b.vertex_count(), 20}, -1, 1, rng));
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(to_matrix(Tensor::uniform({8, 8}, -1, 1, rng)))
                          .householderQ();
  const Eigen::MatrixXd fy = b.phi * q * b.phi.transpose() * b.mass.asDiagonal() * fx;
  ad::Tape t;
  const FunctionalMap map = functional_map(t.constant(to_tensor(fx)), t.constant(to_tensor(fy)), b, b);
  EXPECT_LT((to_matrix(map.c.value()) - q).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_FALSE(map.rank_deficient);
}

TEST(FunctionalMap, InvariantToFeatureScale) {
  const SpectralBasis b = laplacian_basis(bumpy(), 6);
  std::mt19937_64 rng(2);
  const Tensor fx = Tensor::uniform({b.vertex_count(), 10}, -1, 1, rng);
  const Tensor fy = Tensor::uniform({b.vertex_count(), 10}, -1, 1, rng);
  ad::Tape t;
  // Exact without damping; the default damping shifts C by about 1e-8 here.
  const FunctionalMap a = functional_map(t.constant(fx), t.constant(fy), b, b, 0.0);
  const FunctionalMap s =
      functional_map(ad::scale(t.constant(fx), 7.0), ad::scale(t.constant(fy), 7.0), b, b, 0.0);
  EXPECT_LT((to_matrix(a.c.value()) - to_matrix(s.c.value())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FunctionalMap, FlagsTooFewFeatures) {
  const SpectralBasis b = laplacian_basis(bumpy(), 8);
  std::mt19937_64 rng(3);
  const Tensor f = Tensor::uniform({b.vertex_count(), 3}, -1, 1, rng);
  ad::Tape t;
  EXPECT_TRUE(functional_map(t.constant(f), t.constant(f), b, b).rank_deficient);
}

TEST(Correspondence, ColumnsAreDistributions) {
  const SpectralBasis b = laplacian_basis(bumpy(), 6);
  std::mt19937_64 rng(4);
  ad::Tape t;
  const Tensor p = soft_correspondence(t.constant(Tensor::uniform({6, 6}, -1, 1, rng)), b, b).value();
  ASSERT_EQ(p.shape(), (ad::Shape{b.vertex_count(), b.vertex_count()}));
  for (std::size_t c = 0; c < p.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) {
      EXPECT_GE(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Correspondence, HardMatchesTakeColumnArgmax) {
  const Tensor p = Tensor::matrix(3, 2, {0.2, 0.5, 0.6, 0.5, 0.2, 0.0});
  EXPECT_EQ(hard_matches(p), (std::vector<Index>{1, 0}));
}

TEST(FmnetLoss, PermutationIsZero) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Random(4, 4).cwiseAbs();
  Tensor p({4, 4});
  const std::vector<Index> truth{2, 0, 3, 1};
  for (std::size_t x = 0; x < 4; ++x) p.at(truth[x], x) = 1.0;
  Eigen::MatrixXd dz = d;
  dz.diagonal().setZero();
  ad::Tape t;
  EXPECT_EQ(fmnet_loss(t.constant(p), dz, truth).value().item(), 0.0);
}

TEST(FmnetLoss, UniformMatchesDirectSumAndScalesQuadratically) {
  const std::size_t n = 5;
  std::mt19937_64 rng(5);
  Eigen::MatrixXd d = to_matrix(Tensor::uniform({n, n}, 0, 2, rng));
  const std::vector<Index> truth{4, 3, 2, 1, 0};
  const Tensor p({n, n}, 1.0 / n);
  double expected = 0.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) expected += std::pow(d(y, truth[x]) / n, 2) / n;
  ad::Tape t;
  const double loss = fmnet_loss(t.constant(p), d, truth).value().item();
  EXPECT_NEAR(loss, expected, 1e-9);
  EXPECT_NEAR(fmnet_loss(t.constant(p), 3.0 * d, truth).value().item(), 9.0 * loss, 1e-12);
}
