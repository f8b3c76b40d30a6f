#include <gtest/gtest.h>

#include <cmath>

#include "qmeas/core.hpp"
#include "support.hpp"

namespace qmeas {
namespace {

using testing::Rng;

cmat pauli_x() {
  cmat x = cmat::Zero(2, 2);
  x(0, 1) = x(1, 0) = 1.0;
  return x;
}

TEST(TensorProduct, IdentityTimesIdentity) {
  EXPECT_EQ(tensor_product(cmat::Identity(2, 2), cmat::Identity(2, 2)), cmat::Identity(4, 4));
}

TEST(TensorProduct, BlockSwapFollowsIndexConvention) {
  const cmat out = tensor_product(pauli_x(), cmat(cmat::Identity(2, 2)));
  cmat expected = cmat::Zero(4, 4);
  expected(0, 2) = expected(1, 3) = expected(2, 0) = expected(3, 1) = 1.0;
  EXPECT_EQ(out, expected);
}

TEST(TensorProduct, HadamardSquaredCornerIsHalf) {
  const cmat h = testing::hadamard();
  EXPECT_NEAR(tensor_product(h, h)(0, 0).real(), 0.5, 1e-15);
}

TEST(PartialExpectation, RankOneAncillaFactor) {
  Rng rng(1);
  const cmat a = testing::random_gaussian(rng, 2, 2);
  const cvec eta = testing::random_unit_vector(rng, 3);
  const cmat proj = eta * eta.adjoint();
  EXPECT_LT(max_abs_diff(partial_expectation(tensor_product(a, proj), proj), a), 1e-12);
}

TEST(PartialExpectation, ProductOperator) {
  Rng rng(2);
  const cmat a = testing::random_gaussian(rng, 2, 2);
  const cmat b = testing::random_gaussian(rng, 3, 3);
  const cmat s = testing::random_density(rng, 3);
  const cplx scale = (s * b).trace();
  EXPECT_LT(max_abs_diff(partial_expectation(tensor_product(a, b), s), scale * a), 1e-12);
}

TEST(PartialExpectation, IdentityMapsToIdentity) {
  Rng rng(3);
  const cmat s = testing::random_density(rng, 3);
  EXPECT_LT(max_abs_diff(partial_expectation(cmat::Identity(6, 6), s), cmat::Identity(2, 2)),
            1e-12);
}

TEST(PartialExpectation, RejectsMismatchedDims) {
  try {
    partial_expectation(cmat::Identity(5, 5), cmat::Identity(2, 2) / 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(PartialExpectation, DualityOnRandomTriples) {
  Rng rng(4);
  std::uniform_int_distribution<int> dim(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index ds = dim(rng);
    const Eigen::Index dk = dim(rng);
    const cmat q = testing::random_gaussian(rng, ds * dk, ds * dk);
    const cmat s = testing::random_density(rng, dk);
    const cmat rho = testing::random_density(rng, ds);
    const cplx lhs = (rho * partial_expectation(q, s)).trace();
    const cplx rhs = (tensor_product(rho, s) * q).trace();
    EXPECT_LT(std::abs(lhs - rhs), 1e-9);
  }
}

TEST(PartialExpectation, LinearAndPositive) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const cmat s = testing::random_density(rng, 3);
    const cmat g = testing::random_gaussian(rng, 6, 6);
    const cmat h = testing::random_gaussian(rng, 6, 6);
    const cplx c(0.3, -1.2);
    EXPECT_LT(max_abs_diff(partial_expectation(g + c * h, s),
                           partial_expectation(g, s) + c * partial_expectation(h, s)),
              1e-12);
    EXPECT_GE(min_eigenvalue(partial_expectation(g * g.adjoint(), s)), -1e-9);
  }
}

TEST(SpectralDecompose, ExactDegeneracyMerges) {
  const auto c = spectral_decompose(cmat::Identity(2, 2) * 0.5);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].eigenvalue, 0.5, 1e-15);
  EXPECT_EQ(c[0].multiplicity, 2);
}

TEST(SpectralDecompose, DistinctDiagonalSortedDescending) {
  cmat h = cmat::Zero(2, 2);
  h(0, 0) = 0.3;
  h(1, 1) = 0.7;
  const auto c = spectral_decompose(h);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_NEAR(c[0].eigenvalue, 0.7, 1e-15);
  EXPECT_NEAR(c[1].eigenvalue, 0.3, 1e-15);
  EXPECT_EQ(c[0].multiplicity, 1);
}

TEST(SpectralDecompose, RankOneProjector) {
  Rng rng(6);
  const cvec eta = testing::random_unit_vector(rng, 4);
  const auto c = spectral_decompose(eta * eta.adjoint());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_NEAR(c[0].eigenvalue, 1.0, 1e-12);
  EXPECT_EQ(c[0].multiplicity, 1);
  EXPECT_NEAR(c[1].eigenvalue, 0.0, 1e-12);
  EXPECT_EQ(c[1].multiplicity, 3);
}

TEST(SpectralDecompose, RejectsNonHermitian) {
  cmat h = cmat::Zero(2, 2);
  h(0, 1) = 1.0;
  try {
    spectral_decompose(h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotHermitian);
  }
}

TEST(SpectralDecompose, ReconstructionAndOrthonormality) {
  Rng rng(7);
  for (int d = 1; d <= 8; ++d) {
    for (int trial = 0; trial < 10; ++trial) {
      const cmat h = testing::random_hermitian(rng, d);
      cmat rebuilt = cmat::Zero(d, d);
      for (const auto& c : spectral_decompose(h)) {
        rebuilt += c.eigenvalue * c.eigenvectors * c.eigenvectors.adjoint();
        EXPECT_LT(max_abs_diff(c.eigenvectors.adjoint() * c.eigenvectors,
                               cmat::Identity(c.multiplicity, c.multiplicity)),
                  1e-10);
      }
      EXPECT_LT(max_abs_diff(rebuilt, h), 1e-9);
    }
  }
}

TEST(CompleteToUnitary, FullUnitaryUnchanged) {
  Rng rng(8);
  const cmat u = testing::random_unitary(rng, 3);
  EXPECT_EQ(complete_to_unitary(u).matrix(), u);
}

TEST(CompleteToUnitary, BasisVectorGivesIdentity) {
  cmat col = cmat::Zero(4, 1);
  col(0, 0) = 1.0;
  EXPECT_LT(max_abs_diff(complete_to_unitary(col).matrix(), cmat::Identity(4, 4)), 1e-15);
}

TEST(CompleteToUnitary, HadamardColumn) {
  cmat col(2, 1);
  col << std::sqrt(0.5), std::sqrt(0.5);
  const cmat u = complete_to_unitary(col).matrix();
  EXPECT_NEAR(u(0, 1).real(), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(u(1, 1).real(), -std::sqrt(0.5), 1e-15);
}

TEST(CompleteToUnitary, RandomBlocksPreservedBitForBit) {
  Rng rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 2 + trial % 6;
    const Eigen::Index r = 1 + trial % d;
    const cmat block = testing::random_unitary(rng, d).leftCols(r);
    const cmat u = complete_to_unitary(block).matrix();
    EXPECT_TRUE(u.leftCols(r) == block);
    EXPECT_LT(unitarity_deviation(u), 1e-10);
  }
}

TEST(CompleteToUnitary, RejectsNonIsometry) {
  try {
    complete_to_unitary(cmat::Ones(3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotIsometric);
  }
}

TEST(RadonNikodym, SelfDensityIsOne) {
  const FiniteMeasure base(testing::labels(3), rvec::Constant(3, 0.7));
  EXPECT_LT(max_abs_diff(radon_nikodym(base, base), rvec::Ones(3)), 1e-15);
}

TEST(RadonNikodym, ZeroMeasure) {
  const FiniteMeasure base(testing::labels(2), rvec::Constant(2, 0.5));
  const ComplexMeasure zero(testing::labels(2), cvec::Zero(2));
  EXPECT_EQ(radon_nikodym(zero, base), cvec::Zero(2));
}

TEST(RadonNikodym, AtomwiseDivision) {
  rvec mu(2);
  mu << 0.25, 0.75;
  const FiniteMeasure base(testing::labels(2), rvec::Constant(2, 0.5));
  const rvec d = radon_nikodym(FiniteMeasure(testing::labels(2), mu), base);
  EXPECT_DOUBLE_EQ(d(0), 0.5);
  EXPECT_DOUBLE_EQ(d(1), 1.5);
}

TEST(RadonNikodym, RejectsSingularMeasure) {
  rvec b(2);
  b << 1.0, 0.0;
  const FiniteMeasure base(testing::labels(2), b);
  const FiniteMeasure mu(testing::labels(2), rvec::Constant(2, 0.5));
  try {
    radon_nikodym(mu, base);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotAbsolutelyContinuous);
  }
}

TEST(DensityOperator, NamesFailedInvariant) {
  try {
    DensityOperator(cmat::Identity(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidState);
    EXPECT_NE(std::string(e.what()).find("trace"), std::string::npos);
  }
  cmat neg = cmat::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  EXPECT_THROW(DensityOperator{neg}, Error);
}

TEST(OutcomeSpace, RejectsDuplicates) {
  EXPECT_THROW(OutcomeSpace({"a", "a"}), Error);
  EXPECT_THROW(OutcomeSpace(std::vector<std::string>{}), Error);
  const OutcomeSpace s({"x", "y"});
  EXPECT_EQ(s.index_of("y"), 1u);
  EXPECT_FALSE(s.find("z"));
}

TEST(ProjectionValuedMeasure, ChecksOrthogonalityAndCompleteness) {
  cmat p0 = cmat::Zero(2, 2);
  p0(0, 0) = 1.0;
  EXPECT_THROW(ProjectionValuedMeasure(testing::labels(2), {p0, p0}), Error);
  EXPECT_THROW(ProjectionValuedMeasure(testing::labels(1), {p0}), Error);
  const ProjectionValuedMeasure ok(testing::labels(2),
                                   {p0, cmat(cmat::Identity(2, 2) - p0)});
  EXPECT_EQ(ok.ranks(), (std::vector<int>{1, 1}));
}

TEST(ChoiMatrix, MatchesVectorizedKraus) {
  Rng rng(10);
  const cmat a = testing::random_gaussian(rng, 2, 2);
  const cmat kraus[] = {a};
  const cvec v = vectorize(a);
  EXPECT_LT(max_abs_diff(choi_matrix(kraus, 2), v * v.adjoint()), 1e-14);
}

}  // namespace
}  // namespace qmeas
