#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "spdfuse/linalg.hpp"
#include "test_support.hpp"

using namespace spdfuse;
using namespace spdfuse::testing;

TEST(EigSym, IdentityCanonicalizesToIdentity) {
  const EigPair e = eig_sym(Matrix::Identity(3, 3));
  EXPECT_TRUE(e.values.isApprox(Vector::Ones(3)));
  EXPECT_LT((e.vectors.cwiseAbs() - Matrix::Identity(3, 3)).norm(), 1e-12);
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_GT(e.vectors.col(c).maxCoeff(), 0.0);
}

TEST(EigSym, DiagonalSortedDescending) {
  Matrix m(2, 2);
  m << 1, 0, 0, 3;
  const EigPair e = eig_sym(m);
  EXPECT_DOUBLE_EQ(e.values(0), 3.0);
  EXPECT_DOUBLE_EQ(e.values(1), 1.0);
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  EXPECT_LT((e.vectors - swap).norm(), 1e-14);

  Matrix d(2, 2);
  d << 3, 0, 0, 1;
  EXPECT_LT((eig_sym(d).vectors - Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(EigSym, RandomReconstructionAndInvariants) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 2 + trial % 9;
    const Matrix m = random_symmetric(d, rng);
    const EigPair e = eig_sym(m);
    for (Eigen::Index i = 0; i + 1 < d; ++i) EXPECT_GE(e.values(i), e.values(i + 1));
    EXPECT_LE(orthogonality_defect(e.vectors), 1e-8 * static_cast<double>(d));
    EXPECT_LE((e.reconstruct() - m).norm(), 1e-10 * (1.0 + m.norm()));
    for (Eigen::Index c = 0; c < d; ++c) {
      Eigen::Index arg = 0;
      e.vectors.col(c).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(e.vectors(arg, c), 0.0);
    }
  }
}

TEST(EigSym, BitwiseDeterministic) {
  Rng rng(3);
  const Matrix m = random_symmetric(12, rng);
  const EigPair a = eig_sym(m), b = eig_sym(m);
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * 12), 0);
  EXPECT_EQ(std::memcmp(a.vectors.data(), b.vectors.data(), sizeof(double) * 144), 0);
}

TEST(EigSym, RejectsNonFiniteAndAsymmetric) {
  Matrix m = Matrix::Identity(3, 3);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    eig_sym(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
  }
  Matrix a = Matrix::Identity(3, 3);
  a(0, 2) = 0.5;
  try {
    eig_sym(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSymmetric);
  }
}

TEST(EigSym, ToleratesRoundoffAsymmetry) {
  Matrix m = Matrix::Identity(3, 3) * 100.0;
  m(0, 1) = 1.0;
  m(1, 0) = 1.0 + 1e-11;
  EXPECT_NO_THROW(eig_sym(m));
}

TEST(Svd, IdentityAndSignedDiagonal) {
  EXPECT_TRUE(svd(Matrix::Identity(2, 2)).s.isApprox(Vector::Ones(2)));
  Matrix m(2, 2);
  m << 2, 0, 0, -2;
  const Svd s = svd(m);
  EXPECT_NEAR(s.s(0), 2.0, 1e-15);
  EXPECT_NEAR(s.s(1), 2.0, 1e-15);
  EXPECT_LT((s.reconstruct() - m).norm(), 1e-14);
}

TEST(Svd, RandomReconstruction) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_matrix(4, 4, rng);
    const Svd s = svd(m);
    EXPECT_LT((s.reconstruct() - m).norm(), 1e-10 * (1.0 + m.norm()));
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_GE(s.s(i), 0.0);
    for (Eigen::Index i = 0; i + 1 < 4; ++i) EXPECT_GE(s.s(i), s.s(i + 1));
    EXPECT_LT(orthogonality_defect(s.u), 1e-12);
    EXPECT_LT(orthogonality_defect(s.v), 1e-12);
  }
}

TEST(Svd, RejectsNonFinite) {
  Matrix m = Matrix::Ones(2, 2);
  m(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(svd(m), Error);
}

TEST(SpectralBackward, IdentityFunctionGivesSymmetrizedUpstream) {
  Rng rng(8);
  const Matrix x = random_spd(5, rng);
  const Matrix g = random_matrix(5, 5, rng);
  const Matrix out = spectral_fn_backward(eig_sym(x), [](double s) { return s; }, [](double) { return 1.0; }, g);
  EXPECT_LT((out - sym(g)).norm(), 1e-12);
}

TEST(SpectralBackward, LogAtIdentityUsesTieRule) {
  Rng rng(9);
  const Matrix g = random_matrix(3, 3, rng);
  const EigPair e = eig_sym(Matrix::Identity(3, 3));
  const Matrix p = loewner_matrix(e.values, [](double s) { return std::log(s); }, [](double s) { return 1.0 / s; });
  EXPECT_LT((p - Matrix::Ones(3, 3)).norm(), 1e-15);
  const Matrix out =
      spectral_fn_backward(e, [](double s) { return std::log(s); }, [](double s) { return 1.0 / s; }, g);
  EXPECT_LT((out - sym(g)).norm(), 1e-14);
}

TEST(SpectralBackward, LogOnDiagonalMatchesFiniteDifferences) {
  Matrix x(2, 2);
  x << 4, 0, 0, 1;
  Matrix up = Matrix::Zero(2, 2);
  up(0, 0) = 1.0;
  auto loss = [&](const Matrix& m) {
    return frob(up, apply_spectral(eig_sym(m), [](double s) { return std::log(s); }));
  };
  const Matrix analytic =
      spectral_fn_backward(eig_sym(x), [](double s) { return std::log(s); }, [](double s) { return 1.0 / s; }, up);
  EXPECT_LT(rel_err(analytic, fd_gradient_sym(loss, x)), 1e-5);
  EXPECT_NEAR(analytic(0, 0), 0.25, 1e-14);
}

TEST(SpectralBackward, SeededFunctionsMatchFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = random_spd(6, rng, 0.5, 0.2);
    const Matrix up = random_matrix(6, 6, rng);
    auto g = [](double s) { return std::sqrt(s); };
    auto gp = [](double s) { return 0.5 / std::sqrt(s); };
    auto loss = [&](const Matrix& m) { return frob(up, apply_spectral(eig_sym(m), g)); };
    EXPECT_LT(rel_err(spectral_fn_backward(eig_sym(x), g, gp, up), fd_gradient_sym(loss, x)), 1e-4);
  }
}

TEST(SpectralBackward, OutputIsSymmetricAndFiniteAtExactTies) {
  Matrix x = Matrix::Identity(4, 4) * 2.0;
  x(3, 3) = 5.0;
  Rng rng(2);
  const Matrix out = spectral_fn_backward(
      eig_sym(x), [](double s) { return std::log(s); }, [](double s) { return 1.0 / s; }, random_matrix(4, 4, rng));
  EXPECT_TRUE(out.allFinite());
  EXPECT_EQ(symmetry_defect(out), 0.0);
}
