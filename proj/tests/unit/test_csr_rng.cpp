#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "mentor/csr.hpp"
#include "mentor/error.hpp"
#include "mentor/rng.hpp"

using namespace mentor;

TEST(Csr, TripletsAreSortedAndDuplicatesSummed) {
  auto m = CsrMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}, {0, 1, 0.5}});
  EXPECT_EQ(m.nnz(), 3u);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 2.5);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(m.at(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.0);
  EXPECT_EQ(m.col_idx(), (std::vector<std::uint32_t>{1, 0, 2}));
}

TEST(Csr, MultiplyMatchesDense) {
  std::vector<Triplet> t;
  std::mt19937 gen(5);
  for (int i = 0; i < 40; ++i) t.push_back({static_cast<std::uint32_t>(gen() % 7), static_cast<std::uint32_t>(gen() % 9), 0.1 * (gen() % 17)});
  auto m = CsrMatrix::from_triplets(7, 9, t);
  Matrix d = m.to_dense();
  Matrix x = mentor::testing::random_matrix(9, 3, 1);
  Matrix y = mentor::testing::random_matrix(7, 3, 2);
  EXPECT_LT((m.multiply(x) - d * x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.multiply_transposed(y) - d.transpose() * y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(m.transposed().to_dense(), d.transpose());
}

TEST(Csr, DimensionMismatchThrows) {
  auto m = CsrMatrix::from_triplets(2, 3, {{0, 0, 1.0}});
  try {
    m.multiply(Matrix::Zero(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs |= x != c.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitIsDeterministicAndDistinct) {
  Rng root(9);
  Rng s0 = root.split(0), s0b = root.split(0), s1 = root.split(1);
  EXPECT_EQ(s0.uniform(), s0b.uniform());
  EXPECT_NE(root.split(0).uniform(), s1.uniform());
}

TEST(Rng, IndexCoversRangeUniformly) {
  Rng r(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    auto k = r.index(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(ErrorCodes, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorCode::UnknownKey), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::RangeError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::MissingFile), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::MissingPrerequisite), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::Diverged), 4);
  EXPECT_EQ(exit_code_for(ErrorCode::NonFiniteLoss), 4);
}
