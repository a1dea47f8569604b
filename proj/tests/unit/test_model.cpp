#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "mentor/model.hpp"

using namespace mentor;
using namespace mentor::testing;

namespace {

ModelDims small_dims(Fusion fusion = Fusion::Sum) {
  ModelDims d;
  d.n_users = 3;
  d.n_items = 5;
  d.d = 4;
  d.visual_dim = 6;
  d.textual_dim = 2;
  d.fusion = fusion;
  return d;
}

}  // namespace

TEST(Init, ShapesBoundsAndAlpha) {
  auto s = init_parameters(small_dims(Fusion::Concat), 1);
  EXPECT_EQ(s.fusion_weight(), 0.5);
  EXPECT_EQ(s.id_embedding.rows(), 8);
  EXPECT_EQ(s.visual_proj.rows(), 6);
  EXPECT_EQ(s.pred_weight.rows(), 8);
  EXPECT_EQ(s.pred_bias.cols(), 8);
  EXPECT_TRUE(s.visual_bias.isZero());
  const double bound = std::sqrt(6.0 / (6 + 4));
  EXPECT_LE(s.visual_proj.cwiseAbs().maxCoeff(), bound);
  for (const Matrix* t : s.tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i) EXPECT_EQ(t->data()[i], static_cast<float>(t->data()[i]));
}

TEST(Init, SeedDeterminism) {
  EXPECT_TRUE(init_parameters(small_dims(), 3) == init_parameters(small_dims(), 3));
  EXPECT_FALSE(init_parameters(small_dims(), 3) == init_parameters(small_dims(), 4));
}

TEST(ModalityInput, StacksUsersOverProjectedItems) {
  auto s = init_parameters(small_dims(), 2);
  s.visual_bias.setConstant(0.25);
  Matrix feats = random_matrix(5, 6, 3);
  Matrix in = modality_input(s, Channel::Visual, &feats);
  ASSERT_EQ(in.rows(), 8);
  EXPECT_EQ(Matrix(in.topRows(3)), s.user_visual);
  Matrix expected = feats * s.visual_proj;
  expected.rowwise() += s.visual_bias.row(0);
  EXPECT_LT((in.bottomRows(5) - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(modality_input(s, Channel::Id, nullptr), s.id_embedding);
}

TEST(PropagateUi, HandExample) {
  SplitDataset sp;
  sp.n_users = 1;
  sp.n_items = 1;
  sp.train = {{0, 0}};
  auto a = build_norm_adjacency(sp);
  Matrix e(2, 1);
  e << 1, 3;
  Matrix out = propagate_ui(a, e, 1);
  EXPECT_DOUBLE_EQ(out(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 4.0);
  EXPECT_EQ(propagate_ui(a, e, 0), e);
}

TEST(PropagateUi, DenseOracleAndLinearity) {
  auto sp = random_split(6, 9, 0.35, 2);
  auto a = build_norm_adjacency(sp);
  Matrix d = dense_norm_adjacency(sp);
  Matrix x = random_matrix(15, 3, 5), y = random_matrix(15, 3, 6);
  Matrix expected = x + d * x + d * d * x + d * d * d * x;
  EXPECT_LT((propagate_ui(a, x, 3) - expected).cwiseAbs().maxCoeff(), 1e-12);
  Matrix lhs = propagate_ui(a, 2.0 * x - 0.5 * y, 2);
  Matrix rhs = 2.0 * propagate_ui(a, x, 2) - 0.5 * propagate_ui(a, y, 2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Enhance, AddsToItemRowsOnly) {
  Matrix p = Matrix::Ones(5, 2);
  Matrix sem = Matrix::Constant(3, 2, 2.0);
  Matrix out = enhance(p, &sem, 2);
  EXPECT_TRUE(out.topRows(2).isOnes());
  EXPECT_TRUE((out.bottomRows(3).array() == 3.0).all());
  EXPECT_EQ(enhance(p, nullptr, 2), p);
}

TEST(Fuse, SumConcatAndConvexity) {
  Matrix v(1, 2), t(1, 2);
  v << 1, 2;
  t << 3, 6;
  Matrix s = fuse(v, t, 0.25, Fusion::Sum);
  EXPECT_DOUBLE_EQ(s(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 5.0);
  Matrix c = fuse(v, t, 0.25, Fusion::Concat);
  ASSERT_EQ(c.cols(), 4);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(c(0, 3), 4.5);
  EXPECT_EQ(fuse(v, t, 1.0, Fusion::Sum), v);
  EXPECT_EQ(fuse(v, t, 0.0, Fusion::Sum), t);
  for (double a : {0.1, 0.5, 0.9}) {
    Matrix f = fuse(v, t, a, Fusion::Sum);
    for (Eigen::Index j = 0; j < 2; ++j) {
      EXPECT_GE(f(0, j), std::min(v(0, j), t(0, j)));
      EXPECT_LE(f(0, j), std::max(v(0, j), t(0, j)));
    }
  }
}

TEST(Fuse, BackwardMatchesFiniteDifference) {
  Matrix v = random_matrix(3, 2, 1), t = random_matrix(3, 2, 2), g = random_matrix(3, 4, 3);
  auto fg = fuse_backward(v, t, 0.3, Fusion::Concat, g);
  const double h = 1e-6;
  const double num = ((fuse(v, t, 0.3 + h, Fusion::Concat) - fuse(v, t, 0.3 - h, Fusion::Concat)).cwiseProduct(g).sum()) /
                     (2 * h);
  EXPECT_NEAR(fg.alpha, num, 1e-8);
  EXPECT_LT((fg.visual - 0.3 * g.leftCols(2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Score, DotProductAndRange) {
  Matrix f(3, 2);
  f << 1, 2, 3, 4, -1, 0.5;
  EXPECT_DOUBLE_EQ(score(f, 1, 0, 0), 11.0);
  EXPECT_DOUBLE_EQ(score(f, 1, 0, 1), 0.0);
  EXPECT_ERROR_CODE(score(f, 1, 1, 0), ErrorCode::IndexOutOfRange);
  EXPECT_ERROR_CODE(score(f, 1, 0, 2), ErrorCode::IndexOutOfRange);
}

TEST(Forward, ShapesAndFusedAgreement) {
  auto sp = random_split(4, 7, 0.4, 9);
  auto in = toy_inputs(sp, 5, 3, 2, true, 9);
  ModelDims dims{4, 7, 3, 5, 3, Fusion::Sum};
  auto s = init_parameters(dims, 5);
  ForwardOptions opt{2, 1, Fusion::Sum};
  auto fw = forward(s, in, opt);
  EXPECT_EQ(fw.fused.rows(), 11);
  EXPECT_EQ(fw.fused, fw.fused_align);
  EXPECT_EQ(fused_embeddings(s, in, opt), fw.fused);
  Matrix vprop = propagate_ui(in.adjacency, fw.visual.input, 2);
  Matrix vsem = propagate_item_graph(in.visual_graph, fw.visual.input.bottomRows(7), 1);
  EXPECT_LT((fw.visual.enhanced - enhance(vprop, &vsem, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto s = init_parameters(small_dims(Fusion::Concat), 8);
  s.alpha(0, 0) = 0.375f;
  auto dir = temp_dir("model_ckpt");
  save_checkpoint(dir / "c.mnt", s, 0xabcdef);
  auto c = load_checkpoint(dir / "c.mnt");
  EXPECT_TRUE(c.state == s);
  EXPECT_EQ(c.config_hash, 0xabcdefu);
  EXPECT_ERROR_CODE(load_checkpoint(dir / "missing.mnt"), ErrorCode::MissingFile);
}
