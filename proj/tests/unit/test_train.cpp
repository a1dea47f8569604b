#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "mentor/eval.hpp"
#include "mentor/synthetic.hpp"
#include "mentor/train.hpp"

using namespace mentor;
using namespace mentor::testing;

namespace {

TrainConfig no_extras(TrainConfig c) {
  c.lambda_align = 0;
  c.lambda_f = 0;
  c.lambda_g = 0;
  c.lambda_e = 0;
  return c;
}

struct TrainProblem {
  SplitDataset split;
  ModelInputs inputs;
  TrainConfig config;
};

TrainProblem synth_problem(unsigned epochs, std::uint64_t seed = 1) {
  TrainProblem p;
  p.config.d = 8;
  p.config.k = 5;
  p.config.epochs = epochs;
  p.config.batch_size = 64;
  p.config.learning_rate = 1e-2;
  p.config.seed = seed;
  auto s = synthetic_problem(p.config, {}, seed);
  p.split = s.split;
  p.inputs = s.inputs;
  return p;
}

}  // namespace

TEST(NegativeSampling, InvariantsOverManyDraws) {
  SplitDataset s;
  s.n_users = 2;
  s.n_items = 6;
  for (std::uint32_t i = 0; i < 5; ++i) s.train.push_back({0, i});  // only item 5 is a negative for user 0
  s.train.push_back({1, 2});
  s.train.push_back({1, 4});
  InteractionIndex index(s.train, 2);
  Rng rng(3);
  auto batch = sample_triples(s, index, 100000, rng);
  ASSERT_EQ(batch.triples.size(), 100000u);
  std::size_t user1 = 0;
  for (const auto& t : batch.triples) {
    ASSERT_TRUE(index.contains(t.user, t.pos));
    ASSERT_FALSE(index.contains(t.user, t.neg));
    ASSERT_LT(t.neg, 6u);
    if (t.user == 0) {
      ASSERT_EQ(t.neg, 5u);
    } else {
      ++user1;
    }
  }
  // positives are uniform over the 7 train pairs
  EXPECT_NEAR(user1 / 100000.0, 2.0 / 7.0, 0.01);
}

TEST(NegativeSampling, NoNegativesThrows) {
  SplitDataset s;
  s.n_users = 1;
  s.n_items = 2;
  s.train = {{0, 0}, {0, 1}};
  InteractionIndex index(s.train, 1);
  Rng rng(1);
  EXPECT_ERROR_CODE(sample_triples(s, index, 4, rng), ErrorCode::NoNegativesAvailable);
}

TEST(Bpr, Examples) {
  std::vector<double> zero{0.0}, p{1.0, 0.0}, n{0.0, 1.0};
  EXPECT_NEAR(bpr_loss(zero, zero), std::log(2.0), 1e-12);
  EXPECT_NEAR(bpr_loss(p, n), 0.813262, 1e-6);
  std::vector<double> big{800.0}, small{-800.0};
  EXPECT_NEAR(bpr_loss(big, zero), 0.0, 1e-12);
  EXPECT_NEAR(bpr_loss(small, zero), 800.0, 1e-9);
}

TEST(Objective, ZeroWeightsReduceToBpr) {
  auto f = make_grad_fixture();
  auto c = no_extras(f.config);
  Rng step(5);
  auto loss = total_loss(f.state, f.inputs, f.batch, c, step);
  EXPECT_EQ(loss.total, loss.bpr);
  EXPECT_EQ(loss.align.total, 0.0);
  EXPECT_EQ(loss.enhance.total, 0.0);
  auto fused = fused_embeddings(f.state, f.inputs, forward_options(c));
  std::vector<double> pos, neg;
  for (const auto& t : f.batch.triples) {
    pos.push_back(score(fused, f.inputs.n_users, t.user, t.pos));
    neg.push_back(score(fused, f.inputs.n_users, t.user, t.neg));
  }
  EXPECT_NEAR(loss.bpr, bpr_loss(pos, neg), 1e-12);
}

TEST(Objective, L2OfZeroParametersIsZero) {
  auto f = make_grad_fixture();
  auto zero = f.state.zeros_like();
  zero.alpha(0, 0) = 0.5;
  auto c = f.config;
  c.lambda_align = 0;
  c.lambda_f = 0;
  c.lambda_g = 0;
  Rng step(1);
  auto loss = total_loss(zero, f.inputs, f.batch, c, step);
  EXPECT_EQ(loss.l2_reg, 0.0);
  EXPECT_NEAR(loss.bpr, std::log(2.0), 1e-12);
}

TEST(Objective, L2IsSquaredNormOfRegularizedTensors) {
  auto f = make_grad_fixture();
  auto c = f.config;
  c.lambda_align = 0;
  c.lambda_f = 0;
  c.lambda_g = 0;
  c.lambda_e = 0.01;
  Rng step(1);
  auto loss = total_loss(f.state, f.inputs, f.batch, c, step);
  const auto& s = f.state;
  const double sq = s.user_visual.squaredNorm() + s.user_textual.squaredNorm() + s.visual_proj.squaredNorm() +
                    s.visual_bias.squaredNorm() + s.textual_proj.squaredNorm() + s.textual_bias.squaredNorm();
  EXPECT_NEAR(loss.l2_reg, 0.01 * sq, 1e-12);
}

TEST(Gradients, HandDerivedAlphaGradientOfBpr) {
  auto f = make_grad_fixture(5);
  auto c = no_extras(f.config);
  c.d = 1;
  ModelDims dims = model_dims(f.inputs, c);
  auto state = init_parameters(dims, 2);
  state.visual_bias(0, 0) = 0.2;
  state.textual_bias(0, 0) = -0.3;
  state.alpha(0, 0) = 0.4;
  TripleBatch one;
  one.triples = {f.batch.triples.front()};
  Rng step(1);
  ModelState grads;
  compute_gradients(state, f.inputs, one, c, step, grads);

  auto fw = forward(state, f.inputs, forward_options(c));
  const auto nu = f.inputs.n_users;
  const auto& t = one.triples[0];
  const double a = 0.4;
  auto fv = [&](std::uint32_t r) { return fw.visual.enhanced(r, 0); };
  auto ft = [&](std::uint32_t r) { return fw.textual.enhanced(r, 0); };
  auto fu = [&](std::uint32_t r) { return a * fv(r) + (1 - a) * ft(r); };
  const std::uint32_t u = t.user, p = nu + t.pos, n = nu + t.neg;
  const double margin = fu(u) * fu(p) - fu(u) * fu(n);
  const double dscore = -1.0 / (1.0 + std::exp(margin));
  const double dmargin_da = (fv(u) - ft(u)) * (fu(p) - fu(n)) + fu(u) * ((fv(p) - ft(p)) - (fv(n) - ft(n)));
  EXPECT_NEAR(grads.alpha(0, 0), dscore * dmargin_da, 1e-12);
  EXPECT_TRUE(grads.id_embedding.isZero());
  EXPECT_TRUE(grads.pred_weight.isZero());
}

TEST(Gradients, EachTermMatchesFiniteDifference) {
  auto f = make_grad_fixture();
  const TrainConfig none = no_extras(f.config);
  Rng step(77);
  std::vector<std::pair<std::string, TrainConfig>> cases;
  cases.emplace_back("bpr", none);
  TrainConfig align = none;
  align.lambda_align = 0.5;
  cases.emplace_back("align", align);
  TrainConfig feat = none;
  feat.lambda_f = 1.0;
  cases.emplace_back("feature", feat);
  TrainConfig graph = none;
  graph.lambda_g = 0.5;
  cases.emplace_back("graph", graph);
  TrainConfig l2 = none;
  l2.lambda_e = 0.1;
  cases.emplace_back("l2", l2);
  for (const auto& [name, cfg] : cases) {
    const TrainConfig* base = name == "bpr" ? nullptr : &none;
    auto r = finite_difference_check(f.state, f.inputs, f.batch, cfg, base, step);
    EXPECT_LT(r.worst_rel, 1e-4) << name << ": " << r.worst_where;
    EXPECT_GT(r.checked, 100u) << name;
  }
}

TEST(Gradients, FullObjectiveConcatAndBatchNegatives) {
  for (Fusion fusion : {Fusion::Sum, Fusion::Concat}) {
    auto f = make_grad_fixture(4);
    f.config.fusion = fusion;
    f.config.nce_negatives = NceNegatives::Batch;
    f.config.lambda_g = 0.3;
    f.config.lambda_align = 0.2;
    f.state = init_parameters(model_dims(f.inputs, f.config), 4);
    f.state.alpha(0, 0) = 0.6;
    f.state.pred_bias = random_matrix(1, f.config.fused_dim(), 3, 0.2);
    round_to_float(f.state.pred_bias);
    Rng step(12);
    auto r = finite_difference_check(f.state, f.inputs, f.batch, f.config, nullptr, step);
    EXPECT_LT(r.worst_rel, 1e-4) << to_string(fusion) << ": " << r.worst_where;
  }
}

TEST(Adam, ScalarOracleTwoSteps) {
  auto f = make_grad_fixture();
  ModelState state = f.state;
  ModelState grads = state.zeros_like();
  grads.visual_bias(0, 1) = 0.5;
  AdamParams prm;
  prm.learning_rate = 0.01;
  AdamState adam = AdamState::for_model(state);
  const double x0 = state.visual_bias(0, 1);
  adam_step(state, grads, adam, prm);
  double m = 0.1 * 0.5, v = 0.001 * 0.25;
  double x1 = x0 - 0.01 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
  EXPECT_NEAR(state.visual_bias(0, 1), x1, 1e-7);
  EXPECT_EQ(state.visual_bias(0, 1), static_cast<float>(state.visual_bias(0, 1)));
  grads.visual_bias(0, 1) = -0.2;
  adam_step(state, grads, adam, prm);
  m = 0.9 * m + 0.1 * -0.2;
  v = 0.999 * v + 0.001 * 0.04;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double x2 = static_cast<float>(x1) - 0.01 * mh / (std::sqrt(vh) + 1e-8);
  EXPECT_NEAR(state.visual_bias(0, 1), x2, 1e-7);
  EXPECT_EQ(adam.t, 2u);
  // untouched coordinates stay put
  EXPECT_EQ(state.visual_bias(0, 0), f.state.visual_bias(0, 0));
  EXPECT_TRUE(state.id_embedding == f.state.id_embedding);
}

TEST(Adam, ZeroGradientKeepsParametersAndAlphaIsClamped) {
  auto f = make_grad_fixture();
  ModelState state = f.state;
  AdamState adam = AdamState::for_model(state);
  adam_step(state, state.zeros_like(), adam, {});
  EXPECT_TRUE(state == f.state);

  state.alpha(0, 0) = 0.999;
  ModelState g = state.zeros_like();
  g.alpha(0, 0) = -1.0;
  AdamParams big;
  big.learning_rate = 0.5;
  adam_step(state, g, adam, big);
  EXPECT_EQ(state.alpha(0, 0), 1.0);
  g.alpha(0, 0) = 1e6;
  for (int i = 0; i < 10; ++i) adam_step(state, g, adam, big);
  EXPECT_EQ(state.alpha(0, 0), 0.0);

  g.alpha(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_ERROR_CODE(adam_step(state, g, adam, big), ErrorCode::NonFiniteUpdate);
}

TEST(EarlyStop, PatienceExample) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.update(1, 0.1));
  EXPECT_TRUE(s.update(2, 0.2));
  EXPECT_FALSE(s.update(3, 0.2));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(4, 0.15));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 2u);
  EXPECT_DOUBLE_EQ(s.best_metric(), 0.2);
  EarlyStopper never(0);
  for (unsigned e = 1; e < 50; ++e) never.update(e, 0.0);
  EXPECT_FALSE(never.should_stop());
}

TEST(Training, FixedBatchBprDecreasesMonotonically) {
  auto f = make_grad_fixture();
  auto c = no_extras(f.config);
  ModelState state = f.state;
  AdamState adam = AdamState::for_model(state);
  AdamParams prm;
  prm.learning_rate = 1e-2;
  Rng step(1);
  double prev = total_loss(state, f.inputs, f.batch, c, step).total;
  for (int i = 0; i < 10; ++i) {
    ModelState g;
    compute_gradients(state, f.inputs, f.batch, c, step, g);
    adam_step(state, g, adam, prm);
    const double now = total_loss(state, f.inputs, f.batch, c, step).total;
    EXPECT_LT(now, prev) << "step " << i;
    prev = now;
  }
}

TEST(Training, DeterministicLogsAndFrozenGraphs) {
  auto p = synth_problem(3);
  const auto hv = p.inputs.visual_graph.content_hash();
  auto a = train_loop(p.config, p.split, p.inputs);
  auto b = train_loop(p.config, p.split, p.inputs);
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(to_json_line(a.log[e], p.config), to_json_line(b.log[e], p.config));
  EXPECT_TRUE(a.best == b.best);
  EXPECT_EQ(p.inputs.visual_graph.content_hash(), hv);
  EXPECT_TRUE(p.inputs.visual_graph.frozen);
}

TEST(Training, LogOmitsDisabledEnhancementTerms) {
  auto p = synth_problem(1);
  p.config.lambda_f = 0;
  auto r = train_loop(p.config, p.split, p.inputs);
  const auto line = to_json_line(r.log[0], p.config);
  EXPECT_EQ(line.find("enhance_feature"), std::string::npos) << line;
  EXPECT_NE(line.find("enhance_graph"), std::string::npos) << line;
  EXPECT_NE(line.find("bpr"), std::string::npos);
}

TEST(Training, CheckpointReloadEvaluatesBitExact) {
  auto p = synth_problem(4);
  auto r = train_loop(p.config, p.split, p.inputs);
  auto dir = temp_dir("train_ckpt");
  save_checkpoint(dir / "c.mnt", r.best, config_hash(p.config));
  auto c = load_checkpoint(dir / "c.mnt");
  EXPECT_EQ(c.config_hash, config_hash(p.config));
  auto opts = forward_options(p.config);
  auto m1 = evaluate(fused_embeddings(r.best, p.inputs, opts), p.split, EvalSplit::Test);
  auto m2 = evaluate(fused_embeddings(c.state, p.inputs, opts), p.split, EvalSplit::Test);
  EXPECT_EQ(m1.recall20, m2.recall20);
  EXPECT_EQ(m1.ndcg10, m2.ndcg10);
  EXPECT_EQ(m1.user_ndcg20, m2.user_ndcg20);
  auto v = evaluate(fused_embeddings(c.state, p.inputs, opts), p.split, EvalSplit::Valid);
  EXPECT_EQ(v.recall20, r.best_valid.recall20);
}

TEST(Training, EarlyStoppingHonoursPatience) {
  auto p = synth_problem(200);
  p.config.early_stop_patience = 3;
  auto r = train_loop(p.config, p.split, p.inputs);
  if (r.early_stopped) {
    EXPECT_EQ(r.log.size(), r.best_epoch + 3);
  } else {
    EXPECT_EQ(r.log.size(), 200u);
  }
}
