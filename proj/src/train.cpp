#include "mentor/train.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mentor/error.hpp"

namespace mentor {

InteractionIndex::InteractionIndex(const std::vector<IndexPair>& pairs, std::uint32_t n_users) : items_(n_users) {
  for (const auto& p : pairs) items_.at(p.user).push_back(p.item);
  for (auto& list : items_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

bool InteractionIndex::contains(std::uint32_t user, std::uint32_t item) const {
  const auto& list = items_[user];
  return std::binary_search(list.begin(), list.end(), item);
}

std::vector<std::uint32_t> TripleBatch::users() const {
  std::vector<std::uint32_t> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(t.user);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::uint32_t> TripleBatch::items() const {
  std::vector<std::uint32_t> out;
  out.reserve(2 * triples.size());
  for (const auto& t : triples) {
    out.push_back(t.pos);
    out.push_back(t.neg);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TripleBatch sample_triples(const SplitDataset& split, const InteractionIndex& train, std::size_t batch_size, Rng& rng) {
  if (split.train.empty()) throw Error(ErrorCode::EmptyMatrix, "no train interactions to sample");
  TripleBatch batch;
  batch.triples.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const IndexPair& pos = split.train[rng.index(split.train.size())];
    if (train.items(pos.user).size() >= split.n_items) {
      throw Error(ErrorCode::NoNegativesAvailable, "user " + std::to_string(pos.user));
    }
    std::uint32_t neg;
    do {
      neg = static_cast<std::uint32_t>(rng.index(split.n_items));
    } while (train.contains(pos.user, neg));
    batch.triples.push_back({pos.user, pos.item, neg});
  }
  return batch;
}

namespace {

// -log sigmoid(x), stable for large |x|
double softplus_neg(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.size() != neg_scores.size()) throw Error(ErrorCode::DimensionMismatch, "bpr score vectors differ in length");
  if (pos_scores.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) sum += softplus_neg(pos_scores[i] - neg_scores[i]);
  return sum / static_cast<double>(pos_scores.size());
}

ForwardOptions forward_options(const TrainConfig& config) {
  return {config.L, config.item_layers, config.fusion};
}

namespace {

const std::array<std::size_t, 6> kRegularized = {1, 2, 3, 4, 5, 6};  // user_visual .. textual_bias

LossBreakdown evaluate_objective(const ModelState& state, const ModelInputs& inputs, const TripleBatch& batch,
                                 const TrainConfig& config, const Rng& step_rng, ModelState* grads) {
  const ForwardOptions options = forward_options(config);
  const PropagatedEmbeddings fw = forward(state, inputs, options);
  const std::uint32_t nu = inputs.n_users;
  const Matrix& fused = fw.fused;
  LossBreakdown loss;

  Matrix d_fused;
  if (grads != nullptr) {
    *grads = state.zeros_like();
    d_fused = Matrix::Zero(fused.rows(), fused.cols());
  }

  // BPR
  {
    const std::size_t n = batch.triples.size();
    std::vector<double> pos(n), neg(n);
    for (std::size_t b = 0; b < n; ++b) {
      const Triple& t = batch.triples[b];
      pos[b] = score(fused, nu, t.user, t.pos);
      neg[b] = score(fused, nu, t.user, t.neg);
    }
    loss.bpr = bpr_loss(pos, neg);
    if (grads != nullptr) {
      for (std::size_t b = 0; b < n; ++b) {
        const Triple& t = batch.triples[b];
        const double g = -sigmoid(neg[b] - pos[b]) / static_cast<double>(n);
        const Eigen::RowVectorXd user_row = fused.row(t.user);
        d_fused.row(t.user) += g * (fused.row(nu + t.pos) - fused.row(nu + t.neg));
        d_fused.row(nu + t.pos) += g * user_row;
        d_fused.row(nu + t.neg) -= g * user_row;
      }
    }
  }

  // L2 on the visual/textual parameter set
  if (config.lambda_e > 0) {
    const auto params = state.tensors();
    double sq = 0.0;
    for (std::size_t t : kRegularized) sq += params[t]->squaredNorm();
    loss.l2_reg = config.lambda_e * sq;
    if (grads != nullptr) {
      auto g = grads->tensors();
      for (std::size_t t : kRegularized) *g[t] += 2.0 * config.lambda_e * (*params[t]);
    }
  }

  // alignment
  AlignmentGrad ag;
  if (config.lambda_align > 0) {
    loss.align = alignment_loss(fw.fused_align, fw.id.enhanced, fw.visual.enhanced, fw.textual.enhanced,
                                config.lambda_align, config.align_levels, grads ? &ag : nullptr);
  }

  // general feature enhancement
  EnhancementGrad eg;
  const bool enhance_on = config.lambda_f > 0 || config.lambda_g > 0;
  if (enhance_on) {
    EnhancementInputs ein;
    ein.adjacency = &inputs.adjacency;
    ein.ui_layers = config.L;
    ein.n_users = nu;
    ein.visual_input = &fw.visual.input;
    ein.textual_input = &fw.textual.input;
    ein.fused = &fused;
    ein.pred_weight = &state.pred_weight;
    ein.pred_bias = &state.pred_bias;
    const EnhancementSettings settings{config.lambda_g, config.lambda_f, config.tau, config.p, config.eps};
    std::vector<std::uint32_t> user_rows, item_rows;
    if (config.nce_negatives == NceNegatives::All) {
      user_rows.resize(nu);
      item_rows.resize(inputs.n_items);
      for (std::uint32_t u = 0; u < nu; ++u) user_rows[u] = u;
      for (std::uint32_t i = 0; i < inputs.n_items; ++i) item_rows[i] = i;
    } else {
      user_rows = batch.users();
      item_rows = batch.items();
    }
    loss.enhance = enhancement_loss(ein, settings, user_rows, item_rows, step_rng, grads ? &eg : nullptr);
  }

  loss.total = loss.bpr + loss.align.total + loss.enhance.total + loss.l2_reg;
  auto check = [](double v, const char* term) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteLoss, term);
  };
  check(loss.bpr, "bpr");
  check(loss.align.total, "align");
  check(loss.enhance.feature, "enhance_feature");
  check(loss.enhance.graph, "enhance_graph");
  check(loss.l2_reg, "l2_reg");
  if (grads == nullptr) return loss;

  // backward through fusion, enhancement and propagation
  const double alpha = state.fusion_weight();
  if (enhance_on) d_fused += eg.fused;
  FuseGrad fg = fuse_backward(fw.visual.enhanced, fw.textual.enhanced, alpha, config.fusion, d_fused);
  Matrix d_visual = std::move(fg.visual);
  Matrix d_textual = std::move(fg.textual);
  double d_alpha = fg.alpha;
  Matrix d_id_enhanced;
  if (config.lambda_align > 0) {
    const FuseGrad fa = fuse_backward(fw.visual.enhanced, fw.textual.enhanced, alpha, Fusion::Sum, ag.fused);
    d_visual += ag.visual + fa.visual;
    d_textual += ag.textual + fa.textual;
    d_alpha += fa.alpha;
    d_id_enhanced = ag.id;
  }

  auto channel_backward = [&](const Matrix& d_enhanced, const ItemItemGraph& graph, const Matrix* extra) {
    Matrix d_input = propagate_ui(inputs.adjacency, d_enhanced, config.L);
    d_input.bottomRows(inputs.n_items) +=
        propagate_item_graph_transposed(graph, d_enhanced.bottomRows(inputs.n_items), config.item_layers);
    if (extra != nullptr) d_input += *extra;
    return d_input;
  };
  const Matrix d_visual_input =
      channel_backward(d_visual, inputs.visual_graph, enhance_on ? &eg.visual_input : nullptr);
  const Matrix d_textual_input =
      channel_backward(d_textual, inputs.textual_graph, enhance_on ? &eg.textual_input : nullptr);

  grads->user_visual += d_visual_input.topRows(nu);
  grads->visual_proj += inputs.visual_features.transpose() * d_visual_input.bottomRows(inputs.n_items);
  grads->visual_bias += d_visual_input.bottomRows(inputs.n_items).colwise().sum();
  grads->user_textual += d_textual_input.topRows(nu);
  grads->textual_proj += inputs.textual_features.transpose() * d_textual_input.bottomRows(inputs.n_items);
  grads->textual_bias += d_textual_input.bottomRows(inputs.n_items).colwise().sum();
  grads->alpha(0, 0) += d_alpha;
  if (config.lambda_align > 0) grads->id_embedding += propagate_ui(inputs.adjacency, d_id_enhanced, config.L);
  if (enhance_on) {
    grads->pred_weight += eg.pred_weight;
    grads->pred_bias += eg.pred_bias;
  }
  return loss;
}

}  // namespace

LossBreakdown total_loss(const ModelState& state, const ModelInputs& inputs, const TripleBatch& batch,
                         const TrainConfig& config, const Rng& step_rng) {
  return evaluate_objective(state, inputs, batch, config, step_rng, nullptr);
}

LossBreakdown compute_gradients(const ModelState& state, const ModelInputs& inputs, const TripleBatch& batch,
                                const TrainConfig& config, const Rng& step_rng, ModelState& grads) {
  return evaluate_objective(state, inputs, batch, config, step_rng, &grads);
}

AdamState AdamState::for_model(const ModelState& state) {
  AdamState a;
  a.m = state.zeros_like();
  a.v = state.zeros_like();
  return a;
}

void adam_step(ModelState& state, const ModelState& grads, AdamState& adam, const AdamParams& params) {
  ++adam.t;
  const double t = static_cast<double>(adam.t);
  const double c1 = 1.0 - std::pow(params.beta1, t);
  const double c2 = 1.0 - std::pow(params.beta2, t);
  auto p = state.tensors();
  auto g = grads.tensors();
  auto m = adam.m.tensors();
  auto v = adam.v.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!g[k]->allFinite()) throw Error(ErrorCode::NonFiniteUpdate, std::string(ModelState::kNames[k]));
    *m[k] = params.beta1 * (*m[k]) + (1.0 - params.beta1) * (*g[k]);
    *v[k] = params.beta2 * (*v[k]) + (1.0 - params.beta2) * g[k]->cwiseAbs2();
    p[k]->array() -= params.learning_rate * (m[k]->array() / c1) / ((v[k]->array() / c2).sqrt() + params.epsilon);
    round_to_float(*p[k]);
    if (!p[k]->allFinite()) throw Error(ErrorCode::NonFiniteUpdate, std::string(ModelState::kNames[k]));
  }
  state.alpha(0, 0) = std::clamp(state.alpha(0, 0), 0.0, 1.0);
}

bool EarlyStopper::update(unsigned epoch, double metric) {
  if (metric > best_) {
    best_ = metric;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

std::string to_json_line(const EpochLog& log, const TrainConfig& config) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["bpr"] = log.loss.bpr;
  j["align_l1"] = log.loss.align.l1;
  j["align_l2"] = log.loss.align.l2;
  j["align_l3"] = log.loss.align.l3;
  j["align_l4"] = log.loss.align.l4;
  j["align_total"] = log.loss.align.total;
  if (config.lambda_f > 0) j["enhance_feature"] = log.loss.enhance.feature;
  if (config.lambda_g > 0) j["enhance_graph"] = log.loss.enhance.graph;
  j["enhance_total"] = log.loss.enhance.total;
  j["l2_reg"] = log.loss.l2_reg;
  j["total"] = log.loss.total;
  j["valid_recall@10"] = log.valid.recall10;
  j["valid_recall@20"] = log.valid.recall20;
  j["valid_ndcg@10"] = log.valid.ndcg10;
  j["valid_ndcg@20"] = log.valid.ndcg20;
  j["improved"] = log.improved;
  return j.dump();
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& x, double w) {
  acc.bpr += w * x.bpr;
  acc.align.l1 += w * x.align.l1;
  acc.align.l2 += w * x.align.l2;
  acc.align.l3 += w * x.align.l3;
  acc.align.l4 += w * x.align.l4;
  acc.align.total += w * x.align.total;
  acc.enhance.feature += w * x.enhance.feature;
  acc.enhance.graph += w * x.enhance.graph;
  acc.enhance.total += w * x.enhance.total;
  acc.l2_reg += w * x.l2_reg;
  acc.total += w * x.total;
}

}  // namespace

ModelDims model_dims(const ModelInputs& inputs, const TrainConfig& config) {
  ModelDims dims;
  dims.n_users = inputs.n_users;
  dims.n_items = inputs.n_items;
  dims.d = config.d;
  dims.visual_dim = static_cast<std::uint32_t>(inputs.visual_features.cols());
  dims.textual_dim = static_cast<std::uint32_t>(inputs.textual_features.cols());
  dims.fusion = config.fusion;
  return dims;
}

ModelInputs build_model_inputs(const SplitDataset& split, const FeatureMatrix& visual, const FeatureMatrix& textual,
                               const TrainConfig& config) {
  if (visual.values.rows() != split.n_items || textual.values.rows() != split.n_items) {
    throw Error(ErrorCode::DimensionMismatch, "feature rows do not match the item count");
  }
  ModelInputs in;
  in.n_users = split.n_users;
  in.n_items = split.n_items;
  in.adjacency = build_norm_adjacency(split);
  in.visual_graph = build_item_knn(visual, config.k, config.normalize_item_graph);
  in.textual_graph = build_item_knn(textual, config.k, config.normalize_item_graph);
  in.visual_features = visual.values;
  in.textual_features = textual.values;
  return in;
}

TrainResult train_loop(const TrainConfig& config, const SplitDataset& split, const ModelInputs& inputs,
                       const EpochCallback& on_epoch) {
  validate(config);
  if (split.valid.empty()) throw Error(ErrorCode::MissingPrerequisite, "validation split is empty");
  const InteractionIndex train_index(split.train, split.n_users);
  const ForwardOptions options = forward_options(config);
  ModelState state = init_parameters(model_dims(inputs, config), combine_seeds(config.seed, 0x1a17));
  AdamState adam = AdamState::for_model(state);
  const AdamParams adam_params{config.learning_rate, 0.9, 0.999, 1e-8};

  TrainResult result;
  result.best = state;
  EarlyStopper stopper(config.early_stop_patience);
  const std::size_t n_train = split.train.size();
  const std::size_t n_batches = (n_train + config.batch_size - 1) / config.batch_size;
  ModelState grads;

  for (unsigned epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const Rng step_rng(combine_seeds(combine_seeds(config.seed, epoch), b));
      Rng neg_rng = step_rng.split(kNegativeStream);
      const std::size_t size = std::min<std::size_t>(config.batch_size, n_train - b * config.batch_size);
      const TripleBatch batch = sample_triples(split, train_index, size, neg_rng);
      LossBreakdown loss;
      try {
        loss = compute_gradients(state, inputs, batch, config, step_rng, grads);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteLoss) throw Error(ErrorCode::Diverged, e.what());
        throw;
      }
      accumulate(log.loss, loss, 1.0 / static_cast<double>(n_batches));
      adam_step(state, grads, adam, adam_params);
    }
    log.valid = evaluate(fused_embeddings(state, inputs, options), split, EvalSplit::Valid);
    log.improved = stopper.update(epoch, log.valid.recall20);
    if (log.improved) {
      result.best = state;
      result.best_epoch = epoch;
      result.best_valid = log.valid;
    }
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  result.last = std::move(state);
  return result;
}

}  // namespace mentor
