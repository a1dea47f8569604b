#ifndef MENTOR_TRAIN_HPP_
#define MENTOR_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/eval.hpp"
#include "mentor/ingest.hpp"
#include "mentor/model.hpp"
#include "mentor/rng.hpp"
#include "mentor/ssl.hpp"

namespace mentor {

/// Sorted train items per user, for O(log n) membership tests.
class InteractionIndex {
 public:
  InteractionIndex() = default;
  InteractionIndex(const std::vector<IndexPair>& pairs, std::uint32_t n_users);

  bool contains(std::uint32_t user, std::uint32_t item) const;
  const std::vector<std::uint32_t>& items(std::uint32_t user) const { return items_[user]; }
  std::uint32_t n_users() const { return static_cast<std::uint32_t>(items_.size()); }

 private:
  std::vector<std::vector<std::uint32_t>> items_;
};

struct Triple {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;
};

struct TripleBatch {
  std::vector<Triple> triples;

  /// Distinct users, ascending.
  std::vector<std::uint32_t> users() const;
  /// Distinct positive and negative items, ascending.
  std::vector<std::uint32_t> items() const;
};

/// Positives uniform over train pairs; negatives uniform over items the user has not
/// interacted with in train (rejection). Throws NoNegativesAvailable.
TripleBatch sample_triples(const SplitDataset& split, const InteractionIndex& train, std::size_t batch_size, Rng& rng);

/// mean over triples of -log sigmoid(pos - neg).
double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores);

struct LossBreakdown {
  double bpr = 0;
  AlignmentLoss align;
  EnhancementLoss enhance;
  double l2_reg = 0;
  double total = 0;
};

ForwardOptions forward_options(const TrainConfig& config);

/// Full objective on one batch. `step_rng` supplies the mask and noise substreams.
/// Throws NonFiniteLoss naming the offending term.
LossBreakdown total_loss(const ModelState& state, const ModelInputs& inputs, const TripleBatch& batch,
                         const TrainConfig& config, const Rng& step_rng);

/// Same objective plus exact gradients with respect to every tensor of `state`.
LossBreakdown compute_gradients(const ModelState& state, const ModelInputs& inputs, const TripleBatch& batch,
                                const TrainConfig& config, const Rng& step_rng, ModelState& grads);

struct AdamParams {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelState m;
  ModelState v;
  std::uint64_t t = 0;

  static AdamState for_model(const ModelState& state);
};

/// One bias-corrected Adam update. Parameters are rounded to float precision and
/// alpha is clamped to [0, 1] afterwards. Throws NonFiniteUpdate.
void adam_step(ModelState& state, const ModelState& grads, AdamState& adam, const AdamParams& params);

/// Tracks the best validation score; stops after `patience` epochs without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(unsigned patience) : patience_(patience) {}

  /// Returns true when the epoch improved on the best so far.
  bool update(unsigned epoch, double metric);
  bool should_stop() const { return patience_ > 0 && bad_epochs_ >= patience_; }
  unsigned best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  unsigned patience_;
  unsigned bad_epochs_ = 0;
  unsigned best_epoch_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct EpochLog {
  unsigned epoch = 0;
  LossBreakdown loss;  // batch average
  MetricsReport valid;
  bool improved = false;
};

/// JSON-lines record for one epoch. Enhancement terms whose lambda is 0 are omitted.
std::string to_json_line(const EpochLog& log, const TrainConfig& config);

struct TrainResult {
  ModelState best;
  ModelState last;  // parameters after the final epoch run
  unsigned best_epoch = 0;
  MetricsReport best_valid;
  std::vector<EpochLog> log;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Epochs of ceil(|train| / batch_size) Adam steps; validation Recall@20 after every
/// epoch picks the returned checkpoint. Throws Diverged on a non-finite loss.
TrainResult train_loop(const TrainConfig& config, const SplitDataset& split, const ModelInputs& inputs,
                       const EpochCallback& on_epoch = {});

/// Frozen model inputs (adjacency, item graphs, features) for a split.
ModelInputs build_model_inputs(const SplitDataset& split, const FeatureMatrix& visual, const FeatureMatrix& textual,
                               const TrainConfig& config);

ModelDims model_dims(const ModelInputs& inputs, const TrainConfig& config);

}  // namespace mentor

#endif  // MENTOR_TRAIN_HPP_
