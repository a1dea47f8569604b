#ifndef MENTOR_EVAL_HPP_
#define MENTOR_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/ingest.hpp"
#include "mentor/model.hpp"

namespace mentor {

/// Per-user item sets built from interaction pairs.
std::vector<std::vector<std::uint32_t>> group_by_user(const std::vector<IndexPair>& pairs, std::uint32_t n_users);

struct RankedLists {
  std::vector<std::uint32_t> users;               // users with a nonempty target set
  std::vector<std::vector<std::uint32_t>> items;  // best first
};

/// Scores every item for each user with a nonempty target set, drops excluded items,
/// and keeps the K best (ties to the lower item index).
RankedLists rank_topk(const Matrix& fused, std::uint32_t n_users,
                      const std::vector<std::vector<std::uint32_t>>& exclude,
                      const std::vector<std::vector<std::uint32_t>>& targets, std::size_t K);

/// Mean over ranked users of |top-K ∩ target| / |target|.
double recall_at_k(const RankedLists& ranked, const std::vector<std::vector<std::uint32_t>>& targets, std::size_t K);

/// Binary-relevance NDCG with ideal DCG truncated at min(K, |target|).
double ndcg_at_k(const RankedLists& ranked, const std::vector<std::vector<std::uint32_t>>& targets, std::size_t K);

struct MetricsReport {
  double recall10 = 0;
  double recall20 = 0;
  double ndcg10 = 0;
  double ndcg20 = 0;
  std::vector<std::uint32_t> users;
  std::vector<double> user_recall10, user_recall20, user_ndcg10, user_ndcg20;
};

MetricsReport compute_metrics(const RankedLists& ranked, const std::vector<std::vector<std::uint32_t>>& targets);

enum class EvalSplit { Valid, Test };

/// Ranking against valid or test items with train items masked.
MetricsReport evaluate(const Matrix& fused, const SplitDataset& split, EvalSplit which);

/// One JSON object per user with its four metrics.
void write_per_user_jsonl(const std::filesystem::path& path, const MetricsReport& report);

// ---------------------------------------------------------------------------
// Ablation variants

enum class Variant { Base, L1, L2, L3, Full, FG, F, G };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

/// base: no alignment; L1/L2/L3: cumulative levels; fg: no enhancement;
/// f: feature masking removed (lambda_f = 0); g: graph perturbation removed (lambda_g = 0).
TrainConfig apply_variant(TrainConfig config, Variant v);

struct AblationRow {
  Variant variant;
  MetricsReport valid;
  MetricsReport test;
  unsigned best_epoch = 0;
};

/// Trains every variant with the same data and seeds.
std::vector<AblationRow> run_ablation(const TrainConfig& config, const SplitDataset& split, const ModelInputs& inputs,
                                      const std::vector<Variant>& variants);

/// `variant, R@10, R@20, N@10, N@20` as TSV, using the chosen split's metrics.
void write_ablation_tsv(const std::filesystem::path& path, const std::vector<AblationRow>& rows, EvalSplit which);

/// Seeded sample of item rows of each requested channel's enhanced embedding
/// (Channel list plus optional fused), one TSV per channel under `dir`.
/// Returns the sampled item indices (ascending).
std::vector<std::uint32_t> export_embeddings(const ModelState& state, const ModelInputs& inputs,
                                             const ForwardOptions& options, const std::vector<std::string>& channels,
                                             const std::filesystem::path& dir, std::size_t sample, std::uint64_t seed);

}  // namespace mentor

#endif  // MENTOR_EVAL_HPP_
