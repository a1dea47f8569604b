#ifndef MENTOR_INGEST_HPP_
#define MENTOR_INGEST_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mentor/tensor.hpp"

namespace mentor {

namespace fs = std::filesystem;

/// Implicit-feedback interactions keyed by raw tokens; no duplicate pairs.
struct RawInteractions {
  std::vector<std::pair<std::string, std::string>> records;
};

struct IndexPair {
  std::uint32_t user;
  std::uint32_t item;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

struct SplitDataset {
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::vector<IndexPair> train;
  std::vector<IndexPair> valid;
  std::vector<IndexPair> test;
  std::vector<std::string> user_tokens;  // index -> token
  std::vector<std::string> item_tokens;
  std::unordered_map<std::string, std::uint32_t> user_map;  // token -> index
  std::unordered_map<std::string, std::uint32_t> item_map;

  std::uint32_t n_nodes() const { return n_users + n_items; }
};

struct SplitRatios {
  unsigned train = 8;
  unsigned valid = 1;
  unsigned test = 1;
};

enum class Modality : std::uint32_t { Visual = 1, Textual = 2 };

const char* to_string(Modality m);

/// Raw item features, rows in item-index order. Values are float32 widened to double.
struct FeatureMatrix {
  Modality modality = Modality::Visual;
  Matrix values;
};

/// Reads `user<TAB>item[<TAB>...]` lines; `#` comments and blank lines are skipped.
RawInteractions load_interactions(const fs::path& path);

/// Unique maximal k-core of the bipartite graph (both users and items of degree >= k).
RawInteractions apply_k_core(const RawInteractions& raw, std::uint32_t k);

/// Per-user shuffled split: test and valid each receive floor(n * ratio / total)
/// of a user's interactions, the remainder goes to train.
SplitDataset build_split(const RawInteractions& raw, SplitRatios ratios, std::uint64_t seed);

/// Sidecar token list of an MMF1 file: same path with the extension replaced by `.tsv`.
fs::path feature_sidecar_path(const fs::path& mmf_path);

/// Loads an MMF1 feature file and permutes its rows into item-index order.
/// Rows for tokens absent from `item_map` are dropped.
FeatureMatrix load_features(const fs::path& path, const std::unordered_map<std::string, std::uint32_t>& item_map,
                            Modality modality);

/// Writes `values` as MMF1 plus a sidecar naming row r by `row_tokens[r]`.
void write_features(const fs::path& path, const Matrix& values, const std::vector<std::string>& row_tokens);

/// train.tsv / valid.tsv / test.tsv / maps.tsv under `dir`.
void write_split(const fs::path& dir, const SplitDataset& split);
SplitDataset read_split(const fs::path& dir);

}  // namespace mentor

#endif  // MENTOR_INGEST_HPP_
