#ifndef MENTOR_SYNTHETIC_HPP_
#define MENTOR_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mentor/ingest.hpp"
#include "mentor/tensor.hpp"

namespace mentor {

/// Block-structured toy data: users of block b interact with items of block b only.
/// Item features are the block one-hot (padded to the feature width) plus Gaussian noise.
struct SyntheticSpec {
  std::uint32_t n_users = 20;
  std::uint32_t n_items = 30;
  std::uint32_t n_blocks = 2;
  std::uint32_t visual_dim = 8;
  std::uint32_t textual_dim = 6;
  double noise = 0.1;
  double density = 1.0;  // fraction of in-block items each user interacts with
  std::uint64_t seed = 7;
};

struct SyntheticData {
  RawInteractions raw;
  std::vector<std::string> item_tokens;  // feature row order
  Matrix visual;
  Matrix textual;
};

SyntheticData make_block_dataset(const SyntheticSpec& spec);

/// interactions.tsv, visual.mmf/.tsv and textual.mmf/.tsv under `dir`.
void write_synthetic_fixture(const std::filesystem::path& dir, const SyntheticSpec& spec);

}  // namespace mentor

#endif  // MENTOR_SYNTHETIC_HPP_
