#ifndef MENTOR_CLI_HPP_
#define MENTOR_CLI_HPP_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/ingest.hpp"
#include "mentor/model.hpp"

namespace mentor {

/// Artifacts written by `prepare` into the output directory.
struct PreparedLayout {
  std::filesystem::path dir;

  std::filesystem::path visual_features() const { return dir / "features_visual.mmf"; }
  std::filesystem::path textual_features() const { return dir / "features_textual.mmf"; }
  std::filesystem::path visual_graph() const { return dir / "graph_visual.iig"; }
  std::filesystem::path textual_graph() const { return dir / "graph_textual.iig"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.mnt"; }
  std::filesystem::path train_log() const { return dir / "train_log.jsonl"; }
};

/// k-core filter, split, aligned feature files and item-graph caches.
void prepare_dataset(const ResolvedConfig& config, std::ostream& log);

struct PreparedData {
  SplitDataset split;
  FeatureMatrix visual;
  FeatureMatrix textual;
  ModelInputs inputs;
};

/// Loads `prepare` outputs; item-graph caches are reused when their k and
/// normalization match the config. Throws MissingPrerequisite.
PreparedData load_prepared(const ResolvedConfig& config);

/// One grid axis: key and candidate values.
using GridAxis = std::pair<std::string, std::vector<std::string>>;

/// The documented search space for p, lambda_f, lambda_g, tau and lambda_align
/// (lambda_align covers both {0.1, 0.2, 0.3} and {1, 2, 3}).
std::vector<GridAxis> default_grid_preset();

/// Cartesian product, last axis varying fastest.
std::vector<std::map<std::string, std::string>> enumerate_grid(const std::vector<GridAxis>& axes);

/// Parses `key = v1, v2, ...` lines.
std::vector<GridAxis> parse_grid_file(const std::filesystem::path& path);

/// Entry point of the `mentor` executable. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mentor

#endif  // MENTOR_CLI_HPP_
