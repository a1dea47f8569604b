#ifndef MENTOR_CONFIG_HPP_
#define MENTOR_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mentor {

enum class Fusion { Sum, Concat };
enum class NceNegatives { Batch, All };

/// Subset of the four alignment levels.
struct AlignLevels {
  bool l1 = true;
  bool l2 = true;
  bool l3 = true;
  bool l4 = true;

  static AlignLevels none() { return {false, false, false, false}; }
  bool any() const { return l1 || l2 || l3 || l4; }
  friend bool operator==(const AlignLevels&, const AlignLevels&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  unsigned epochs = 1000;
  unsigned batch_size = 2048;
  unsigned early_stop_patience = 20;
  unsigned d = 64;
  unsigned L = 2;            // user-item propagation layers
  unsigned k = 40;           // item-item top-k
  unsigned item_layers = 1;  // item-item propagation layers
  bool normalize_item_graph = true;
  double p = 0.5;  // feature dropout ratio
  double lambda_f = 1.0;
  double lambda_g = 1e-3;
  double lambda_align = 0.1;
  double tau = 0.2;
  double lambda_e = 1e-4;
  double eps = 0.1;  // graph perturbation noise scale
  std::uint64_t seed = 2024;
  Fusion fusion = Fusion::Sum;
  NceNegatives nce_negatives = NceNegatives::Batch;
  AlignLevels align_levels;
  unsigned core = 5;  // k-core threshold used by `prepare`

  /// Width of the fused representation.
  unsigned fused_dim() const { return fusion == Fusion::Concat ? 2 * d : d; }
};

/// Dataset and output locations resolved alongside a TrainConfig.
struct RunPaths {
  std::filesystem::path data_dir = ".";
  std::filesystem::path out_dir = "out";
};

struct ResolvedConfig {
  TrainConfig train;
  RunPaths paths;
  std::uint64_t config_file_hash = 0;  // FNV-1a of the config file bytes, 0 without a file
};

/// Every recognized key, in canonical order.
const std::vector<std::string>& config_keys();

/// Applies `key = value` to the config. Throws UnknownKey / TypeError / RangeError.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Canonical `key = value` lines for every field; parsing them back yields the same config.
std::string format_config(const TrainConfig& config);

/// Hash of format_config, stored in checkpoints.
std::uint64_t config_hash(const TrainConfig& config);

/// Checks cross-field constraints (positivity, p in [0,1)). Throws RangeError.
void validate(const TrainConfig& config);

/// defaults <- file <- overrides, in increasing precedence. `file` may be empty.
/// `data_dir` and `out_dir` are also accepted as keys.
ResolvedConfig parse_config(const std::filesystem::path& file, const std::map<std::string, std::string>& overrides);

/// Parses flat `key = value` text; `#` starts a comment line.
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::string to_string(Fusion f);
std::string to_string(NceNegatives n);
std::string to_string(const AlignLevels& levels);

}  // namespace mentor

#endif  // MENTOR_CONFIG_HPP_
