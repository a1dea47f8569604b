#ifndef MENTOR_MODEL_HPP_
#define MENTOR_MODEL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/graphs.hpp"
#include "mentor/ingest.hpp"
#include "mentor/tensor.hpp"

namespace mentor {

enum class Channel { Id, Visual, Textual };

struct ModelDims {
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::uint32_t d = 64;
  std::uint32_t visual_dim = 0;   // raw visual feature width
  std::uint32_t textual_dim = 0;  // raw textual feature width
  Fusion fusion = Fusion::Sum;

  std::uint32_t n_nodes() const { return n_users + n_items; }
  std::uint32_t fused_dim() const { return fusion == Fusion::Concat ? 2 * d : d; }
};

/// Every trainable tensor. Biases are 1 x width rows and alpha is 1 x 1 so that
/// all parameters share one storage type. Values are kept float-representable.
struct ModelState {
  Matrix id_embedding;  // (n_users + n_items) x d
  Matrix user_visual;   // n_users x d
  Matrix user_textual;  // n_users x d
  Matrix visual_proj;   // visual_dim x d
  Matrix visual_bias;   // 1 x d
  Matrix textual_proj;  // textual_dim x d
  Matrix textual_bias;  // 1 x d
  Matrix alpha;         // 1 x 1, fusion weight in [0, 1]
  Matrix pred_weight;   // fused_dim x fused_dim
  Matrix pred_bias;     // 1 x fused_dim

  static constexpr std::array<std::string_view, 10> kNames = {
      "id_embedding", "user_visual", "user_textual", "visual_proj", "visual_bias",
      "textual_proj", "textual_bias", "alpha",        "pred_weight", "pred_bias"};

  std::array<Matrix*, 10> tensors() {
    return {&id_embedding, &user_visual, &user_textual, &visual_proj, &visual_bias,
            &textual_proj, &textual_bias, &alpha,       &pred_weight, &pred_bias};
  }
  std::array<const Matrix*, 10> tensors() const {
    return {&id_embedding, &user_visual, &user_textual, &visual_proj, &visual_bias,
            &textual_proj, &textual_bias, &alpha,       &pred_weight, &pred_bias};
  }

  double fusion_weight() const { return alpha(0, 0); }
  ModelState zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const ModelState& a, const ModelState& b);
};

/// Xavier-uniform init, bound sqrt(6 / (rows + cols)) per tensor; biases zero;
/// alpha 0.5. Deterministic in `seed`.
ModelState init_parameters(const ModelDims& dims, std::uint64_t seed);

/// Frozen inputs of the forward pass.
struct ModelInputs {
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  NormAdjacency adjacency;
  ItemItemGraph visual_graph;
  ItemItemGraph textual_graph;
  Matrix visual_features;   // n_items x visual_dim
  Matrix textual_features;  // n_items x textual_dim
};

struct ForwardOptions {
  unsigned ui_layers = 2;
  unsigned item_layers = 1;
  Fusion fusion = Fusion::Sum;
};

/// ID: the ID embedding. Visual/textual: user modality rows stacked over
/// features * W + b for the items.
Matrix modality_input(const ModelState& state, Channel channel, const Matrix* features);

/// sum_{l=0..layers} adj^l * emb. The adjacency is symmetric, so this map is its
/// own adjoint and also serves as the backward pass.
Matrix propagate_ui(const NormAdjacency& adj, const Matrix& emb, unsigned layers);

/// Adds `semantic_items` to the item rows of `propagated`; identity when absent.
Matrix enhance(const Matrix& propagated, const Matrix* semantic_items, std::uint32_t n_users);

/// Sum: alpha * v + (1 - alpha) * t. Concat: [alpha * v, (1 - alpha) * t].
Matrix fuse(const Matrix& visual, const Matrix& textual, double alpha, Fusion fusion);

struct FuseGrad {
  Matrix visual;
  Matrix textual;
  double alpha = 0;
};

/// Vector-Jacobian product of fuse.
FuseGrad fuse_backward(const Matrix& visual, const Matrix& textual, double alpha, Fusion fusion,
                       const Matrix& grad_fused);

/// Dot product of user row `user` and item row `item` of the fused matrix.
double score(const Matrix& fused, std::uint32_t n_users, std::uint32_t user, std::uint32_t item);

struct ChannelEmbeddings {
  Matrix input;
  Matrix propagated;
  Matrix enhanced;
};

struct PropagatedEmbeddings {
  ChannelEmbeddings id;
  ChannelEmbeddings visual;
  ChannelEmbeddings textual;
  Matrix fused;        // scoring representation, n_nodes x fused_dim
  Matrix fused_align;  // alpha * v + (1 - alpha) * t, the fused distribution used for alignment
};

PropagatedEmbeddings forward(const ModelState& state, const ModelInputs& inputs, const ForwardOptions& options);

/// Fused representation only (skips the ID channel); used for ranking.
Matrix fused_embeddings(const ModelState& state, const ModelInputs& inputs, const ForwardOptions& options);

/// MNT1 checkpoint.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state, std::uint64_t config_hash);

struct Checkpoint {
  ModelState state;
  std::uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EmbeddingRow {
  std::string node_type;  // "user" or "item"
  std::uint32_t index = 0;
  Eigen::RowVectorXd values;
};

/// `node_type<TAB>index<TAB>v_1<TAB>...<TAB>v_d` per row.
void write_embedding_tsv(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows);

}  // namespace mentor

#endif  // MENTOR_MODEL_HPP_
