#ifndef MENTOR_GRAPHS_HPP_
#define MENTOR_GRAPHS_HPP_

#include <cstdint>
#include <filesystem>

#include "mentor/csr.hpp"
#include "mentor/ingest.hpp"
#include "mentor/tensor.hpp"

namespace mentor {

/// Symmetric-normalized user-item adjacency over the (n_users + n_items) node
/// space; users occupy rows [0, n_users), items follow.
using NormAdjacency = CsrMatrix;

/// Edge (u, i) and (i, u) carry 1/sqrt(deg_u * deg_i), degrees taken on train.
/// A user without train interactions raises IsolatedNode; items that only
/// occur in valid/test are left as empty rows.
NormAdjacency build_norm_adjacency(const SplitDataset& split);

/// a.b / (|a| |b|). Throws ZeroVector if either vector has zero norm.
double cosine_similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// Frozen top-k item-item semantic graph of one modality.
struct ItemItemGraph {
  Modality modality = Modality::Visual;
  std::uint32_t k = 0;
  bool normalized = false;
  bool frozen = true;
  CsrMatrix weights;  // n_items x n_items, no self loops

  std::uint64_t content_hash() const;
};

/// Keeps each row's k most cosine-similar items (self excluded, ties to the lower
/// index) with weight 1. With `normalize`, weights become 1/sqrt(r_i r_j) where r
/// is the row sum of the binary matrix. Weights are stored float-exact.
ItemItemGraph build_item_knn(const FeatureMatrix& features, std::uint32_t k, bool normalize);

/// Applies S `layers` times to `item_emb`.
Matrix propagate_item_graph(const ItemItemGraph& graph, const Matrix& item_emb, unsigned layers);

/// Adjoint of propagate_item_graph: (S^T)^layers * grad.
Matrix propagate_item_graph_transposed(const ItemItemGraph& graph, const Matrix& grad, unsigned layers);

/// IIG1 cache file.
void save_item_graph(const std::filesystem::path& path, const ItemItemGraph& graph);
ItemItemGraph load_item_graph(const std::filesystem::path& path);

}  // namespace mentor

#endif  // MENTOR_GRAPHS_HPP_
