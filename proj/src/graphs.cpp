#include "mentor/graphs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mentor/error.hpp"
#include "mentor/parallel.hpp"

namespace mentor {

NormAdjacency build_norm_adjacency(const SplitDataset& split) {
  std::vector<std::uint32_t> user_deg(split.n_users, 0), item_deg(split.n_items, 0);
  for (const auto& p : split.train) {
    if (p.user >= split.n_users || p.item >= split.n_items) {
      throw Error(ErrorCode::IndexOutOfRange, "train pair outside the id maps");
    }
    ++user_deg[p.user];
    ++item_deg[p.item];
  }
  for (std::uint32_t u = 0; u < split.n_users; ++u) {
    if (user_deg[u] == 0) throw Error(ErrorCode::IsolatedNode, "user " + std::to_string(u));
  }
  std::vector<Triplet> triplets;
  triplets.reserve(split.train.size() * 2);
  for (const auto& p : split.train) {
    const double w = 1.0 / std::sqrt(static_cast<double>(user_deg[p.user]) * item_deg[p.item]);
    const std::uint32_t item_node = split.n_users + p.item;
    triplets.push_back({p.user, item_node, w});
    triplets.push_back({item_node, p.user, w});
  }
  return CsrMatrix::from_triplets(split.n_nodes(), split.n_nodes(), std::move(triplets));
}

double cosine_similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine of vectors with different sizes");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  return a.dot(b) / (na * nb);
}

std::uint64_t ItemItemGraph::content_hash() const {
  const std::array<std::uint32_t, 4> header{static_cast<std::uint32_t>(modality), k, normalized ? 1u : 0u,
                                            frozen ? 1u : 0u};
  return fnv1a(header.data(), sizeof header, weights.content_hash());
}

ItemItemGraph build_item_knn(const FeatureMatrix& features, std::uint32_t k, bool normalize) {
  const auto n = static_cast<std::uint32_t>(features.values.rows());
  if (k == 0) throw Error(ErrorCode::RangeError, "knn k must be >= 1");
  if (n <= 1) throw Error(ErrorCode::KTooLarge, "item graph needs at least two items");
  const std::uint32_t keep = std::min(k, n - 1);

  Matrix unit = features.values;
  for (std::uint32_t i = 0; i < n; ++i) {
    const double norm = unit.row(i).norm();
    if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "feature row " + std::to_string(i));
    unit.row(i) /= norm;
  }

  std::vector<std::uint32_t> neighbors(static_cast<std::size_t>(n) * keep);
  constexpr std::size_t kBlock = 256;
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  parallel_for(n_blocks, [&](std::size_t b0, std::size_t b1) {
    std::vector<std::uint32_t> order(n);
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t first = b * kBlock;
      const std::size_t rows = std::min<std::size_t>(kBlock, n - first);
      const Matrix sims = unit.middleRows(first, rows) * unit.transpose();
      for (std::size_t r = 0; r < rows; ++r) {
        const auto i = static_cast<std::uint32_t>(first + r);
        std::iota(order.begin(), order.end(), 0u);
        order.erase(order.begin() + i);
        std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                          [&](std::uint32_t a, std::uint32_t c) {
                            const double sa = sims(r, a), sc = sims(r, c);
                            return sa != sc ? sa > sc : a < c;
                          });
        std::sort(order.begin(), order.begin() + keep);
        std::copy(order.begin(), order.begin() + keep, neighbors.begin() + static_cast<std::size_t>(i) * keep);
        order.resize(n);
      }
    }
  });

  std::vector<std::uint32_t> row_ptr(n + 1);
  for (std::uint32_t i = 0; i <= n; ++i) row_ptr[i] = i * keep;
  // every row of the binary matrix sums to `keep`, so D^-1/2 S D^-1/2 = S / keep
  const double w = normalize ? static_cast<double>(static_cast<float>(1.0 / keep)) : 1.0;
  ItemItemGraph g;
  g.modality = features.modality;
  g.k = k;
  g.normalized = normalize;
  g.frozen = true;
  g.weights = CsrMatrix::from_arrays(n, n, std::move(row_ptr), std::move(neighbors),
                                     std::vector<double>(static_cast<std::size_t>(n) * keep, w));
  return g;
}

Matrix propagate_item_graph(const ItemItemGraph& graph, const Matrix& item_emb, unsigned layers) {
  if (item_emb.rows() != graph.weights.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "item embedding rows do not match the item graph");
  }
  Matrix out = item_emb;
  for (unsigned l = 0; l < layers; ++l) out = graph.weights.multiply(out);
  return out;
}

Matrix propagate_item_graph_transposed(const ItemItemGraph& graph, const Matrix& grad, unsigned layers) {
  if (grad.rows() != graph.weights.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient rows do not match the item graph");
  }
  Matrix out = grad;
  for (unsigned l = 0; l < layers; ++l) out = graph.weights.multiply_transposed(out);
  return out;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_item_graph(const std::filesystem::path& path, const ItemItemGraph& graph) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const CsrMatrix& w = graph.weights;
  out.write("IIG1", 4);
  put_u32(out, static_cast<std::uint32_t>(graph.modality));
  put_u32(out, graph.k);
  put_u32(out, graph.normalized ? 1u : 0u);
  put_u32(out, w.rows());
  put_u32(out, static_cast<std::uint32_t>(w.nnz()));
  for (auto v : w.row_ptr()) put_u32(out, v);
  for (auto v : w.col_idx()) put_u32(out, v);
  for (double v : w.values()) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
}

ItemItemGraph load_item_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "IIG1", 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
  ItemItemGraph g;
  const std::uint32_t tag = get_u32(in);
  if (tag != static_cast<std::uint32_t>(Modality::Visual) && tag != static_cast<std::uint32_t>(Modality::Textual)) {
    throw Error(ErrorCode::BadMagic, "unknown modality tag in " + path.string());
  }
  g.modality = static_cast<Modality>(tag);
  g.k = get_u32(in);
  g.normalized = get_u32(in) != 0;
  const std::uint32_t rows = get_u32(in);
  const std::uint32_t nnz = get_u32(in);
  if (!in) throw Error(ErrorCode::BadMagic, "truncated header in " + path.string());
  std::vector<std::uint32_t> row_ptr(rows + 1), col_idx(nnz);
  for (auto& v : row_ptr) v = get_u32(in);
  for (auto& v : col_idx) v = get_u32(in);
  std::vector<double> values(nnz);
  for (auto& v : values) {
    float f = 0;
    in.read(reinterpret_cast<char*>(&f), 4);
    v = f;
  }
  if (!in) throw Error(ErrorCode::DimensionMismatch, "truncated CSR payload in " + path.string());
  g.weights = CsrMatrix::from_arrays(rows, rows, std::move(row_ptr), std::move(col_idx), std::move(values));
  g.frozen = true;
  return g;
}

}  // namespace mentor
