#include "mentor/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mentor/error.hpp"
#include "mentor/rng.hpp"

namespace mentor {

ModelState ModelState::zeros_like() const {
  ModelState out;
  auto dst = out.tensors();
  auto src = tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) *dst[t] = Matrix::Zero(src[t]->rows(), src[t]->cols());
  return out;
}

bool ModelState::all_finite() const {
  for (const Matrix* m : tensors()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

bool operator==(const ModelState& a, const ModelState& b) {
  auto ta = a.tensors();
  auto tb = b.tensors();
  for (std::size_t t = 0; t < ta.size(); ++t) {
    if (ta[t]->rows() != tb[t]->rows() || ta[t]->cols() != tb[t]->cols() || *ta[t] != *tb[t]) return false;
  }
  return true;
}

namespace {

Matrix xavier(Eigen::Index rows, Eigen::Index cols, Rng rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  round_to_float(m);
  // rounding can step past the bound by half an ulp
  m = m.cwiseMax(-bound).cwiseMin(bound);
  round_to_float(m);
  return m;
}

}  // namespace

ModelState init_parameters(const ModelDims& dims, std::uint64_t seed) {
  const Rng root(seed);
  const Eigen::Index d = dims.d;
  const Eigen::Index fd = dims.fused_dim();
  ModelState s;
  s.id_embedding = xavier(dims.n_nodes(), d, root.split(0));
  s.user_visual = xavier(dims.n_users, d, root.split(1));
  s.user_textual = xavier(dims.n_users, d, root.split(2));
  s.visual_proj = xavier(dims.visual_dim, d, root.split(3));
  s.visual_bias = Matrix::Zero(1, d);
  s.textual_proj = xavier(dims.textual_dim, d, root.split(4));
  s.textual_bias = Matrix::Zero(1, d);
  s.alpha = Matrix::Constant(1, 1, 0.5);
  s.pred_weight = xavier(fd, fd, root.split(5));
  s.pred_bias = Matrix::Zero(1, fd);
  return s;
}

Matrix modality_input(const ModelState& state, Channel channel, const Matrix* features) {
  if (channel == Channel::Id) return state.id_embedding;
  const bool visual = channel == Channel::Visual;
  const Matrix& users = visual ? state.user_visual : state.user_textual;
  const Matrix& proj = visual ? state.visual_proj : state.textual_proj;
  const Matrix& bias = visual ? state.visual_bias : state.textual_bias;
  if (features == nullptr || features->cols() != proj.rows()) {
    throw Error(ErrorCode::DimensionMismatch, std::string(visual ? "visual" : "textual") +
                                                  " features do not match the projection input width");
  }
  Matrix out(users.rows() + features->rows(), proj.cols());
  out.topRows(users.rows()) = users;
  out.bottomRows(features->rows()).noalias() = (*features) * proj;
  out.bottomRows(features->rows()).rowwise() += bias.row(0);
  return out;
}

Matrix propagate_ui(const NormAdjacency& adj, const Matrix& emb, unsigned layers) {
  if (emb.rows() != adj.cols()) throw Error(ErrorCode::DimensionMismatch, "embedding rows do not match the graph");
  Matrix sum = emb;
  Matrix layer = emb;
  for (unsigned l = 0; l < layers; ++l) {
    layer = adj.multiply(layer);
    sum += layer;
  }
  return sum;
}

Matrix enhance(const Matrix& propagated, const Matrix* semantic_items, std::uint32_t n_users) {
  if (semantic_items == nullptr) return propagated;
  if (semantic_items->rows() + n_users != propagated.rows() || semantic_items->cols() != propagated.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "semantic item embedding shape");
  }
  Matrix out = propagated;
  out.bottomRows(semantic_items->rows()) += *semantic_items;
  return out;
}

Matrix fuse(const Matrix& visual, const Matrix& textual, double alpha, Fusion fusion) {
  if (visual.rows() != textual.rows() || visual.cols() != textual.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "fused modalities differ in shape");
  }
  if (fusion == Fusion::Sum) return alpha * visual + (1.0 - alpha) * textual;
  Matrix out(visual.rows(), 2 * visual.cols());
  out.leftCols(visual.cols()) = alpha * visual;
  out.rightCols(visual.cols()) = (1.0 - alpha) * textual;
  return out;
}

FuseGrad fuse_backward(const Matrix& visual, const Matrix& textual, double alpha, Fusion fusion,
                       const Matrix& grad_fused) {
  FuseGrad g;
  if (fusion == Fusion::Sum) {
    g.visual = alpha * grad_fused;
    g.textual = (1.0 - alpha) * grad_fused;
    g.alpha = grad_fused.cwiseProduct(visual - textual).sum();
  } else {
    const auto d = visual.cols();
    g.visual = alpha * grad_fused.leftCols(d);
    g.textual = (1.0 - alpha) * grad_fused.rightCols(d);
    g.alpha = grad_fused.leftCols(d).cwiseProduct(visual).sum() - grad_fused.rightCols(d).cwiseProduct(textual).sum();
  }
  return g;
}

double score(const Matrix& fused, std::uint32_t n_users, std::uint32_t user, std::uint32_t item) {
  if (user >= n_users || static_cast<Eigen::Index>(n_users) + item >= fused.rows()) {
    throw Error(ErrorCode::IndexOutOfRange, "score(" + std::to_string(user) + ", " + std::to_string(item) + ")");
  }
  return fused.row(user).dot(fused.row(n_users + item));
}

namespace {

ChannelEmbeddings run_channel(const ModelState& state, const ModelInputs& inputs, const ForwardOptions& options,
                              Channel channel) {
  ChannelEmbeddings out;
  const Matrix* features = channel == Channel::Visual    ? &inputs.visual_features
                           : channel == Channel::Textual ? &inputs.textual_features
                                                         : nullptr;
  out.input = modality_input(state, channel, features);
  out.propagated = propagate_ui(inputs.adjacency, out.input, options.ui_layers);
  if (channel == Channel::Id) {
    out.enhanced = out.propagated;
  } else {
    const ItemItemGraph& graph = channel == Channel::Visual ? inputs.visual_graph : inputs.textual_graph;
    const Matrix semantic =
        propagate_item_graph(graph, out.input.bottomRows(inputs.n_items), options.item_layers);
    out.enhanced = enhance(out.propagated, &semantic, inputs.n_users);
  }
  return out;
}

}  // namespace

PropagatedEmbeddings forward(const ModelState& state, const ModelInputs& inputs, const ForwardOptions& options) {
  PropagatedEmbeddings out;
  out.id = run_channel(state, inputs, options, Channel::Id);
  out.visual = run_channel(state, inputs, options, Channel::Visual);
  out.textual = run_channel(state, inputs, options, Channel::Textual);
  const double alpha = state.fusion_weight();
  out.fused = fuse(out.visual.enhanced, out.textual.enhanced, alpha, options.fusion);
  out.fused_align = options.fusion == Fusion::Sum
                        ? out.fused
                        : fuse(out.visual.enhanced, out.textual.enhanced, alpha, Fusion::Sum);
  return out;
}

Matrix fused_embeddings(const ModelState& state, const ModelInputs& inputs, const ForwardOptions& options) {
  const ChannelEmbeddings v = run_channel(state, inputs, options, Channel::Visual);
  const ChannelEmbeddings t = run_channel(state, inputs, options, Channel::Textual);
  return fuse(v.enhanced, t.enhanced, state.fusion_weight(), options.fusion);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, std::uint64_t config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write("MNT1", 4);
  put_u64(out, config_hash);
  const auto tensors = state.tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::string_view name = ModelState::kNames[t];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(tensors[t]->rows()));
    put_u32(out, static_cast<std::uint32_t>(tensors[t]->cols()));
    for (Eigen::Index i = 0; i < tensors[t]->size(); ++i) {
      const float f = static_cast<float>(tensors[t]->data()[i]);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MNT1", 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
  Checkpoint ck;
  ck.config_hash = get<std::uint64_t>(in);
  const auto count = get<std::uint32_t>(in);
  auto tensors = ck.state.tensors();
  std::array<bool, 10> seen{};
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto len = get<std::uint32_t>(in);
    if (!in || len > 256) throw Error(ErrorCode::BadMagic, "corrupt tensor header in " + path.string());
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    std::size_t slot = tensors.size();
    for (std::size_t t = 0; t < ModelState::kNames.size(); ++t) {
      if (ModelState::kNames[t] == name) slot = t;
    }
    if (slot == tensors.size()) throw Error(ErrorCode::BadMagic, "unknown tensor '" + name + "' in " + path.string());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<float>(in);
    if (!in) throw Error(ErrorCode::DimensionMismatch, "truncated tensor '" + name + "' in " + path.string());
    *tensors[slot] = std::move(m);
    seen[slot] = true;
  }
  for (std::size_t t = 0; t < seen.size(); ++t) {
    if (!seen[t]) throw Error(ErrorCode::MissingPrerequisite, "checkpoint lacks tensor " + std::string(ModelState::kNames[t]));
  }
  return ck;
}

void write_embedding_tsv(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << std::setprecision(9);
  for (const auto& row : rows) {
    out << row.node_type << '\t' << row.index;
    for (Eigen::Index c = 0; c < row.values.size(); ++c) out << '\t' << row.values(c);
    out << '\n';
  }
}

}  // namespace mentor
