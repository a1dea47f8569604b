// Shared test fixtures and brute-force oracles. Oracles here deliberately avoid
// the library's code paths (dense loops instead of CSR, explicit sorting, etc.).
#ifndef MENTOR_TESTS_FIXTURES_HPP_
#define MENTOR_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/error.hpp"
#include "mentor/graphs.hpp"
#include "mentor/ingest.hpp"
#include "mentor/model.hpp"
#include "mentor/ssl.hpp"
#include "mentor/synthetic.hpp"
#include "mentor/train.hpp"

namespace mentor::testing {

#define EXPECT_ERROR_CODE(stmt, expected)                              \
  do {                                                                 \
    try {                                                              \
      stmt;                                                            \
      ADD_FAILURE() << "expected " << ::mentor::to_string(expected);   \
    } catch (const ::mentor::Error& e_) {                              \
      EXPECT_EQ(e_.code(), expected) << e_.what();                     \
    }                                                                  \
  } while (0)

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mentor_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint32_t seed, double scale = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(gen);
  return m;
}

/// Random split where every user has at least one train item and at least one
/// non-interacted item.
inline SplitDataset random_split(std::uint32_t n_users, std::uint32_t n_items, double density, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  SplitDataset s;
  s.n_users = n_users;
  s.n_items = n_items;
  std::vector<std::uint32_t> item_deg(n_items, 0);
  for (std::uint32_t u = 0; u < n_users; ++u) {
    std::vector<std::uint32_t> picked;
    for (std::uint32_t i = 0; i < n_items; ++i) {
      if (coin(gen) < density) picked.push_back(i);
    }
    if (picked.empty()) picked.push_back((u * 3) % n_items);
    if (picked.size() == n_items) picked.pop_back();
    for (std::uint32_t i : picked) {
      s.train.push_back({u, i});
      ++item_deg[i];
    }
  }
  // give every item a train edge
  for (std::uint32_t i = 0; i < n_items; ++i) {
    if (item_deg[i] == 0) s.train.push_back({i % n_users, i});
  }
  for (std::uint32_t u = 0; u < n_users; ++u) {
    s.user_tokens.push_back("u" + std::to_string(u));
    s.user_map[s.user_tokens.back()] = u;
  }
  for (std::uint32_t i = 0; i < n_items; ++i) {
    s.item_tokens.push_back("i" + std::to_string(i));
    s.item_map[s.item_tokens.back()] = i;
  }
  return s;
}

/// Frozen inputs for a random toy problem.
inline ModelInputs toy_inputs(const SplitDataset& split, std::uint32_t visual_dim, std::uint32_t textual_dim,
                              std::uint32_t k, bool normalize, std::uint32_t seed) {
  FeatureMatrix v{Modality::Visual, random_matrix(split.n_items, visual_dim, seed + 1)};
  FeatureMatrix t{Modality::Textual, random_matrix(split.n_items, textual_dim, seed + 2)};
  round_to_float(v.values);
  round_to_float(t.values);
  ModelInputs in;
  in.n_users = split.n_users;
  in.n_items = split.n_items;
  in.adjacency = build_norm_adjacency(split);
  in.visual_graph = build_item_knn(v, k, normalize);
  in.textual_graph = build_item_knn(t, k, normalize);
  in.visual_features = v.values;
  in.textual_features = t.values;
  return in;
}

/// Dense bipartite adjacency D^-1/2 A D^-1/2 computed from scratch.
inline Matrix dense_norm_adjacency(const SplitDataset& s) {
  const std::uint32_t n = s.n_users + s.n_items;
  Matrix a = Matrix::Zero(n, n);
  for (const auto& p : s.train) {
    a(p.user, s.n_users + p.item) = 1.0;
    a(s.n_users + p.item, p.user) = 1.0;
  }
  Vector deg = a.rowwise().sum();
  Matrix out = Matrix::Zero(n, n);
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < n; ++c) {
      if (a(r, c) != 0.0) out(r, c) = a(r, c) / std::sqrt(deg(r) * deg(c));
    }
  }
  return out;
}

/// Exhaustive top-k neighbor sets by full pairwise cosine sort.
inline std::vector<std::set<std::uint32_t>> knn_oracle(const Matrix& f, std::uint32_t k) {
  const auto n = static_cast<std::uint32_t>(f.rows());
  std::vector<std::set<std::uint32_t>> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::uint32_t>> sims;
    for (std::uint32_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0, ni = 0, nj = 0;
      for (Eigen::Index c = 0; c < f.cols(); ++c) {
        dot += f(i, c) * f(j, c);
        ni += f(i, c) * f(i, c);
        nj += f(j, c) * f(j, c);
      }
      sims.emplace_back(-dot / std::sqrt(ni * nj), j);
    }
    std::sort(sims.begin(), sims.end());
    for (std::uint32_t r = 0; r < std::min<std::uint32_t>(k, n - 1); ++r) out[i].insert(sims[r].second);
  }
  return out;
}

/// Definitional InfoNCE by double loop over all pairs.
inline double info_nce_oracle(const Matrix& v1, const Matrix& v2, double tau, const std::vector<std::uint32_t>& rows) {
  double loss = 0;
  for (std::uint32_t r : rows) {
    double denom = 0;
    double pos = 0;
    for (std::uint32_t s : rows) {
      double dot = 0;
      for (Eigen::Index c = 0; c < v1.cols(); ++c) dot += v1(r, c) * v2(s, c);
      const double cos = dot / (v1.row(r).norm() * v2.row(s).norm());
      denom += std::exp(cos / tau);
      if (s == r) pos = std::exp(cos / tau);
    }
    loss += -std::log(pos / denom);
  }
  return loss;
}

/// Moment distance recomputed with scalar loops.
inline double moment_distance_oracle(const Matrix& a, const Matrix& b) {
  const auto n = static_cast<double>(a.rows());
  const Eigen::Index d = a.cols();
  double mu_term = 0, sigma_term = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    double ma = 0, mb = 0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      ma += a(r, j);
      mb += b(r, j);
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      va += (a(r, j) - ma) * (a(r, j) - ma);
      vb += (b(r, j) - mb) * (b(r, j) - mb);
    }
    mu_term += std::abs(ma - mb);
    sigma_term += std::abs(std::sqrt(va / n + 1e-12) - std::sqrt(vb / n + 1e-12));
  }
  return mu_term / d + sigma_term / d;
}

/// Recall / NDCG straight from the definition for one user.
inline double recall_oracle(const std::vector<std::uint32_t>& top, const std::vector<std::uint32_t>& target,
                            std::size_t K) {
  double hits = 0;
  for (std::size_t j = 0; j < top.size() && j < K; ++j) {
    for (std::uint32_t t : target) hits += (t == top[j]) ? 1 : 0;
  }
  return hits / target.size();
}

inline double ndcg_oracle(const std::vector<std::uint32_t>& top, const std::vector<std::uint32_t>& target,
                          std::size_t K) {
  double dcg = 0, idcg = 0;
  for (std::size_t j = 0; j < top.size() && j < K; ++j) {
    for (std::uint32_t t : target) {
      if (t == top[j]) dcg += std::log(2.0) / std::log(j + 2.0);
    }
  }
  for (std::size_t j = 0; j < std::min(K, target.size()); ++j) idcg += std::log(2.0) / std::log(j + 2.0);
  return dcg / idcg;
}

/// Feature-masking loss with the masked target taken from `target_fused` rather
/// than from `state`, computed with explicit per-row loops.
inline double frozen_target_feature_loss(const ModelState& state, const ModelInputs& inputs, const TrainConfig& config,
                                         const Matrix& target_fused, const Rng& step_rng) {
  const Matrix fused = forward(state, inputs, forward_options(config)).fused;
  const Eigen::Index nu = inputs.n_users, ni = inputs.n_items, w = fused.cols();
  Rng mask_rng = step_rng.split(kMaskStream);
  const FeatureMask mask = draw_feature_mask(nu, ni, w, config.p, mask_rng);
  double loss = 0;
  for (int part = 0; part < 2; ++part) {
    const Eigen::Index offset = part == 0 ? 0 : nu, rows = part == 0 ? nu : ni;
    const Matrix& m = part == 0 ? mask.users : mask.items;
    double sum = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      double dot = 0, np = 0, nt = 0;
      for (Eigen::Index c = 0; c < w; ++c) {
        double pred = state.pred_bias(0, c);
        for (Eigen::Index k = 0; k < w; ++k) pred += fused(offset + r, k) * state.pred_weight(k, c);
        const double target = target_fused(offset + r, c) * m(r, c);
        dot += pred * target;
        np += pred * pred;
        nt += target * target;
      }
      if (np > 0 && nt > 0) sum += dot / std::sqrt(np * nt);
    }
    loss += 1.0 - sum / static_cast<double>(rows);
  }
  return loss;
}

/// Central-difference gradient check of compute_gradients on randomly sampled
/// coordinates of every tensor. `baseline` (optional) is subtracted from both
/// sides to isolate one loss term. Returns the worst relative error.
struct GradCheckResult {
  double worst_rel = 0;
  std::size_t checked = 0;
  std::string worst_where;
};

inline GradCheckResult finite_difference_check(const ModelState& state, const ModelInputs& inputs,
                                               const TripleBatch& batch, const TrainConfig& config,
                                               const TrainConfig* baseline, const Rng& step_rng,
                                               std::size_t per_tensor = 20, double h = 1e-4,
                                               std::uint32_t seed = 11) {
  // The masked view is a stop-gradient target, so finite differences must hold it
  // at its value under `state`; the feature term is swapped for that surrogate.
  const Matrix frozen_fused = forward(state, inputs, forward_options(config)).fused;
  auto objective = [&](const ModelState& s) {
    const LossBreakdown full = total_loss(s, inputs, batch, config, step_rng);
    double v = full.total;
    if (config.lambda_f > 0) {
      v += config.lambda_f * (frozen_target_feature_loss(s, inputs, config, frozen_fused, step_rng) -
                              full.enhance.feature);
    }
    if (baseline) v -= total_loss(s, inputs, batch, *baseline, step_rng).total;
    return v;
  };
  ModelState grads;
  compute_gradients(state, inputs, batch, config, step_rng, grads);
  if (baseline) {
    ModelState base;
    compute_gradients(state, inputs, batch, *baseline, step_rng, base);
    auto g = grads.tensors();
    auto b = base.tensors();
    for (std::size_t t = 0; t < g.size(); ++t) *g[t] -= *b[t];
  }

  auto kink_signs = [&](const ModelState& s) {
    const PropagatedEmbeddings fw = forward(s, inputs, forward_options(config));
    std::vector<int> signs;
    if (config.lambda_align <= 0) return signs;
    for (double x : alignment_kink_distances(fw.fused_align, fw.id.enhanced, fw.visual.enhanced,
                                             fw.textual.enhanced, config.align_levels)) {
      signs.push_back(x > 0 ? 1 : (x < 0 ? -1 : 0));
    }
    return signs;
  };

  GradCheckResult result;
  std::mt19937 gen(seed);
  ModelState probe = state;
  auto pt = probe.tensors();
  auto gt = grads.tensors();
  for (std::size_t t = 0; t < pt.size(); ++t) {
    const auto size = static_cast<std::size_t>(pt[t]->size());
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), gen);
    std::size_t done = 0;
    for (std::size_t c : coords) {
      if (done >= per_tensor) break;
      double& x = pt[t]->data()[c];
      const double x0 = x;
      x = x0 + h;
      const auto s_plus = kink_signs(probe);
      const double f_plus = objective(probe);
      x = x0 - h;
      const auto s_minus = kink_signs(probe);
      const double f_minus = objective(probe);
      x = x0;
      if (s_plus != s_minus) continue;  // probe straddles an |.| kink
      const double numeric = (f_plus - f_minus) / (2 * h);
      const double analytic = gt[t]->data()[c];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      if (rel > result.worst_rel) {
        result.worst_rel = rel;
        result.worst_where = std::string(ModelState::kNames[t]) + "[" + std::to_string(c) +
                             "] analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
      }
      ++result.checked;
      ++done;
    }
  }
  return result;
}

/// 5-user / 8-item / d=4 gradient fixture.
struct GradFixture {
  SplitDataset split;
  ModelInputs inputs;
  ModelState state;
  TripleBatch batch;
  TrainConfig config;
};

inline GradFixture make_grad_fixture(std::uint32_t seed = 3) {
  GradFixture f;
  f.split = random_split(5, 8, 0.4, seed);
  f.inputs = toy_inputs(f.split, 6, 5, 3, true, seed);
  f.config.d = 4;
  f.config.L = 2;
  f.config.item_layers = 1;
  f.config.k = 3;
  f.config.batch_size = 6;
  f.config.nce_negatives = NceNegatives::All;
  ModelDims dims = model_dims(f.inputs, f.config);
  f.state = init_parameters(dims, seed);
  // move away from the zero-bias / alpha=0.5 symmetric start
  f.state.visual_bias = random_matrix(1, 4, seed + 10, 0.3);
  f.state.textual_bias = random_matrix(1, 4, seed + 11, 0.3);
  f.state.pred_bias = random_matrix(1, 4, seed + 12, 0.3);
  f.state.alpha(0, 0) = 0.37;
  for (Matrix* t : f.state.tensors()) round_to_float(*t);
  InteractionIndex index(f.split.train, f.split.n_users);
  Rng rng(seed);
  f.batch = sample_triples(f.split, index, 6, rng);
  return f;
}

/// Block-structured synthetic data split and turned into frozen model inputs.
struct SynthProblem {
  SplitDataset split;
  FeatureMatrix visual;
  FeatureMatrix textual;
  ModelInputs inputs;
};

inline SynthProblem synthetic_problem(const TrainConfig& config, const SyntheticSpec& spec = {},
                                      std::uint64_t split_seed = 1) {
  auto data = make_block_dataset(spec);
  SynthProblem p;
  p.split = build_split(apply_k_core(data.raw, 1), {}, split_seed);
  p.visual = {Modality::Visual, Matrix(p.split.n_items, spec.visual_dim)};
  p.textual = {Modality::Textual, Matrix(p.split.n_items, spec.textual_dim)};
  for (std::size_t r = 0; r < data.item_tokens.size(); ++r) {
    const auto idx = p.split.item_map.at(data.item_tokens[r]);
    p.visual.values.row(idx) = data.visual.row(static_cast<Eigen::Index>(r));
    p.textual.values.row(idx) = data.textual.row(static_cast<Eigen::Index>(r));
  }
  p.inputs = build_model_inputs(p.split, p.visual, p.textual, config);
  return p;
}

}  // namespace mentor::testing

#endif  // MENTOR_TESTS_FIXTURES_HPP_
