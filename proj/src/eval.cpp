#include "mentor/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include <json.hpp>

#include "mentor/error.hpp"
#include "mentor/parallel.hpp"
#include "mentor/rng.hpp"
#include "mentor/train.hpp"

namespace mentor {

std::vector<std::vector<std::uint32_t>> group_by_user(const std::vector<IndexPair>& pairs, std::uint32_t n_users) {
  std::vector<std::vector<std::uint32_t>> out(n_users);
  for (const auto& p : pairs) out.at(p.user).push_back(p.item);
  for (auto& list : out) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return out;
}

RankedLists rank_topk(const Matrix& fused, std::uint32_t n_users,
                      const std::vector<std::vector<std::uint32_t>>& exclude,
                      const std::vector<std::vector<std::uint32_t>>& targets, std::size_t K) {
  const auto n_items = static_cast<std::uint32_t>(fused.rows() - n_users);
  RankedLists ranked;
  for (std::uint32_t u = 0; u < n_users && u < targets.size(); ++u) {
    if (!targets[u].empty()) ranked.users.push_back(u);
  }
  ranked.items.resize(ranked.users.size());
  const Matrix items = fused.bottomRows(n_items);
  static const std::vector<std::uint32_t> kNone;
  constexpr std::size_t kChunk = 256;
  const std::size_t n_chunks = (ranked.users.size() + kChunk - 1) / kChunk;
  parallel_for(n_chunks, [&](std::size_t c0, std::size_t c1) {
    std::vector<std::uint32_t> order;
    std::vector<char> blocked(n_items, 0);
    for (std::size_t c = c0; c < c1; ++c) {
      const std::size_t first = c * kChunk;
      const std::size_t count = std::min(kChunk, ranked.users.size() - first);
      Matrix users(count, fused.cols());
      for (std::size_t r = 0; r < count; ++r) users.row(r) = fused.row(ranked.users[first + r]);
      const Matrix scores = users * items.transpose();
      for (std::size_t r = 0; r < count; ++r) {
        const std::uint32_t u = ranked.users[first + r];
        const auto& skip = u < exclude.size() ? exclude[u] : kNone;
        for (std::uint32_t i : skip) {
          if (i < n_items) blocked[i] = 1;
        }
        order.clear();
        for (std::uint32_t i = 0; i < n_items; ++i) {
          if (!blocked[i]) order.push_back(i);
        }
        for (std::uint32_t i : skip) {
          if (i < n_items) blocked[i] = 0;
        }
        const std::size_t keep = std::min(K, order.size());
        std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](std::uint32_t a, std::uint32_t b) {
          const double sa = scores(r, a), sb = scores(r, b);
          return sa != sb ? sa > sb : a < b;
        });
        ranked.items[first + r].assign(order.begin(), order.begin() + keep);
      }
    }
  });
  return ranked;
}

namespace {

double user_recall(const std::vector<std::uint32_t>& top, const std::vector<std::uint32_t>& target, std::size_t K) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(K, top.size()); ++j) {
    if (std::find(target.begin(), target.end(), top[j]) != target.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(target.size());
}

double user_ndcg(const std::vector<std::uint32_t>& top, const std::vector<std::uint32_t>& target, std::size_t K) {
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t j = 0; j < std::min(K, top.size()); ++j) {
    if (std::find(target.begin(), target.end(), top[j]) != target.end()) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  }
  for (std::size_t j = 0; j < std::min(K, target.size()); ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

template <class Fn>
double mean_over_users(const RankedLists& ranked, Fn&& per_user) {
  if (ranked.users.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < ranked.users.size(); ++r) sum += per_user(r);
  return sum / static_cast<double>(ranked.users.size());
}

}  // namespace

double recall_at_k(const RankedLists& ranked, const std::vector<std::vector<std::uint32_t>>& targets, std::size_t K) {
  return mean_over_users(ranked, [&](std::size_t r) {
    return user_recall(ranked.items[r], targets[ranked.users[r]], K);
  });
}

double ndcg_at_k(const RankedLists& ranked, const std::vector<std::vector<std::uint32_t>>& targets, std::size_t K) {
  return mean_over_users(ranked, [&](std::size_t r) {
    return user_ndcg(ranked.items[r], targets[ranked.users[r]], K);
  });
}

MetricsReport compute_metrics(const RankedLists& ranked, const std::vector<std::vector<std::uint32_t>>& targets) {
  MetricsReport m;
  m.users = ranked.users;
  for (std::size_t r = 0; r < ranked.users.size(); ++r) {
    const auto& target = targets[ranked.users[r]];
    m.user_recall10.push_back(user_recall(ranked.items[r], target, 10));
    m.user_recall20.push_back(user_recall(ranked.items[r], target, 20));
    m.user_ndcg10.push_back(user_ndcg(ranked.items[r], target, 10));
    m.user_ndcg20.push_back(user_ndcg(ranked.items[r], target, 20));
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  m.recall10 = mean(m.user_recall10);
  m.recall20 = mean(m.user_recall20);
  m.ndcg10 = mean(m.user_ndcg10);
  m.ndcg20 = mean(m.user_ndcg20);
  return m;
}

MetricsReport evaluate(const Matrix& fused, const SplitDataset& split, EvalSplit which) {
  const auto exclude = group_by_user(split.train, split.n_users);
  const auto targets = group_by_user(which == EvalSplit::Valid ? split.valid : split.test, split.n_users);
  return compute_metrics(rank_topk(fused, split.n_users, exclude, targets, 20), targets);
}

void write_per_user_jsonl(const std::filesystem::path& path, const MetricsReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (std::size_t r = 0; r < report.users.size(); ++r) {
    nlohmann::ordered_json j;
    j["user"] = report.users[r];
    j["recall@10"] = report.user_recall10[r];
    j["recall@20"] = report.user_recall20[r];
    j["ndcg@10"] = report.user_ndcg10[r];
    j["ndcg@20"] = report.user_ndcg20[r];
    out << j.dump() << '\n';
  }
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Base: return "base";
    case Variant::L1: return "L1";
    case Variant::L2: return "L2";
    case Variant::L3: return "L3";
    case Variant::Full: return "full";
    case Variant::FG: return "fg";
    case Variant::F: return "f";
    case Variant::G: return "g";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Base, Variant::L1, Variant::L2, Variant::L3, Variant::Full, Variant::FG, Variant::F,
                    Variant::G}) {
    if (name == to_string(v)) return v;
  }
  throw Error(ErrorCode::TypeError, "unknown ablation variant '" + name + "'");
}

TrainConfig apply_variant(TrainConfig config, Variant v) {
  switch (v) {
    case Variant::Base:
      config.align_levels = AlignLevels::none();
      break;
    case Variant::L1:
      config.align_levels = {true, false, false, false};
      break;
    case Variant::L2:
      config.align_levels = {true, true, false, false};
      break;
    case Variant::L3:
      config.align_levels = {true, true, true, false};
      break;
    case Variant::Full:
      break;
    case Variant::FG:
      config.lambda_f = 0;
      config.lambda_g = 0;
      break;
    case Variant::F:
      config.lambda_f = 0;
      break;
    case Variant::G:
      config.lambda_g = 0;
      break;
  }
  return config;
}

std::vector<AblationRow> run_ablation(const TrainConfig& config, const SplitDataset& split, const ModelInputs& inputs,
                                      const std::vector<Variant>& variants) {
  if (variants.empty()) throw Error(ErrorCode::RangeError, "no ablation variants requested");
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    const TrainConfig vc = apply_variant(config, v);
    const TrainResult result = train_loop(vc, split, inputs);
    AblationRow row;
    row.variant = v;
    row.valid = result.best_valid;
    row.test = evaluate(fused_embeddings(result.best, inputs, forward_options(vc)), split, EvalSplit::Test);
    row.best_epoch = result.best_epoch;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_tsv(const std::filesystem::path& path, const std::vector<AblationRow>& rows, EvalSplit which) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "variant\tR@10\tR@20\tN@10\tN@20\n" << std::fixed << std::setprecision(4);
  for (const auto& row : rows) {
    const MetricsReport& m = which == EvalSplit::Valid ? row.valid : row.test;
    out << to_string(row.variant) << '\t' << m.recall10 << '\t' << m.recall20 << '\t' << m.ndcg10 << '\t' << m.ndcg20
        << '\n';
  }
}

std::vector<std::uint32_t> export_embeddings(const ModelState& state, const ModelInputs& inputs,
                                             const ForwardOptions& options, const std::vector<std::string>& channels,
                                             const std::filesystem::path& dir, std::size_t sample, std::uint64_t seed) {
  const std::uint32_t n_items = inputs.n_items;
  std::vector<std::uint32_t> picked(n_items);
  std::iota(picked.begin(), picked.end(), 0u);
  if (sample < n_items) {
    Rng rng(seed);
    for (std::size_t j = 0; j < sample; ++j) std::swap(picked[j], picked[j + rng.index(n_items - j)]);
    picked.resize(sample);
    std::sort(picked.begin(), picked.end());
  }
  const PropagatedEmbeddings fw = forward(state, inputs, options);
  for (const auto& name : channels) {
    const Matrix* source = name == "id"        ? &fw.id.enhanced
                           : name == "visual"  ? &fw.visual.enhanced
                           : name == "textual" ? &fw.textual.enhanced
                           : name == "fused"   ? &fw.fused
                                               : nullptr;
    if (source == nullptr) throw Error(ErrorCode::TypeError, "unknown embedding channel '" + name + "'");
    std::vector<EmbeddingRow> rows;
    rows.reserve(picked.size());
    for (std::uint32_t i : picked) rows.push_back({"item", i, source->row(inputs.n_users + i)});
    write_embedding_tsv(dir / ("embeddings_" + name + ".tsv"), rows);
  }
  return picked;
}

}  // namespace mentor
