#include "mentor/ingest.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mentor/error.hpp"
#include "mentor/rng.hpp"

namespace mentor {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

const char* to_string(Modality m) {
  switch (m) {
    case Modality::Visual:
      return "visual";
    case Modality::Textual:
      return "textual";
  }
  return "unknown";
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::ifstream open_input(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  return in;
}

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t parse_index(const std::string& s, const fs::path& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    unsigned long v = std::stoul(s, &used);
    if (used != s.size() || v > 0xffffffffUL) throw std::invalid_argument(s);
    return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no));
  }
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> read_index_pairs(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    auto cols = split_tabs(line);
    if (cols.size() < 2) throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no));
    out.emplace_back(parse_index(cols[0], path, line_no), parse_index(cols[1], path, line_no));
  }
  return out;
}

}  // namespace

RawInteractions load_interactions(const fs::path& path) {
  std::ifstream in = open_input(path);
  RawInteractions raw;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    auto cols = split_tabs(line);
    if (cols.size() < 2 || cols[0].empty() || cols[1].empty()) {
      throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no));
    }
    std::pair<std::string, std::string> rec{std::move(cols[0]), std::move(cols[1])};
    if (seen.insert(rec).second) raw.records.push_back(std::move(rec));
  }
  return raw;
}

RawInteractions apply_k_core(const RawInteractions& raw, std::uint32_t k) {
  if (k == 0) throw Error(ErrorCode::RangeError, "k-core requires k >= 1");
  std::map<std::string, std::uint32_t> user_id, item_id;
  for (const auto& [u, i] : raw.records) {
    user_id.emplace(u, static_cast<std::uint32_t>(user_id.size()));
    item_id.emplace(i, static_cast<std::uint32_t>(item_id.size()));
  }
  const std::size_t n_edges = raw.records.size();
  std::vector<std::uint32_t> eu(n_edges), ei(n_edges);
  std::vector<std::vector<std::uint32_t>> user_edges(user_id.size()), item_edges(item_id.size());
  for (std::size_t e = 0; e < n_edges; ++e) {
    eu[e] = user_id.at(raw.records[e].first);
    ei[e] = item_id.at(raw.records[e].second);
    user_edges[eu[e]].push_back(static_cast<std::uint32_t>(e));
    item_edges[ei[e]].push_back(static_cast<std::uint32_t>(e));
  }
  std::vector<std::uint32_t> udeg(user_edges.size()), ideg(item_edges.size());
  for (std::size_t u = 0; u < udeg.size(); ++u) udeg[u] = static_cast<std::uint32_t>(user_edges[u].size());
  for (std::size_t i = 0; i < ideg.size(); ++i) ideg[i] = static_cast<std::uint32_t>(item_edges[i].size());

  std::vector<char> edge_alive(n_edges, 1), user_alive(udeg.size(), 1), item_alive(ideg.size(), 1);
  // stack of (is_item, node)
  std::vector<std::pair<bool, std::uint32_t>> pending;
  for (std::uint32_t u = 0; u < udeg.size(); ++u) {
    if (udeg[u] < k) pending.emplace_back(false, u);
  }
  for (std::uint32_t i = 0; i < ideg.size(); ++i) {
    if (ideg[i] < k) pending.emplace_back(true, i);
  }
  while (!pending.empty()) {
    auto [is_item, node] = pending.back();
    pending.pop_back();
    auto& alive = is_item ? item_alive : user_alive;
    if (!alive[node]) continue;
    alive[node] = 0;
    for (std::uint32_t e : (is_item ? item_edges : user_edges)[node]) {
      if (!edge_alive[e]) continue;
      edge_alive[e] = 0;
      if (is_item) {
        if (--udeg[eu[e]] < k && user_alive[eu[e]]) pending.emplace_back(false, eu[e]);
      } else {
        if (--ideg[ei[e]] < k && item_alive[ei[e]]) pending.emplace_back(true, ei[e]);
      }
    }
  }

  RawInteractions out;
  for (std::size_t e = 0; e < n_edges; ++e) {
    if (edge_alive[e]) out.records.push_back(raw.records[e]);
  }
  if (out.records.empty()) throw Error(ErrorCode::EmptyCore, "no interactions survive the " + std::to_string(k) + "-core");
  return out;
}

SplitDataset build_split(const RawInteractions& raw, SplitRatios ratios, std::uint64_t seed) {
  const unsigned total = ratios.train + ratios.valid + ratios.test;
  if (total == 0) throw Error(ErrorCode::RangeError, "split ratios sum to zero");
  SplitDataset split;
  std::set<std::string> users, items;
  for (const auto& [u, i] : raw.records) {
    users.insert(u);
    items.insert(i);
  }
  for (const auto& u : users) {
    split.user_map.emplace(u, static_cast<std::uint32_t>(split.user_tokens.size()));
    split.user_tokens.push_back(u);
  }
  for (const auto& i : items) {
    split.item_map.emplace(i, static_cast<std::uint32_t>(split.item_tokens.size()));
    split.item_tokens.push_back(i);
  }
  split.n_users = static_cast<std::uint32_t>(split.user_tokens.size());
  split.n_items = static_cast<std::uint32_t>(split.item_tokens.size());

  std::vector<std::vector<std::uint32_t>> per_user(split.n_users);
  for (const auto& [u, i] : raw.records) per_user[split.user_map.at(u)].push_back(split.item_map.at(i));

  Rng rng(seed);
  for (std::uint32_t u = 0; u < split.n_users; ++u) {
    auto& list = per_user[u];
    std::sort(list.begin(), list.end());
    for (std::size_t j = list.size(); j > 1; --j) std::swap(list[j - 1], list[rng.index(j)]);
    const std::size_t n = list.size();
    const std::size_t n_test = n * ratios.test / total;
    const std::size_t n_valid = n * ratios.valid / total;
    std::size_t j = 0;
    for (; j < n_test; ++j) split.test.push_back({u, list[j]});
    for (; j < n_test + n_valid; ++j) split.valid.push_back({u, list[j]});
    for (; j < n; ++j) split.train.push_back({u, list[j]});
  }
  return split;
}

fs::path feature_sidecar_path(const fs::path& mmf_path) {
  fs::path p = mmf_path;
  return p.replace_extension(".tsv");
}

FeatureMatrix load_features(const fs::path& path, const std::unordered_map<std::string, std::uint32_t>& item_map,
                            Modality modality) {
  std::ifstream in = open_input(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MMF1", 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  if (!in) throw Error(ErrorCode::BadMagic, "truncated header in " + path.string());

  // sidecar: file row -> token
  const fs::path sidecar = feature_sidecar_path(path);
  std::vector<std::string> row_token(rows);
  {
    std::ifstream side = open_input(sidecar);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(side, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty() || line[0] == '#') continue;
      auto parts = split_tabs(line);
      if (parts.size() < 2) throw Error(ErrorCode::MalformedLine, sidecar.string() + ":" + std::to_string(line_no));
      const std::uint32_t idx = parse_index(parts[0], sidecar, line_no);
      if (idx >= rows) {
        throw Error(ErrorCode::DimensionMismatch, "sidecar row " + std::to_string(idx) + " >= " + std::to_string(rows));
      }
      row_token[idx] = parts[1];
    }
  }

  std::vector<float> payload(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float))) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(payload.size()) + " floats in " + path.string());
  }

  FeatureMatrix out;
  out.modality = modality;
  out.values = Matrix::Zero(static_cast<Eigen::Index>(item_map.size()), cols);
  std::vector<char> filled(item_map.size(), 0);
  for (std::uint32_t r = 0; r < rows; ++r) {
    auto it = item_map.find(row_token[r]);
    if (it == item_map.end()) continue;
    for (std::uint32_t c = 0; c < cols; ++c) {
      const float v = payload[static_cast<std::size_t>(r) * cols + c];
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteValue, "row " + std::to_string(r) + ", col " + std::to_string(c));
      }
      out.values(it->second, c) = v;
    }
    filled[it->second] = 1;
  }
  for (const auto& [token, idx] : item_map) {
    if (!filled[idx]) throw Error(ErrorCode::MissingItemRow, token);
  }
  return out;
}

void write_features(const fs::path& path, const Matrix& values, const std::vector<std::string>& row_tokens) {
  if (static_cast<std::size_t>(values.rows()) != row_tokens.size()) {
    throw Error(ErrorCode::DimensionMismatch, "feature rows vs token count");
  }
  std::ofstream out = open_output(path, std::ios::binary);
  out.write("MMF1", 4);
  write_u32(out, static_cast<std::uint32_t>(values.rows()));
  write_u32(out, static_cast<std::uint32_t>(values.cols()));
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const float v = static_cast<float>(values(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  std::ofstream side = open_output(feature_sidecar_path(path));
  for (std::size_t r = 0; r < row_tokens.size(); ++r) side << r << '\t' << row_tokens[r] << '\n';
}

void write_split(const fs::path& dir, const SplitDataset& split) {
  fs::create_directories(dir);
  auto dump = [&](const char* name, const std::vector<IndexPair>& pairs) {
    std::ofstream out = open_output(dir / name);
    for (const auto& p : pairs) out << p.user << '\t' << p.item << '\n';
  };
  dump("train.tsv", split.train);
  dump("valid.tsv", split.valid);
  dump("test.tsv", split.test);
  std::ofstream maps = open_output(dir / "maps.tsv");
  for (std::size_t u = 0; u < split.user_tokens.size(); ++u) maps << "user\t" << u << '\t' << split.user_tokens[u] << '\n';
  for (std::size_t i = 0; i < split.item_tokens.size(); ++i) maps << "item\t" << i << '\t' << split.item_tokens[i] << '\n';
}

SplitDataset read_split(const fs::path& dir) {
  SplitDataset split;
  {
    const fs::path path = dir / "maps.tsv";
    std::ifstream in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::uint32_t, std::string> users, items;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      auto parts = split_tabs(line);
      if (parts.size() < 3 || (parts[0] != "user" && parts[0] != "item")) {
        throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no));
      }
      (parts[0] == "user" ? users : items)[parse_index(parts[1], path, line_no)] = parts[2];
    }
    for (const auto& [idx, token] : users) {
      if (idx != split.user_tokens.size()) throw Error(ErrorCode::MalformedLine, "non-contiguous user indices in maps.tsv");
      split.user_map.emplace(token, idx);
      split.user_tokens.push_back(token);
    }
    for (const auto& [idx, token] : items) {
      if (idx != split.item_tokens.size()) throw Error(ErrorCode::MalformedLine, "non-contiguous item indices in maps.tsv");
      split.item_map.emplace(token, idx);
      split.item_tokens.push_back(token);
    }
  }
  split.n_users = static_cast<std::uint32_t>(split.user_tokens.size());
  split.n_items = static_cast<std::uint32_t>(split.item_tokens.size());
  auto load = [&](const char* name) {
    std::vector<IndexPair> out;
    for (auto [u, i] : read_index_pairs(dir / name)) {
      if (u >= split.n_users || i >= split.n_items) {
        throw Error(ErrorCode::IndexOutOfRange, std::string(name) + " references an unmapped index");
      }
      out.push_back({u, i});
    }
    return out;
  };
  split.train = load("train.tsv");
  split.valid = load("valid.tsv");
  split.test = load("test.tsv");
  return split;
}

}  // namespace mentor
