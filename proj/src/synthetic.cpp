#include "mentor/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "mentor/error.hpp"
#include "mentor/rng.hpp"

namespace mentor {

namespace {

std::string token(char prefix, std::uint32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05u", prefix, i);
  return buf;
}

double gaussian(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint32_t block_of(std::uint32_t i, std::uint32_t n, std::uint32_t blocks) {
  return static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) * blocks / n);
}

Matrix block_features(const SyntheticSpec& spec, std::uint32_t width, std::uint32_t offset, Rng& rng) {
  Matrix f(spec.n_items, width);
  for (std::uint32_t i = 0; i < spec.n_items; ++i) {
    const std::uint32_t b = block_of(i, spec.n_items, spec.n_blocks);
    for (std::uint32_t c = 0; c < width; ++c) {
      f(i, c) = ((c + offset) % width == b % width ? 1.0 : 0.0) + spec.noise * gaussian(rng);
    }
  }
  round_to_float(f);
  return f;
}

}  // namespace

SyntheticData make_block_dataset(const SyntheticSpec& spec) {
  if (spec.n_blocks == 0 || spec.n_blocks > spec.n_users || spec.n_blocks > spec.n_items) {
    throw Error(ErrorCode::RangeError, "synthetic block count");
  }
  Rng rng(spec.seed);
  Rng interaction_rng = rng.split(0);
  Rng visual_rng = rng.split(1);
  Rng textual_rng = rng.split(2);
  SyntheticData data;
  for (std::uint32_t u = 0; u < spec.n_users; ++u) {
    const std::uint32_t b = block_of(u, spec.n_users, spec.n_blocks);
    for (std::uint32_t i = 0; i < spec.n_items; ++i) {
      if (block_of(i, spec.n_items, spec.n_blocks) != b) continue;
      if (spec.density < 1.0 && interaction_rng.uniform() >= spec.density) continue;
      data.raw.records.emplace_back(token('u', u), token('i', i));
    }
  }
  for (std::uint32_t i = 0; i < spec.n_items; ++i) data.item_tokens.push_back(token('i', i));
  data.visual = block_features(spec, spec.visual_dim, 0, visual_rng);
  data.textual = block_features(spec, spec.textual_dim, 1, textual_rng);
  return data;
}

void write_synthetic_fixture(const std::filesystem::path& dir, const SyntheticSpec& spec) {
  const SyntheticData data = make_block_dataset(spec);
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "interactions.tsv", std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / "interactions.tsv").string());
  out << "# user\titem\n";
  for (const auto& [u, i] : data.raw.records) out << u << '\t' << i << '\n';
  write_features(dir / "visual.mmf", data.visual, data.item_tokens);
  write_features(dir / "textual.mmf", data.textual, data.item_tokens);
}

}  // namespace mentor
