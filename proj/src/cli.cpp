#include "mentor/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mentor/error.hpp"
#include "mentor/eval.hpp"
#include "mentor/graphs.hpp"
#include "mentor/parallel.hpp"
#include "mentor/synthetic.hpp"
#include "mentor/train.hpp"

namespace mentor {

namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& path, const std::string& produced_by) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::MissingPrerequisite, path.string() + " (run `" + produced_by + "` first)");
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// run.conf + manifest.json, written before any work starts
void write_manifest(const ResolvedConfig& config, const std::string& subcommand,
                    const std::map<std::string, std::string>& extra = {}) {
  const fs::path& out = config.paths.out_dir;
  fs::create_directories(out);
  {
    std::ofstream conf(out / ("run_" + subcommand + ".conf"), std::ios::trunc);
    conf << format_config(config.train);
    conf << "data_dir = " << config.paths.data_dir.string() << "\n";
    conf << "out_dir = " << config.paths.out_dir.string() << "\n";
  }
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["data_dir"] = config.paths.data_dir.string();
  j["out_dir"] = config.paths.out_dir.string();
  j["seed"] = config.train.seed;
  j["config_file_hash"] = hex64(config.config_file_hash);
  j["config_hash"] = hex64(config_hash(config.train));
  nlohmann::ordered_json cfg;
  for (const auto& [key, value] : parse_key_values(format_config(config.train))) cfg[key] = value;
  j["config"] = cfg;
  for (const auto& [key, value] : extra) j[key] = value;
  std::ofstream m(out / ("manifest_" + subcommand + ".json"), std::ios::trunc);
  if (!m) throw Error(ErrorCode::Io, "cannot write manifest under " + out.string());
  m << j.dump(2) << '\n';
}

void write_metrics_tsv(const fs::path& path, const std::string& label, const MetricsReport& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "variant\tR@10\tR@20\tN@10\tN@20\n" << std::fixed << std::setprecision(4);
  out << label << '\t' << m.recall10 << '\t' << m.recall20 << '\t' << m.ndcg10 << '\t' << m.ndcg20 << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

ModelState load_model_for(const ResolvedConfig& config, const ModelInputs& inputs, std::ostream& err) {
  const PreparedLayout layout{config.paths.out_dir};
  require_file(layout.checkpoint(), "mentor train");
  Checkpoint ck = load_checkpoint(layout.checkpoint());
  if (ck.config_hash != config_hash(config.train)) {
    err << "warning: checkpoint was trained with a different configuration\n";
  }
  const ModelState expected = init_parameters(model_dims(inputs, config.train), 0);
  auto want = expected.tensors();
  auto have = ck.state.tensors();
  for (std::size_t t = 0; t < want.size(); ++t) {
    if (want[t]->rows() != have[t]->rows() || want[t]->cols() != have[t]->cols()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "checkpoint tensor " + std::string(ModelState::kNames[t]) + " does not match the data/config");
    }
  }
  return ck.state;
}

}  // namespace

void prepare_dataset(const ResolvedConfig& config, std::ostream& log) {
  const fs::path& data = config.paths.data_dir;
  const PreparedLayout layout{config.paths.out_dir};
  const RawInteractions raw = load_interactions(data / "interactions.tsv");
  const RawInteractions core = apply_k_core(raw, config.train.core);
  const SplitDataset split = build_split(core, SplitRatios{}, config.train.seed);
  log << "interactions: " << raw.records.size() << " raw, " << core.records.size() << " after " << config.train.core
      << "-core; users " << split.n_users << ", items " << split.n_items << "; train/valid/test "
      << split.train.size() << "/" << split.valid.size() << "/" << split.test.size() << "\n";
  write_split(layout.dir, split);

  const FeatureMatrix visual = load_features(data / "visual.mmf", split.item_map, Modality::Visual);
  const FeatureMatrix textual = load_features(data / "textual.mmf", split.item_map, Modality::Textual);
  write_features(layout.visual_features(), visual.values, split.item_tokens);
  write_features(layout.textual_features(), textual.values, split.item_tokens);
  save_item_graph(layout.visual_graph(), build_item_knn(visual, config.train.k, config.train.normalize_item_graph));
  save_item_graph(layout.textual_graph(), build_item_knn(textual, config.train.k, config.train.normalize_item_graph));
}

PreparedData load_prepared(const ResolvedConfig& config) {
  const PreparedLayout layout{config.paths.out_dir};
  for (const char* name : {"train.tsv", "valid.tsv", "test.tsv", "maps.tsv"}) require_file(layout.dir / name, "mentor prepare");
  require_file(layout.visual_features(), "mentor prepare");
  require_file(layout.textual_features(), "mentor prepare");
  PreparedData p;
  p.split = read_split(layout.dir);
  p.visual = load_features(layout.visual_features(), p.split.item_map, Modality::Visual);
  p.textual = load_features(layout.textual_features(), p.split.item_map, Modality::Textual);
  p.inputs.n_users = p.split.n_users;
  p.inputs.n_items = p.split.n_items;
  p.inputs.adjacency = build_norm_adjacency(p.split);
  auto graph = [&](const fs::path& cache, const FeatureMatrix& f) {
    if (fs::exists(cache)) {
      ItemItemGraph g = load_item_graph(cache);
      if (g.k == config.train.k && g.normalized == config.train.normalize_item_graph && g.modality == f.modality &&
          g.weights.rows() == p.split.n_items) {
        return g;
      }
    }
    return build_item_knn(f, config.train.k, config.train.normalize_item_graph);
  };
  p.inputs.visual_graph = graph(layout.visual_graph(), p.visual);
  p.inputs.textual_graph = graph(layout.textual_graph(), p.textual);
  p.inputs.visual_features = p.visual.values;
  p.inputs.textual_features = p.textual.values;
  return p;
}

std::vector<GridAxis> default_grid_preset() {
  return {
      {"p", {"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7"}},
      {"lambda_f", {"0.5", "1", "1.5", "2", "2.5"}},
      {"lambda_g", {"1e-2", "1e-3", "1e-4"}},
      {"tau", {"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8"}},
      {"lambda_align", {"0.1", "0.2", "0.3", "1", "2", "3"}},
  };
}

std::vector<std::map<std::string, std::string>> enumerate_grid(const std::vector<GridAxis>& axes) {
  std::vector<std::map<std::string, std::string>> out{{}};
  for (const auto& [key, values] : axes) {
    if (values.empty()) throw Error(ErrorCode::RangeError, "grid axis '" + key + "' has no values");
    std::vector<std::map<std::string, std::string>> next;
    next.reserve(out.size() * values.size());
    for (const auto& point : out) {
      for (const auto& v : values) {
        auto p = point;
        p[key] = v;
        next.push_back(std::move(p));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<GridAxis> parse_grid_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<GridAxis> axes;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos || line[a] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::TypeError, "grid line is not `key = v1, v2`: " + line);
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
      throw Error(ErrorCode::UnknownKey, key);
    }
    std::string values = line.substr(eq + 1);
    if (!values.empty() && values.back() == '\r') values.pop_back();
    axes.emplace_back(key, split_list(values));
  }
  return axes;
}

namespace {

struct CommonOptions {
  std::string config_file;
  std::map<std::string, std::string> flag_values;
};

std::string flag_name(const std::string& key) {
  std::string dashed = key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  return dashed == key ? "--" + key : "--" + dashed + ",--" + key;
}

void add_common(CLI::App* app, CommonOptions& opts) {
  app->add_option("--config", opts.config_file, "flat key = value config file");
  app->add_option("--data-dir,--data_dir", opts.flag_values["data_dir"], "raw dataset directory");
  app->add_option("--out-dir,--out_dir", opts.flag_values["out_dir"], "output directory");
  for (const auto& key : config_keys()) app->add_option(flag_name(key), opts.flag_values[key], "config: " + key);
}

ResolvedConfig resolve(CLI::App* app, const CommonOptions& opts) {
  std::map<std::string, std::string> overrides;
  for (const auto& [key, value] : opts.flag_values) {
    const std::string dashed = [&] {
      std::string d = key;
      std::replace(d.begin(), d.end(), '_', '-');
      return "--" + d;
    }();
    if (app->get_option(dashed)->count() > 0) overrides[key] = value;
  }
  return parse_config(opts.config_file, overrides);
}

int cmd_prepare(const ResolvedConfig& config, std::ostream& out) {
  write_manifest(config, "prepare");
  prepare_dataset(config, out);
  out << "prepared " << config.paths.out_dir.string() << "\n";
  return 0;
}

int cmd_train(const ResolvedConfig& config, std::ostream& out) {
  const PreparedData data = load_prepared(config);
  write_manifest(config, "train");
  const PreparedLayout layout{config.paths.out_dir};
  std::ofstream log(layout.train_log(), std::ios::trunc);
  if (!log) throw Error(ErrorCode::Io, "cannot write " + layout.train_log().string());
  const TrainResult result = train_loop(config.train, data.split, data.inputs, [&](const EpochLog& e) {
    log << to_json_line(e, config.train) << '\n';
    out << "epoch " << e.epoch << " loss " << e.loss.total << " valid R@20 " << e.valid.recall20
        << (e.improved ? " *" : "") << "\n";
  });
  save_checkpoint(layout.checkpoint(), result.best, config_hash(config.train));
  out << "best epoch " << result.best_epoch << " valid R@20 " << result.best_valid.recall20 << "\n";
  return 0;
}

int cmd_evaluate(const ResolvedConfig& config, const std::string& split_name, const std::string& label,
                 bool per_user, std::ostream& out, std::ostream& err) {
  const PreparedData data = load_prepared(config);
  const ModelState state = load_model_for(config, data.inputs, err);
  write_manifest(config, "evaluate");
  const EvalSplit which = split_name == "valid" ? EvalSplit::Valid : EvalSplit::Test;
  const MetricsReport report =
      evaluate(fused_embeddings(state, data.inputs, forward_options(config.train)), data.split, which);
  write_metrics_tsv(config.paths.out_dir / "metrics.tsv", label, report);
  if (per_user) write_per_user_jsonl(config.paths.out_dir / "metrics_per_user.jsonl", report);
  out << std::fixed << std::setprecision(4) << split_name << " R@10 " << report.recall10 << " R@20 "
      << report.recall20 << " N@10 " << report.ndcg10 << " N@20 " << report.ndcg20 << "\n";
  return 0;
}

int cmd_ablate(const ResolvedConfig& config, const std::string& variant_list, std::ostream& out) {
  std::vector<Variant> variants;
  for (const auto& name : split_list(variant_list)) variants.push_back(parse_variant(name));
  const PreparedData data = load_prepared(config);
  write_manifest(config, "ablate", {{"variants", variant_list}});
  const auto rows = run_ablation(config.train, data.split, data.inputs, variants);
  write_ablation_tsv(config.paths.out_dir / "ablation.tsv", rows, EvalSplit::Test);
  write_ablation_tsv(config.paths.out_dir / "ablation_valid.tsv", rows, EvalSplit::Valid);
  for (const auto& row : rows) {
    out << to_string(row.variant) << " test R@20 " << row.test.recall20 << " N@20 " << row.test.ndcg20 << "\n";
  }
  return 0;
}

int cmd_grid(const ResolvedConfig& config, const std::string& preset, const std::string& grid_file,
             std::size_t max_runs, unsigned workers, bool dry_run, std::ostream& out) {
  const std::vector<GridAxis> axes = grid_file.empty() ? (preset == "default" ? default_grid_preset()
                                                                           : throw Error(ErrorCode::TypeError,
                                                                                         "unknown grid preset '" +
                                                                                             preset + "'"))
                                                       : parse_grid_file(grid_file);
  auto points = enumerate_grid(axes);
  if (max_runs > 0 && points.size() > max_runs) points.resize(max_runs);
  std::vector<TrainConfig> configs;
  for (const auto& point : points) {
    TrainConfig c = config.train;
    for (const auto& [key, value] : point) set_config_value(c, key, value);
    validate(c);
    configs.push_back(c);
  }
  write_manifest(config, "grid", {{"preset", grid_file.empty() ? preset : grid_file},
                                  {"runs", std::to_string(points.size())}});

  std::vector<double> recall(points.size(), -1.0);
  std::vector<unsigned> best_epoch(points.size(), 0);
  if (!dry_run) {
    const PreparedData data = load_prepared(config);
    const bool graph_axis = std::any_of(axes.begin(), axes.end(), [](const GridAxis& a) {
      return a.first == "k" || a.first == "normalize_item_graph";
    });
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < points.size(); i = next++) {
        const ModelInputs inputs =
            graph_axis ? build_model_inputs(data.split, data.visual, data.textual, configs[i]) : ModelInputs{};
        const TrainResult r = train_loop(configs[i], data.split, graph_axis ? inputs : data.inputs);
        recall[i] = r.best_valid.recall20;
        best_epoch[i] = r.best_epoch;
      }
    };
    const unsigned n = std::max(1u, std::min({workers, worker_limit(), static_cast<unsigned>(points.size())}));
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        try {
          worker();
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = points.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::ofstream tsv(config.paths.out_dir / "grid.tsv", std::ios::trunc);
  tsv << "run";
  for (const auto& [key, values] : axes) tsv << '\t' << key;
  tsv << "\tvalid_R@20\tbest_epoch\n";
  std::size_t best = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    tsv << i;
    for (const auto& [key, values] : axes) tsv << '\t' << points[i].at(key);
    if (dry_run) {
      tsv << "\t-\t-\n";
    } else {
      tsv << '\t' << std::fixed << std::setprecision(6) << recall[i] << '\t' << best_epoch[i] << '\n';
      if (recall[i] > recall[best]) best = i;
    }
  }
  out << points.size() << " grid points\n";
  if (!dry_run && !points.empty()) {
    std::ofstream best_conf(config.paths.out_dir / "best.conf", std::ios::trunc);
    best_conf << format_config(configs[best]);
    out << "best run " << best << " valid R@20 " << recall[best] << "\n";
  }
  return 0;
}

int cmd_export(const ResolvedConfig& config, const std::string& channels, std::size_t sample, std::uint64_t seed,
               std::ostream& out, std::ostream& err) {
  const PreparedData data = load_prepared(config);
  const ModelState state = load_model_for(config, data.inputs, err);
  write_manifest(config, "export-embeddings", {{"channels", channels}, {"sample", std::to_string(sample)}});
  const auto picked = export_embeddings(state, data.inputs, forward_options(config.train), split_list(channels),
                                        config.paths.out_dir, sample, seed);
  out << "exported " << picked.size() << " items per channel\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal graph recommender: training and evaluation engine", "mentor"};
  app.require_subcommand(1);

  CommonOptions prepare_opts, train_opts, eval_opts, ablate_opts, grid_opts, export_opts;
  CLI::App* prepare = app.add_subcommand("prepare", "k-core filter, split, align features, cache item graphs");
  add_common(prepare, prepare_opts);
  CLI::App* train = app.add_subcommand("train", "train and write the best checkpoint and an epoch log");
  add_common(train, train_opts);

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "top-K metrics of the trained checkpoint");
  add_common(evaluate_cmd, eval_opts);
  std::string eval_split = "test";
  std::string eval_label = "mentor";
  bool per_user = false;
  evaluate_cmd->add_option("--split", eval_split, "valid or test")->check(CLI::IsMember({"valid", "test"}));
  evaluate_cmd->add_option("--label", eval_label, "row label in metrics.tsv");
  evaluate_cmd->add_flag("--per-user", per_user, "also write per-user JSON lines");

  CLI::App* ablate = app.add_subcommand("ablate", "train ablation variants and write a comparison table");
  add_common(ablate, ablate_opts);
  std::string variants = "base,L1,L2,L3,full,fg,f,g";
  ablate->add_option("--variants", variants, "comma-separated subset of base,L1,L2,L3,full,fg,f,g");

  CLI::App* grid = app.add_subcommand("grid", "grid search by validation Recall@20");
  add_common(grid, grid_opts);
  std::string preset = "default";
  std::string grid_file;
  std::size_t max_runs = 0;
  unsigned workers = 1;
  bool dry_run = false;
  grid->add_option("--preset", preset, "built-in search space");
  grid->add_option("--grid-file", grid_file, "custom axes, `key = v1, v2` per line");
  grid->add_option("--max-runs", max_runs, "evaluate only the first N grid points");
  grid->add_option("--workers", workers, "concurrent runs (capped by MENTOR_THREADS)");
  grid->add_flag("--dry-run", dry_run, "enumerate the grid without training");

  CLI::App* export_cmd = app.add_subcommand("export-embeddings", "write sampled item embeddings for plotting");
  add_common(export_cmd, export_opts);
  std::string channels = "visual,textual";
  std::size_t sample = 500;
  std::uint64_t sample_seed = 0;
  export_cmd->add_option("--channels", channels, "subset of id,visual,textual,fused");
  export_cmd->add_option("--sample", sample, "items to sample");
  export_cmd->add_option("--sample-seed", sample_seed, "sampling seed");

  CLI::App* synth = app.add_subcommand("synth", "write the block-structured synthetic fixture");
  SyntheticSpec spec;
  std::string synth_dir = "synthetic";
  synth->add_option("--out-dir", synth_dir, "fixture directory");
  synth->add_option("--users", spec.n_users);
  synth->add_option("--items", spec.n_items);
  synth->add_option("--blocks", spec.n_blocks);
  synth->add_option("--noise", spec.noise);
  synth->add_option("--density", spec.density);
  synth->add_option("--seed", spec.seed);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 2;
    }
    if (*prepare) return cmd_prepare(resolve(prepare, prepare_opts), out);
    if (*train) return cmd_train(resolve(train, train_opts), out);
    if (*evaluate_cmd) {
      return cmd_evaluate(resolve(evaluate_cmd, eval_opts), eval_split, eval_label, per_user, out, err);
    }
    if (*ablate) return cmd_ablate(resolve(ablate, ablate_opts), variants, out);
    if (*grid) return cmd_grid(resolve(grid, grid_opts), preset, grid_file, max_runs, workers, dry_run, out);
    if (*export_cmd) {
      const ResolvedConfig config = resolve(export_cmd, export_opts);
      return cmd_export(config, channels, sample, sample_seed == 0 ? config.train.seed : sample_seed, out, err);
    }
    if (*synth) {
      write_synthetic_fixture(synth_dir, spec);
      out << "wrote " << synth_dir << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace mentor
