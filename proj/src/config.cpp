#include "mentor/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mentor/error.hpp"
#include "mentor/tensor.hpp"

namespace mentor {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::TypeError, key + " expects a number, got '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    if (value.empty() || value[0] == '-' || value[0] == '+') throw std::invalid_argument(value);
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::TypeError, key + " expects a non-negative integer, got '" + value + "'");
  }
}

unsigned parse_unsigned(const std::string& key, const std::string& value) {
  const std::uint64_t v = parse_uint(key, value);
  if (v > std::numeric_limits<unsigned>::max()) throw Error(ErrorCode::RangeError, key + " too large");
  return static_cast<unsigned>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::TypeError, key + " expects a boolean, got '" + value + "'");
}

AlignLevels parse_levels(const std::string& key, const std::string& value) {
  AlignLevels levels = AlignLevels::none();
  if (value == "none" || value.empty()) return levels;
  if (value == "all") return AlignLevels{};
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "L1") levels.l1 = true;
    else if (item == "L2") levels.l2 = true;
    else if (item == "L3") levels.l3 = true;
    else if (item == "L4") levels.l4 = true;
    else throw Error(ErrorCode::TypeError, key + " expects a subset of L1,L2,L3,L4, got '" + item + "'");
  }
  return levels;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field double_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
          [member](const TrainConfig& c) { return fmt_double(c.*member); }};
}

Field unsigned_field(unsigned TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_unsigned(k, v); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"learning_rate", double_field(&TrainConfig::learning_rate)},
      {"epochs", unsigned_field(&TrainConfig::epochs)},
      {"batch_size", unsigned_field(&TrainConfig::batch_size)},
      {"early_stop_patience", unsigned_field(&TrainConfig::early_stop_patience)},
      {"d", unsigned_field(&TrainConfig::d)},
      {"L", unsigned_field(&TrainConfig::L)},
      {"k", unsigned_field(&TrainConfig::k)},
      {"item_layers", unsigned_field(&TrainConfig::item_layers)},
      {"normalize_item_graph",
       {[](TrainConfig& c, const std::string& k, const std::string& v) { c.normalize_item_graph = parse_bool(k, v); },
        [](const TrainConfig& c) { return std::string(c.normalize_item_graph ? "true" : "false"); }}},
      {"p", double_field(&TrainConfig::p)},
      {"lambda_f", double_field(&TrainConfig::lambda_f)},
      {"lambda_g", double_field(&TrainConfig::lambda_g)},
      {"lambda_align", double_field(&TrainConfig::lambda_align)},
      {"tau", double_field(&TrainConfig::tau)},
      {"lambda_e", double_field(&TrainConfig::lambda_e)},
      {"eps", double_field(&TrainConfig::eps)},
      {"seed",
       {[](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); },
        [](const TrainConfig& c) { return std::to_string(c.seed); }}},
      {"fusion",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          if (v == "sum") c.fusion = Fusion::Sum;
          else if (v == "concat") c.fusion = Fusion::Concat;
          else throw Error(ErrorCode::TypeError, k + " expects sum|concat, got '" + v + "'");
        },
        [](const TrainConfig& c) { return to_string(c.fusion); }}},
      {"nce_negatives",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          if (v == "batch") c.nce_negatives = NceNegatives::Batch;
          else if (v == "all") c.nce_negatives = NceNegatives::All;
          else throw Error(ErrorCode::TypeError, k + " expects batch|all, got '" + v + "'");
        },
        [](const TrainConfig& c) { return to_string(c.nce_negatives); }}},
      {"align_levels",
       {[](TrainConfig& c, const std::string& k, const std::string& v) { c.align_levels = parse_levels(k, v); },
        [](const TrainConfig& c) { return to_string(c.align_levels); }}},
      {"core", unsigned_field(&TrainConfig::core)},
  };
  return table;
}

}  // namespace

std::string to_string(Fusion f) { return f == Fusion::Concat ? "concat" : "sum"; }
std::string to_string(NceNegatives n) { return n == NceNegatives::All ? "all" : "batch"; }

std::string to_string(const AlignLevels& levels) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(levels.l1, "L1");
  add(levels.l2, "L2");
  add(levels.l3, "L3");
  add(levels.l4, "L4");
  return out.empty() ? "none" : out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, trim(value));
      return;
    }
  }
  throw Error(ErrorCode::UnknownKey, key);
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

std::uint64_t config_hash(const TrainConfig& config) { return fnv1a(format_config(config)); }

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* key, const char* rule) {
    if (!ok) throw Error(ErrorCode::RangeError, std::string(key) + " must be " + rule);
  };
  require(c.learning_rate > 0, "learning_rate", "> 0");
  require(c.batch_size >= 1, "batch_size", ">= 1");
  require(c.d >= 1, "d", ">= 1");
  require(c.k >= 1, "k", ">= 1");
  require(c.item_layers >= 1, "item_layers", ">= 1");
  require(c.p >= 0 && c.p < 1, "p", "in [0, 1)");
  require(c.lambda_f >= 0, "lambda_f", ">= 0");
  require(c.lambda_g >= 0, "lambda_g", ">= 0");
  require(c.lambda_align >= 0, "lambda_align", ">= 0");
  require(c.lambda_e >= 0, "lambda_e", ">= 0");
  require(c.tau > 0, "tau", "> 0");
  require(c.eps > 0, "eps", "> 0");
  require(c.core >= 1, "core", ">= 1");
  require(c.lambda_g == 0 || c.L >= 1, "L", ">= 1 when the graph perturbation term is enabled");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::TypeError, "config line " + std::to_string(line_no) + " is not `key = value`");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ResolvedConfig parse_config(const std::filesystem::path& file, const std::map<std::string, std::string>& overrides) {
  ResolvedConfig resolved;
  auto apply = [&](const std::string& key, const std::string& value) {
    if (key == "data_dir") resolved.paths.data_dir = value;
    else if (key == "out_dir") resolved.paths.out_dir = value;
    else set_config_value(resolved.train, key, value);
  };
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, file.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    resolved.config_file_hash = fnv1a(text);
    for (const auto& [key, value] : parse_key_values(text)) apply(key, value);
  }
  for (const auto& [key, value] : overrides) apply(key, value);
  validate(resolved.train);
  return resolved;
}

}  // namespace mentor
