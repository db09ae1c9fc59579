#pragma once

// Flat key=value run configuration with `#` comments. The canonical
// serialization (sorted keys, defaults filled in, output-only keys dropped)
// is what the config hash is computed over.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "audex/error.hpp"
#include "audex/random.hpp"

namespace audex {

struct RunConfig {
  // data
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
  std::string embedding;  // precomputed embedding CSV; bypasses t-SNE
  std::size_t per_class = 0;

  // t-SNE
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;

  // training / expansion
  std::string strategy = "uniform";
  std::size_t n1 = 250;
  std::optional<std::size_t> n0;
  std::optional<double> ratio;
  std::string k = "auto";
  std::string m = "10%";
  std::size_t repetitions = 30;
  double padding = 0.05;
  std::vector<int> classes;
  std::optional<int> only_class;
  std::optional<int> baseline_class;
  std::vector<double> imbalance_ratios;
  std::size_t grid_resolution = 200;

  // extra trees
  std::size_t n_trees = 100;
  std::size_t max_features = 0;
  std::size_t min_samples_split = 2;
  double leaf_smoothing = 0.0;

  std::uint64_t seed = 0;

  // not part of the hash
  std::string out = "out";
  unsigned threads = 1;

  std::size_t resolved_n0() const {
    if (n0) return *n0;
    if (ratio) {
      const double v = static_cast<double>(n1) / *ratio;
      return std::max<std::size_t>(1, static_cast<std::size_t>(v + 0.5));
    }
    return n1;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string canonical_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_config_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !in.eof())
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  if constexpr (std::is_unsigned_v<T>)
    if (!value.empty() && value[0] == '-')
      throw ConfigError("config key '" + key + "' must be non-negative");
  return out;
}

template <typename T>
std::vector<T> parse_config_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_config_number<T>(key, item));
  }
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += canonical_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = detail::trim(std::string_view(line).substr(0, eq));
    std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return out;
}

inline RunConfig config_from_map(const std::map<std::string, std::string>& kv) {
  using detail::parse_config_list;
  using detail::parse_config_number;
  RunConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "images") c.images = value;
    else if (key == "labels") c.labels = value;
    else if (key == "test_images") c.test_images = value;
    else if (key == "test_labels") c.test_labels = value;
    else if (key == "embedding") c.embedding = value;
    else if (key == "per_class") c.per_class = parse_config_number<std::size_t>(key, value);
    else if (key == "tsne.perplexity") c.perplexity = parse_config_number<double>(key, value);
    else if (key == "tsne.iterations") c.iterations = parse_config_number<int>(key, value);
    else if (key == "tsne.learning_rate") c.learning_rate = parse_config_number<double>(key, value);
    else if (key == "tsne.early_exaggeration") c.early_exaggeration = parse_config_number<double>(key, value);
    else if (key == "strategy") c.strategy = value;
    else if (key == "n1") c.n1 = parse_config_number<std::size_t>(key, value);
    else if (key == "n0") c.n0 = parse_config_number<std::size_t>(key, value);
    else if (key == "ratio") c.ratio = parse_config_number<double>(key, value);
    else if (key == "k") c.k = value;
    else if (key == "m") c.m = value;
    else if (key == "repetitions") c.repetitions = parse_config_number<std::size_t>(key, value);
    else if (key == "padding") c.padding = parse_config_number<double>(key, value);
    else if (key == "classes") c.classes = parse_config_list<int>(key, value);
    else if (key == "only_class") c.only_class = parse_config_number<int>(key, value);
    else if (key == "baseline_class") c.baseline_class = parse_config_number<int>(key, value);
    else if (key == "imbalance_ratios") c.imbalance_ratios = parse_config_list<double>(key, value);
    else if (key == "grid_resolution") c.grid_resolution = parse_config_number<std::size_t>(key, value);
    else if (key == "trees.n_trees") c.n_trees = parse_config_number<std::size_t>(key, value);
    else if (key == "trees.max_features") c.max_features = parse_config_number<std::size_t>(key, value);
    else if (key == "trees.min_samples_split") c.min_samples_split = parse_config_number<std::size_t>(key, value);
    else if (key == "trees.leaf_smoothing") c.leaf_smoothing = parse_config_number<double>(key, value);
    else if (key == "seed") c.seed = parse_config_number<std::uint64_t>(key, value);
    else if (key == "out") c.out = value;
    else if (key == "threads") c.threads = parse_config_number<unsigned>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

inline RunConfig parse_run_config(std::string_view text) { return config_from_map(parse_key_values(text)); }

// Range checks that do not touch the filesystem.
inline void check_ranges(const RunConfig& c) {
  if (c.n1 == 0) throw ConfigError("n1 must be at least 1");
  if (c.n0 && *c.n0 == 0) throw ConfigError("n0 must be at least 1");
  if (c.ratio && !(*c.ratio > 0.0)) throw ConfigError("ratio must be positive");
  if (c.n0 && c.ratio) throw ConfigError("set either n0 or ratio, not both");
  if (c.repetitions == 0) throw ConfigError("repetitions must be at least 1");
  if (!(c.perplexity > 0.0)) throw ConfigError("tsne.perplexity must be positive");
  if (c.iterations < 250) throw ConfigError("tsne.iterations must be at least 250");
  if (!(c.learning_rate > 0.0)) throw ConfigError("tsne.learning_rate must be positive");
  if (!(c.early_exaggeration > 0.0)) throw ConfigError("tsne.early_exaggeration must be positive");
  if (!(c.padding >= 0.0)) throw ConfigError("padding must be non-negative");
  if (c.grid_resolution == 0) throw ConfigError("grid_resolution must be at least 1");
  if (c.n_trees == 0) throw ConfigError("trees.n_trees must be at least 1");
  if (c.min_samples_split < 2) throw ConfigError("trees.min_samples_split must be at least 2");
  if (!(c.leaf_smoothing >= 0.0)) throw ConfigError("trees.leaf_smoothing must be non-negative");
  for (double r : c.imbalance_ratios)
    if (!(r > 0.0)) throw ConfigError("imbalance_ratios must be positive");
  if (c.strategy != "uniform" && c.strategy != "random_users" && c.strategy != "counter_class")
    throw ConfigError("strategy must be uniform, random_users or counter_class");
  if ((c.test_images.empty()) != (c.test_labels.empty()))
    throw ConfigError("test_images and test_labels must be given together");
}

// Every referenced input path must exist.
inline void check_paths(const RunConfig& c) {
  for (const std::string* p : {&c.images, &c.labels, &c.test_images, &c.test_labels, &c.embedding})
    if (!p->empty() && !std::filesystem::exists(*p))
      throw ConfigError("input path does not exist: " + *p);
}

inline std::string canonical_config(const RunConfig& c) {
  using detail::canonical_double;
  using detail::join_list;
  std::map<std::string, std::string> kv{
      {"images", c.images},
      {"labels", c.labels},
      {"test_images", c.test_images},
      {"test_labels", c.test_labels},
      {"embedding", c.embedding},
      {"per_class", std::to_string(c.per_class)},
      {"tsne.perplexity", canonical_double(c.perplexity)},
      {"tsne.iterations", std::to_string(c.iterations)},
      {"tsne.learning_rate", canonical_double(c.learning_rate)},
      {"tsne.early_exaggeration", canonical_double(c.early_exaggeration)},
      {"strategy", c.strategy},
      {"n1", std::to_string(c.n1)},
      {"n0", std::to_string(c.resolved_n0())},
      {"k", c.k},
      {"m", c.m},
      {"repetitions", std::to_string(c.repetitions)},
      {"padding", canonical_double(c.padding)},
      {"classes", join_list(c.classes)},
      {"only_class", c.only_class ? std::to_string(*c.only_class) : ""},
      {"baseline_class", c.baseline_class ? std::to_string(*c.baseline_class) : ""},
      {"imbalance_ratios", join_list(c.imbalance_ratios)},
      {"grid_resolution", std::to_string(c.grid_resolution)},
      {"trees.n_trees", std::to_string(c.n_trees)},
      {"trees.max_features", std::to_string(c.max_features)},
      {"trees.min_samples_split", std::to_string(c.min_samples_split)},
      {"trees.leaf_smoothing", canonical_double(c.leaf_smoothing)},
      {"seed", std::to_string(c.seed)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(canonical_config(c))));
  return buf;
}

}  // namespace audex
