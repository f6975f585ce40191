#pragma once

// Run configuration: an INI file with [geometry], [model], [train] and
// [paths] sections. Every key must sit in its own section; unknown keys,
// misplaced keys and unparsable values are errors that name the key.
//
//   [geometry]  patch_size stride pad image_size
//   [model]     reeig_eps cov_eps depth
//   [train]     lr_stiefel lr_conv alpha beta gamma epochs seed feature_bank
//   [paths]     ir_dir vi_dir out_dir
//
// ir_dir, vi_dir, out_dir and epochs are required. Relative paths resolve
// against the directory holding the config file.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "spdfuse/error.hpp"
#include "spdfuse/pipeline.hpp"

namespace spdfuse {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int image_size = 64;
  std::string ir_dir;
  std::string vi_dir;
  std::string out_dir;

  void validate() const;
};

namespace detail {

inline const std::map<std::string, std::string>& config_key_sections() {
  static const std::map<std::string, std::string> keys{
      {"patch_size", "geometry"}, {"stride", "geometry"},    {"pad", "geometry"},        {"image_size", "geometry"},
      {"reeig_eps", "model"},     {"cov_eps", "model"},      {"depth", "model"},         {"lr_stiefel", "train"},
      {"lr_conv", "train"},       {"alpha", "train"},        {"beta", "train"},          {"gamma", "train"},
      {"epochs", "train"},        {"seed", "train"},         {"feature_bank", "train"},  {"ir_dir", "paths"},
      {"vi_dir", "paths"},        {"out_dir", "paths"},
  };
  return keys;
}

inline constexpr std::array<const char*, 4> kRequiredConfigKeys{"ir_dir", "vi_dir", "out_dir", "epochs"};

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw Error(ErrorCode::ConfigError, "config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace detail

inline void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + why);
  };
  const PatchGeometry& g = model.geometry;
  if (g.patch_size <= 0) fail("patch_size", "must be > 0");
  if (g.stride <= 0 || g.stride > g.patch_size) fail("stride", "must satisfy 0 < stride <= patch_size");
  if (g.pad < 0) fail("pad", "must be >= 0");
  if (image_size <= 0) fail("image_size", "must be > 0");
  if (g.image_h != image_size || g.image_w != image_size) fail("image_size", "does not match the patch geometry");
  try {
    g.validate();
  } catch (const Error& e) {
    fail("image_size", e.what());
  }
  if (!(model.reeig_eps > 0.0)) fail("reeig_eps", "must be > 0");
  if (!(model.cov_eps > 0.0)) fail("cov_eps", "must be > 0");
  if (model.depth < 1) fail("depth", "must be >= 1");
  if (!(train.lr_stiefel > 0.0)) fail("lr_stiefel", "must be > 0");
  if (!(train.adam.lr > 0.0)) fail("lr_conv", "must be > 0");
  if (!(train.weights.alpha >= 0.0)) fail("alpha", "must be >= 0");
  if (!(train.weights.beta >= 0.0)) fail("beta", "must be >= 0");
  if (!(train.weights.gamma >= 0.0)) fail("gamma", "must be >= 0");
  if (train.epochs < 1) fail("epochs", "must be >= 1");
  try {
    FeatureBank::by_name(train.feature_bank);
  } catch (const Error& e) {
    fail("feature_bank", e.what());
  }
}

/// Parses config text. `base_dir` anchors relative paths.
inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config syntax error: ") + e.what());
  }

  const auto& sections = detail::config_key_sections();
  std::map<std::string, std::string> values;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const auto it = sections.find(name);
      if (it != sections.end()) {
        throw Error(ErrorCode::ConfigError, "config key '" + name + "' must be in section [" + it->second + "]");
      }
      throw Error(ErrorCode::ConfigError, "unknown config key '" + name + "'");
    }
    for (const auto& [key, leaf] : node) {
      const auto it = sections.find(key);
      if (it == sections.end()) {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "' in section [" + name + "]");
      }
      if (it->second != name) {
        throw Error(ErrorCode::ConfigError,
                    "config key '" + key + "' belongs in section [" + it->second + "], found in [" + name + "]");
      }
      values[key] = leaf.get_value<std::string>();
    }
  }
  for (const char* key : detail::kRequiredConfigKeys) {
    if (!values.count(key)) throw Error(ErrorCode::ConfigError, std::string("missing required config key '") + key + "'");
  }

  RunConfig cfg;
  PatchGeometry& g = cfg.model.geometry;
  auto get = [&](const char* key, auto& out) {
    const auto it = values.find(key);
    if (it == values.end()) return;
    using T = std::decay_t<decltype(out)>;
    if constexpr (std::is_same_v<T, std::string>) {
      if (it->second.empty()) throw Error(ErrorCode::ConfigError, std::string("config key '") + key + "' is empty");
      out = it->second;
    } else {
      out = detail::parse_number<T>(key, it->second);
    }
  };
  get("patch_size", g.patch_size);
  get("stride", g.stride);
  get("pad", g.pad);
  get("image_size", cfg.image_size);
  g.image_h = g.image_w = cfg.image_size;
  get("reeig_eps", cfg.model.reeig_eps);
  get("cov_eps", cfg.model.cov_eps);
  get("depth", cfg.model.depth);
  get("lr_stiefel", cfg.train.lr_stiefel);
  get("lr_conv", cfg.train.adam.lr);
  get("alpha", cfg.train.weights.alpha);
  get("beta", cfg.train.weights.beta);
  get("gamma", cfg.train.weights.gamma);
  get("epochs", cfg.train.epochs);
  get("seed", cfg.train.seed);
  get("feature_bank", cfg.train.feature_bank);
  get("ir_dir", cfg.ir_dir);
  get("vi_dir", cfg.vi_dir);
  get("out_dir", cfg.out_dir);

  auto anchor = [&](std::string& p) {
    if (!base_dir.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
  };
  anchor(cfg.ir_dir);
  anchor(cfg.vi_dir);
  anchor(cfg.out_dir);
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::ConfigError, "cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), std::filesystem::path(path).parent_path());
}

}  // namespace spdfuse
