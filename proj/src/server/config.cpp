/*
 * Copyright 2026 The sliceval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "sliceval/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "sliceval/errors.hpp"
#include "sliceval/query.hpp"

namespace sliceval {
namespace {

namespace fs = std::filesystem;

const toml::node* lookup(const toml::table& t, std::string_view dotted) {
  const toml::node* node = t.at_path(dotted).node();
  return node;
}

std::string where(const toml::node& n) {
  const auto& src = n.source();
  return src.begin ? " (line " + std::to_string(src.begin.line) + ")" : "";
}

std::string required_string(const toml::table& t, std::string_view key) {
  const toml::node* n = lookup(t, key);
  if (!n) throw ConfigError("missing required key '" + std::string(key) + "'");
  const auto v = n->value<std::string>();
  if (!v || v->empty()) throw ConfigError("key '" + std::string(key) + "' must be a non-empty string" + where(*n));
  return *v;
}

std::optional<std::string> optional_string(const toml::table& t, std::string_view key) {
  const toml::node* n = lookup(t, key);
  if (!n) return std::nullopt;
  const auto v = n->value<std::string>();
  if (!v) throw ConfigError("key '" + std::string(key) + "' must be a string" + where(*n));
  return *v;
}

std::optional<double> optional_number(const toml::table& t, std::string_view key) {
  const toml::node* n = lookup(t, key);
  if (!n) return std::nullopt;
  const auto v = n->value<double>();
  if (!v || !std::isfinite(*v)) throw ConfigError("key '" + std::string(key) + "' must be a number" + where(*n));
  return *v;
}

std::optional<std::int64_t> optional_integer(const toml::table& t, std::string_view key, std::int64_t lo,
                                             std::int64_t hi) {
  const toml::node* n = lookup(t, key);
  if (!n) return std::nullopt;
  const auto v = n->value_exact<std::int64_t>();
  if (!v || *v < lo || *v > hi) {
    throw ConfigError("key '" + std::string(key) + "' must be an integer in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]" + where(*n));
  }
  return *v;
}

std::vector<std::string> string_list(const toml::table& t, std::string_view key) {
  const toml::node* n = lookup(t, key);
  if (!n) return {};
  const auto* arr = n->as_array();
  if (!arr) throw ConfigError("key '" + std::string(key) + "' must be an array of strings" + where(*n));
  std::vector<std::string> out;
  for (const auto& e : *arr) {
    const auto v = e.value<std::string>();
    if (!v) throw ConfigError("key '" + std::string(key) + "' must be an array of strings" + where(e));
    out.push_back(*v);
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

// "cmd arg" or ["cmd", "arg"]; a relative program with a slash resolves
// against the project directory.
PluginCommand plugin_command(const toml::node& n, const fs::path& dir, const std::string& key) {
  PluginCommand cmd;
  if (const auto s = n.value<std::string>()) {
    std::istringstream in(*s);
    for (std::string part; in >> part;) cmd.argv.push_back(part);
  } else if (const auto* arr = n.as_array()) {
    for (const auto& e : *arr) {
      const auto v = e.value<std::string>();
      if (!v) throw ConfigError("'" + key + "' entries must be strings" + where(e));
      cmd.argv.push_back(*v);
    }
  } else if (const auto* tbl = n.as_table()) {
    const toml::node* c = tbl->get("command");
    if (!c) throw ConfigError("missing required key '" + key + ".command'" + where(n));
    cmd = plugin_command(*c, dir, key + ".command");
    if (const auto wd = optional_string(*tbl, "working_dir")) cmd.working_dir = resolve(dir, *wd);
    return cmd;
  } else {
    throw ConfigError("'" + key + "' must be a command string, an argv array or a table" + where(n));
  }
  if (cmd.argv.empty()) throw ConfigError("'" + key + "' is an empty command" + where(n));
  auto& prog = cmd.argv.front();
  if (prog.find('/') != std::string::npos && !fs::path(prog).is_absolute()) prog = resolve(dir, prog).string();
  if (cmd.working_dir.empty()) cmd.working_dir = dir;
  return cmd;
}

}  // namespace

std::vector<ModelRef> ProjectConfig::model_refs() const {
  std::vector<ModelRef> out;
  for (const auto& m : models) out.push_back({m.model_id, m.function});
  return out;
}

std::vector<std::string> ProjectConfig::model_ids() const {
  std::vector<std::string> out;
  for (const auto& m : models) out.push_back(m.model_id);
  return out;
}

ProjectConfig parse_config(std::string_view text, const fs::path& project_dir) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("invalid TOML at line " + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }
  ProjectConfig c;
  c.project_dir = project_dir;
  c.metadata = resolve(project_dir, required_string(t, "metadata"));
  c.data_root = resolve(project_dir, required_string(t, "data_root"));
  c.id_column = required_string(t, "id_column");
  c.label_column = required_string(t, "label_column");
  c.data_file_column = optional_string(t, "data_file_column").value_or("");
  c.view = required_string(t, "view");

  const toml::node* models = t.get("models");
  if (!models) throw ConfigError("missing required key 'models'");
  const auto* model_arr = models->as_array();
  if (!model_arr || model_arr->empty()) throw ConfigError("'models' must be a non-empty array of tables" + where(*models));
  std::set<std::string> seen;
  for (std::size_t i = 0; i < model_arr->size(); ++i) {
    const auto* mt = (*model_arr)[i].as_table();
    const std::string key = "models[" + std::to_string(i) + "]";
    if (!mt) throw ConfigError("'" + key + "' must be a table");
    ModelConfig m;
    const auto id = optional_string(*mt, "id");
    if (!id || id->empty()) throw ConfigError("missing required key '" + key + ".id'");
    m.model_id = *id;
    m.function = optional_string(*mt, "function").value_or(m.model_id);
    if (!seen.insert(m.model_id).second) throw ConfigError("duplicate model id '" + m.model_id + "'");
    if (const toml::node* p = mt->get("plugin")) c.plugins.push_back(plugin_command(*p, project_dir, key + ".plugin"));
    c.models.push_back(std::move(m));
  }

  if (const toml::node* plugins = t.get("plugins")) {
    const auto* arr = plugins->as_array();
    if (!arr) throw ConfigError("'plugins' must be an array" + where(*plugins));
    for (std::size_t i = 0; i < arr->size(); ++i) {
      auto cmd = plugin_command((*arr)[i], project_dir, "plugins[" + std::to_string(i) + "]");
      if (std::find(c.plugins.begin(), c.plugins.end(), cmd) == c.plugins.end()) c.plugins.push_back(std::move(cmd));
    }
  }

  c.transforms = string_list(t, "transforms");
  std::set<std::string> tseen;
  for (const auto& tr : c.transforms) {
    if (tr == kNoTransform) throw ConfigError("'transforms' may not list \"none\"");
    if (!tseen.insert(tr).second) throw ConfigError("duplicate transform '" + tr + "'");
  }
  c.metrics = string_list(t, "metrics");
  if (c.metrics.empty()) c.metrics = {std::string(kAccuracy)};

  c.cache_dir = resolve(project_dir, optional_string(t, "cache_dir").value_or(kDefaultCacheDir));
  c.host = optional_string(t, "host").value_or(kDefaultHost);
  c.port = static_cast<std::uint16_t>(optional_integer(t, "port", 0, 65535).value_or(kDefaultPort));
  const auto hw = std::max<unsigned>(1, std::thread::hardware_concurrency());
  c.workers = static_cast<std::size_t>(optional_integer(t, "workers", 1, 1024).value_or(hw));
  c.plugin_timeout = std::chrono::milliseconds(
      optional_integer(t, "plugin_timeout_ms", 1, 24LL * 3600 * 1000).value_or(kDefaultPluginTimeout.count()));
  c.thresholds.decline_threshold = optional_number(t, "thresholds.decline").value_or(kDefaultDeclineThreshold);
  c.thresholds.variance_threshold = optional_number(t, "thresholds.variance").value_or(kDefaultVarianceThreshold);
  c.histogram_bins = static_cast<std::size_t>(optional_integer(t, "histogram.bins", 1, 1000).value_or(15));
  if (const toml::node* cols = lookup(t, "histogram.columns")) {
    const auto* tbl = cols->as_table();
    if (!tbl) throw ConfigError("'histogram.columns' must be a table of column id = bins" + where(*cols));
    for (const auto& [k, v] : *tbl) {
      const auto bins = v.value_exact<std::int64_t>();
      if (!bins || *bins < 1 || *bins > 1000) {
        throw ConfigError("'histogram.columns." + std::string(k.str()) + "' must be an integer in [1, 1000]");
      }
      c.column_bins[std::string(k.str())] = static_cast<std::size_t>(*bins);
    }
  }
  if (const auto ui = optional_string(t, "ui_dir")) c.ui_dir = resolve(project_dir, *ui);

  if (!fs::is_regular_file(c.metadata)) throw ConfigError("metadata file does not exist: " + c.metadata.string());
  if (!fs::is_directory(c.data_root)) throw ConfigError("data_root is not a directory: " + c.data_root.string());
  if (c.ui_dir && !fs::is_directory(*c.ui_dir)) throw ConfigError("ui_dir is not a directory: " + c.ui_dir->string());
  return c;
}

ProjectConfig load_config(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const fs::path abs = fs::absolute(file).lexically_normal();
  auto c = parse_config(buf.str(), abs.parent_path());
  c.config_file = abs;
  return c;
}

}  // namespace sliceval
