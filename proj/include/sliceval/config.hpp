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

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sliceval/analysis.hpp"
#include "sliceval/pipeline.hpp"

namespace sliceval {

inline constexpr std::uint16_t kDefaultPort = 8000;
inline constexpr const char* kDefaultHost = "127.0.0.1";
inline constexpr const char* kDefaultCacheDir = ".cache";

struct ModelConfig {
  std::string model_id;
  std::string function;  // model function offered by a plugin; defaults to model_id
};

// A validated project. Relative paths in the file resolve against the
// directory holding it.
struct ProjectConfig {
  std::filesystem::path config_file;
  std::filesystem::path project_dir;
  std::filesystem::path metadata;
  std::filesystem::path data_root;
  std::string id_column;
  std::string label_column;
  std::string data_file_column;  // empty: id_column
  std::string view;
  std::vector<ModelConfig> models;      // in model-version order
  std::vector<PluginCommand> plugins;
  std::vector<std::string> transforms;
  std::vector<std::string> metrics;     // offered in the UI; built-ins always work
  std::filesystem::path cache_dir;
  std::string host = kDefaultHost;
  std::uint16_t port = kDefaultPort;
  std::size_t workers = 1;
  std::chrono::milliseconds plugin_timeout = kDefaultPluginTimeout;
  FlagConfig thresholds;
  std::size_t histogram_bins = 15;
  std::map<std::string, std::size_t> column_bins;
  std::optional<std::filesystem::path> ui_dir;  // static assets served at /

  std::filesystem::path slices_file() const { return project_dir / "slices.json"; }
  std::filesystem::path reports_file() const { return project_dir / "reports.json"; }
  std::vector<ModelRef> model_refs() const;
  std::vector<std::string> model_ids() const;
};

// Throws ConfigError naming the offending key, or for a missing path or a
// duplicate model id.
ProjectConfig load_config(const std::filesystem::path& file);
ProjectConfig parse_config(std::string_view toml_text, const std::filesystem::path& project_dir);

}  // namespace sliceval
