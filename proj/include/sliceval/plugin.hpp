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
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sliceval/serialize.hpp"
#include "sliceval/value.hpp"

namespace sliceval {

// Wire protocol between the core and function plugins.
//
// Plugins are subprocesses. Every frame is one JSON object on one line
// (UTF-8, terminated by '\n', no embedded newlines), written compactly with
// keys in the order shown. The core writes to the plugin's stdin and reads
// its stdout; stderr is captured for error reports.
//
//   core   -> plugin  {"type":"hello","protocol":1}
//   plugin -> core    {"type":"manifest","protocol":1,"functions":[<function>...]}
//   core   -> plugin  {"type":"run","task_id":T,"batch":B,"function":F,"kind":K,
//                      ["model":M,]"transform":X,"options":{...},"rows":[<row>...]}
//   plugin -> core    {"type":"result","task_id":T,"batch":B,
//                      "values":[...] | "files":[...] | "scalar":v}
//   plugin -> core    {"type":"error","task_id":T,"message":"..."}
//
// <function>: {"name","kind","version","depends_on_model","output_dtype","batch_size_hint"}.
//   depends_on_model and output_dtype are required for distills; output_dtype is
//   optional for models; batch_size_hint defaults to 256.
// <row>: {"id":instance id,"data_file":path relative to data_path,<column id>:value...}
// Values: null (missing), number, boolean, string, or {"datetime":"<ISO-8601>"}.
// Options: data_path, scratch_dir (absolute); id_column, label_column;
//   output_column for model-dependent distills and metrics; transform_output_dir
//   (relative to data_path) for transforms.
// Replies: models and distills send "values" (one per row); transforms write
// their files and send "files" (one path per row, relative to data_path);
// metrics send "scalar" (a number or null) for the whole batch.
// Closing the plugin's stdin asks it to exit.
inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kDefaultBatchSize = 256;
inline constexpr std::chrono::milliseconds kDefaultPluginTimeout{300'000};

enum class FunctionKind { model, metric, distill, transform };

std::string_view to_string(FunctionKind kind);
std::optional<FunctionKind> parse_function_kind(std::string_view text);

struct PluginManifest {
  std::string name;
  FunctionKind kind = FunctionKind::model;
  std::string version;
  bool depends_on_model = false;
  std::optional<DType> output_dtype;
  std::size_t batch_size_hint = kDefaultBatchSize;

  friend bool operator==(const PluginManifest&, const PluginManifest&) = default;
};

// Throws ProtocolError when kind-specific fields are missing or misplaced.
void check_manifest(const PluginManifest& manifest);
Json to_json(const PluginManifest& manifest);
PluginManifest manifest_from_json(const Json& json);

struct RunRequest {
  std::string task_id;
  std::size_t batch = 0;
  std::string function;
  FunctionKind kind = FunctionKind::model;
  std::optional<std::string> model;
  std::string transform = "none";
  Json options = Json::object();
  Json rows = Json::array();
};

struct RunResult {
  std::vector<Value> values;       // model, distill
  std::vector<std::string> files;  // transform
  Value scalar;                    // metric
};

Json hello_frame();
Json run_frame(const RunRequest& request);
// One compact line including the trailing newline.
std::string encode_frame(const Json& frame);

// Parses the manifest frame. Throws ProtocolError.
std::vector<PluginManifest> parse_manifest_frame(const Json& frame);
// Validates a reply to `request` and converts the values to `dtype`
// (ignored for transforms and metrics). Throws PluginError for an error
// frame and ProtocolError for anything malformed.
RunResult parse_result_frame(const Json& frame, const RunRequest& request,
                             std::optional<DType> dtype);

// Converts a wire value to a cell of `dtype`; nullopt when it does not fit.
std::optional<Value> coerce_value(const Json& json, DType dtype);

struct PluginCommand {
  std::vector<std::string> argv;
  std::filesystem::path working_dir;  // empty: inherit

  friend bool operator==(const PluginCommand&, const PluginCommand&) = default;
};

// One running plugin subprocess that has completed the handshake.
class PluginProcess {
 public:
  // Spawns the command and performs hello/manifest. Throws PluginError.
  PluginProcess(const PluginCommand& command, std::chrono::milliseconds timeout);
  ~PluginProcess();
  PluginProcess(const PluginProcess&) = delete;
  PluginProcess& operator=(const PluginProcess&) = delete;

  const std::vector<PluginManifest>& manifests() const { return manifests_; }

  // Writes one frame and reads one reply frame within the timeout. On any
  // failure the process is killed and PluginError carries its stderr.
  Json request(const Json& frame);

  bool alive() const { return pid_ > 0; }
  std::string stderr_text();

 private:
  void write_line(const std::string& line, std::chrono::steady_clock::time_point deadline);
  std::string read_line(std::chrono::steady_clock::time_point deadline);
  void drain_stderr(int timeout_ms);
  [[noreturn]] void fail(const std::string& message);
  void terminate();

  std::string name_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  int stderr_fd_ = -1;
  std::string stdout_buffer_;
  std::string stderr_buffer_;
  std::vector<PluginManifest> manifests_;
};

// Reply to a run request: checked against the request and converted.
RunResult invoke_plugin(PluginProcess& process, const RunRequest& request,
                        std::optional<DType> dtype);

struct CatalogEntry {
  PluginManifest manifest;
  std::size_t plugin = 0;  // index into FunctionCatalog::commands()
};

// Every function offered by the project's plugins, by name.
class FunctionCatalog {
 public:
  FunctionCatalog() = default;
  explicit FunctionCatalog(std::vector<PluginCommand> commands)
      : commands_(std::move(commands)) {}

  // Starts each plugin once to read its manifest. Throws PluginError or
  // ConfigError (duplicate function names).
  static FunctionCatalog discover(const std::vector<PluginCommand>& commands,
                                  std::chrono::milliseconds timeout = kDefaultPluginTimeout);

  // Throws ConfigError on a duplicate name.
  void add(PluginManifest manifest, std::size_t plugin);

  const CatalogEntry* find(std::string_view name) const;
  std::vector<const CatalogEntry*> of_kind(FunctionKind kind) const;
  const std::vector<CatalogEntry>& entries() const { return entries_; }
  const std::vector<PluginCommand>& commands() const { return commands_; }

 private:
  std::vector<PluginCommand> commands_;
  std::vector<CatalogEntry> entries_;
};

}  // namespace sliceval
