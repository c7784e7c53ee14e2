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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sliceval/cache.hpp"
#include "sliceval/plugin.hpp"
#include "sliceval/table.hpp"

namespace sliceval {

struct ModelRef {
  std::string model_id;
  std::string function;  // a model function in the catalog
};

// One schedulable unit: a function applied to every row of one transform scope.
//   transform:<t>@none           writes variant rows for transform t
//   model:<model>@<t>            output::<model>::<t>
//   distill:<fn>@none            distill::<fn> (model-independent, base rows)
//   distill:<fn>:<model>@<t>     distill::<fn>::<model>::<t>
struct PluginTask {
  std::string task_id;
  std::string function;
  FunctionKind kind = FunctionKind::model;
  std::optional<std::string> model_id;
  std::string transform_id = "none";
  std::vector<std::string> depends_on;  // task ids

  friend bool operator==(const PluginTask&, const PluginTask&) = default;
};

std::string task_id_for(FunctionKind kind, const std::string& function,
                        const std::optional<std::string>& model, const std::string& transform);

// Every task implied by the dependency rules, ignoring the cache, in a
// topological order. Throws PlanError on unknown or mis-kinded references and
// when no model is given.
std::vector<PluginTask> enumerate_tasks(const FunctionCatalog& catalog,
                                        const std::vector<ModelRef>& models,
                                        const std::vector<std::string>& transforms);

struct PipelineSettings {
  std::filesystem::path data_root;
  DiskCache* cache = nullptr;            // no caching when null
  std::filesystem::path scratch_dir;     // handed to plugins; defaults to the cache root
  std::size_t workers = 1;
  std::chrono::milliseconds timeout = kDefaultPluginTimeout;
};

struct Plan {
  std::vector<PluginTask> tasks;   // still to run; edges only between these
  std::vector<PluginTask> cached;  // fully served by the cache
  MetadataTable table;             // input table with cached results applied
};

// Tasks whose rows all hit the cache are applied to the returned table and
// pruned, so a warm cache gives an empty task list.
Plan plan(const FunctionCatalog& catalog, const std::vector<ModelRef>& models,
          const std::vector<std::string>& transforms, const MetadataTable& table,
          const PipelineSettings& settings);

enum class TaskStatus { succeeded, failed, skipped };
std::string_view to_string(TaskStatus status);

struct TaskReport {
  std::string task_id;
  TaskStatus status = TaskStatus::skipped;
  std::size_t rows = 0;
  std::size_t cache_hits = 0;
  std::size_t invocations = 0;  // run frames sent
  double duration_ms = 0;
  std::string error;
  std::string plugin_stderr;
  std::chrono::steady_clock::time_point started;
  std::chrono::steady_clock::time_point finished;  // after its result was applied
};

struct RunReport {
  std::vector<TaskReport> tasks;  // in plan order
  std::size_t invocations = 0;
  double wall_ms = 0;

  std::size_t count(TaskStatus status) const;
  bool complete() const { return count(TaskStatus::failed) + count(TaskStatus::skipped) == 0; }
  const TaskReport* find(std::string_view task_id) const;
};

struct RunOutcome {
  MetadataTable table;
  RunReport report;
};

using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

// Runs the plan's tasks with up to settings.workers in parallel. Failed tasks
// skip their dependents; independent branches keep going.
RunOutcome execute(const Plan& plan, const FunctionCatalog& catalog,
                   const PipelineSettings& settings, const ProgressCallback& progress = {});

// Generic scheduler behind execute(). `work` runs on a worker thread and
// returns a commit step that runs on the calling thread, one at a time, before
// any dependent starts. A throwing work or commit fails the node and skips its
// dependents.
struct DagNode {
  std::vector<std::size_t> parents;
};

struct DagResult {
  TaskStatus status = TaskStatus::skipped;
  std::string error;
  std::string detail;
  std::chrono::steady_clock::time_point started;
  std::chrono::steady_clock::time_point finished;
};

using DagWork = std::function<std::function<void()>(std::size_t node, std::size_t worker)>;

std::vector<DagResult> run_dag(const std::vector<DagNode>& nodes, std::size_t workers,
                               const DagWork& work,
                               const std::function<void(std::size_t)>& on_done = {});

}  // namespace sliceval
