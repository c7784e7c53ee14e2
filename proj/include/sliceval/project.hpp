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

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sliceval/analysis.hpp"
#include "sliceval/config.hpp"
#include "sliceval/pipeline.hpp"
#include "sliceval/query.hpp"
#include "sliceval/store.hpp"

namespace sliceval {

enum class ProcessingState { idle, running, ready, failed };
std::string_view to_string(ProcessingState state);

struct ProcessingStatus {
  ProcessingState state = ProcessingState::idle;
  std::size_t done = 0;
  std::size_t total = 0;
  std::string message;
};

struct ProcessSummary {
  RunReport run;
  std::size_t planned = 0;  // tasks sent to plugins
  std::size_t cached = 0;   // tasks served entirely from the cache
  std::size_t executed() const { return run.count(TaskStatus::succeeded) + run.count(TaskStatus::failed); }
};

// One loaded project: config, persistence, the processed table and the
// derived analytics. Query methods throw NotReadyError until processing has
// published a table.
class Project {
 public:
  explicit Project(ProjectConfig config);
  ~Project();
  Project(const Project&) = delete;
  Project& operator=(const Project&) = delete;

  const ProjectConfig& config() const { return config_; }
  ProjectStore& store() { return store_; }
  const ProjectStore& store() const { return store_; }

  // Ingests, discovers plugins, runs the pipeline and publishes the table.
  // Task failures are reported, not thrown; ingest and plugin discovery
  // errors are thrown.
  ProcessSummary process();
  void process_in_background();
  void wait();
  ProcessingStatus status() const;
  std::optional<ProcessSummary> last_summary() const;

  std::shared_ptr<const QueryEngine> engine() const;  // throws NotReadyError

  std::vector<std::string> transforms() const;  // "none" first
  std::vector<std::string> metric_ids() const;  // configured plus plugin metrics
  // Built-in, mean:<column> or a metric function. Throws NotFoundError.
  void check_metric(const std::string& metric_id) const;
  void check_transform(const std::string& transform_id) const;  // NotFoundError

  // Parses DSL text or a JSON tree and validates it against the schema.
  FilterPredicate predicate_from(const Json& json) const;
  Slice create_slice(const std::string& name, const std::optional<std::string>& folder, const Json& predicate,
                     const std::string& slice_id = {});

  // One record per model whose outputs exist for the transform, in model order.
  std::vector<MetricRecord> slice_records(const Slice& slice, const std::string& metric_id,
                                          const std::string& transform_id) const;
  MetricSeries series(const std::string& slice_id, const std::string& metric_id,
                      const std::string& transform_id) const;

  struct TestOutcome {
    BehavioralTest test;
    TestResult result;
  };
  // Every standalone and report test. Throws ConfigError on a dangling slice
  // or metric reference.
  std::vector<TestOutcome> evaluate_tests() const;

  // Looks a report up by id, then by name. Throws NotFoundError.
  Report find_report(const std::string& id_or_name) const;
  ReportDocument report_document(const std::string& id_or_name) const;
  // Writes <name>.html and <name>.md into dir; returns the paths.
  std::vector<std::filesystem::path> export_report(const std::string& id_or_name,
                                                   const std::filesystem::path& dir) const;

 private:
  class MetricPlugins;

  ProjectConfig config_;
  ProjectStore store_;
  mutable std::mutex mu_;
  ProcessingStatus status_;
  std::optional<ProcessSummary> summary_;
  std::shared_ptr<const QueryEngine> engine_;
  std::shared_ptr<const FunctionCatalog> catalog_;
  std::shared_ptr<MetricPlugins> metric_plugins_;
  std::thread worker_;
};

// Characters outside [A-Za-z0-9 ._-] become '_'.
std::string safe_file_name(std::string_view name);

}  // namespace sliceval
