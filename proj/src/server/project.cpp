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

#include "sliceval/project.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"
#include "sliceval/ingest.hpp"

namespace sliceval {

namespace fs = std::filesystem;

std::string_view to_string(ProcessingState state) {
  switch (state) {
    case ProcessingState::idle: return "idle";
    case ProcessingState::running: return "running";
    case ProcessingState::ready: return "ready";
    case ProcessingState::failed: return "failed";
  }
  return "idle";
}

std::string safe_file_name(std::string_view name) {
  std::string out;
  for (const char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == ' ' ||
                    c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  // no hidden files, no "." / ".."
  while (!out.empty() && out.front() == '.') out.front() = '_';
  if (out.empty()) out = "report";
  return out;
}

// Long-lived metric plugin processes, one per plugin command, started on
// first use and restarted after a failure.
class Project::MetricPlugins {
 public:
  MetricPlugins(std::shared_ptr<const FunctionCatalog> catalog, fs::path data_root, fs::path scratch,
                std::chrono::milliseconds timeout)
      : catalog_(std::move(catalog)),
        data_root_(std::move(data_root)),
        scratch_(std::move(scratch)),
        timeout_(timeout),
        slots_(catalog_->commands().size()) {}

  Value run(const std::string& function, const Json& rows, const Json& options) {
    const CatalogEntry* entry = catalog_->find(function);
    if (!entry || entry->manifest.kind != FunctionKind::metric) {
      throw NotFoundError("unknown metric '" + function + "'");
    }
    Slot& slot = slots_[entry->plugin];
    std::lock_guard lock(slot.mu);
    RunRequest req;
    req.task_id = "metric:" + function;
    req.batch = slot.batches++;
    req.function = function;
    req.kind = FunctionKind::metric;
    req.options = options;
    req.options["data_path"] = data_root_.string();
    req.options["scratch_dir"] = scratch_.string();
    req.rows = rows;
    try {
      if (!slot.process || !slot.process->alive()) {
        slot.process = std::make_unique<PluginProcess>(catalog_->commands()[entry->plugin], timeout_);
      }
      return invoke_plugin(*slot.process, req, std::nullopt).scalar;
    } catch (...) {
      slot.process.reset();
      throw;
    }
  }

 private:
  struct Slot {
    std::mutex mu;
    std::unique_ptr<PluginProcess> process;
    std::size_t batches = 0;
  };

  std::shared_ptr<const FunctionCatalog> catalog_;
  fs::path data_root_;
  fs::path scratch_;
  std::chrono::milliseconds timeout_;
  std::vector<Slot> slots_;
};

Project::Project(ProjectConfig config)
    : config_(std::move(config)), store_(config_.slices_file(), config_.reports_file()) {}

Project::~Project() {
  if (worker_.joinable()) worker_.join();
}

ProcessSummary Project::process() {
  {
    std::lock_guard lock(mu_);
    status_ = ProcessingStatus{ProcessingState::running, 0, 0, "ingesting metadata"};
  }
  try {
    IngestOptions io;
    io.id_column = config_.id_column;
    io.label_column = config_.label_column;
    io.data_file_column = config_.data_file_column;
    MetadataTable table = ingest(config_.metadata, io);

    {
      std::lock_guard lock(mu_);
      status_.message = "starting plugins";
    }
    auto catalog = std::make_shared<const FunctionCatalog>(
        FunctionCatalog::discover(config_.plugins, config_.plugin_timeout));

    DiskCache cache(config_.cache_dir);
    PipelineSettings settings;
    settings.data_root = config_.data_root;
    settings.cache = &cache;
    settings.scratch_dir = config_.cache_dir / "scratch";
    settings.workers = config_.workers;
    settings.timeout = config_.plugin_timeout;

    Plan p = plan(*catalog, config_.model_refs(), config_.transforms, table, settings);
    ProcessSummary summary;
    summary.planned = p.tasks.size();
    summary.cached = p.cached.size();
    {
      std::lock_guard lock(mu_);
      status_.total = p.tasks.size();
      status_.message = "running plugins";
    }
    RunOutcome outcome = execute(p, *catalog, settings, [this](std::size_t done, std::size_t total) {
      std::lock_guard lock(mu_);
      status_.done = done;
      status_.total = total;
    });
    summary.run = std::move(outcome.report);

    auto plugins = std::make_shared<MetricPlugins>(catalog, config_.data_root, settings.scratch_dir,
                                                   config_.plugin_timeout);
    HistogramOptions ho;
    ho.default_bins = config_.histogram_bins;
    ho.bins = config_.column_bins;
    MetricRunner runner = [plugins](const std::string& fn, const Json& rows, const Json& options) {
      return plugins->run(fn, rows, options);
    };
    auto engine = std::make_shared<const QueryEngine>(std::move(outcome.table), std::move(ho), std::move(runner));

    std::lock_guard lock(mu_);
    engine_ = std::move(engine);
    catalog_ = std::move(catalog);
    metric_plugins_ = std::move(plugins);
    summary_ = summary;
    status_.state = ProcessingState::ready;
    status_.done = status_.total;
    status_.message = summary.run.complete()
                          ? "ready"
                          : std::to_string(summary.run.count(TaskStatus::failed)) + " tasks failed";
    return summary;
  } catch (const std::exception& e) {
    std::lock_guard lock(mu_);
    status_.state = ProcessingState::failed;
    status_.message = e.what();
    throw;
  }
}

void Project::process_in_background() {
  wait();
  {
    std::lock_guard lock(mu_);
    status_ = ProcessingStatus{ProcessingState::running, 0, 0, "queued"};
  }
  worker_ = std::thread([this] {
    try {
      process();
    } catch (const std::exception& e) {
      spdlog::error("processing failed: {}", e.what());
    }
  });
}

void Project::wait() {
  if (worker_.joinable()) worker_.join();
}

ProcessingStatus Project::status() const {
  std::lock_guard lock(mu_);
  return status_;
}

std::optional<ProcessSummary> Project::last_summary() const {
  std::lock_guard lock(mu_);
  return summary_;
}

std::shared_ptr<const QueryEngine> Project::engine() const {
  std::lock_guard lock(mu_);
  if (!engine_) {
    throw NotReadyError(status_.state == ProcessingState::failed ? "processing failed: " + status_.message
                                                                 : "the project is still being processed");
  }
  return engine_;
}

std::vector<std::string> Project::transforms() const {
  std::vector<std::string> out{std::string(kNoTransform)};
  out.insert(out.end(), config_.transforms.begin(), config_.transforms.end());
  return out;
}

std::vector<std::string> Project::metric_ids() const {
  std::vector<std::string> out = config_.metrics;
  std::shared_ptr<const FunctionCatalog> catalog;
  {
    std::lock_guard lock(mu_);
    catalog = catalog_;
  }
  if (catalog) {
    for (const auto* e : catalog->of_kind(FunctionKind::metric)) {
      if (std::find(out.begin(), out.end(), e->manifest.name) == out.end()) out.push_back(e->manifest.name);
    }
  }
  return out;
}

void Project::check_metric(const std::string& metric_id) const {
  if (is_builtin_metric(metric_id)) return;
  const auto ids = metric_ids();
  if (std::find(ids.begin(), ids.end(), metric_id) == ids.end()) {
    throw NotFoundError("unknown metric '" + metric_id + "'");
  }
}

void Project::check_transform(const std::string& transform_id) const {
  const auto ts = transforms();
  if (std::find(ts.begin(), ts.end(), transform_id) == ts.end()) {
    throw NotFoundError("unknown transform '" + transform_id + "'");
  }
}

FilterPredicate Project::predicate_from(const Json& json) const {
  const auto schema = engine()->table().schema();
  if (json.is_string()) return parse_predicate(json.get<std::string>(), schema);
  if (json.is_null()) return FilterPredicate::all();
  FilterPredicate p = predicate_from_json(json);
  require_valid(p, schema);
  return p;
}

Slice Project::create_slice(const std::string& name, const std::optional<std::string>& folder, const Json& predicate,
                            const std::string& slice_id) {
  if (trim(name).empty()) throw InvalidRequestError("slice name must not be empty");
  Slice s;
  s.slice_id = slice_id;
  s.name = name;
  s.folder = folder;
  s.predicate = predicate_from(predicate);
  s.created_at = now_timestamp();
  return store_.add_slice(std::move(s));
}

std::vector<MetricRecord> Project::slice_records(const Slice& slice, const std::string& metric_id,
                                                 const std::string& transform_id) const {
  const auto eng = engine();
  std::vector<MetricRecord> out;
  for (const auto& m : config_.models) {
    try {
      out.push_back(eng->slice_metric(slice, m.model_id, transform_id, metric_id));
    } catch (const NotProcessedError&) {
      // model failed or was never run on this transform: a gap
    }
  }
  return out;
}

MetricSeries Project::series(const std::string& slice_id, const std::string& metric_id,
                             const std::string& transform_id) const {
  const auto slice = store_.slice(slice_id);
  if (!slice) throw NotFoundError("unknown slice '" + slice_id + "'");
  check_metric(metric_id);
  check_transform(transform_id);
  const auto records = slice_records(*slice, metric_id, transform_id);
  const auto models = config_.model_ids();
  return build_series(slice_id, metric_id, transform_id, models, records, config_.thresholds);
}

std::vector<Project::TestOutcome> Project::evaluate_tests() const {
  const auto slices = store_.slices();
  auto known = metric_ids();
  const auto models = config_.model_ids();
  std::vector<TestOutcome> out;
  for (const auto& t : store_.all_tests()) {
    if (is_builtin_metric(t.metric_id)) known.push_back(t.metric_id);
    check_test_references(t, slices, known);
    const auto transforms_list = transforms();
    const std::string transform = t.effective_transform();
    if (std::find(transforms_list.begin(), transforms_list.end(), transform) == transforms_list.end()) {
      throw ConfigError("test '" + t.test_id + "' references unknown transform '" + transform + "'");
    }
    const auto slice = std::find_if(slices.begin(), slices.end(), [&](const Slice& s) { return s.slice_id == t.slice_id; });
    const auto records = slice_records(*slice, t.metric_id, transform);
    out.push_back({t, evaluate_test(t, models, records)});
  }
  return out;
}

Report Project::find_report(const std::string& id_or_name) const {
  if (auto r = store_.report(id_or_name)) return *r;
  if (auto r = store_.report_by_name(id_or_name)) return *r;
  throw NotFoundError("unknown report '" + id_or_name + "'");
}

ReportDocument Project::report_document(const std::string& id_or_name) const {
  const Report report = find_report(id_or_name);
  const auto slices = store_.slices();
  std::vector<MetricRecord> records;
  std::set<std::tuple<std::string, std::string, std::string>> done;
  auto collect = [&](const std::string& slice_id, const std::string& metric, const std::string& transform) {
    if (!done.emplace(slice_id, metric, transform).second) return;
    const auto s = std::find_if(slices.begin(), slices.end(), [&](const Slice& x) { return x.slice_id == slice_id; });
    if (s == slices.end()) return;
    check_metric(metric);
    check_transform(transform);
    const auto recs = slice_records(*s, metric, transform);
    records.insert(records.end(), recs.begin(), recs.end());
  };
  for (const auto& e : report.entries) {
    collect(e.slice_id, e.metric_id, e.transform_id);
    if (e.test) collect(e.test->slice_id, e.test->metric_id, e.test->effective_transform());
  }
  const auto models = config_.model_ids();
  return build_report(report, slices, models, records, now_timestamp(), config_.thresholds);
}

std::vector<fs::path> Project::export_report(const std::string& id_or_name, const fs::path& dir) const {
  const ReportDocument doc = report_document(id_or_name);
  fs::create_directories(dir);
  const std::string base = safe_file_name(doc.name);
  std::vector<fs::path> out{dir / (base + ".html"), dir / (base + ".md")};
  const std::string texts[] = {render_html(doc), render_markdown(doc)};
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::ofstream f(out[i], std::ios::binary | std::ios::trunc);
    f << texts[i];
    if (!f) throw Error("cannot write " + out[i].string());
  }
  return out;
}

}  // namespace sliceval
