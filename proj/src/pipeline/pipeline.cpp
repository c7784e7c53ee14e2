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

#include "sliceval/pipeline.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

using Clock = std::chrono::steady_clock;

std::string transform_dir(const std::string& transform) {
  return "_transforms/" + transform;
}

// Everything needed to run one task against one table snapshot.
struct PreparedTask {
  const CatalogEntry* entry = nullptr;
  std::vector<RowId> rows;
  std::vector<Json> payloads;
  std::vector<std::string> keys;  // empty without a cache
  Json options;
  std::optional<DType> dtype;
  std::string column_id;  // target column; empty for transforms
};

struct TaskOutput {
  std::vector<RowId> rows;
  std::vector<CacheValue> values;
  std::size_t cache_hits = 0;
};

const CatalogEntry& entry_for(const FunctionCatalog& catalog, const PluginTask& task) {
  const auto* e = catalog.find(task.function);
  if (!e) throw PlanError("unknown function '" + task.function + "'");
  return *e;
}

bool is_input_field(const ColumnDescriptor& d) {
  return d.origin == Origin::raw || d.origin == Origin::label || d.origin == Origin::id;
}

std::string output_column_id(const PluginTask& task) {
  return ColumnDescriptor::output(*task.model_id, task.transform_id, DType::string).id;
}

PreparedTask prepare(const PluginTask& task, const MetadataTable& table,
                     const FunctionCatalog& catalog, const PipelineSettings& settings) {
  PreparedTask p;
  p.entry = &entry_for(catalog, task);
  const auto& manifest = p.entry->manifest;
  const bool model_scoped = task.model_id.has_value();
  const std::string scope = task.kind == FunctionKind::transform ? "none" : task.transform_id;
  const auto rows = table.rows_in(scope);
  p.rows.assign(rows.begin(), rows.end());

  std::vector<const Column*> fields;
  for (const auto& c : table.columns()) {
    if (is_input_field(c->descriptor())) fields.push_back(c.get());
  }
  const Column* output = nullptr;
  std::string output_id;
  if (model_scoped) {
    output_id = output_column_id(task);
    if (task.kind == FunctionKind::distill) {
      output = table.find(output_id);
      if (!output) throw PlanError("task " + task.task_id + " needs column " + output_id);
    }
  }

  switch (task.kind) {
    case FunctionKind::model: {
      p.column_id = output_id;
      if (manifest.output_dtype) {
        p.dtype = manifest.output_dtype;
      } else {
        const auto* label = table.find(table.label_column());
        p.dtype = label ? label->dtype() : DType::string;
      }
      break;
    }
    case FunctionKind::distill:
      p.dtype = manifest.output_dtype;
      p.column_id = ColumnDescriptor::distill(task.function, *manifest.output_dtype, task.model_id,
                                              model_scoped ? std::optional(task.transform_id)
                                                           : std::nullopt)
                        .id;
      break;
    case FunctionKind::transform:
    case FunctionKind::metric:
      break;
  }

  p.options = Json::object();
  p.options["data_path"] = std::filesystem::absolute(settings.data_root).string();
  const auto scratch = !settings.scratch_dir.empty() ? settings.scratch_dir
                       : settings.cache           ? settings.cache->root() / "_scratch"
                                                  : std::filesystem::temp_directory_path();
  p.options["scratch_dir"] = std::filesystem::absolute(scratch).string();
  p.options["id_column"] = table.id_column();
  p.options["label_column"] = table.label_column();
  if (model_scoped) p.options["output_column"] = output_id;
  if (task.kind == FunctionKind::transform) p.options["transform_output_dir"] = transform_dir(task.transform_id);

  p.payloads.reserve(p.rows.size());
  for (const RowId r : p.rows) {
    Json row = Json::object();
    row["id"] = table.instance_id(r);
    row["data_file"] = table.data_file(r);
    for (const auto* c : fields) row[c->id()] = value_to_json(c->cell(r));
    if (output) row[output_id] = value_to_json(output->cell(r));
    p.payloads.push_back(std::move(row));
  }

  if (settings.cache) {
    // Paths are left out so a moved project keeps its cache.
    Json fp = Json::object();
    fp["id_column"] = table.id_column();
    fp["label_column"] = table.label_column();
    if (task.kind == FunctionKind::model) fp["output_dtype"] = to_string(*p.dtype);
    if (task.kind != FunctionKind::transform && task.transform_id != kNoTransform) {
      const auto* t = catalog.find(task.transform_id);
      fp["transform_version"] = t ? t->manifest.version : std::string();
    }
    const std::string fingerprint = fp.dump();
    p.keys.reserve(p.rows.size());
    for (const auto& row : p.payloads) {
      p.keys.push_back(cache_key({task.function, manifest.version, std::string(to_string(task.kind)),
                                  task.model_id,
                                  task.kind == FunctionKind::transform
                                      ? std::optional<std::string>(task.transform_id)
                                      : (model_scoped ? std::optional(task.transform_id) : std::nullopt),
                                  row.dump(), fingerprint}));
    }
  }
  return p;
}

std::vector<std::optional<CacheValue>> lookup(const PluginTask& task, const PreparedTask& p,
                                              const PipelineSettings& settings) {
  std::vector<std::optional<CacheValue>> out(p.rows.size());
  if (!settings.cache) return out;
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    auto hit = settings.cache->get(task.function, p.keys[i]);
    if (!hit) continue;
    if (hit->value.file_reference) {
      // A transform output that has since been deleted is a miss.
      const auto& rel = std::get<std::string>(hit->value.value);
      if (!std::filesystem::exists(settings.data_root / rel)) continue;
    }
    out[i] = std::move(hit->value);
  }
  return out;
}

MetadataTable apply(const PluginTask& task, const PreparedTask& p, const TaskOutput& out,
                    const MetadataTable& table) {
  if (task.kind == FunctionKind::transform) {
    std::vector<TransformVariantRow> rows;
    rows.reserve(out.rows.size());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      rows.push_back({table.instance_id(out.rows[i]), task.transform_id,
                      std::get<std::string>(out.values[i].value)});
    }
    return add_transform_variants(table, task.transform_id, rows);
  }

  const DType dtype = *p.dtype;
  ColumnDescriptor desc =
      task.kind == FunctionKind::model
          ? ColumnDescriptor::output(*task.model_id, task.transform_id, dtype)
          : ColumnDescriptor::distill(task.function, dtype, task.model_id,
                                      task.model_id ? std::optional(task.transform_id) : std::nullopt);
  const Column* existing = table.find(desc.id);
  std::vector<Value> cells(table.row_count());
  if (existing && existing->dtype() == dtype) {
    for (RowId r = 0; r < table.row_count(); ++r) cells[r] = existing->cell(r);
  }
  std::unordered_map<RowId, std::size_t> position;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    cells[out.rows[i]] = out.values[i].value;
    position.emplace(out.rows[i], i);
  }
  if (inherited_by_variants(desc)) {
    for (RowId r = 0; r < table.row_count(); ++r) {
      const auto it = position.find(table.parent(r));
      if (it != position.end()) cells[r] = out.values[it->second].value;
    }
  }
  auto column = Column::from_values(desc, cells);
  return existing ? replace_column(table, std::move(column)) : attach_column(table, std::move(column));
}

// Plugin processes owned by one worker, started on first use.
class WorkerPlugins {
 public:
  WorkerPlugins(const FunctionCatalog& catalog, std::chrono::milliseconds timeout)
      : catalog_(&catalog), timeout_(timeout) {}

  PluginProcess& get(std::size_t plugin) {
    auto& slot = processes_[plugin];
    if (!slot || !slot->alive()) {
      slot = std::make_unique<PluginProcess>(catalog_->commands().at(plugin), timeout_);
    }
    return *slot;
  }
  void reset(std::size_t plugin) { processes_.erase(plugin); }

 private:
  const FunctionCatalog* catalog_;
  std::chrono::milliseconds timeout_;
  std::map<std::size_t, std::unique_ptr<PluginProcess>> processes_;
};

TaskOutput compute(const PluginTask& task, const PreparedTask& p,
                   std::vector<std::optional<CacheValue>> hits, WorkerPlugins& plugins,
                   const PipelineSettings& settings, std::size_t& invocations) {
  TaskOutput out;
  out.rows = p.rows;
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i]) {
      ++out.cache_hits;
    } else {
      misses.push_back(i);
    }
  }
  if (task.kind == FunctionKind::transform && !misses.empty()) {
    std::filesystem::create_directories(settings.data_root / transform_dir(task.transform_id));
  }
  const std::size_t batch_size = p.entry->manifest.batch_size_hint;
  for (std::size_t start = 0, batch = 0; start < misses.size(); start += batch_size, ++batch) {
    const std::size_t end = std::min(misses.size(), start + batch_size);
    RunRequest req;
    req.task_id = task.task_id;
    req.batch = batch;
    req.function = task.function;
    req.kind = task.kind;
    req.model = task.model_id;
    req.transform = task.transform_id;
    req.options = p.options;
    for (std::size_t k = start; k < end; ++k) req.rows.push_back(p.payloads[misses[k]]);

    RunResult result;
    auto& process = plugins.get(p.entry->plugin);
    try {
      ++invocations;
      result = invoke_plugin(process, req, p.dtype);
    } catch (const ProtocolError&) {
      plugins.reset(p.entry->plugin);
      throw;
    } catch (...) {
      // An error frame leaves the plugin usable.
      if (!process.alive()) plugins.reset(p.entry->plugin);
      throw;
    }
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = misses[k];
      CacheValue cv = task.kind == FunctionKind::transform
                          ? CacheValue{result.files[k - start], true}
                          : CacheValue{result.values[k - start], false};
      if (settings.cache) settings.cache->put(task.function, p.keys[i], cv);
      hits[i] = std::move(cv);
    }
  }
  out.values.reserve(hits.size());
  for (auto& h : hits) out.values.push_back(std::move(*h));
  return out;
}

}  // namespace

std::string task_id_for(FunctionKind kind, const std::string& function,
                        const std::optional<std::string>& model, const std::string& transform) {
  std::string id(to_string(kind));
  id += ":" + function;
  if (model) id += ":" + *model;
  id += "@" + transform;
  return id;
}

std::vector<PluginTask> enumerate_tasks(const FunctionCatalog& catalog,
                                        const std::vector<ModelRef>& models,
                                        const std::vector<std::string>& transforms) {
  if (models.empty()) throw PlanError("at least one model is required");
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!valid_segment(m.model_id)) throw PlanError("invalid model id '" + m.model_id + "'");
    if (!seen.insert(m.model_id).second) throw PlanError("duplicate model id '" + m.model_id + "'");
    const auto* e = catalog.find(m.function);
    if (!e) throw PlanError("model '" + m.model_id + "' references unknown function '" + m.function + "'");
    if (e->manifest.kind != FunctionKind::model) {
      throw PlanError("function '" + m.function + "' used by model '" + m.model_id + "' is a " +
                      std::string(to_string(e->manifest.kind)));
    }
  }
  seen.clear();
  for (const auto& t : transforms) {
    if (t == kNoTransform) throw PlanError("'none' is not a transform");
    if (!seen.insert(t).second) throw PlanError("duplicate transform '" + t + "'");
    const auto* e = catalog.find(t);
    if (!e) throw PlanError("unknown transform '" + t + "'");
    if (e->manifest.kind != FunctionKind::transform) {
      throw PlanError("function '" + t + "' is not a transform");
    }
  }

  std::vector<std::string> scopes{std::string(kNoTransform)};
  scopes.insert(scopes.end(), transforms.begin(), transforms.end());
  const auto distills = catalog.of_kind(FunctionKind::distill);

  std::vector<PluginTask> tasks;
  auto add = [&](FunctionKind kind, const std::string& fn, std::optional<std::string> model,
                 const std::string& transform, std::vector<std::string> deps) {
    PluginTask t;
    t.task_id = task_id_for(kind, fn, model, transform);
    t.function = fn;
    t.kind = kind;
    t.model_id = std::move(model);
    t.transform_id = transform;
    t.depends_on = std::move(deps);
    tasks.push_back(std::move(t));
  };

  for (const auto& t : transforms) {
    add(FunctionKind::transform, t, std::nullopt, t, {});
    // Transform tasks read the base rows.
    tasks.back().task_id = task_id_for(FunctionKind::transform, t, std::nullopt, "none");
  }
  for (const auto* d : distills) {
    if (!d->manifest.depends_on_model) {
      add(FunctionKind::distill, d->manifest.name, std::nullopt, std::string(kNoTransform), {});
    }
  }
  for (const auto& scope : scopes) {
    for (const auto& m : models) {
      std::vector<std::string> deps;
      if (scope != kNoTransform) {
        deps.push_back(task_id_for(FunctionKind::transform, scope, std::nullopt, "none"));
      }
      add(FunctionKind::model, m.function, m.model_id, scope, std::move(deps));
      // Model task ids use the model id, not the function name.
      tasks.back().task_id = task_id_for(FunctionKind::model, m.model_id, std::nullopt, scope);
    }
  }
  for (const auto& scope : scopes) {
    for (const auto& m : models) {
      for (const auto* d : distills) {
        if (!d->manifest.depends_on_model) continue;
        add(FunctionKind::distill, d->manifest.name, m.model_id, scope,
            {task_id_for(FunctionKind::model, m.model_id, std::nullopt, scope)});
      }
    }
  }
  return tasks;
}

Plan plan(const FunctionCatalog& catalog, const std::vector<ModelRef>& models,
          const std::vector<std::string>& transforms, const MetadataTable& table,
          const PipelineSettings& settings) {
  if (table.label_column().empty() || !table.find(table.label_column())) {
    throw PlanError("the table has no label column");
  }
  Plan out;
  out.table = table;
  std::set<std::string> runnable;
  for (auto& task : enumerate_tasks(catalog, models, transforms)) {
    const bool blocked = std::any_of(task.depends_on.begin(), task.depends_on.end(),
                                     [&](const std::string& d) { return runnable.count(d) > 0; });
    if (!blocked && settings.cache) {
      const auto prepared = prepare(task, out.table, catalog, settings);
      auto hits = lookup(task, prepared, settings);
      if (std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.has_value(); })) {
        TaskOutput cached;
        cached.rows = prepared.rows;
        for (auto& h : hits) cached.values.push_back(std::move(*h));
        out.table = apply(task, prepared, cached, out.table);
        out.cached.push_back(std::move(task));
        continue;
      }
    }
    runnable.insert(task.task_id);
    std::erase_if(task.depends_on, [&](const std::string& d) { return runnable.count(d) == 0; });
    out.tasks.push_back(std::move(task));
  }
  return out;
}

std::string_view to_string(TaskStatus status) {
  switch (status) {
    case TaskStatus::succeeded:
      return "succeeded";
    case TaskStatus::failed:
      return "failed";
    case TaskStatus::skipped:
      return "skipped";
  }
  return "skipped";
}

std::size_t RunReport::count(TaskStatus status) const {
  return static_cast<std::size_t>(std::count_if(
      tasks.begin(), tasks.end(), [&](const TaskReport& t) { return t.status == status; }));
}

const TaskReport* RunReport::find(std::string_view task_id) const {
  for (const auto& t : tasks) {
    if (t.task_id == task_id) return &t;
  }
  return nullptr;
}

std::vector<DagResult> run_dag(const std::vector<DagNode>& nodes, std::size_t workers,
                               const DagWork& work, const std::function<void(std::size_t)>& on_done) {
  const std::size_t n = nodes.size();
  std::vector<DagResult> results(n);
  if (n == 0) return results;
  if (workers == 0) throw PlanError("worker count must be at least 1");

  std::vector<std::vector<std::size_t>> children(n);
  std::vector<std::size_t> waiting(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto p : nodes[i].parents) {
      if (p >= n) throw PlanError("DAG edge to a missing node");
      children[p].push_back(i);
      ++waiting[i];
    }
  }
  {
    // Kahn pass: a cycle would leave nodes that never become ready.
    auto indeg = waiting;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
      if (indeg[i] == 0) stack.push_back(i);
    }
    std::size_t visited = 0;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      ++visited;
      for (const auto c : children[i]) {
        if (--indeg[c] == 0) stack.push_back(c);
      }
    }
    if (visited != n) throw PlanError("task graph has a cycle");
  }

  struct Completion {
    std::size_t node;
    std::function<void()> commit;
    std::exception_ptr error;
  };
  std::mutex mu;
  std::condition_variable jobs_cv, done_cv;
  std::deque<std::size_t> jobs;
  std::deque<Completion> done;
  bool stop = false;

  auto worker_loop = [&](std::size_t worker) {
    while (true) {
      std::size_t node;
      {
        std::unique_lock lock(mu);
        jobs_cv.wait(lock, [&] { return stop || !jobs.empty(); });
        if (stop) return;
        node = jobs.front();
        jobs.pop_front();
        results[node].started = Clock::now();
      }
      Completion c{node, {}, nullptr};
      try {
        c.commit = work(node, worker);
      } catch (...) {
        c.error = std::current_exception();
      }
      {
        std::lock_guard lock(mu);
        done.push_back(std::move(c));
      }
      done_cv.notify_one();
    }
  };

  std::vector<std::thread> threads;
  const std::size_t thread_count = std::min(workers, n);
  for (std::size_t w = 0; w < thread_count; ++w) threads.emplace_back(worker_loop, w);

  std::vector<bool> skipped(n, false);
  std::size_t remaining = n;
  auto finish = [&](std::size_t node) {
    --remaining;
    if (on_done) on_done(node);
  };
  std::function<void(std::size_t)> skip = [&](std::size_t node) {
    if (skipped[node]) return;
    skipped[node] = true;
    results[node].status = TaskStatus::skipped;
    results[node].error = "a dependency did not complete";
    finish(node);
    for (const auto c : children[node]) skip(c);
  };

  {
    std::lock_guard lock(mu);
    for (std::size_t i = 0; i < n; ++i) {
      if (waiting[i] == 0) jobs.push_back(i);
    }
  }
  jobs_cv.notify_all();

  while (remaining > 0) {
    Completion c;
    {
      std::unique_lock lock(mu);
      done_cv.wait(lock, [&] { return !done.empty(); });
      c = std::move(done.front());
      done.pop_front();
    }
    auto& r = results[c.node];
    auto record_error = [&](std::exception_ptr e) {
      r.status = TaskStatus::failed;
      try {
        std::rethrow_exception(e);
      } catch (const PluginError& err) {
        r.error = err.what();
        r.detail = err.stderr_text();
      } catch (const std::exception& err) {
        r.error = err.what();
      } catch (...) {
        r.error = "unknown error";
      }
    };
    if (c.error) {
      record_error(c.error);
    } else {
      try {
        if (c.commit) c.commit();
        r.status = TaskStatus::succeeded;
      } catch (...) {
        record_error(std::current_exception());
      }
    }
    r.finished = Clock::now();
    finish(c.node);

    std::vector<std::size_t> ready;
    for (const auto child : children[c.node]) {
      if (r.status != TaskStatus::succeeded) {
        skip(child);
      } else if (--waiting[child] == 0 && !skipped[child]) {
        ready.push_back(child);
      }
    }
    if (!ready.empty()) {
      {
        std::lock_guard lock(mu);
        for (const auto i : ready) jobs.push_back(i);
      }
      jobs_cv.notify_all();
    }
  }
  {
    std::lock_guard lock(mu);
    stop = true;
  }
  jobs_cv.notify_all();
  for (auto& t : threads) t.join();
  return results;
}

RunOutcome execute(const Plan& plan, const FunctionCatalog& catalog,
                   const PipelineSettings& settings, const ProgressCallback& progress) {
  const auto wall_start = Clock::now();
  RunOutcome outcome;
  outcome.table = plan.table;
  const std::size_t n = plan.tasks.size();
  outcome.report.tasks.resize(n);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(plan.tasks[i].task_id, i);
  std::vector<DagNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& dep : plan.tasks[i].depends_on) {
      const auto it = index.find(dep);
      if (it == index.end()) throw PlanError("task " + plan.tasks[i].task_id + " depends on unplanned " + dep);
      nodes[i].parents.push_back(it->second);
    }
  }

  const std::size_t workers = std::max<std::size_t>(1, settings.workers);
  std::vector<WorkerPlugins> plugins;
  for (std::size_t w = 0; w < std::min(workers, std::max<std::size_t>(n, 1)); ++w) {
    plugins.emplace_back(catalog, settings.timeout);
  }
  std::mutex table_mu;
  std::size_t done_count = 0;

  auto work = [&](std::size_t i, std::size_t worker) -> std::function<void()> {
    const auto& task = plan.tasks[i];
    auto& report = outcome.report.tasks[i];
    MetadataTable snapshot;
    {
      std::lock_guard lock(table_mu);
      snapshot = outcome.table;
    }
    auto prepared = std::make_shared<PreparedTask>(prepare(task, snapshot, catalog, settings));
    auto hits = lookup(task, *prepared, settings);
    report.rows = prepared->rows.size();
    auto out = compute(task, *prepared, std::move(hits), plugins[worker], settings,
                       report.invocations);
    report.cache_hits = out.cache_hits;
    auto shared_out = std::make_shared<TaskOutput>(std::move(out));
    return [&, i, prepared, shared_out] {
      std::lock_guard lock(table_mu);
      outcome.table = apply(plan.tasks[i], *prepared, *shared_out, outcome.table);
    };
  };

  const auto results = run_dag(nodes, workers, work, [&](std::size_t) {
    ++done_count;
    if (progress) progress(done_count, n);
  });

  for (std::size_t i = 0; i < n; ++i) {
    auto& report = outcome.report.tasks[i];
    report.task_id = plan.tasks[i].task_id;
    report.status = results[i].status;
    report.error = results[i].error;
    report.plugin_stderr = results[i].detail;
    report.started = results[i].started;
    report.finished = results[i].finished;
    if (results[i].status != TaskStatus::skipped) {
      report.duration_ms =
          std::chrono::duration<double, std::milli>(results[i].finished - results[i].started).count();
    }
    outcome.report.invocations += report.invocations;
    if (report.status == TaskStatus::failed) {
      spdlog::error("task {} failed: {}", report.task_id, report.error);
    }
  }
  outcome.report.wall_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - wall_start).count();
  return outcome;
}

}  // namespace sliceval
