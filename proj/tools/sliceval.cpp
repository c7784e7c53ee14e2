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

// Command-line entry point: process, serve, test, export-report.

#include <pthread.h>

#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"
#include "sliceval/http.hpp"
#include "sliceval/project.hpp"

namespace {

using namespace sliceval;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitError = 2;
constexpr int kExitUsage = 64;

void print_summary(const ProcessSummary& s) {
  for (const auto& t : s.run.tasks) {
    if (t.status == TaskStatus::failed) {
      std::cerr << "task " << t.task_id << " failed: " << t.error << "\n";
      if (!t.plugin_stderr.empty()) std::cerr << "  plugin stderr: " << t.plugin_stderr << "\n";
    } else if (t.status == TaskStatus::skipped) {
      std::cerr << "task " << t.task_id << " skipped: " << t.error << "\n";
    }
  }
  const std::size_t n = s.executed();
  if (n == 0) {
    std::cout << "0 tasks executed (cache)\n";
  } else {
    std::cout << n << " tasks executed";
    if (s.cached) std::cout << ", " << s.cached << " served from cache";
    std::cout << "\n";
  }
  if (!s.run.complete()) {
    std::cout << "partial: " << s.run.count(TaskStatus::failed) << " failed, " << s.run.count(TaskStatus::skipped)
              << " skipped\n";
  }
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string cell(const ModelVerdict& v) {
  std::string text = v.value ? format_number(std::round(*v.value * 10000) / 10000) : "-";
  switch (v.verdict) {
    case Verdict::pass: return text + " ok";
    case Verdict::fail: return text + " FAIL";
    case Verdict::indeterminate_fail: return "n=0 FAIL";
    case Verdict::not_evaluated: return "n/a";
  }
  return text;
}

// Fixed-width verdict table, one row per test.
int print_tests(const std::vector<Project::TestOutcome>& outcomes, const std::vector<std::string>& models) {
  if (outcomes.empty()) {
    std::cout << "no behavioral tests defined\n";
    return kExitOk;
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"test", "slice", "condition"};
  head.insert(head.end(), models.begin(), models.end());
  head.push_back("latest");
  rows.push_back(head);
  std::size_t failing = 0;
  for (const auto& o : outcomes) {
    std::vector<std::string> r{o.test.test_id, o.test.slice_id,
                               o.test.metric_id + (o.test.transform_id ? "@" + *o.test.transform_id : "") + " " +
                                   std::string(to_string(o.test.comparator)) + " " + format_number(o.test.threshold)};
    for (const auto& v : o.result.verdicts) r.push_back(cell(v));
    const bool passed = !o.result.verdicts.empty() && o.result.verdicts.back().verdict == Verdict::pass;
    failing += passed ? 0 : 1;
    r.push_back(passed ? "PASS" : "FAIL");
    rows.push_back(std::move(r));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) line += pad(r[i], width[i] + 2);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    std::cout << line << "\n";
  }
  std::cout << failing << " of " << outcomes.size() << " tests failing on the latest model\n";
  return failing == 0 ? kExitOk : kExitFailed;
}

int cmd_process(const ProjectConfig& config) {
  Project project(config);
  const auto summary = project.process();
  print_summary(summary);
  return summary.run.complete() ? kExitOk : kExitError;
}

int cmd_test(const ProjectConfig& config) {
  Project project(config);
  const auto summary = project.process();
  if (!summary.run.complete()) print_summary(summary);
  return print_tests(project.evaluate_tests(), config.model_ids());
}

int cmd_export(const ProjectConfig& config, const std::string& name, const std::filesystem::path& out,
               const std::string& format) {
  Project project(config);
  project.process();
  if (format == "all") {
    for (const auto& p : project.export_report(name, out)) std::cout << p.string() << "\n";
    return kExitOk;
  }
  const auto doc = project.report_document(name);
  const std::string text = format == "html" ? render_html(doc)
                           : format == "md" ? render_markdown(doc)
                                            : dump(to_json(doc)) + "\n";
  std::filesystem::create_directories(out);
  const auto path = out / (safe_file_name(doc.name) + "." + format);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
  std::cout << path.string() << "\n";
  return kExitOk;
}

int cmd_serve(ProjectConfig config, const std::optional<std::string>& host, const std::optional<int>& port) {
  if (host) config.host = *host;
  if (port) config.port = static_cast<std::uint16_t>(*port);

  // Handle SIGINT/SIGTERM on a dedicated thread so stop() runs outside a signal handler.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Project project(config);
  ApiServer server(project);
  const int bound = server.bind(config.host, config.port);
  project.process_in_background();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("shutting down");
    server.stop();
  });
  std::cout << "serving on http://" << config.host << ":" << bound << std::endl;
  server.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  project.wait();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slice-based evaluation of ML models over instance metadata", "sliceval"};
  std::string config_path = "sliceval.toml";
  bool verbose = false;
  app.add_option("-c,--config", config_path, "Project TOML file")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.require_subcommand(1);

  auto* process = app.add_subcommand("process", "Run every plugin task not already cached");
  auto* serve = app.add_subcommand("serve", "Process if needed and serve the HTTP API");
  std::optional<std::string> host;
  std::optional<int> port;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  auto* test = app.add_subcommand("test", "Evaluate every behavioral test; exit 1 if any fails on the latest model");
  auto* exp = app.add_subcommand("export-report", "Write a report as HTML and Markdown");
  std::string report_name;
  std::string out_dir = ".";
  std::string format = "all";
  exp->add_option("name", report_name, "Report name or id")->required();
  exp->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  exp->add_option("-f,--format", format, "html, md, json or all")
      ->check(CLI::IsMember({"html", "md", "json", "all"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);
  try {
    const ProjectConfig config = load_config(config_path);
    if (*process) return cmd_process(config);
    if (*serve) {
      spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
      return cmd_serve(config, host, port);
    }
    if (*test) return cmd_test(config);
    if (*exp) return cmd_export(config, report_name, out_dir, format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
