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

// Deterministic plugin used by the tests. Functions and failure modes are
// chosen on the command line.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Distill {
  std::string name;
  std::string dtype;
  bool dependent = false;
};

struct Options {
  std::vector<std::string> models, transforms, metrics, distill_specs;
  std::vector<Distill> distills;
  std::string version = "1";
  int sleep_ms = 0;
  std::size_t batch = 256;
  std::set<std::string> fail, crash, malformed, short_reply, hang;
  bool bad_hello = false;
  std::string log, transcript;
};

Options opts;
std::ofstream transcript;

void send(const Json& frame) {
  const std::string line = frame.dump();
  if (transcript.is_open()) transcript << "< " << line << '\n' << std::flush;
  std::cout << line << '\n' << std::flush;
}

std::string read_file(const fs::path& p, bool& ok) {
  std::ifstream in(p, std::ios::binary);
  ok = static_cast<bool>(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == '|' || c == ' ' || c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Json model_output(const Json& row, const Json& options, const std::string& model,
                  const std::string& transform) {
  const Json& label = row.value(options.value("label_column", std::string()), Json());
  if (const auto it = row.find("raw::wrong_for"); it != row.end() && it->is_string()) {
    for (const auto& t : tokens(it->get<std::string>())) {
      if (t == model || t == model + "@" + transform) return Json("wrong");
    }
  }
  return label;
}

Json distill_value(const Distill& d, const Json& row, const Json& options) {
  if (d.dependent) {
    const Json& out = row.value(options.value("output_column", std::string()), Json());
    const Json& label = row.value(options.value("label_column", std::string()), Json());
    if (d.dtype == "boolean") return out.is_null() ? Json() : Json(out == label);
    if (d.dtype == "continuous") return out.is_string() ? Json(double(out.get<std::string>().size())) : Json();
    return out.is_string() ? out : Json();
  }
  bool ok = false;
  const auto bytes =
      read_file(fs::path(options.value("data_path", std::string())) / row.value("data_file", std::string()), ok);
  if (d.dtype == "continuous") {
    // Mean byte value scaled to [0, 1].
    if (!ok || bytes.empty()) return Json();
    double sum = 0;
    for (unsigned char c : bytes) sum += c;
    return Json(sum / bytes.size() / 255.0);
  }
  if (d.dtype == "boolean") return Json(ok);
  return Json(row.value("id", std::string()).substr(0, 1));
}

Json transform_file(const Json& row, const Json& options) {
  const fs::path root(options.value("data_path", std::string()));
  const std::string rel_dir = options.value("transform_output_dir", std::string());
  const std::string src = row.value("data_file", std::string());
  bool ok = false;
  std::string bytes = read_file(root / src, ok);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<char>((static_cast<unsigned char>(bytes[i]) + (i * 7) % 5) & 0xff);
  }
  std::string name = src;
  for (char& c : name) {
    if (c == '/') c = '_';
  }
  fs::create_directories(root / rel_dir);
  std::ofstream(root / rel_dir / name, std::ios::binary) << bytes;
  return Json(rel_dir + "/" + name);
}

Json manifest() {
  Json functions = Json::array();
  for (const auto& m : opts.models) {
    functions.push_back({{"name", m}, {"kind", "model"}, {"version", opts.version}, {"batch_size_hint", opts.batch}});
  }
  for (const auto& d : opts.distills) {
    functions.push_back({{"name", d.name},
                         {"kind", "distill"},
                         {"version", opts.version},
                         {"depends_on_model", d.dependent},
                         {"output_dtype", d.dtype},
                         {"batch_size_hint", opts.batch}});
  }
  for (const auto& t : opts.transforms) {
    functions.push_back({{"name", t}, {"kind", "transform"}, {"version", opts.version}, {"batch_size_hint", opts.batch}});
  }
  for (const auto& m : opts.metrics) {
    functions.push_back({{"name", m}, {"kind", "metric"}, {"version", opts.version}, {"batch_size_hint", opts.batch}});
  }
  return Json{{"type", "manifest"}, {"protocol", 1}, {"functions", functions}};
}

void handle_run(const Json& frame) {
  const std::string fn = frame.value("function", std::string());
  const std::string kind = frame.value("kind", std::string());
  const Json& options = frame["options"];
  const Json& rows = frame["rows"];
  if (!opts.log.empty()) {
    std::ofstream(opts.log, std::ios::app) << frame.value("task_id", std::string()) << ' '
                                           << frame.value("batch", 0) << ' ' << rows.size() << '\n';
  }
  if (opts.sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opts.sleep_ms));
  if (opts.hang.count(fn)) std::this_thread::sleep_for(std::chrono::hours(1));
  if (opts.crash.count(fn)) {
    std::cerr << "mock_plugin: crashing in " << fn << std::endl;
    std::exit(3);
  }
  if (opts.malformed.count(fn)) {
    std::cerr << "mock_plugin: emitting a malformed frame for " << fn << std::endl;
    std::cout << "{not json" << std::endl;
    return;
  }
  Json reply{{"type", "result"}, {"task_id", frame["task_id"]}, {"batch", frame["batch"]}};
  if (opts.fail.count(fn)) {
    send(Json{{"type", "error"}, {"task_id", frame["task_id"]}, {"message", "refusing " + fn}});
    return;
  }
  Json values = Json::array();
  if (kind == "model") {
    const std::string model = frame.value("model", std::string());
    const std::string transform = frame.value("transform", std::string());
    for (const auto& row : rows) values.push_back(model_output(row, options, model, transform));
    reply["values"] = values;
  } else if (kind == "distill") {
    const Distill* d = nullptr;
    for (const auto& x : opts.distills) {
      if (x.name == fn) d = &x;
    }
    for (const auto& row : rows) values.push_back(d ? distill_value(*d, row, options) : Json());
    reply["values"] = values;
  } else if (kind == "transform") {
    for (const auto& row : rows) values.push_back(transform_file(row, options));
    reply["files"] = values;
  } else if (kind == "metric") {
    std::size_t wrong = 0;
    const std::string out_col = options.value("output_column", std::string());
    const std::string label_col = options.value("label_column", std::string());
    for (const auto& row : rows) {
      if (row.value(out_col, Json()) != row.value(label_col, Json())) ++wrong;
    }
    reply["scalar"] = rows.empty() ? Json() : Json(double(wrong) / rows.size());
  }
  if (opts.short_reply.count(fn)) {
    for (const char* key : {"values", "files"}) {
      if (reply.contains(key) && !reply[key].empty()) reply[key].erase(reply[key].size() - 1);
    }
  }
  send(reply);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mock plugin"};
  std::vector<std::string> fail, crash, malformed, short_reply, hang;
  app.add_option("--model", opts.models);
  app.add_option("--distill", opts.distill_specs, "name:dtype:indep|dep");
  app.add_option("--transform", opts.transforms);
  app.add_option("--metric", opts.metrics);
  app.add_option("--version", opts.version);
  app.add_option("--sleep-ms", opts.sleep_ms);
  app.add_option("--batch", opts.batch);
  app.add_option("--fail", fail);
  app.add_option("--crash", crash);
  app.add_option("--malformed", malformed);
  app.add_option("--short", short_reply);
  app.add_option("--hang", hang);
  app.add_flag("--bad-hello", opts.bad_hello);
  app.add_option("--log", opts.log);
  app.add_option("--transcript", opts.transcript);
  CLI11_PARSE(app, argc, argv);
  opts.fail = {fail.begin(), fail.end()};
  opts.crash = {crash.begin(), crash.end()};
  opts.malformed = {malformed.begin(), malformed.end()};
  opts.short_reply = {short_reply.begin(), short_reply.end()};
  opts.hang = {hang.begin(), hang.end()};
  for (const auto& spec : opts.distill_specs) {
    Distill d;
    const auto a = spec.find(':');
    const auto b = spec.find(':', a + 1);
    d.name = spec.substr(0, a);
    d.dtype = spec.substr(a + 1, b - a - 1);
    d.dependent = spec.substr(b + 1) == "dep";
    opts.distills.push_back(d);
  }
  if (!opts.transcript.empty()) transcript.open(opts.transcript, std::ios::app);

  std::string line;
  while (std::getline(std::cin, line)) {
    if (transcript.is_open()) transcript << "> " << line << '\n' << std::flush;
    Json frame;
    try {
      frame = Json::parse(line);
    } catch (const Json::parse_error&) {
      std::cerr << "mock_plugin: cannot parse request" << std::endl;
      return 4;
    }
    const std::string type = frame.value("type", std::string());
    if (type == "hello") {
      if (opts.bad_hello) {
        std::cout << "hello yourself" << std::endl;
        continue;
      }
      send(manifest());
    } else if (type == "run") {
      handle_run(frame);
    }
  }
  return 0;
}
