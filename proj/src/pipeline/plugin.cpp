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

#include "sliceval/plugin.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"

extern char** environ;

namespace sliceval {
namespace {

constexpr std::size_t kMaxStderr = 64 * 1024;

const char* kind_names[] = {"model", "metric", "distill", "transform"};

std::string frame_type(const Json& frame) {
  if (!frame.is_object()) throw ProtocolError("frame is not a JSON object");
  const auto it = frame.find("type");
  if (it == frame.end() || !it->is_string()) throw ProtocolError("frame has no string 'type'");
  return it->get<std::string>();
}

const Json& require(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ProtocolError(std::string("frame is missing '") + key + "'");
  return *it;
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(std::min<long long>(left.count(), 1 << 30));
}

std::string describe(const PluginCommand& command) {
  return command.argv.empty() ? std::string("<empty command>") : command.argv.front();
}

}  // namespace

std::string_view to_string(FunctionKind kind) { return kind_names[static_cast<int>(kind)]; }

std::optional<FunctionKind> parse_function_kind(std::string_view text) {
  for (int i = 0; i < 4; ++i) {
    if (text == kind_names[i]) return static_cast<FunctionKind>(i);
  }
  return std::nullopt;
}

void check_manifest(const PluginManifest& m) {
  if (m.name.empty()) throw ProtocolError("function manifest has an empty name");
  if (m.name.find("::") != std::string::npos || m.name.find('@') != std::string::npos ||
      m.name.find('/') != std::string::npos) {
    throw ProtocolError("function name '" + m.name + "' contains a reserved character");
  }
  if (m.batch_size_hint == 0) throw ProtocolError("function '" + m.name + "' has batch_size_hint 0");
  if (m.kind == FunctionKind::distill) {
    if (!m.output_dtype) throw ProtocolError("distill '" + m.name + "' needs output_dtype");
  } else {
    if (m.depends_on_model) {
      throw ProtocolError("depends_on_model is only valid for distills ('" + m.name + "')");
    }
    if (m.output_dtype && m.kind != FunctionKind::model) {
      throw ProtocolError("output_dtype is only valid for distills and models ('" + m.name + "')");
    }
  }
}

Json to_json(const PluginManifest& m) {
  Json j = Json::object();
  j["name"] = m.name;
  j["kind"] = to_string(m.kind);
  j["version"] = m.version;
  if (m.kind == FunctionKind::distill) j["depends_on_model"] = m.depends_on_model;
  if (m.output_dtype) j["output_dtype"] = to_string(*m.output_dtype);
  j["batch_size_hint"] = m.batch_size_hint;
  return j;
}

PluginManifest manifest_from_json(const Json& j) {
  if (!j.is_object()) throw ProtocolError("function manifest is not an object");
  PluginManifest m;
  const auto& name = require(j, "name");
  const auto& kind = require(j, "kind");
  const auto& version = require(j, "version");
  if (!name.is_string() || !kind.is_string() || !version.is_string()) {
    throw ProtocolError("function manifest name/kind/version must be strings");
  }
  m.name = name.get<std::string>();
  const auto k = parse_function_kind(kind.get<std::string>());
  if (!k) throw ProtocolError("unknown function kind '" + kind.get<std::string>() + "'");
  m.kind = *k;
  m.version = version.get<std::string>();
  if (const auto it = j.find("depends_on_model"); it != j.end()) {
    if (!it->is_boolean()) throw ProtocolError("depends_on_model must be a boolean");
    m.depends_on_model = it->get<bool>();
    if (m.kind != FunctionKind::distill) {
      throw ProtocolError("depends_on_model is only valid for distills ('" + m.name + "')");
    }
  } else if (m.kind == FunctionKind::distill) {
    throw ProtocolError("distill '" + m.name + "' needs depends_on_model");
  }
  if (const auto it = j.find("output_dtype"); it != j.end() && !it->is_null()) {
    const auto dt = it->is_string() ? parse_dtype(it->get<std::string>()) : std::nullopt;
    if (!dt) throw ProtocolError("bad output_dtype for '" + m.name + "'");
    m.output_dtype = *dt;
  }
  if (const auto it = j.find("batch_size_hint"); it != j.end()) {
    if (!it->is_number_unsigned()) throw ProtocolError("batch_size_hint must be a positive integer");
    m.batch_size_hint = it->get<std::size_t>();
  }
  check_manifest(m);
  return m;
}

Json hello_frame() {
  Json j = Json::object();
  j["type"] = "hello";
  j["protocol"] = kProtocolVersion;
  return j;
}

Json run_frame(const RunRequest& r) {
  Json j = Json::object();
  j["type"] = "run";
  j["task_id"] = r.task_id;
  j["batch"] = r.batch;
  j["function"] = r.function;
  j["kind"] = to_string(r.kind);
  if (r.model) j["model"] = *r.model;
  j["transform"] = r.transform;
  j["options"] = r.options;
  j["rows"] = r.rows;
  return j;
}

std::string encode_frame(const Json& frame) {
  std::string line = frame.dump(-1, ' ', false, Json::error_handler_t::replace);
  line.push_back('\n');
  return line;
}

std::vector<PluginManifest> parse_manifest_frame(const Json& frame) {
  if (frame_type(frame) != "manifest") {
    throw ProtocolError("expected a manifest frame, got '" + frame_type(frame) + "'");
  }
  const auto& protocol = require(frame, "protocol");
  if (!protocol.is_number_integer() || protocol.get<int>() != kProtocolVersion) {
    throw ProtocolError("unsupported protocol version " + protocol.dump());
  }
  const auto& functions = require(frame, "functions");
  if (!functions.is_array()) throw ProtocolError("'functions' must be an array");
  std::vector<PluginManifest> out;
  for (const auto& f : functions) out.push_back(manifest_from_json(f));
  return out;
}

std::optional<Value> coerce_value(const Json& j, DType dtype) {
  if (j.is_null()) return Value{};
  switch (dtype) {
    case DType::continuous:
      if (j.is_number()) {
        const double d = j.get<double>();
        if (!std::isfinite(d)) return std::nullopt;
        return Value{d};
      }
      return std::nullopt;
    case DType::boolean:
      if (j.is_boolean()) return Value{j.get<bool>()};
      return std::nullopt;
    case DType::nominal:
    case DType::string:
      if (j.is_string()) return Value{j.get<std::string>()};
      return std::nullopt;
    case DType::datetime: {
      const Json* text = &j;
      if (j.is_object()) {
        const auto it = j.find("datetime");
        if (it == j.end() || j.size() != 1) return std::nullopt;
        text = &*it;
      }
      if (!text->is_string()) return std::nullopt;
      const auto ts = parse_iso8601(text->get<std::string>());
      if (!ts) return std::nullopt;
      return Value{*ts};
    }
  }
  return std::nullopt;
}

RunResult parse_result_frame(const Json& frame, const RunRequest& request,
                             std::optional<DType> dtype) {
  const auto type = frame_type(frame);
  const auto& task_id = require(frame, "task_id");
  if (!task_id.is_string() || task_id.get<std::string>() != request.task_id) {
    throw ProtocolError("reply task_id " + task_id.dump() + " does not match '" +
                        request.task_id + "'");
  }
  if (type == "error") {
    const auto it = frame.find("message");
    const std::string message =
        it != frame.end() && it->is_string() ? it->get<std::string>() : std::string("(no message)");
    throw PluginError("function '" + request.function + "' reported an error: " + message);
  }
  if (type != "result") throw ProtocolError("unexpected frame type '" + type + "'");
  if (const auto it = frame.find("batch"); it != frame.end()) {
    if (!it->is_number_unsigned() || it->get<std::size_t>() != request.batch) {
      throw ProtocolError("reply batch " + it->dump() + " does not match " +
                          std::to_string(request.batch));
    }
  }

  RunResult result;
  const std::size_t rows = request.rows.size();
  switch (request.kind) {
    case FunctionKind::metric: {
      const auto& scalar = require(frame, "scalar");
      const auto v = coerce_value(scalar, DType::continuous);
      if (!v) throw ProtocolError("metric scalar must be a finite number or null");
      result.scalar = *v;
      break;
    }
    case FunctionKind::transform: {
      const auto& files = require(frame, "files");
      if (!files.is_array()) throw ProtocolError("'files' must be an array");
      if (files.size() != rows) {
        throw ProtocolError("transform returned " + std::to_string(files.size()) +
                            " files for " + std::to_string(rows) + " rows");
      }
      for (const auto& f : files) {
        if (!f.is_string() || f.get<std::string>().empty()) {
          throw ProtocolError("transform file entries must be non-empty strings");
        }
        const std::filesystem::path p(f.get<std::string>());
        if (p.is_absolute()) throw ProtocolError("transform file '" + p.string() + "' is absolute");
        for (const auto& part : p) {
          if (part == "..") throw ProtocolError("transform file '" + p.string() + "' leaves the data root");
        }
        result.files.push_back(f.get<std::string>());
      }
      break;
    }
    case FunctionKind::model:
    case FunctionKind::distill: {
      const auto& values = require(frame, "values");
      if (!values.is_array()) throw ProtocolError("'values' must be an array");
      if (values.size() != rows) {
        throw ProtocolError("function '" + request.function + "' returned " +
                            std::to_string(values.size()) + " values for " +
                            std::to_string(rows) + " rows");
      }
      const DType dt = dtype.value_or(DType::string);
      result.values.reserve(rows);
      for (std::size_t i = 0; i < values.size(); ++i) {
        auto v = coerce_value(values[i], dt);
        if (!v) {
          throw ProtocolError("value " + std::to_string(i) + " (" + values[i].dump() +
                              ") is not " + std::string(to_string(dt)));
        }
        result.values.push_back(std::move(*v));
      }
      break;
    }
  }
  return result;
}

PluginProcess::PluginProcess(const PluginCommand& command, std::chrono::milliseconds timeout)
    : name_(describe(command)), timeout_(timeout) {
  ignore_sigpipe();
  if (command.argv.empty()) throw PluginError("plugin command is empty");

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw PluginError("pipe failed: " + std::string(std::strerror(errno)));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw PluginError("pipe failed: " + std::string(std::strerror(errno)));
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw PluginError("pipe failed: " + std::string(std::strerror(errno)));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], 0);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], 2);
  std::string cwd;
  if (!command.working_dir.empty()) {
    cwd = command.working_dir.string();
    posix_spawn_file_actions_addchdir_np(&actions, cwd.c_str());
  }
  std::vector<char*> argv;
  for (const auto& a : command.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  stdin_fd_ = in_pipe[1];
  stdout_fd_ = out_pipe[0];
  stderr_fd_ = err_pipe[0];
  if (rc != 0) {
    terminate();
    throw PluginError("cannot start plugin '" + name_ + "': " + std::strerror(rc));
  }
  pid_ = pid;
  for (int fd : {stdin_fd_, stdout_fd_, stderr_fd_}) {
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
  }

  Json reply;
  try {
    reply = request(hello_frame());
    manifests_ = parse_manifest_frame(reply);
  } catch (const ProtocolError& e) {
    const auto err = stderr_text();
    terminate();
    throw ProtocolError("plugin '" + name_ + "' handshake failed: " + e.what(), err);
  }
}

PluginProcess::~PluginProcess() { terminate(); }

void PluginProcess::terminate() {
  if (stdin_fd_ >= 0) {
    ::close(stdin_fd_);
    stdin_fd_ = -1;
  }
  if (pid_ > 0) {
    // Closing stdin asks the plugin to exit; give it a moment before killing.
    int status = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(500);
    bool reaped = false;
    while (std::chrono::steady_clock::now() < deadline) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_ || r < 0) {
        reaped = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (!reaped) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  for (int* fd : {&stdout_fd_, &stderr_fd_}) {
    if (*fd >= 0) {
      ::close(*fd);
      *fd = -1;
    }
  }
}

void PluginProcess::fail(const std::string& message) {
  drain_stderr(50);
  const std::string err = stderr_buffer_;
  if (pid_ > 0) ::kill(pid_, SIGKILL);
  terminate();
  throw PluginError("plugin '" + name_ + "': " + message, err);
}

void PluginProcess::drain_stderr(int timeout_ms) {
  if (stderr_fd_ < 0) return;
  pollfd p{stderr_fd_, POLLIN, 0};
  char buf[4096];
  while (::poll(&p, 1, timeout_ms) > 0) {
    const ssize_t n = ::read(stderr_fd_, buf, sizeof buf);
    if (n <= 0) break;
    if (stderr_buffer_.size() < kMaxStderr) stderr_buffer_.append(buf, static_cast<std::size_t>(n));
    timeout_ms = 0;
  }
}

std::string PluginProcess::stderr_text() {
  drain_stderr(0);
  return stderr_buffer_;
}

void PluginProcess::write_line(const std::string& line,
                               std::chrono::steady_clock::time_point deadline) {
  std::size_t written = 0;
  while (written < line.size()) {
    pollfd fds[2] = {{stdin_fd_, POLLOUT, 0}, {stderr_fd_, POLLIN, 0}};
    const int ready = ::poll(fds, 2, remaining_ms(deadline));
    if (ready == 0) fail("timed out writing a request");
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll failed: ") + std::strerror(errno));
    }
    if (fds[1].revents & (POLLIN | POLLHUP)) drain_stderr(0);
    if (fds[0].revents & (POLLERR | POLLHUP)) fail("plugin closed its input");
    if (fds[0].revents & POLLOUT) {
      const ssize_t n = ::write(stdin_fd_, line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        fail(std::string("write failed: ") + std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
  }
}

std::string PluginProcess::read_line(std::chrono::steady_clock::time_point deadline) {
  char buf[65536];
  while (true) {
    const auto nl = stdout_buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = stdout_buffer_.substr(0, nl);
      stdout_buffer_.erase(0, nl + 1);
      return line;
    }
    pollfd fds[2] = {{stdout_fd_, POLLIN, 0}, {stderr_fd_, POLLIN, 0}};
    const int ready = ::poll(fds, 2, remaining_ms(deadline));
    if (ready == 0) fail("timed out after " + std::to_string(timeout_.count()) + " ms");
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll failed: ") + std::strerror(errno));
    }
    if (fds[1].revents & (POLLIN | POLLHUP)) drain_stderr(0);
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t n = ::read(stdout_fd_, buf, sizeof buf);
      if (n == 0) fail("exited before replying");
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        fail(std::string("read failed: ") + std::strerror(errno));
      }
      stdout_buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }
}

Json PluginProcess::request(const Json& frame) {
  if (pid_ <= 0) throw PluginError("plugin '" + name_ + "' is not running", stderr_buffer_);
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  write_line(encode_frame(frame), deadline);
  const std::string line = read_line(deadline);
  Json reply;
  try {
    reply = Json::parse(line);
  } catch (const Json::parse_error&) {
    drain_stderr(50);
    const std::string err = stderr_buffer_;
    terminate();
    throw ProtocolError("plugin '" + name_ + "' sent a malformed frame: " + line.substr(0, 200),
                        err);
  }
  return reply;
}

RunResult invoke_plugin(PluginProcess& process, const RunRequest& request,
                        std::optional<DType> dtype) {
  const Json reply = process.request(run_frame(request));
  try {
    return parse_result_frame(reply, request, dtype);
  } catch (const ProtocolError& e) {
    throw ProtocolError(e.what(), process.stderr_text());
  } catch (const PluginError& e) {
    throw PluginError(e.what(), process.stderr_text());
  }
}

FunctionCatalog FunctionCatalog::discover(const std::vector<PluginCommand>& commands,
                                          std::chrono::milliseconds timeout) {
  FunctionCatalog catalog(commands);
  for (std::size_t i = 0; i < commands.size(); ++i) {
    PluginProcess process(commands[i], timeout);
    for (const auto& m : process.manifests()) catalog.add(m, i);
    spdlog::debug("plugin {} offers {} functions", describe(commands[i]),
                  process.manifests().size());
  }
  return catalog;
}

void FunctionCatalog::add(PluginManifest manifest, std::size_t plugin) {
  check_manifest(manifest);
  if (find(manifest.name)) throw ConfigError("function '" + manifest.name + "' is defined twice");
  entries_.push_back({std::move(manifest), plugin});
}

const CatalogEntry* FunctionCatalog::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.manifest.name == name) return &e;
  }
  return nullptr;
}

std::vector<const CatalogEntry*> FunctionCatalog::of_kind(FunctionKind kind) const {
  std::vector<const CatalogEntry*> out;
  for (const auto& e : entries_) {
    if (e.manifest.kind == kind) out.push_back(&e);
  }
  return out;
}

}  // namespace sliceval
