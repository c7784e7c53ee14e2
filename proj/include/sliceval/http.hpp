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

#include <exception>
#include <memory>
#include <string>

#include "sliceval/project.hpp"
#include "sliceval/query.hpp"

namespace sliceval {

inline constexpr const char* kApiPrefix = "/api/v1";

// HTTP/JSON API over one project. Routes (all under /api/v1):
//
//   GET    /health                     processing progress, always 200
//   GET    /schema                     columns, models, transforms, metrics
//   POST   /histograms                 cross-filter state -> per-column histograms
//   POST   /instances                  state + offset/limit -> one page of rows
//   GET    /slices        POST /slices        GET|DELETE /slices/{id}
//   GET    /folders       POST /folders
//   GET    /reports       POST /reports       GET|PUT|DELETE /reports/{id}
//   GET    /tests         POST /tests         DELETE /tests/{id}
//   GET    /series?slice=&metric=&transform=
//   GET    /testresults
//   GET    /export/{report}?format=html|md|json
//   GET    /data/{path}                instance files under the data root, Range aware
//
// Failures reply {"error":{"code","message"[,"position"]}} with a matching
// status; while processing, table-backed routes answer 503 plus "progress".
class ApiServer {
 public:
  explicit ApiServer(Project& project);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Port 0 picks a free one. Returns the bound port; throws Error on failure.
  int bind(const std::string& host, int port);
  // Serves until stop(). Call after bind().
  void run();
  void stop();
  // Blocks until the listener accepts connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ErrorReply {
  int status = 500;
  Json body;
};
// Status and body for an exception thrown by a handler.
ErrorReply error_reply(const std::exception_ptr& error);

Json to_json(const ColumnDescriptor& column);
Json to_json(const ColumnHistogram& histogram);
Json to_json(const InstancePage& page);
Json to_json(const ProcessingStatus& status);

}  // namespace sliceval
