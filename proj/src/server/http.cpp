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

#include "sliceval/http.hpp"

#include <condition_variable>
#include <fstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"

namespace sliceval {

namespace fs = std::filesystem;

Json to_json(const ColumnDescriptor& c) {
  Json j;
  j["id"] = c.id;
  j["display_name"] = c.display_name;
  j["short_name"] = c.short_name();
  j["dtype"] = std::string(to_string(c.dtype));
  j["origin"] = std::string(to_string(c.origin));
  j["model"] = c.model_scope ? Json(*c.model_scope) : Json(nullptr);
  j["transform"] = c.transform_scope ? Json(*c.transform_scope) : Json(nullptr);
  return j;
}

Json to_json(const ColumnHistogram& h) {
  Json j;
  j["column_id"] = h.spec.column_id;
  j["dtype"] = std::string(to_string(h.spec.dtype));
  if (h.spec.dtype == DType::continuous || h.spec.dtype == DType::datetime) {
    j["edges"] = h.spec.edges;
  } else {
    Json cats = h.spec.categories;
    if (h.spec.has_other) cats.push_back("other");
    j["categories"] = std::move(cats);
    j["has_other"] = h.spec.has_other;
  }
  j["total"] = h.total;
  j["filtered"] = h.filtered;
  j["total_missing"] = h.total_missing;
  j["filtered_missing"] = h.filtered_missing;
  return j;
}

Json to_json(const InstancePage& page) {
  Json j;
  j["total"] = page.total;
  j["offset"] = page.offset;
  Json rows = Json::array();
  for (const auto& r : page.instances) {
    Json rj;
    rj["row"] = r.row;
    rj["instance_id"] = r.instance_id;
    rj["data_file"] = r.data_file;
    rj["label"] = value_to_json(r.label);
    rj["output"] = value_to_json(r.output);
    Json values = Json::object();
    for (const auto& [k, v] : r.values) values[k] = value_to_json(v);
    rj["values"] = std::move(values);
    rows.push_back(std::move(rj));
  }
  j["instances"] = std::move(rows);
  return j;
}

Json to_json(const ProcessingStatus& s) {
  Json j;
  j["state"] = std::string(to_string(s.state));
  j["done"] = s.done;
  j["total"] = s.total;
  j["message"] = s.message;
  return j;
}

namespace {

Json error_body(const std::string& code, const std::string& message) {
  Json e;
  e["code"] = code;
  e["message"] = message;
  Json j;
  j["error"] = std::move(e);
  return j;
}

}  // namespace

ErrorReply error_reply(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const PredicateError& e) {
    ErrorReply r{400, error_body("invalid_predicate", e.what())};
    r.body["error"]["position"] = e.position();
    r.body["error"]["kind"] = to_string(e.kind());
    return r;
  } catch (const NotProcessedError& e) {
    return {404, error_body("not_processed", e.what())};
  } catch (const NotFoundError& e) {
    return {404, error_body("not_found", e.what())};
  } catch (const ConflictError& e) {
    return {409, error_body("conflict", e.what())};
  } catch (const NotReadyError& e) {
    return {503, error_body("not_ready", e.what())};
  } catch (const ConfigError& e) {
    return {422, error_body("invalid_config", e.what())};
  } catch (const PluginError& e) {
    return {502, error_body("plugin_error", e.what())};
  } catch (const InvalidRequestError& e) {
    return {400, error_body("invalid_request", e.what())};
  } catch (const SerializationError& e) {
    return {400, error_body("invalid_request", e.what())};
  } catch (const SchemaError& e) {
    return {400, error_body("invalid_request", e.what())};
  } catch (const TableError& e) {
    return {400, error_body("invalid_request", e.what())};
  } catch (const Json::exception& e) {
    return {400, error_body("invalid_request", e.what())};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what())};
  } catch (...) {
    return {500, error_body("internal", "unknown error")};
  }
}

struct ApiServer::Impl {
  Project& project;
  httplib::Server server;

  explicit Impl(Project& p) : project(p) {}

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(dump(body) + "\n", "application/json");
  }

  Handler wrap(Handler h) {
    return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (...) {
        auto reply = error_reply(std::current_exception());
        if (reply.status == 503) reply.body["progress"] = to_json(project.status());
        if (reply.status >= 500) spdlog::warn("{} {}: {}", req.method, req.path, dump(reply.body["error"]));
        send(res, reply.status, reply.body);
      }
    };
  }

  static Json body_json(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    Json j = parse_json(req.body);
    if (!j.is_object()) throw InvalidRequestError("request body must be a JSON object");
    return j;
  }

  // API clients may leave out bookkeeping fields the file format requires.
  static void fill_test(Json& t) {
    if (!t.is_object()) throw InvalidRequestError("a test must be a JSON object");
    if (!t.contains("version")) t["version"] = kSchemaVersion;
    if (!t.contains("test_id")) t["test_id"] = "";
  }
  static Report report_body(Json j) {
    if (!j.contains("version")) j["version"] = kSchemaVersion;
    if (!j.contains("report_id")) j["report_id"] = "";
    if (const auto it = j.find("entries"); it != j.end() && it->is_array()) {
      for (auto& e : *it) {
        if (!e.is_object()) continue;
        if (!e.contains("transform_id")) e["transform_id"] = std::string(kNoTransform);
        if (auto t = e.find("test"); t != e.end() && !t->is_null()) {
          fill_test(*t);
          // the store copies these from the entry
          if (!t->contains("slice_id")) (*t)["slice_id"] = "";
          if (!t->contains("metric_id")) (*t)["metric_id"] = "";
        }
      }
    }
    return report_from_json(j);
  }

  CrossFilterState state(const Json& body, const QueryEngine& engine) {
    CrossFilterState s = state_from_json(body.contains("state") ? body["state"] : body, engine.table());
    project.check_transform(s.transform);
    if (s.model) {
      const auto ids = project.config().model_ids();
      if (std::find(ids.begin(), ids.end(), *s.model) == ids.end()) {
        throw NotFoundError("unknown model '" + *s.model + "'");
      }
    }
    if (s.metric) project.check_metric(*s.metric);
    return s;
  }

  static std::string param(const httplib::Request& req, const char* key, const std::string& fallback = {}) {
    return req.has_param(key) ? req.get_param_value(key) : fallback;
  }

  static std::size_t size_param(const Json& body, const char* key, std::size_t fallback) {
    const auto it = body.find(key);
    if (it == body.end() || it->is_null()) return fallback;
    if (!it->is_number_unsigned()) throw InvalidRequestError(std::string("'") + key + "' must be a non-negative integer");
    return it->get<std::size_t>();
  }

  static std::string content_type(const fs::path& p) {
    static const std::map<std::string, std::string> types = {
        {".wav", "audio/wav"},   {".mp3", "audio/mpeg"},      {".flac", "audio/flac"}, {".ogg", "audio/ogg"},
        {".png", "image/png"},   {".jpg", "image/jpeg"},      {".jpeg", "image/jpeg"}, {".gif", "image/gif"},
        {".txt", "text/plain"},  {".json", "application/json"}, {".csv", "text/csv"},  {".svg", "image/svg+xml"},
    };
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto it = types.find(ext);
    return it == types.end() ? "application/octet-stream" : it->second;
  }

  void data_file(const std::string& rel, httplib::Response& res) {
    const fs::path root = fs::weakly_canonical(project.config().data_root);
    const fs::path target = fs::weakly_canonical(root / fs::path(rel));
    const auto [r, t] = std::mismatch(root.begin(), root.end(), target.begin(), target.end());
    if (r != root.end()) throw NotFoundError("no such data file '" + rel + "'");
    std::error_code ec;
    if (!fs::is_regular_file(target, ec)) throw NotFoundError("no such data file '" + rel + "'");
    const auto size = static_cast<std::size_t>(fs::file_size(target));
    auto in = std::make_shared<std::ifstream>(target, std::ios::binary);
    if (!*in) throw NotFoundError("cannot open data file '" + rel + "'");
    res.set_header("Accept-Ranges", "bytes");
    res.set_content_provider(size, content_type(target),
                             [in](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                               std::vector<char> buf(std::min<std::size_t>(length, 64 * 1024));
                               in->clear();
                               in->seekg(static_cast<std::streamoff>(offset));
                               in->read(buf.data(), static_cast<std::streamsize>(buf.size()));
                               const auto got = in->gcount();
                               if (got <= 0) return false;
                               return sink.write(buf.data(), static_cast<std::size_t>(got));
                             });
  }

  void routes() {
    const std::string api = kApiPrefix;
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Range");
      res.status = 204;
    });

    server.Get(api + "/health", wrap([this](const httplib::Request&, httplib::Response& res) {
                 Json j;
                 j["status"] = "ok";
                 j["processing"] = to_json(project.status());
                 send(res, 200, j);
               }));

    server.Get(api + "/schema", wrap([this](const httplib::Request&, httplib::Response& res) {
                 const auto engine = project.engine();
                 const auto& t = engine->table();
                 Json j;
                 j["row_count"] = t.row_count();
                 j["base_row_count"] = t.base_row_count();
                 j["id_column"] = t.id_column();
                 j["label_column"] = t.label_column();
                 j["view"] = project.config().view;
                 Json cols = Json::array();
                 for (const auto& c : t.schema()) cols.push_back(to_json(c));
                 j["columns"] = std::move(cols);
                 j["models"] = project.config().model_ids();
                 j["transforms"] = project.transforms();
                 j["metrics"] = project.metric_ids();
                 Json th;
                 th["decline"] = project.config().thresholds.decline_threshold;
                 th["variance"] = project.config().thresholds.variance_threshold;
                 j["thresholds"] = std::move(th);
                 send(res, 200, j);
               }));

    server.Post(api + "/histograms", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const auto engine = project.engine();
                  const Json body = body_json(req);
                  const CrossFilterState s = state(body, *engine);
                  const auto hists = engine->histograms(s);
                  Json j;
                  j["total_count"] = engine->table().rows_in(s.transform).size();
                  j["filtered_count"] = engine->filtered(s).count();
                  Json hs = Json::array();
                  for (const auto& h : hists) hs.push_back(to_json(h));
                  j["histograms"] = std::move(hs);
                  if (s.model && s.metric) {
                    const auto rec =
                        engine->metric(state_predicate(engine->table(), s), *s.model, s.transform, *s.metric);
                    j["metric"] = to_json(rec);
                  } else {
                    j["metric"] = nullptr;
                  }
                  send(res, 200, j);
                }));

    server.Post(api + "/instances", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const auto engine = project.engine();
                  const Json body = body_json(req);
                  const CrossFilterState s = state(body, *engine);
                  const auto page = engine->page_instances(s, size_param(body, "offset", 0),
                                                           size_param(body, "limit", 50));
                  send(res, 200, to_json(page));
                }));

    // slices and folders
    server.Get(api + "/slices", wrap([this](const httplib::Request&, httplib::Response& res) {
                 Json arr = Json::array();
                 for (const auto& s : project.store().slices()) arr.push_back(to_json(s));
                 send(res, 200, Json{{"slices", std::move(arr)}});
               }));
    server.Post(api + "/slices", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const Json body = body_json(req);
                  const auto name = body.value("name", std::string());
                  std::optional<std::string> folder;
                  if (const auto it = body.find("folder"); it != body.end() && !it->is_null()) {
                    folder = it->get<std::string>();
                  }
                  if (!body.contains("predicate")) throw InvalidRequestError("missing field 'predicate'");
                  const Slice s =
                      project.create_slice(name, folder, body["predicate"], body.value("slice_id", std::string()));
                  send(res, 201, to_json(s));
                }));
    server.Get(api + R"(/slices/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 const auto s = project.store().slice(req.matches[1]);
                 if (!s) throw NotFoundError("unknown slice '" + std::string(req.matches[1]) + "'");
                 send(res, 200, to_json(*s));
               }));
    server.Delete(api + R"(/slices/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                    project.store().remove_slice(req.matches[1]);
                    res.status = 204;
                  }));
    server.Get(api + "/folders", wrap([this](const httplib::Request&, httplib::Response& res) {
                 send(res, 200, Json{{"folders", project.store().folders()}});
               }));
    server.Post(api + "/folders", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const Json body = body_json(req);
                  const auto name = body.value("name", std::string());
                  if (trim(name).empty()) throw InvalidRequestError("folder name must not be empty");
                  project.store().add_folder(name);
                  send(res, 201, Json{{"name", name}});
                }));

    // reports
    server.Get(api + "/reports", wrap([this](const httplib::Request&, httplib::Response& res) {
                 Json arr = Json::array();
                 for (const auto& r : project.store().reports()) arr.push_back(to_json(r));
                 send(res, 200, Json{{"reports", std::move(arr)}});
               }));
    server.Post(api + "/reports", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  Report r = report_body(body_json(req));
                  check_entries(r);
                  send(res, 201, to_json(project.store().add_report(std::move(r))));
                }));
    server.Get(api + R"(/reports/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, to_json(project.find_report(req.matches[1])));
               }));
    server.Put(api + R"(/reports/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 Json body = body_json(req);
                 body["report_id"] = std::string(req.matches[1]);
                 Report r = report_body(std::move(body));
                 check_entries(r);
                 send(res, 200, to_json(project.store().replace_report(std::move(r))));
               }));
    server.Delete(api + R"(/reports/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                    project.store().remove_report(req.matches[1]);
                    res.status = 204;
                  }));

    // tests
    server.Get(api + "/tests", wrap([this](const httplib::Request&, httplib::Response& res) {
                 Json arr = Json::array();
                 for (const auto& t : project.store().all_tests()) arr.push_back(to_json(t));
                 send(res, 200, Json{{"tests", std::move(arr)}});
               }));
    server.Post(api + "/tests", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  Json body = body_json(req);
                  fill_test(body);
                  BehavioralTest t = test_from_json(body);
                  project.check_metric(t.metric_id);
                  project.check_transform(t.effective_transform());
                  send(res, 201, to_json(project.store().add_test(std::move(t))));
                }));
    server.Delete(api + R"(/tests/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                    project.store().remove_test(req.matches[1]);
                    res.status = 204;
                  }));

    // analytics
    server.Get(api + "/series", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 if (!req.has_param("slice")) throw InvalidRequestError("missing query parameter 'slice'");
                 const auto series = project.series(req.get_param_value("slice"), param(req, "metric", "accuracy"),
                                                    param(req, "transform", std::string(kNoTransform)));
                 send(res, 200, to_json(series));
               }));
    server.Get(api + "/testresults", wrap([this](const httplib::Request&, httplib::Response& res) {
                 Json arr = Json::array();
                 std::size_t failing = 0;
                 for (const auto& o : project.evaluate_tests()) {
                   Json j = to_json(o.result);
                   j["test"] = to_json(o.test);
                   failing += o.result.latest_model_failed ? 1 : 0;
                   arr.push_back(std::move(j));
                 }
                 Json j;
                 j["models"] = project.config().model_ids();
                 j["failures_latest_count"] = failing;
                 j["results"] = std::move(arr);
                 send(res, 200, j);
               }));
    server.Get(api + R"(/export/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 const auto format = param(req, "format", "html");
                 const auto doc = project.report_document(req.matches[1]);
                 const std::string base = safe_file_name(doc.name);
                 if (format == "html") {
                   res.set_content(render_html(doc), "text/html; charset=utf-8");
                 } else if (format == "md") {
                   res.set_content(render_markdown(doc), "text/markdown; charset=utf-8");
                 } else if (format == "json") {
                   res.set_content(dump(to_json(doc)) + "\n", "application/json");
                 } else {
                   throw InvalidRequestError("format must be html, md or json");
                 }
                 res.set_header("Content-Disposition", "attachment; filename=\"" + base + "." + format + "\"");
               }));

    server.Get(api + R"(/data/(.+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 data_file(req.matches[1], res);
               }));

    if (project.config().ui_dir) server.set_mount_point("/", project.config().ui_dir->string());
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) {
        send(res, 404, error_body("not_found", "no route for " + req.method + " " + req.path));
      }
    });
  }

  void check_entries(const Report& r) {
    for (const auto& e : r.entries) {
      project.check_metric(e.metric_id);
      project.check_transform(e.transform_id);
    }
  }
};

ApiServer::ApiServer(Project& project) : impl_(std::make_unique<Impl>(project)) { impl_->routes(); }

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ApiServer::run() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_) impl_->server.stop();
}

void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace sliceval
