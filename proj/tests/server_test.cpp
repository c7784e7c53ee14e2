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

#include <doctest.h>

#include <csignal>
#include <thread>

#include <httplib.h>

#include "server_fixture.hpp"
#include "sliceval/errors.hpp"
#include "sliceval/http.hpp"
#include "sliceval/project.hpp"

using namespace sliceval;
using namespace sliceval::test;
namespace fs = std::filesystem;

namespace {

const std::string kMock = SLICEVAL_MOCK_PLUGIN;
const std::string kCli = SLICEVAL_CLI;

// Minimal on-disk project for config tests.
fs::path minimal_dir(const TempDir& dir) {
  write_file(dir.path() / "meta.csv", "id,label\na,x\n");
  fs::create_directories(dir.path() / "data");
  return dir.path();
}

const char* kMinimal = R"(
metadata = "meta.csv"
data_root = "data"
id_column = "id"
label_column = "label"
view = "image-classification"

[[models]]
id = "m1"
)";

// kMinimal with `top` placed before the models array, where top-level keys still apply.
std::string with_top(const std::string& top) {
  std::string text = kMinimal;
  text.insert(text.find("[[models]]"), top + "\n");
  return text;
}

struct RunningServer {
  ApiServer server;
  int port = 0;
  std::thread thread;

  explicit RunningServer(Project& project) : server(project) {
    port = server.bind("127.0.0.1", 0);
    thread = std::thread([this] { server.run(); });
    server.wait_until_ready();
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

Json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return parse_json(r->body);
}

}  // namespace

TEST_CASE("minimal config gets every default") {
  TempDir dir;
  const auto c = parse_config(kMinimal, minimal_dir(dir));
  CHECK(c.port == 8000);
  CHECK(c.host == "127.0.0.1");
  CHECK(c.cache_dir == dir.path() / ".cache");
  CHECK(c.histogram_bins == 15);
  CHECK(c.thresholds.decline_threshold == 0.05);
  CHECK(c.thresholds.variance_threshold == 0.05);
  CHECK(c.metrics == std::vector<std::string>{"accuracy"});
  CHECK(c.models.size() == 1);
  CHECK(c.models[0].function == "m1");
  CHECK(c.workers >= 1);
  CHECK(c.transforms.empty());
  CHECK(c.view == "image-classification");
  CHECK(c.slices_file() == dir.path() / "slices.json");
}

TEST_CASE("config errors name the problem") {
  TempDir dir;
  const auto root = minimal_dir(dir);
  auto without = [](std::string text, const std::string& line) {
    text.erase(text.find(line), line.size());
    return text;
  };
  auto message = [&](const std::string& text) {
    try {
      parse_config(text, root);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  CHECK(message(without(kMinimal, "id_column = \"id\"\n")).find("'id_column'") != std::string::npos);
  CHECK(message(without(kMinimal, "view = \"image-classification\"\n")).find("'view'") != std::string::npos);
  CHECK(message(std::string(kMinimal) + "[[models]]\nid = \"m1\"\n").find("duplicate model id 'm1'") !=
        std::string::npos);
  CHECK(message(with_top("port = 70000")).find("'port'") != std::string::npos);
  CHECK(message(with_top("transforms = [\"none\"]")).find("none") != std::string::npos);
  CHECK(message(with_top("plugins = [\"\"]")).find("empty command") != std::string::npos);
  CHECK(message("metadata = \n").find("invalid TOML at line 1") != std::string::npos);

  std::string missing_meta = kMinimal;
  missing_meta.replace(missing_meta.find("meta.csv"), 8, "nope.csv");
  CHECK(message(missing_meta).find("does not exist") != std::string::npos);
  CHECK_THROWS_AS(load_config(root / "absent.toml"), ConfigError);
}

TEST_CASE("config optional keys") {
  TempDir dir;
  const auto root = minimal_dir(dir);
  const std::string text = with_top(R"(
plugins = ["./bin/plug --fast", ["python3", "p.py"], { command = "tool", working_dir = "w" }]
transforms = ["noise"]
metrics = ["accuracy", "wer"]
cache_dir = "/tmp/elsewhere"
port = 9000
workers = 3
plugin_timeout_ms = 1500
[thresholds]
decline = 0.1
variance = 0.02
[histogram]
bins = 20
columns = { "raw::age" = 5 }
)");
  const auto c = parse_config(text, root);
  REQUIRE(c.plugins.size() == 3);
  CHECK(c.plugins[0].argv == std::vector<std::string>{(root / "bin/plug").lexically_normal().string(), "--fast"});
  CHECK(c.plugins[0].working_dir == root);
  CHECK(c.plugins[1].argv == std::vector<std::string>{"python3", "p.py"});
  CHECK(c.plugins[2].working_dir == root / "w");
  CHECK(c.transforms == std::vector<std::string>{"noise"});
  CHECK(c.metrics.size() == 2);
  CHECK(c.cache_dir == "/tmp/elsewhere");
  CHECK(c.port == 9000);
  CHECK(c.workers == 3);
  CHECK(c.plugin_timeout == std::chrono::milliseconds(1500));
  CHECK(c.thresholds.decline_threshold == 0.1);
  CHECK(c.thresholds.variance_threshold == 0.02);
  CHECK(c.histogram_bins == 20);
  CHECK(c.column_bins.at("raw::age") == 5);
}

TEST_CASE("store round trip is byte stable") {
  TempDir dir;
  const auto sf = dir.path() / "slices.json";
  const auto rf = dir.path() / "reports.json";
  std::string slices_text, reports_text;
  {
    ProjectStore store(sf, rf);
    Slice a;
    a.name = "Quiet clips";
    a.predicate = FilterPredicate::conjunction({FilterPredicate::leaf("raw::amplitude", CompareOp::gt, 0.04),
                                                FilterPredicate::leaf("raw::amplitude", CompareOp::lt, 0.12)});
    a.folder = "audio";
    a.created_at = Timestamp{1700000000123};
    CHECK(store.add_slice(a).slice_id == "quiet-clips");
    a.folder = std::nullopt;
    CHECK(store.add_slice(a).slice_id == "quiet-clips-2");  // same name, other folder
    CHECK_THROWS_AS(store.add_slice(a), ConflictError);
    store.add_folder("empty");
    CHECK_THROWS_AS(store.add_folder("empty"), ConflictError);

    BehavioralTest t;
    t.slice_id = "quiet-clips";
    t.metric_id = "accuracy";
    t.comparator = Comparator::gt;
    t.threshold = 0.7;
    CHECK(store.add_test(t).test_id == "quiet-clips-accuracy");
    t.test_id = "quiet-clips-accuracy";
    CHECK_THROWS_AS(store.add_test(t), ConflictError);
    t.test_id.clear();
    t.slice_id = "nope";
    CHECK_THROWS_AS(store.add_test(t), NotFoundError);

    Report r;
    r.name = "Weekly";
    ReportEntry e;
    e.slice_id = "quiet-clips-2";
    e.metric_id = "accuracy";
    BehavioralTest et;
    et.comparator = Comparator::ge;
    et.threshold = 0.5;
    e.test = et;
    r.entries.push_back(e);
    const Report saved = store.add_report(r);
    CHECK(saved.report_id == "weekly");
    REQUIRE(saved.entries[0].test);
    CHECK(saved.entries[0].test->slice_id == "quiet-clips-2");
    CHECK(saved.entries[0].test->test_id == "weekly-quiet-clips-2");
    CHECK(store.all_tests().size() == 2);

    CHECK_THROWS_AS(store.remove_slice("quiet-clips"), ConflictError);  // used by a test
    CHECK_THROWS_AS(store.remove_slice("nope"), NotFoundError);
    slices_text = read_file(sf);
    reports_text = read_file(rf);
    CHECK(slices_text == store.slices_text());
    CHECK(reports_text == store.reports_text());
    CHECK(slices_text.back() == '\n');
  }
  ProjectStore again(sf, rf);
  CHECK(again.slices_text() == slices_text);
  CHECK(again.reports_text() == reports_text);
  CHECK(again.slices().size() == 2);
  CHECK(again.folders() == std::vector<std::string>{"audio", "empty"});

  // a rewrite after reload leaves the bytes alone
  const BehavioralTest kept = again.tests().front();
  again.remove_test(kept.test_id);
  CHECK(read_file(rf) != reports_text);
  again.add_test(kept);
  CHECK(read_file(rf) == reports_text);

  write_file(sf, "{\"version\": 7, \"folders\": [], \"slices\": []}");
  CHECK_THROWS_AS(ProjectStore(sf, rf), UnknownVersionError);
}

TEST_CASE("replace_report keeps the report's position") {
  TempDir dir;
  ProjectStore store(dir.path() / "s.json", dir.path() / "r.json");
  Slice s;
  s.name = "all";
  store.add_slice(s);
  for (const char* n : {"a", "b", "c"}) {
    Report r;
    r.name = n;
    r.entries.push_back({"all", "accuracy", "none", std::nullopt});
    store.add_report(r);
  }
  Report b = *store.report("b");
  b.name = "bee";
  store.replace_report(b);
  const auto all = store.reports();
  REQUIRE(all.size() == 3);
  CHECK(all[1].name == "bee");
  CHECK(store.report_by_name("bee")->report_id == "b");
  store.remove_report("b");
  CHECK_THROWS_AS(store.remove_report("b"), NotFoundError);
  CHECK(slugify("  Héllo, World!  ") == "h-llo-world");
  CHECK(slugify("***") == "item");
}

TEST_CASE("project processing, series, tests and export") {
  TempDir dir;
  const auto config = load_config(write_configured_project(dir.path(), 40, kMock));
  Project project(config);
  CHECK_THROWS_AS(project.engine(), NotReadyError);
  const auto first = project.process();
  CHECK(first.run.complete());
  CHECK(first.executed() == 2);
  CHECK(project.status().state == ProcessingState::ready);

  const Slice s = project.create_slice("quiet", std::nullopt, Json("0.04 < amplitude < 0.12"));
  CHECK(s.slice_id == "quiet");
  CHECK_THROWS_AS(project.create_slice("bad", std::nullopt, Json("amplitude <")), PredicateError);
  CHECK_THROWS_AS(project.create_slice("bad", std::nullopt, Json("nosuch > 1")), PredicateError);

  const auto series = project.series("quiet", "accuracy", "none");
  REQUIRE(series.points.size() == 2);
  const auto rows = filter_rows(project.engine()->table(), s.predicate, "none");
  std::size_t wrong_m1 = 0;
  for (const RowId r : rows) {
    const auto id = project.engine()->table().instance_id(r);
    if (std::stoi(id.substr(1)) % 4 == 0) ++wrong_m1;
  }
  CHECK(series.points[0].n == rows.size());
  CHECK(*series.points[0].value == doctest::Approx(1.0 - double(wrong_m1) / double(rows.size())).epsilon(1e-12));
  CHECK(*series.points[1].value == 1.0);
  REQUIRE(series.fit);
  CHECK(series.fit->slope > 0);
  CHECK(series.flag == SeriesFlag::none);

  // plugin metric: error share, so m2 is 0
  const auto wer = project.series("quiet", "wer", "none");
  CHECK(*wer.points[1].value == 0.0);
  CHECK(*wer.points[0].value == doctest::Approx(1.0 - *series.points[0].value));
  CHECK_THROWS_AS(project.series("quiet", "nonsense", "none"), NotFoundError);
  CHECK_THROWS_AS(project.series("quiet", "accuracy", "noise"), NotFoundError);
  CHECK_THROWS_AS(project.series("missing", "accuracy", "none"), NotFoundError);

  BehavioralTest t;
  t.slice_id = "quiet";
  t.metric_id = "accuracy";
  t.comparator = Comparator::gt;
  t.threshold = 0.9;
  project.store().add_test(t);
  const auto outcomes = project.evaluate_tests();
  REQUIRE(outcomes.size() == 1);
  CHECK(outcomes[0].result.verdicts[0].verdict == Verdict::fail);
  CHECK(outcomes[0].result.verdicts[1].verdict == Verdict::pass);
  CHECK_FALSE(outcomes[0].result.latest_model_failed);

  Report r;
  r.name = "Weekly / audio";
  r.entries.push_back({"quiet", "accuracy", "none", t});
  project.store().add_report(r);
  const auto files = project.export_report("Weekly / audio", dir.path() / "out");
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "Weekly _ audio.html");
  const auto html = read_file(files[0]);
  CHECK(html.find("<svg") != std::string::npos);
  CHECK(html.find("<script") == std::string::npos);
  CHECK(read_file(files[1]).find("| quiet") != std::string::npos);

  Project warm(config);
  const auto second = warm.process();
  CHECK(second.executed() == 0);
  CHECK(second.run.invocations == 0);
  CHECK(warm.store().slices().size() == 1);
}

TEST_CASE("http api end to end") {
  TempDir dir;
  const auto config = load_config(write_configured_project(dir.path(), 60, kMock));
  Project project(config);
  project.process();
  const auto engine = project.engine();
  std::string slices_before;
  {
    RunningServer srv(project);
    auto cli = srv.client();

    auto health = cli.Get("/api/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(body_of(health)["processing"]["state"] == "ready");

    const Json schema = body_of(cli.Get("/api/v1/schema"));
    CHECK(schema["row_count"] == 60);
    CHECK(schema["models"] == Json::array({"m1", "m2"}));
    CHECK(schema["metrics"] == Json::array({"accuracy", "wer"}));

    // Fig. 3 style slice
    auto created = cli.Post("/api/v1/slices", R"({"name":"quiet","predicate":"0.04 < amplitude < 0.12"})",
                            "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    auto dup = cli.Post("/api/v1/slices", R"({"name":"quiet","predicate":"amplitude > 0"})", "application/json");
    CHECK(dup->status == 409);
    CHECK(body_of(dup)["error"]["code"] == "conflict");
    const Json listed = body_of(cli.Get("/api/v1/slices"));
    REQUIRE(listed["slices"].size() == 1);
    CHECK(listed["slices"][0]["predicate_text"] == "raw::amplitude > 0.04 && raw::amplitude < 0.12");

    auto bad = cli.Post("/api/v1/instances", R"({"predicate":"amplitude <"})", "application/json");
    CHECK(bad->status == 400);
    CHECK(body_of(bad)["error"]["code"] == "invalid_predicate");
    CHECK(body_of(bad)["error"]["position"] == 11);
    CHECK(cli.Post("/api/v1/instances", "{nope", "application/json")->status == 400);
    CHECK(cli.Post("/api/v1/instances", R"({"limit": 501})", "application/json")->status == 400);
    CHECK(cli.Post("/api/v1/histograms", R"({"transform":"blur"})", "application/json")->status == 404);
    CHECK(cli.Get("/api/v1/slices/nope")->status == 404);
    CHECK(cli.Get("/api/v1/nowhere")->status == 404);

    // API numbers equal engine numbers
    const std::string state_text = R"({"model":"m1","metric":"accuracy",
      "selections":{"raw::speaker":{"categories":["bob"]},"raw::amplitude":{"range":{"min":0.05}}}})";
    const Json hist = body_of(cli.Post("/api/v1/histograms", state_text, "application/json"));
    const CrossFilterState state = state_from_json(parse_json(state_text), engine->table());
    const auto expect = engine->histograms(state);
    REQUIRE(hist["histograms"].size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(hist["histograms"][i]["column_id"] == expect[i].spec.column_id);
      CHECK(hist["histograms"][i]["total"].get<std::vector<std::uint64_t>>() == expect[i].total);
      CHECK(hist["histograms"][i]["filtered"].get<std::vector<std::uint64_t>>() == expect[i].filtered);
      if (!expect[i].spec.edges.empty()) {
        CHECK(hist["histograms"][i]["edges"].get<std::vector<double>>() == expect[i].spec.edges);
      }
    }
    CHECK(hist["filtered_count"] == engine->filtered(state).count());
    const auto chip = engine->metric(state_predicate(engine->table(), state), "m1", "none", "accuracy");
    CHECK(hist["metric"]["value"].get<double>() == *chip.value);
    CHECK(hist["metric"]["n"] == chip.n);

    const Json page = body_of(cli.Post("/api/v1/instances",
                                       R"({"model":"m2","predicate":"speaker == \"bob\"","offset":3,"limit":4})",
                                       "application/json"));
    CHECK(page["total"] == 20);
    CHECK(page["offset"] == 3);
    REQUIRE(page["instances"].size() == 4);
    CHECK(page["instances"][0]["output"] == page["instances"][0]["label"]);

    const Json series = body_of(cli.Get("/api/v1/series?slice=quiet&metric=accuracy"));
    const auto direct = project.series("quiet", "accuracy", "none");
    REQUIRE(series["points"].size() == 2);
    CHECK(series["points"][0]["value"].get<double>() == *direct.points[0].value);
    CHECK(series["fit"]["slope"].get<double>() == direct.fit->slope);
    CHECK(series["flag"] == "none");
    CHECK(cli.Get("/api/v1/series?metric=accuracy")->status == 400);

    auto test = cli.Post("/api/v1/tests",
                         R"({"slice_id":"quiet","metric_id":"accuracy","comparator":">","threshold":0.99})",
                         "application/json");
    CHECK(test->status == 201);
    CHECK(body_of(test)["test_id"] == "quiet-accuracy");
    CHECK(cli.Post("/api/v1/tests", R"({"slice_id":"quiet","metric_id":"bogus","comparator":">","threshold":1})",
                   "application/json")
              ->status == 404);
    const Json results = body_of(cli.Get("/api/v1/testresults"));
    CHECK(results["results"][0]["verdicts"][0]["verdict"] == "fail");

    auto report = cli.Post("/api/v1/reports",
                           R"({"name":"weekly","entries":[{"slice_id":"quiet","metric_id":"accuracy",
                               "test":{"comparator":">=","threshold":0.5}}]})",
                           "application/json");
    REQUIRE(report);
    CHECK(report->status == 201);
    auto put = cli.Put("/api/v1/reports/weekly", R"({"name":"weekly v2","entries":[]})", "application/json");
    CHECK(put->status == 200);
    CHECK(body_of(cli.Get("/api/v1/reports/weekly"))["name"] == "weekly v2");
    cli.Put("/api/v1/reports/weekly",
            R"({"name":"weekly","entries":[{"slice_id":"quiet","metric_id":"accuracy","transform_id":"none","test":null}]})",
            "application/json");
    auto html = cli.Get("/api/v1/export/weekly?format=html");
    REQUIRE(html);
    CHECK(html->status == 200);
    CHECK(html->get_header_value("Content-Type").find("text/html") == 0);
    CHECK(html->body.find("<svg") != std::string::npos);
    const Json doc = body_of(cli.Get("/api/v1/export/weekly?format=json"));
    CHECK(report_document_from_json(doc).entries.size() == 1);
    CHECK(cli.Get("/api/v1/export/weekly?format=pdf")->status == 400);
    CHECK(cli.Get("/api/v1/export/nothing")->status == 404);

    CHECK(cli.Post("/api/v1/folders", R"({"name":"audio"})", "application/json")->status == 201);
    CHECK(body_of(cli.Get("/api/v1/folders"))["folders"] == Json::array({"audio"}));

    // data files, ranges and traversal
    const std::string bytes = recording_bytes(3);
    auto full = cli.Get("/api/v1/data/audio/a3.wav");
    REQUIRE(full);
    CHECK(full->status == 200);
    CHECK(full->body == bytes);
    CHECK(full->get_header_value("Content-Type") == "audio/wav");
    auto part = cli.Get("/api/v1/data/audio/a3.wav", {{"Range", "bytes=2-5"}});
    REQUIRE(part);
    CHECK(part->status == 206);
    CHECK(part->body == bytes.substr(2, 4));
    CHECK(cli.Get("/api/v1/data/../metadata.csv")->status == 404);
    CHECK(cli.Get("/api/v1/data/%2e%2e/metadata.csv")->status == 404);
    CHECK(cli.Get("/api/v1/data/audio/none.wav")->status == 404);

    CHECK(cli.Delete("/api/v1/slices/quiet")->status == 409);  // still used
    CHECK(cli.Delete("/api/v1/tests/quiet-accuracy")->status == 204);
    CHECK(cli.Delete("/api/v1/reports/weekly")->status == 204);
    CHECK(cli.Post("/api/v1/slices", R"({"name":"loud","predicate":{"kind":"leaf","column":"raw::amplitude","op":">","value":0.2}})",
                   "application/json")
              ->status == 201);
    slices_before = cli.Get("/api/v1/slices")->body;
  }

  // restart: new project and server over the same files
  Project again(config);
  again.process();
  RunningServer srv(again);
  auto cli = srv.client();
  CHECK(cli.Get("/api/v1/slices")->body == slices_before);
}

TEST_CASE("http answers 503 with progress while processing") {
  TempDir dir;
  ProjectSpec spec;
  spec.plugin_args = {"--model", "m1", "--model", "m2", "--sleep-ms", "400"};
  const auto config = load_config(write_configured_project(dir.path(), 10, kMock, spec));
  Project project(config);
  RunningServer srv(project);
  project.process_in_background();
  auto cli = srv.client();
  auto schema = cli.Get("/api/v1/schema");
  REQUIRE(schema);
  CHECK(schema->status == 503);
  const Json body = parse_json(schema->body);
  CHECK(body["error"]["code"] == "not_ready");
  CHECK(body["progress"]["state"] == "running");
  CHECK(cli.Get("/api/v1/health")->status == 200);
  CHECK(cli.Get("/api/v1/slices")->status == 200);  // persisted objects need no table
  project.wait();
  CHECK(cli.Get("/api/v1/schema")->status == 200);
}

TEST_CASE("cli exit codes") {
  TempDir dir;
  const auto config = write_configured_project(dir.path(), 40, kMock).string();

  auto usage = run_command({kCli, "bogus"});
  CHECK(usage.exit_code == 64);
  CHECK(usage.output.find("Usage") != std::string::npos);
  CHECK(run_command({kCli}).exit_code == 64);
  CHECK(run_command({kCli, "--help"}).exit_code == 0);
  CHECK(run_command({kCli, "--config", (dir.path() / "nope.toml").string(), "process"}).exit_code == 2);

  auto first = run_command({kCli, "--config", config, "process"});
  CHECK(first.exit_code == 0);
  CHECK(first.output.find("2 tasks executed") != std::string::npos);
  auto second = run_command({kCli, "--config", config, "process"});
  CHECK(second.exit_code == 0);
  CHECK(second.output.find("0 tasks executed (cache)") != std::string::npos);

  CHECK(run_command({kCli, "--config", config, "test"}).exit_code == 0);  // no tests yet

  {
    Project project(load_config(config));
    project.process();
    project.create_slice("every", std::nullopt, Json("amplitude >= 0"));
    BehavioralTest t;
    t.slice_id = "every";
    t.metric_id = "accuracy";
    t.comparator = Comparator::gt;
    t.threshold = 0.7;
    project.store().add_test(t);
    Report r;
    r.name = "nightly";
    r.entries.push_back({"every", "accuracy", "none", std::nullopt});
    project.store().add_report(r);
  }
  auto passing = run_command({kCli, "--config", config, "test"});
  CHECK(passing.exit_code == 0);
  CHECK(passing.output.find("every-accuracy") != std::string::npos);

  auto exported = run_command({kCli, "--config", config, "export-report", "nightly", "--out",
                               (dir.path() / "exp").string()});
  CHECK(exported.exit_code == 0);
  CHECK(fs::exists(dir.path() / "exp" / "nightly.html"));
  CHECK(fs::exists(dir.path() / "exp" / "nightly.md"));
  CHECK(run_command({kCli, "--config", config, "export-report", "absent"}).exit_code == 2);

  // a crashing model leaves the run partial
  const auto broken = dir.path() / "broken";
  ProjectSpec spec;
  spec.plugin_args = {"--model", "m1", "--model", "m2", "--crash", "m2"};
  const auto bconf = write_configured_project(broken, 20, kMock, spec).string();
  auto partial = run_command({kCli, "--config", bconf, "process"});
  CHECK(partial.exit_code == 2);
  CHECK(partial.output.find("failed") != std::string::npos);
}

TEST_CASE("serve binds the requested port") {
  TempDir dir;
  const auto config = write_configured_project(dir.path(), 10, kMock).string();
  const int port = free_port();
  const pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    const std::string p = std::to_string(port);
    ::execl(kCli.c_str(), kCli.c_str(), "--config", config.c_str(), "serve", "--port", p.c_str(), nullptr);
    ::_exit(127);
  }
  httplib::Client cli("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !res; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    res = cli.Get("/api/v1/health");
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  ::kill(pid, SIGINT);
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
