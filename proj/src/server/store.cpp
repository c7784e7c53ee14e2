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

#include "sliceval/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

namespace fs = std::filesystem;

std::optional<std::string> read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_atomic(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

const Json& array_field(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array()) throw SerializationError(std::string("'") + key + "' must be an array");
  return *it;
}

void check_file_version(const Json& j, const fs::path& p) {
  if (!j.is_object()) throw SerializationError(p.string() + ": expected a JSON object");
  const auto it = j.find("version");
  if (it == j.end() || !it->is_number_integer()) throw SerializationError(p.string() + ": missing 'version'");
  if (it->get<int>() != kSchemaVersion) throw UnknownVersionError(it->get<int>());
}

std::string unique_id(const std::string& base, const std::function<bool(const std::string&)>& taken) {
  if (!taken(base)) return base;
  for (int i = 2;; ++i) {
    const std::string id = base + "-" + std::to_string(i);
    if (!taken(id)) return id;
  }
}

}  // namespace

std::string slugify(std::string_view name) {
  std::string out;
  bool dash = false;
  for (const unsigned char c : name) {
    if (std::isalnum(c)) {
      if (dash && !out.empty()) out += '-';
      out += static_cast<char>(std::tolower(c));
      dash = false;
    } else {
      dash = true;
    }
  }
  return out.empty() ? std::string("item") : out;
}

ProjectStore::ProjectStore(fs::path slices_file, fs::path reports_file)
    : slices_file_(std::move(slices_file)), reports_file_(std::move(reports_file)) {
  if (const auto text = read_text(slices_file_)) {
    const Json j = parse_json(*text);
    check_file_version(j, slices_file_);
    for (const auto& f : array_field(j, "folders")) folders_.push_back(f.get<std::string>());
    for (const auto& s : array_field(j, "slices")) slices_.push_back(slice_from_json(s));
  }
  if (const auto text = read_text(reports_file_)) {
    const Json j = parse_json(*text);
    check_file_version(j, reports_file_);
    for (const auto& r : array_field(j, "reports")) reports_.push_back(report_from_json(r));
    for (const auto& t : array_field(j, "tests")) tests_.push_back(test_from_json(t));
  }
}

std::string ProjectStore::slices_text() const {
  Json j;
  j["version"] = kSchemaVersion;
  j["folders"] = folders_;
  Json arr = Json::array();
  for (const auto& s : slices_) arr.push_back(to_json(s));
  j["slices"] = std::move(arr);
  return dump(j) + "\n";
}

std::string ProjectStore::reports_text() const {
  Json j;
  j["version"] = kSchemaVersion;
  Json reports = Json::array();
  for (const auto& r : reports_) reports.push_back(to_json(r));
  j["reports"] = std::move(reports);
  Json tests = Json::array();
  for (const auto& t : tests_) tests.push_back(to_json(t));
  j["tests"] = std::move(tests);
  return dump(j) + "\n";
}

void ProjectStore::save_slices() const { write_atomic(slices_file_, slices_text()); }
void ProjectStore::save_reports() const { write_atomic(reports_file_, reports_text()); }

std::vector<Slice> ProjectStore::slices() const {
  std::lock_guard lock(mu_);
  return slices_;
}

std::optional<Slice> ProjectStore::slice(const std::string& slice_id) const {
  std::lock_guard lock(mu_);
  for (const auto& s : slices_) {
    if (s.slice_id == slice_id) return s;
  }
  return std::nullopt;
}

Slice ProjectStore::add_slice(Slice slice) {
  std::lock_guard lock(mu_);
  if (slice.name.empty()) throw InvalidRequestError("a slice needs a name");
  for (const auto& s : slices_) {
    if (s.name == slice.name && s.folder == slice.folder) {
      throw ConflictError("a slice named '" + slice.name + "' already exists" +
                          (slice.folder ? " in folder '" + *slice.folder + "'" : std::string()));
    }
  }
  auto taken = [&](const std::string& id) {
    return std::any_of(slices_.begin(), slices_.end(), [&](const Slice& s) { return s.slice_id == id; });
  };
  if (slice.slice_id.empty()) {
    slice.slice_id = unique_id(slugify(slice.name), taken);
  } else if (taken(slice.slice_id)) {
    throw ConflictError("slice id '" + slice.slice_id + "' is taken");
  }
  if (slice.created_at == Timestamp{}) slice.created_at = now_timestamp();
  if (slice.folder && std::find(folders_.begin(), folders_.end(), *slice.folder) == folders_.end()) {
    folders_.push_back(*slice.folder);
  }
  slices_.push_back(slice);
  save_slices();
  return slice;
}

bool ProjectStore::slice_in_use(const std::string& slice_id) const {
  for (const auto& r : reports_) {
    for (const auto& e : r.entries) {
      if (e.slice_id == slice_id) return true;
    }
  }
  return std::any_of(tests_.begin(), tests_.end(), [&](const BehavioralTest& t) { return t.slice_id == slice_id; });
}

void ProjectStore::remove_slice(const std::string& slice_id) {
  std::lock_guard lock(mu_);
  const auto it = std::find_if(slices_.begin(), slices_.end(), [&](const Slice& s) { return s.slice_id == slice_id; });
  if (it == slices_.end()) throw NotFoundError("no slice '" + slice_id + "'");
  if (slice_in_use(slice_id)) throw ConflictError("slice '" + slice_id + "' is used by a report or test");
  slices_.erase(it);
  save_slices();
}

std::vector<std::string> ProjectStore::folders() const {
  std::lock_guard lock(mu_);
  return folders_;
}

void ProjectStore::add_folder(const std::string& name) {
  std::lock_guard lock(mu_);
  if (name.empty()) throw InvalidRequestError("a folder needs a name");
  if (std::find(folders_.begin(), folders_.end(), name) != folders_.end()) {
    throw ConflictError("folder '" + name + "' exists");
  }
  folders_.push_back(name);
  save_slices();
}

std::vector<Report> ProjectStore::reports() const {
  std::lock_guard lock(mu_);
  return reports_;
}

std::optional<Report> ProjectStore::report(const std::string& report_id) const {
  std::lock_guard lock(mu_);
  for (const auto& r : reports_) {
    if (r.report_id == report_id) return r;
  }
  return std::nullopt;
}

std::optional<Report> ProjectStore::report_by_name(const std::string& name) const {
  std::lock_guard lock(mu_);
  for (const auto& r : reports_) {
    if (r.name == name) return r;
  }
  return std::nullopt;
}

bool ProjectStore::test_id_taken(const std::string& test_id) const {
  if (std::any_of(tests_.begin(), tests_.end(), [&](const BehavioralTest& t) { return t.test_id == test_id; })) {
    return true;
  }
  for (const auto& r : reports_) {
    for (const auto& e : r.entries) {
      if (e.test && e.test->test_id == test_id) return true;
    }
  }
  return false;
}

namespace {

void check_report_entries(Report& report, const std::vector<Slice>& slices,
                          const std::function<bool(const std::string&)>& test_taken) {
  if (report.name.empty()) throw InvalidRequestError("a report needs a name");
  std::set<std::string> local;
  for (auto& e : report.entries) {
    if (std::none_of(slices.begin(), slices.end(), [&](const Slice& s) { return s.slice_id == e.slice_id; })) {
      throw NotFoundError("report entry references unknown slice '" + e.slice_id + "'");
    }
    if (e.metric_id.empty()) throw InvalidRequestError("report entries need a metric");
    if (e.test) {
      e.test->slice_id = e.slice_id;
      e.test->metric_id = e.metric_id;
      if (!e.test->transform_id && e.transform_id != "none") e.test->transform_id = e.transform_id;
      if (!std::isfinite(e.test->threshold)) throw InvalidRequestError("test thresholds must be finite");
      if (e.test->test_id.empty()) {
        e.test->test_id = unique_id(report.report_id + "-" + e.slice_id, [&](const std::string& id) {
          return local.count(id) > 0 || test_taken(id);
        });
      }
      if (!local.insert(e.test->test_id).second) throw ConflictError("duplicate test id '" + e.test->test_id + "'");
    }
  }
}

}  // namespace

Report ProjectStore::add_report(Report report) {
  std::lock_guard lock(mu_);
  auto taken = [&](const std::string& id) {
    return std::any_of(reports_.begin(), reports_.end(), [&](const Report& r) { return r.report_id == id; });
  };
  if (report.report_id.empty()) {
    report.report_id = unique_id(slugify(report.name), taken);
  } else if (taken(report.report_id)) {
    throw ConflictError("report id '" + report.report_id + "' is taken");
  }
  if (std::any_of(reports_.begin(), reports_.end(), [&](const Report& r) { return r.name == report.name; })) {
    throw ConflictError("a report named '" + report.name + "' already exists");
  }
  check_report_entries(report, slices_, [&](const std::string& id) { return test_id_taken(id); });
  reports_.push_back(report);
  save_reports();
  return report;
}

Report ProjectStore::replace_report(Report report) {
  std::lock_guard lock(mu_);
  const auto it = std::find_if(reports_.begin(), reports_.end(),
                               [&](const Report& r) { return r.report_id == report.report_id; });
  if (it == reports_.end()) throw NotFoundError("no report '" + report.report_id + "'");
  if (std::any_of(reports_.begin(), reports_.end(),
                  [&](const Report& r) { return r.name == report.name && r.report_id != report.report_id; })) {
    throw ConflictError("a report named '" + report.name + "' already exists");
  }
  const auto index = it - reports_.begin();
  const auto others = [&](const std::string& id) {
    for (std::size_t i = 0; i < reports_.size(); ++i) {
      if (static_cast<std::ptrdiff_t>(i) == index) continue;
      for (const auto& e : reports_[i].entries) {
        if (e.test && e.test->test_id == id) return true;
      }
    }
    return std::any_of(tests_.begin(), tests_.end(), [&](const BehavioralTest& t) { return t.test_id == id; });
  };
  check_report_entries(report, slices_, others);
  reports_[static_cast<std::size_t>(index)] = report;
  save_reports();
  return report;
}

void ProjectStore::remove_report(const std::string& report_id) {
  std::lock_guard lock(mu_);
  const auto it = std::find_if(reports_.begin(), reports_.end(), [&](const Report& r) { return r.report_id == report_id; });
  if (it == reports_.end()) throw NotFoundError("no report '" + report_id + "'");
  reports_.erase(it);
  save_reports();
}

std::vector<BehavioralTest> ProjectStore::tests() const {
  std::lock_guard lock(mu_);
  return tests_;
}

BehavioralTest ProjectStore::add_test(BehavioralTest test) {
  std::lock_guard lock(mu_);
  if (std::none_of(slices_.begin(), slices_.end(), [&](const Slice& s) { return s.slice_id == test.slice_id; })) {
    throw NotFoundError("test references unknown slice '" + test.slice_id + "'");
  }
  if (test.metric_id.empty()) throw InvalidRequestError("a test needs a metric");
  if (!std::isfinite(test.threshold)) throw InvalidRequestError("test thresholds must be finite");
  if (test.test_id.empty()) {
    test.test_id = unique_id(test.slice_id + "-" + slugify(test.metric_id), [&](const std::string& id) {
      return test_id_taken(id);
    });
  } else if (test_id_taken(test.test_id)) {
    throw ConflictError("test id '" + test.test_id + "' is taken");
  }
  tests_.push_back(test);
  save_reports();
  return test;
}

void ProjectStore::remove_test(const std::string& test_id) {
  std::lock_guard lock(mu_);
  const auto it = std::find_if(tests_.begin(), tests_.end(), [&](const BehavioralTest& t) { return t.test_id == test_id; });
  if (it == tests_.end()) throw NotFoundError("no test '" + test_id + "'");
  tests_.erase(it);
  save_reports();
}

std::vector<BehavioralTest> ProjectStore::all_tests() const {
  std::lock_guard lock(mu_);
  std::vector<BehavioralTest> out = tests_;
  std::set<std::string> seen;
  for (const auto& t : out) seen.insert(t.test_id);
  for (const auto& r : reports_) {
    for (const auto& e : r.entries) {
      if (e.test && seen.insert(e.test->test_id).second) out.push_back(*e.test);
    }
  }
  return out;
}

}  // namespace sliceval
