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
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sliceval/objects.hpp"
#include "sliceval/serialize.hpp"

namespace sliceval {

// Slices, folders, reports and standalone tests, persisted as two JSON files:
//
//   slices.json   {"version":1,"folders":[name...],"slices":[<slice>...]}
//   reports.json  {"version":1,"reports":[<report>...],"tests":[<test>...]}
//
// Every mutation rewrites the affected file atomically (temp file + rename)
// under one writer lock. Output is canonical, so load + save is byte-stable.
class ProjectStore {
 public:
  // Reads both files when present. Throws SerializationError on bad content.
  ProjectStore(std::filesystem::path slices_file, std::filesystem::path reports_file);

  std::vector<Slice> slices() const;
  std::optional<Slice> slice(const std::string& slice_id) const;
  // Fills an empty slice_id from the name. ConflictError when the id is
  // taken or the name already exists in the same folder. A new folder is
  // created on the fly.
  Slice add_slice(Slice slice);
  // NotFoundError; ConflictError while a report or test still uses it.
  void remove_slice(const std::string& slice_id);

  std::vector<std::string> folders() const;
  void add_folder(const std::string& name);  // ConflictError when it exists

  std::vector<Report> reports() const;
  std::optional<Report> report(const std::string& report_id) const;
  std::optional<Report> report_by_name(const std::string& name) const;
  // Entries must name stored slices (NotFoundError). ConflictError on a taken id.
  Report add_report(Report report);
  Report replace_report(Report report);  // NotFoundError when absent
  void remove_report(const std::string& report_id);

  std::vector<BehavioralTest> tests() const;  // standalone only
  BehavioralTest add_test(BehavioralTest test);
  void remove_test(const std::string& test_id);
  // Standalone tests followed by report-embedded ones, each test_id once.
  std::vector<BehavioralTest> all_tests() const;

  std::string slices_text() const;
  std::string reports_text() const;

 private:
  void save_slices() const;
  void save_reports() const;
  bool slice_in_use(const std::string& slice_id) const;
  bool test_id_taken(const std::string& test_id) const;

  std::filesystem::path slices_file_;
  std::filesystem::path reports_file_;
  mutable std::mutex mu_;
  std::vector<std::string> folders_;
  std::vector<Slice> slices_;
  std::vector<Report> reports_;
  std::vector<BehavioralTest> tests_;
};

// Lowercase letters, digits and '-', never empty.
std::string slugify(std::string_view name);

}  // namespace sliceval
