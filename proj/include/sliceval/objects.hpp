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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sliceval/predicate.hpp"
#include "sliceval/value.hpp"

namespace sliceval {

// A named, persisted predicate.
struct Slice {
  std::string slice_id;
  std::string name;
  FilterPredicate predicate;
  std::optional<std::string> folder;
  Timestamp created_at;

  friend bool operator==(const Slice&, const Slice&) = default;
};

enum class Comparator { gt, ge, lt, le };

std::string_view to_string(Comparator c);
std::optional<Comparator> parse_comparator(std::string_view text);
bool compare(double value, Comparator c, double threshold);

// Asserts that a metric on a slice lies in an expected range.
struct BehavioralTest {
  std::string test_id;
  std::string slice_id;
  std::string metric_id;
  std::optional<std::string> transform_id;  // absent: untransformed rows
  Comparator comparator = Comparator::gt;
  double threshold = 0.0;

  std::string effective_transform() const;
  friend bool operator==(const BehavioralTest&, const BehavioralTest&) = default;
};

struct ReportEntry {
  std::string slice_id;
  std::string metric_id;
  std::string transform_id{"none"};
  std::optional<BehavioralTest> test;

  friend bool operator==(const ReportEntry&, const ReportEntry&) = default;
};

struct Report {
  std::string report_id;
  std::string name;
  std::vector<ReportEntry> entries;

  friend bool operator==(const Report&, const Report&) = default;
};

// A metric value for one (slice, model, transform, metric). value is empty when n == 0.
struct MetricRecord {
  std::string slice_id;
  std::string model_id;
  std::string transform_id;
  std::string metric_id;
  std::optional<double> value;
  std::uint64_t n = 0;
  Timestamp computed_at;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

}  // namespace sliceval
