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
#include <span>
#include <string>
#include <vector>

#include "sliceval/objects.hpp"
#include "sliceval/serialize.hpp"

namespace sliceval {

// One model's metric value; x is the model's position in the configured order.
struct SeriesPoint {
  std::size_t x = 0;
  std::string model_id;
  std::optional<double> value;  // gap when missing
  std::uint64_t n = 0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double residual_sd = 0;  // sqrt(SSE / (k - 2)) for k >= 3 points, else 0
  std::size_t points = 0;

  friend bool operator==(const LinearFit&, const LinearFit&) = default;
};

// Least squares over the non-missing points; nullopt with fewer than two.
std::optional<LinearFit> fit_series(std::span<const SeriesPoint> points);

enum class SeriesFlag { none, downward, high_variance };
std::string_view to_string(SeriesFlag flag);
std::optional<SeriesFlag> parse_series_flag(std::string_view text);

inline constexpr double kDefaultDeclineThreshold = 0.05;
inline constexpr double kDefaultVarianceThreshold = 0.05;

struct FlagConfig {
  double decline_threshold = kDefaultDeclineThreshold;
  double variance_threshold = kDefaultVarianceThreshold;
};

struct MetricSeries {
  std::string slice_id;
  std::string metric_id;
  std::string transform_id{"none"};
  std::vector<SeriesPoint> points;
  std::optional<LinearFit> fit;
  SeriesFlag flag = SeriesFlag::none;

  friend bool operator==(const MetricSeries&, const MetricSeries&) = default;
};

// Downward when the fitted line falls by at least decline_threshold between
// the first and last fitted points; high variance when residual_sd reaches
// variance_threshold. Downward wins when both hold.
SeriesFlag flag_series(const MetricSeries& series, const FlagConfig& config = {});

// Points follow model_order; models without a matching record become gaps.
MetricSeries build_series(const std::string& slice_id, const std::string& metric_id,
                          const std::string& transform_id, std::span<const std::string> model_order,
                          std::span<const MetricRecord> records, const FlagConfig& config = {});

enum class Verdict { pass, fail, indeterminate_fail, not_evaluated };
std::string_view to_string(Verdict verdict);
std::optional<Verdict> parse_verdict(std::string_view text);
inline bool is_failure(Verdict v) { return v == Verdict::fail || v == Verdict::indeterminate_fail; }

struct ModelVerdict {
  std::string model_id;
  std::optional<double> value;
  std::uint64_t n = 0;
  Verdict verdict = Verdict::not_evaluated;

  friend bool operator==(const ModelVerdict&, const ModelVerdict&) = default;
};

struct TestResult {
  std::string test_id;
  std::vector<ModelVerdict> verdicts;  // one per model, in model order
  bool latest_model_failed = false;

  friend bool operator==(const TestResult&, const TestResult&) = default;
};

// A model with no record for the test's (slice, metric, transform) is
// not_evaluated; a record with n == 0 is indeterminate_fail.
TestResult evaluate_test(const BehavioralTest& test, std::span<const std::string> model_order,
                         std::span<const MetricRecord> records);

// Throws ConfigError when the test names a slice or metric that does not exist.
void check_test_references(const BehavioralTest& test, std::span<const Slice> slices,
                           std::span<const std::string> metric_ids);

struct ReportEntryDocument {
  std::string slice_id;
  std::string slice_name;
  std::string predicate;  // DSL text
  MetricSeries series;
  std::optional<BehavioralTest> test;
  std::optional<TestResult> result;

  friend bool operator==(const ReportEntryDocument&, const ReportEntryDocument&) = default;
};

struct ReportDocument {
  std::string report_id;
  std::string name;
  Timestamp generated_at;
  std::vector<std::string> models;
  std::vector<ReportEntryDocument> entries;
  std::size_t failures_latest_count = 0;  // tests failing on the last model

  friend bool operator==(const ReportDocument&, const ReportDocument&) = default;
};

// Entries whose slice is unknown keep the id with an empty name and predicate.
ReportDocument build_report(const Report& report, std::span<const Slice> slices,
                            std::span<const std::string> model_order,
                            std::span<const MetricRecord> records, Timestamp generated_at,
                            const FlagConfig& config = {});

Json to_json(const MetricSeries& series);
Json to_json(const TestResult& result);
Json to_json(const ReportDocument& doc);
ReportDocument report_document_from_json(const Json& json);

// Self-contained page: inline styles, inline SVG sparklines, no scripts.
std::string render_html(const ReportDocument& doc);
std::string render_markdown(const ReportDocument& doc);

}  // namespace sliceval
