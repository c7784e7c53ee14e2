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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sliceval/objects.hpp"
#include "sliceval/predicate.hpp"
#include "sliceval/serialize.hpp"
#include "sliceval/table.hpp"

namespace sliceval {

// Fixed-size bitset over table rows.
class RowMask {
 public:
  RowMask() = default;
  explicit RowMask(std::size_t size, bool value = false);

  std::size_t size() const { return size_; }
  bool test(RowId row) const { return (words_[row >> 6] >> (row & 63)) & 1u; }
  void set(RowId row) { words_[row >> 6] |= std::uint64_t{1} << (row & 63); }
  void reset(RowId row) { words_[row >> 6] &= ~(std::uint64_t{1} << (row & 63)); }
  std::size_t count() const;

  RowMask& operator&=(const RowMask& other);
  RowMask& operator|=(const RowMask& other);

  // Calls f(row) for every set bit in ascending order.
  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        const int b = __builtin_ctzll(bits);
        f(static_cast<RowId>(w * 64 + static_cast<std::size_t>(b)));
        bits &= bits - 1;
      }
    }
  }
  std::vector<RowId> rows() const;

  friend bool operator==(const RowMask&, const RowMask&) = default;

 private:
  void trim();

  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

// Rows of one transform scope.
RowMask scope_mask(const MetadataTable& table, std::string_view transform);

// Leaf semantics: a missing cell satisfies only `is missing`; strings compare
// exactly and case-sensitively; `matches` is a substring test and
// `matches_regex` an ECMAScript search; datetimes compare at millisecond
// precision. Throws PredicateError when the predicate is invalid for the table.
RowMask evaluate(const MetadataTable& table, const FilterPredicate& predicate,
                 std::string_view transform);
// Matching rows of `transform` in ingest order.
std::vector<RowId> filter_rows(const MetadataTable& table, const FilterPredicate& predicate,
                               std::string_view transform);

// Widget selections. Ranges are over numbers (datetime: epoch seconds) and
// need at least one bound. Missing cells never match a selection.
struct RangeSelection {
  std::optional<double> min;
  std::optional<double> max;
  bool min_inclusive = true;
  bool max_inclusive = true;

  friend bool operator==(const RangeSelection&, const RangeSelection&) = default;
};
struct CategorySelection {
  std::vector<Value> values;  // strings for nominal, booleans for boolean
  friend bool operator==(const CategorySelection&, const CategorySelection&) = default;
};
struct SubstringSelection {
  std::string text;
  friend bool operator==(const SubstringSelection&, const SubstringSelection&) = default;
};
using Selection = std::variant<RangeSelection, CategorySelection, SubstringSelection>;

struct CrossFilterState {
  std::map<std::string, Selection> selections;  // column id -> selection
  std::string transform{"none"};
  std::optional<std::string> model;
  std::optional<std::string> metric;
  FilterPredicate predicate;  // extra filter, e.g. a slice; All by default
};

// The predicate a selection stands for. Throws PredicateError(type_mismatch)
// when the selection does not suit the column.
FilterPredicate selection_predicate(const ColumnDescriptor& column, const Selection& selection);
// Conjunction of every selection and the extra predicate.
FilterPredicate state_predicate(const MetadataTable& table, const CrossFilterState& state);

Json to_json(const Selection& selection);
Selection selection_from_json(const Json& json);
// Selections keyed by column id plus transform/model/metric and optional predicate text.
CrossFilterState state_from_json(const Json& json, const MetadataTable& table);

inline constexpr std::size_t kDefaultHistogramBins = 15;
inline constexpr std::size_t kMaxCategories = 30;
inline constexpr std::size_t kMaxPageSize = 500;

struct HistogramOptions {
  std::size_t default_bins = kDefaultHistogramBins;
  std::map<std::string, std::size_t> bins;  // per column id
  std::size_t max_categories = kMaxCategories;
};

// Continuous/datetime: `edges` (bins + 1, strictly increasing) over the
// observed range of the scope; a value v lands in bin i when
// edges[i] <= v < edges[i+1], with the last bin closed. An empty column has no
// edges. Nominal/boolean: `categories`, the most frequent first (ties by
// text), plus a trailing "other" bucket when `has_other`.
struct HistogramSpec {
  std::string column_id;
  DType dtype = DType::continuous;
  std::vector<double> edges;
  std::vector<std::string> categories;
  bool has_other = false;

  std::size_t bucket_count() const {
    return edges.empty() ? categories.size() + (has_other ? 1 : 0) : edges.size() - 1;
  }
  friend bool operator==(const HistogramSpec&, const HistogramSpec&) = default;
};

// Counts per bucket; missing cells are counted separately so that the
// buckets plus missing add up to the row count.
struct ColumnHistogram {
  HistogramSpec spec;
  std::vector<std::uint64_t> total;
  std::vector<std::uint64_t> filtered;
  std::uint64_t total_missing = 0;
  std::uint64_t filtered_missing = 0;
};

struct InstanceRecord {
  RowId row = 0;
  std::string instance_id;
  std::string data_file;
  Value label;
  Value output;  // missing without an active model
  std::vector<std::pair<std::string, Value>> values;
};

struct InstancePage {
  std::size_t total = 0;  // matching rows
  std::size_t offset = 0;
  std::vector<InstanceRecord> instances;
};

// Runs a metric plugin over one subset: returns the scalar (missing allowed).
using MetricRunner = std::function<Value(const std::string& function, const Json& rows,
                                         const Json& options)>;

inline constexpr std::string_view kAccuracy = "accuracy";
inline constexpr std::string_view kErrorRate = "error_rate";
inline constexpr std::string_view kMeanPrefix = "mean:";

bool is_builtin_metric(std::string_view metric_id);

// Read-only queries over one table snapshot. Thread-safe; derived data
// (histogram specs, bucket codes, metric values) is computed once per
// snapshot.
class QueryEngine {
 public:
  explicit QueryEngine(MetadataTable table, HistogramOptions options = {},
                       MetricRunner metric_runner = {});
  ~QueryEngine();

  const MetadataTable& table() const { return table_; }

  // Columns that get a widget under `state`: every non-id, non-string column,
  // with model-scoped ones limited to the active transform (and model, if set).
  std::vector<std::string> widget_columns(const CrossFilterState& state) const;

  RowMask filtered(const CrossFilterState& state) const;
  std::vector<ColumnHistogram> histograms(const CrossFilterState& state) const;
  const HistogramSpec& histogram_spec(const std::string& column_id, const std::string& transform) const;

  // Throws InvalidRequestError when limit exceeds kMaxPageSize.
  InstancePage page_instances(const CrossFilterState& state, std::size_t offset,
                              std::size_t limit) const;

  // Metric over the predicate's rows in the (model, transform) scope. Throws
  // NotProcessedError when the outputs do not exist and NotFoundError for an
  // unknown metric.
  MetricRecord metric(const FilterPredicate& predicate, const std::string& model,
                      const std::string& transform, const std::string& metric_id) const;
  MetricRecord slice_metric(const Slice& slice, const std::string& model,
                            const std::string& transform, const std::string& metric_id) const;

 private:
  struct Binned;
  const Binned& binned(const std::string& column_id, const std::string& transform) const;
  double metric_value_builtin(const std::string& metric_id, const std::vector<RowId>& rows,
                              const std::string& model, const std::string& transform,
                              bool& has_value) const;

  MetadataTable table_;
  HistogramOptions options_;
  MetricRunner metric_runner_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<std::string, std::string>, std::shared_ptr<const Binned>> binned_;
  mutable std::map<std::string, MetricRecord> metrics_;
};

// Column named by a `mean:<column>` metric: "output", a canonical id, or a short
// name (model-scoped matches for (model, transform) win). Throws NotFoundError.
std::string resolve_metric_column(const MetadataTable& table, const std::string& name,
                                  const std::string& model, const std::string& transform);

}  // namespace sliceval
