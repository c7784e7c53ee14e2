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
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "sliceval/column.hpp"
#include "sliceval/value.hpp"

namespace sliceval {

using RowId = std::uint32_t;

// Sentinel row for "no source" when extending a column.
inline constexpr RowId kNoRow = static_cast<RowId>(-1);

// Numeric values in ascending order with the rows they came from. Missing
// values are excluded.
struct SortedIndex {
  std::vector<double> values;
  std::vector<RowId> rows;
};

// One immutable typed column.
//  continuous / datetime: doubles (datetime in epoch seconds), NaN = missing
//  boolean: int8 (-1 = missing)
//  nominal / string: dictionary codes (-1 = missing)
class Column {
 public:
  struct Numbers {
    std::vector<double> data;
  };
  struct Flags {
    std::vector<std::int8_t> data;
  };
  struct Dictionary {
    std::vector<std::int32_t> codes;
    std::vector<std::string> entries;
  };
  using Storage = std::variant<Numbers, Flags, Dictionary>;

  Column(ColumnDescriptor desc, Storage storage);

  // Throws TableError when a value does not fit the descriptor's dtype.
  static std::shared_ptr<const Column> from_values(ColumnDescriptor desc,
                                                   std::span<const Value> values);

  const ColumnDescriptor& descriptor() const { return desc_; }
  const std::string& id() const { return desc_.id; }
  DType dtype() const { return desc_.dtype; }
  std::size_t size() const;

  Value cell(RowId row) const;
  bool missing(RowId row) const;

  std::span<const double> numbers() const;
  std::span<const std::int8_t> flags() const;
  std::span<const std::int32_t> codes() const;
  const std::vector<std::string>& dictionary() const;
  // -1 when the text never occurs.
  std::int32_t code_of(std::string_view text) const;

  // Built on first use; numeric columns only.
  const SortedIndex& sorted_index() const;

  // A copy of this column followed by one cell per entry of `sources`
  // (a copy of that row, or missing for kNoRow).
  std::shared_ptr<const Column> extended(std::span<const RowId> sources) const;
  // A copy of this column with `rows` overwritten by the cells of `other` at the same rows.
  std::shared_ptr<const Column> with_cells_from(const Column& other,
                                                std::span<const RowId> rows) const;

 private:
  void build_lookup();

  ColumnDescriptor desc_;
  Storage storage_;
  std::unordered_map<std::string_view, std::int32_t> lookup_;
  mutable std::once_flag index_once_;
  mutable SortedIndex index_;
};

struct TransformVariantRow {
  std::string parent_instance_id;
  std::string transform_id;
  std::string data_file;  // relative to the data root
};

// Row-level bookkeeping shared between snapshots that do not add rows.
struct RowLayout {
  std::vector<std::string> instance_ids;
  std::vector<std::int32_t> transform_codes;  // index into transforms
  std::vector<std::string> transforms;        // transforms[0] == "none"
  std::vector<std::string> data_files;
  std::vector<RowId> parents;  // self for base rows
  std::size_t base_row_count = 0;
  std::unordered_map<std::string, RowId> index;  // instance_id + '\x1f' + transform
  std::vector<std::vector<RowId>> rows_by_transform;

  void rebuild_indexes();
};

// Immutable columnar snapshot. Copies share column storage.
class MetadataTable {
 public:
  MetadataTable() = default;
  MetadataTable(std::vector<std::shared_ptr<const Column>> columns,
                std::shared_ptr<const RowLayout> rows);

  std::vector<ColumnDescriptor> schema() const;
  std::size_t row_count() const { return rows_ ? rows_->instance_ids.size() : 0; }
  std::size_t base_row_count() const { return rows_ ? rows_->base_row_count : 0; }
  std::size_t column_count() const { return columns_.size(); }

  const Column* find(std::string_view id) const;
  // Throws TableError when absent.
  const Column& column(std::string_view id) const;
  const std::vector<std::shared_ptr<const Column>>& columns() const { return columns_; }

  std::optional<RowId> row_of(std::string_view instance_id, std::string_view transform) const;
  const std::string& instance_id(RowId row) const { return rows_->instance_ids[row]; }
  const std::string& transform_of(RowId row) const;
  const std::string& data_file(RowId row) const { return rows_->data_files[row]; }
  RowId parent(RowId row) const { return rows_->parents[row]; }
  // Rows of one transform scope in ascending order; empty for unknown transforms.
  std::span<const RowId> rows_in(std::string_view transform) const;
  const std::vector<std::string>& transforms() const;

  const std::string& id_column() const { return id_column_; }
  const std::string& label_column() const { return label_column_; }
  void set_key_columns(std::string id_column, std::string label_column);

  const std::shared_ptr<const RowLayout>& layout() const { return rows_; }

  // Increases with every derived snapshot.
  std::uint64_t generation() const { return generation_; }

 private:
  friend MetadataTable attach_column(const MetadataTable&, std::shared_ptr<const Column>);
  friend MetadataTable replace_column(const MetadataTable&, std::shared_ptr<const Column>);
  friend MetadataTable add_transform_variants(const MetadataTable&, const std::string&,
                                              std::span<const TransformVariantRow>);

  std::vector<std::shared_ptr<const Column>> columns_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::shared_ptr<const RowLayout> rows_;
  std::string id_column_;
  std::string label_column_;
  std::uint64_t generation_ = 0;
};

// New snapshot with one more column. Throws TableError on a length mismatch
// or a duplicate id.
MetadataTable attach_column(const MetadataTable& table, const ColumnDescriptor& desc,
                            std::span<const Value> values);
MetadataTable attach_column(const MetadataTable& table, std::shared_ptr<const Column> column);
// Swaps an existing column for one with the same id and length.
MetadataTable replace_column(const MetadataTable& table, std::shared_ptr<const Column> column);

// Appends variant rows. Raw, label, id and model-independent distill cells are
// copied from the parent; model-scoped cells start missing. Pairs that already
// exist are skipped. Throws TableError for an unknown parent.
MetadataTable add_transform_variants(const MetadataTable& table, const std::string& transform_id,
                                     std::span<const TransformVariantRow> rows);

// Whether a column's cells are inherited by transform variant rows.
bool inherited_by_variants(const ColumnDescriptor& desc);

}  // namespace sliceval
