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

#include "sliceval/table.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

constexpr double kMissingNumber = std::numeric_limits<double>::quiet_NaN();

std::atomic<std::uint64_t> g_generation{0};

std::string row_key(std::string_view instance, std::string_view transform) {
  std::string key;
  key.reserve(instance.size() + transform.size() + 1);
  key.append(instance);
  key.push_back('\x1f');
  key.append(transform);
  return key;
}

[[noreturn]] void bad_value(const ColumnDescriptor& desc, const Value& v) {
  throw TableError("value '" + canonical_text(v) + "' does not fit " +
                   std::string(to_string(desc.dtype)) + " column '" + desc.id + "'");
}

}  // namespace

Column::Column(ColumnDescriptor desc, Storage storage)
    : desc_(std::move(desc)), storage_(std::move(storage)) {
  const bool numeric = desc_.dtype == DType::continuous || desc_.dtype == DType::datetime;
  const bool dict = desc_.dtype == DType::nominal || desc_.dtype == DType::string;
  if ((numeric && !std::holds_alternative<Numbers>(storage_)) ||
      (dict && !std::holds_alternative<Dictionary>(storage_)) ||
      (desc_.dtype == DType::boolean && !std::holds_alternative<Flags>(storage_))) {
    throw TableError("storage does not match dtype of column '" + desc_.id + "'");
  }
  build_lookup();
}

void Column::build_lookup() {
  if (const auto* d = std::get_if<Dictionary>(&storage_)) {
    lookup_.reserve(d->entries.size());
    for (std::size_t i = 0; i < d->entries.size(); ++i) {
      lookup_.emplace(d->entries[i], static_cast<std::int32_t>(i));
    }
  }
}

std::shared_ptr<const Column> Column::from_values(ColumnDescriptor desc,
                                                  std::span<const Value> values) {
  switch (desc.dtype) {
    case DType::continuous:
    case DType::datetime: {
      Numbers n;
      n.data.reserve(values.size());
      for (const auto& v : values) {
        if (is_missing(v)) {
          n.data.push_back(kMissingNumber);
        } else if (desc.dtype == DType::continuous && std::holds_alternative<double>(v)) {
          n.data.push_back(std::get<double>(v));
        } else if (desc.dtype == DType::datetime && std::holds_alternative<Timestamp>(v)) {
          n.data.push_back(std::get<Timestamp>(v).seconds());
        } else if (desc.dtype == DType::datetime && std::holds_alternative<std::string>(v)) {
          const auto ts = parse_iso8601(std::get<std::string>(v));
          if (!ts) bad_value(desc, v);
          n.data.push_back(ts->seconds());
        } else {
          bad_value(desc, v);
        }
      }
      return std::make_shared<const Column>(std::move(desc), std::move(n));
    }
    case DType::boolean: {
      Flags f;
      f.data.reserve(values.size());
      for (const auto& v : values) {
        if (is_missing(v)) {
          f.data.push_back(-1);
        } else if (const auto* b = std::get_if<bool>(&v)) {
          f.data.push_back(*b ? 1 : 0);
        } else {
          bad_value(desc, v);
        }
      }
      return std::make_shared<const Column>(std::move(desc), std::move(f));
    }
    case DType::nominal:
    case DType::string: {
      Dictionary d;
      d.codes.reserve(values.size());
      std::unordered_map<std::string, std::int32_t> seen;
      for (const auto& v : values) {
        if (is_missing(v)) {
          d.codes.push_back(-1);
          continue;
        }
        std::string text = canonical_text(v);
        auto [it, inserted] = seen.emplace(text, static_cast<std::int32_t>(d.entries.size()));
        if (inserted) d.entries.push_back(std::move(text));
        d.codes.push_back(it->second);
      }
      return std::make_shared<const Column>(std::move(desc), std::move(d));
    }
  }
  throw TableError("unknown dtype");
}

std::size_t Column::size() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Dictionary>) {
          return s.codes.size();
        } else {
          return s.data.size();
        }
      },
      storage_);
}

Value Column::cell(RowId row) const {
  switch (desc_.dtype) {
    case DType::continuous: {
      const double v = std::get<Numbers>(storage_).data[row];
      if (std::isnan(v)) return std::monostate{};
      return v;
    }
    case DType::datetime: {
      const double v = std::get<Numbers>(storage_).data[row];
      if (std::isnan(v)) return std::monostate{};
      return Timestamp{static_cast<std::int64_t>(std::llround(v * 1000.0))};
    }
    case DType::boolean: {
      const auto v = std::get<Flags>(storage_).data[row];
      if (v < 0) return std::monostate{};
      return v == 1;
    }
    case DType::nominal:
    case DType::string: {
      const auto& d = std::get<Dictionary>(storage_);
      const auto code = d.codes[row];
      if (code < 0) return std::monostate{};
      return d.entries[static_cast<std::size_t>(code)];
    }
  }
  return std::monostate{};
}

bool Column::missing(RowId row) const {
  switch (desc_.dtype) {
    case DType::continuous:
    case DType::datetime:
      return std::isnan(std::get<Numbers>(storage_).data[row]);
    case DType::boolean:
      return std::get<Flags>(storage_).data[row] < 0;
    default:
      return std::get<Dictionary>(storage_).codes[row] < 0;
  }
}

std::span<const double> Column::numbers() const { return std::get<Numbers>(storage_).data; }
std::span<const std::int8_t> Column::flags() const { return std::get<Flags>(storage_).data; }
std::span<const std::int32_t> Column::codes() const {
  return std::get<Dictionary>(storage_).codes;
}
const std::vector<std::string>& Column::dictionary() const {
  return std::get<Dictionary>(storage_).entries;
}

std::int32_t Column::code_of(std::string_view text) const {
  const auto it = lookup_.find(text);
  return it == lookup_.end() ? -1 : it->second;
}

const SortedIndex& Column::sorted_index() const {
  std::call_once(index_once_, [this] {
    const auto& data = std::get<Numbers>(storage_).data;
    std::vector<RowId> rows;
    rows.reserve(data.size());
    for (RowId r = 0; r < data.size(); ++r) {
      if (!std::isnan(data[r])) rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [&](RowId a, RowId b) { return data[a] < data[b]; });
    index_.values.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) index_.values[i] = data[rows[i]];
    index_.rows = std::move(rows);
  });
  return index_;
}

std::shared_ptr<const Column> Column::extended(std::span<const RowId> sources) const {
  return std::visit(
      [&](const auto& s) -> std::shared_ptr<const Column> {
        using S = std::decay_t<decltype(s)>;
        S copy = s;
        if constexpr (std::is_same_v<S, Dictionary>) {
          for (const RowId src : sources) copy.codes.push_back(src == kNoRow ? -1 : s.codes[src]);
        } else if constexpr (std::is_same_v<S, Flags>) {
          for (const RowId src : sources) copy.data.push_back(src == kNoRow ? -1 : s.data[src]);
        } else {
          for (const RowId src : sources) {
            copy.data.push_back(src == kNoRow ? kMissingNumber : s.data[src]);
          }
        }
        return std::make_shared<const Column>(desc_, std::move(copy));
      },
      storage_);
}

std::shared_ptr<const Column> Column::with_cells_from(const Column& other,
                                                      std::span<const RowId> rows) const {
  if (other.dtype() != dtype() || other.size() != size()) {
    throw TableError("cannot merge cells of column '" + other.id() + "' into '" + id() + "'");
  }
  std::vector<Value> values(size());
  for (RowId r = 0; r < size(); ++r) values[r] = cell(r);
  for (const RowId r : rows) values[r] = other.cell(r);
  return from_values(desc_, values);
}

void RowLayout::rebuild_indexes() {
  index.clear();
  index.reserve(instance_ids.size());
  rows_by_transform.assign(transforms.size(), {});
  for (RowId r = 0; r < instance_ids.size(); ++r) {
    const auto t = static_cast<std::size_t>(transform_codes[r]);
    index.emplace(row_key(instance_ids[r], transforms[t]), r);
    rows_by_transform[t].push_back(r);
  }
}

MetadataTable::MetadataTable(std::vector<std::shared_ptr<const Column>> columns,
                             std::shared_ptr<const RowLayout> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)), generation_(++g_generation) {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& c = columns_[i];
    if (c->size() != row_count()) {
      throw TableError("column '" + c->id() + "' has " + std::to_string(c->size()) +
                       " cells for " + std::to_string(row_count()) + " rows");
    }
    if (!by_id_.emplace(c->id(), i).second) {
      throw TableError("duplicate column id '" + c->id() + "'");
    }
  }
}

std::vector<ColumnDescriptor> MetadataTable::schema() const {
  std::vector<ColumnDescriptor> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c->descriptor());
  return out;
}

const Column* MetadataTable::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : columns_[it->second].get();
}

const Column& MetadataTable::column(std::string_view id) const {
  const auto* c = find(id);
  if (c == nullptr) throw TableError("no column '" + std::string(id) + "'");
  return *c;
}

std::optional<RowId> MetadataTable::row_of(std::string_view instance_id,
                                           std::string_view transform) const {
  if (!rows_) return std::nullopt;
  const auto it = rows_->index.find(row_key(instance_id, transform));
  if (it == rows_->index.end()) return std::nullopt;
  return it->second;
}

const std::string& MetadataTable::transform_of(RowId row) const {
  return rows_->transforms[static_cast<std::size_t>(rows_->transform_codes[row])];
}

std::span<const RowId> MetadataTable::rows_in(std::string_view transform) const {
  if (!rows_) return {};
  for (std::size_t i = 0; i < rows_->transforms.size(); ++i) {
    if (rows_->transforms[i] == transform) return rows_->rows_by_transform[i];
  }
  return {};
}

const std::vector<std::string>& MetadataTable::transforms() const {
  static const std::vector<std::string> kEmpty;
  return rows_ ? rows_->transforms : kEmpty;
}

void MetadataTable::set_key_columns(std::string id_column, std::string label_column) {
  id_column_ = std::move(id_column);
  label_column_ = std::move(label_column);
}

bool inherited_by_variants(const ColumnDescriptor& desc) {
  switch (desc.origin) {
    case Origin::raw:
    case Origin::label:
    case Origin::id:
      return true;
    case Origin::distill:
      return !desc.model_scope.has_value();
    case Origin::output:
      return false;
  }
  return false;
}

MetadataTable attach_column(const MetadataTable& table, std::shared_ptr<const Column> column) {
  check_descriptor(column->descriptor());
  if (table.find(column->id()) != nullptr) {
    throw TableError("column '" + column->id() + "' already exists");
  }
  if (column->size() != table.row_count()) {
    throw TableError("length mismatch: column '" + column->id() + "' has " +
                     std::to_string(column->size()) + " values for " +
                     std::to_string(table.row_count()) + " rows");
  }
  auto columns = table.columns_;
  columns.push_back(std::move(column));
  MetadataTable out(std::move(columns), table.rows_);
  out.set_key_columns(table.id_column_, table.label_column_);
  return out;
}

MetadataTable attach_column(const MetadataTable& table, const ColumnDescriptor& desc,
                            std::span<const Value> values) {
  if (values.size() != table.row_count()) {
    throw TableError("length mismatch: " + std::to_string(values.size()) + " values for " +
                     std::to_string(table.row_count()) + " rows");
  }
  if (table.find(desc.id) != nullptr) throw TableError("column '" + desc.id + "' already exists");
  return attach_column(table, Column::from_values(desc, values));
}

MetadataTable replace_column(const MetadataTable& table, std::shared_ptr<const Column> column) {
  const auto it = table.by_id_.find(column->id());
  if (it == table.by_id_.end()) throw TableError("no column '" + column->id() + "'");
  auto columns = table.columns_;
  columns[it->second] = std::move(column);
  MetadataTable out(std::move(columns), table.rows_);
  out.set_key_columns(table.id_column_, table.label_column_);
  return out;
}

MetadataTable add_transform_variants(const MetadataTable& table, const std::string& transform_id,
                                     std::span<const TransformVariantRow> rows) {
  if (transform_id == kNoTransform) {
    throw TableError("transform id '" + transform_id + "' is reserved for base rows");
  }
  if (!valid_segment(transform_id)) throw TableError("invalid transform id '" + transform_id + "'");
  if (!table.rows_) throw TableError("table has no rows");

  auto layout = std::make_shared<RowLayout>(*table.rows_);
  auto code_it = std::find(layout->transforms.begin(), layout->transforms.end(), transform_id);
  if (code_it == layout->transforms.end()) {
    layout->transforms.push_back(transform_id);
    code_it = layout->transforms.end() - 1;
  }
  const auto code = static_cast<std::int32_t>(code_it - layout->transforms.begin());

  std::vector<RowId> parents;
  std::unordered_map<std::string, bool> pending;
  for (const auto& v : rows) {
    if (v.transform_id != transform_id) {
      throw TableError("variant row for '" + v.transform_id + "' passed to transform '" +
                       transform_id + "'");
    }
    if (v.data_file.empty()) {
      throw TableError("variant of '" + v.parent_instance_id + "' has no data file");
    }
    const auto parent = table.row_of(v.parent_instance_id, kNoTransform);
    if (!parent) throw TableError("unknown parent instance '" + v.parent_instance_id + "'");
    if (table.row_of(v.parent_instance_id, transform_id)) continue;
    if (!pending.emplace(v.parent_instance_id, true).second) continue;
    parents.push_back(*parent);
    layout->instance_ids.push_back(v.parent_instance_id);
    layout->transform_codes.push_back(code);
    layout->data_files.push_back(v.data_file);
    layout->parents.push_back(*parent);
  }
  if (parents.empty()) return table;
  layout->rebuild_indexes();

  const std::vector<RowId> missing(parents.size(), kNoRow);
  std::vector<std::shared_ptr<const Column>> columns;
  columns.reserve(table.columns_.size());
  for (const auto& c : table.columns_) {
    columns.push_back(
        c->extended(inherited_by_variants(c->descriptor()) ? std::span<const RowId>(parents)
                                                           : std::span<const RowId>(missing)));
  }
  MetadataTable out(std::move(columns), std::move(layout));
  out.set_key_columns(table.id_column_, table.label_column_);
  return out;
}

}  // namespace sliceval
