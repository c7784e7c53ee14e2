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

#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sliceval/table.hpp"

namespace sliceval {

// Raw text columns with at most this many distinct values are nominal.
inline constexpr std::size_t kNominalMaxDistinct = 32;

struct InferredType {
  DType dtype = DType::string;
  std::optional<std::string> warning;
};

// A cell view with a null data pointer is a missing value; "" is an empty string.
inline bool is_missing_cell(std::string_view cell) { return cell.data() == nullptr; }

// Needs at least one non-missing value; an all-missing column becomes string with a warning.
InferredType infer_dtype(std::span<const std::string_view> values);

struct IngestOptions {
  std::string id_column;
  std::string label_column;
  // Column naming each instance's file under the data root; defaults to id_column.
  std::string data_file_column;
};

// Column-major cell views over the source text. Move-only in practice: views
// point into `source` and `arena`.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string_view>> columns;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::shared_ptr<const std::string> source;
  std::deque<std::string> arena;  // decoded cells that differ from the source bytes

  std::size_t row_count() const { return line_numbers.size(); }
};

// RFC-4180 CSV (or TSV with delimiter '\t'). Empty unquoted fields are missing.
RawTable read_delimited(std::shared_ptr<const std::string> text, char delimiter = ',');
// One JSON object per line; keys become columns in first-seen order.
RawTable read_json_lines(std::shared_ptr<const std::string> text);

// Builds a base table from raw rows: infers dtypes, tags the id and label
// columns. Throws IngestError on zero rows, missing key columns, or duplicate ids.
MetadataTable build_table(const RawTable& raw, const IngestOptions& options);

// Reads a .csv/.tsv/.jsonl/.ndjson file and builds its table.
MetadataTable ingest(const std::filesystem::path& metadata_file, const IngestOptions& options);

// Writes the base rows back out as CSV. Model-scoped columns are skipped.
std::string export_base_csv(const MetadataTable& table);

}  // namespace sliceval
