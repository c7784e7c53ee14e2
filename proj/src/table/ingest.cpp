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

#include "sliceval/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const char x = static_cast<char>(std::tolower(static_cast<unsigned char>(a[i])));
    if (x != b[i]) return false;
  }
  return true;
}

bool is_true_text(std::string_view v) { return iequals(v, "true") || v == "1"; }

std::string_view source_view(const std::string& src, std::size_t begin, std::size_t end) {
  return std::string_view(src.data() + begin, end - begin);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open metadata file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::shared_ptr<const Column> build_column(ColumnDescriptor desc,
                                           std::span<const std::string_view> cells) {
  switch (desc.dtype) {
    case DType::continuous:
    case DType::datetime: {
      Column::Numbers n;
      n.data.resize(cells.size());
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto c = cells[i];
        if (is_missing_cell(c)) {
          n.data[i] = std::nan("");
        } else if (desc.dtype == DType::continuous) {
          n.data[i] = *parse_number(trim(c));
        } else {
          n.data[i] = parse_iso8601(trim(c))->seconds();
        }
      }
      return std::make_shared<const Column>(std::move(desc), std::move(n));
    }
    case DType::boolean: {
      Column::Flags f;
      f.data.resize(cells.size());
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto c = cells[i];
        f.data[i] = is_missing_cell(c) ? -1 : (is_true_text(trim(c)) ? 1 : 0);
      }
      return std::make_shared<const Column>(std::move(desc), std::move(f));
    }
    case DType::nominal:
    case DType::string: {
      Column::Dictionary d;
      d.codes.resize(cells.size());
      std::unordered_map<std::string_view, std::int32_t> seen;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto c = cells[i];
        if (is_missing_cell(c)) {
          d.codes[i] = -1;
          continue;
        }
        auto [it, inserted] = seen.emplace(c, static_cast<std::int32_t>(d.entries.size()));
        if (inserted) d.entries.emplace_back(c);
        d.codes[i] = it->second;
      }
      return std::make_shared<const Column>(std::move(desc), std::move(d));
    }
  }
  throw IngestError("unknown dtype");
}

std::string csv_escape(const std::string& text) {
  if (text.empty() || text.find_first_of(",\"\n\r") != std::string::npos ||
      text.front() == ' ' || text.back() == ' ') {
    std::string out = "\"";
    for (const char c : text) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }
  return text;
}

}  // namespace

InferredType infer_dtype(std::span<const std::string_view> values) {
  std::size_t present = 0;
  bool all_bool_words = true, all_bits = true, all_numbers = true, all_dates = true;
  for (const auto raw : values) {
    if (is_missing_cell(raw)) continue;
    ++present;
    const auto v = trim(raw);
    if (all_bool_words && !(iequals(v, "true") || iequals(v, "false"))) all_bool_words = false;
    if (all_bits && !(v == "0" || v == "1")) all_bits = false;
    if (all_numbers && !parse_number(v)) all_numbers = false;
    if (all_dates && !parse_iso8601(v)) all_dates = false;
    if (!all_bool_words && !all_bits && !all_numbers && !all_dates) break;
  }
  if (present == 0) return {DType::string, "column has no non-missing values; treated as string"};
  if (all_bool_words || all_bits) return {DType::boolean, std::nullopt};
  if (all_numbers) return {DType::continuous, std::nullopt};
  if (all_dates) return {DType::datetime, std::nullopt};

  std::unordered_set<std::string_view> distinct;
  for (const auto v : values) {
    if (is_missing_cell(v)) continue;
    distinct.insert(v);
    if (distinct.size() > kNominalMaxDistinct) return {DType::string, std::nullopt};
  }
  return {DType::nominal, std::nullopt};
}

RawTable read_delimited(std::shared_ptr<const std::string> text, char delim) {
  RawTable raw;
  raw.source = std::move(text);
  const std::string& src = *raw.source;
  const std::size_t n = src.size();
  std::size_t pos = 0;
  std::size_t line = 1;

  // Reads one record; returns false at end of input.
  std::vector<std::string_view> fields;
  auto read_record = [&](std::size_t& record_line) -> bool {
    fields.clear();
    // Skip blank lines.
    while (pos < n && (src[pos] == '\n' || src[pos] == '\r')) {
      if (src[pos] == '\n') ++line;
      ++pos;
    }
    if (pos >= n) return false;
    record_line = line;
    while (true) {
      if (pos < n && src[pos] == '"') {
        const std::size_t quote_line = line;
        ++pos;
        const std::size_t begin = pos;
        bool escaped = false;
        while (true) {
          if (pos >= n) throw IngestError("unterminated quoted field", quote_line);
          if (src[pos] == '"') {
            if (pos + 1 < n && src[pos + 1] == '"') {
              escaped = true;
              pos += 2;
              continue;
            }
            break;
          }
          if (src[pos] == '\n') ++line;
          ++pos;
        }
        const std::size_t end = pos++;
        if (escaped) {
          std::string decoded;
          decoded.reserve(end - begin);
          for (std::size_t i = begin; i < end; ++i) {
            decoded += src[i];
            if (src[i] == '"') ++i;
          }
          raw.arena.push_back(std::move(decoded));
          fields.emplace_back(raw.arena.back());
        } else if (begin == end) {
          raw.arena.emplace_back();
          fields.emplace_back(raw.arena.back());
        } else {
          fields.push_back(source_view(src, begin, end));
        }
        if (pos < n && src[pos] != delim && src[pos] != '\n' && src[pos] != '\r') {
          throw IngestError("unexpected character after closing quote", line);
        }
      } else {
        const std::size_t begin = pos;
        while (pos < n && src[pos] != delim && src[pos] != '\n' && src[pos] != '\r') {
          if (src[pos] == '"') throw IngestError("stray quote in unquoted field", line);
          ++pos;
        }
        if (pos == begin) {
          fields.emplace_back();
        } else {
          fields.push_back(source_view(src, begin, pos));
        }
      }
      if (pos < n && src[pos] == delim) {
        ++pos;
        continue;
      }
      // End of record.
      if (pos < n && src[pos] == '\r') ++pos;
      if (pos < n && src[pos] == '\n') {
        ++pos;
        ++line;
      }
      return true;
    }
  };

  std::size_t record_line = 0;
  if (!read_record(record_line)) return raw;
  for (const auto f : fields) {
    if (is_missing_cell(f)) throw IngestError("empty column name in header", record_line);
    raw.header.emplace_back(trim(f));
  }
  raw.columns.assign(raw.header.size(), {});
  while (read_record(record_line)) {
    if (fields.size() != raw.header.size()) {
      throw IngestError("expected " + std::to_string(raw.header.size()) + " fields, found " +
                            std::to_string(fields.size()) + " on line " +
                            std::to_string(record_line),
                        record_line);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) raw.columns[c].push_back(fields[c]);
    raw.line_numbers.push_back(record_line);
  }
  return raw;
}

RawTable read_json_lines(std::shared_ptr<const std::string> text) {
  RawTable raw;
  raw.source = std::move(text);
  const std::string& src = *raw.source;
  std::unordered_map<std::string, std::size_t> column_of;
  std::size_t start = 0, line = 0;
  while (start < src.size()) {
    std::size_t end = src.find('\n', start);
    if (end == std::string::npos) end = src.size();
    ++line;
    const auto body = trim(std::string_view(src).substr(start, end - start));
    start = end + 1;
    if (body.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError("malformed JSON on line " + std::to_string(line) + ": " + e.what(), line);
    }
    if (!obj.is_object()) throw IngestError("line " + std::to_string(line) + " is not an object", line);
    const std::size_t row = raw.line_numbers.size();
    raw.line_numbers.push_back(line);
    for (auto& col : raw.columns) col.emplace_back();
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      auto [pos, inserted] = column_of.emplace(it.key(), raw.header.size());
      if (inserted) {
        raw.header.push_back(it.key());
        raw.columns.emplace_back(row + 1);
      }
      const auto& v = it.value();
      if (v.is_null()) continue;
      if (v.is_string()) {
        raw.arena.push_back(v.get<std::string>());
      } else if (v.is_boolean()) {
        raw.arena.push_back(v.get<bool>() ? "true" : "false");
      } else if (v.is_number_float()) {
        raw.arena.push_back(format_number(v.get<double>()));
      } else {
        raw.arena.push_back(v.dump());
      }
      raw.columns[pos->second][row] = raw.arena.back();
    }
  }
  return raw;
}

MetadataTable build_table(const RawTable& raw, const IngestOptions& options) {
  if (raw.row_count() == 0) throw IngestError("metadata file has zero rows");
  const std::string data_file_column =
      options.data_file_column.empty() ? options.id_column : options.data_file_column;

  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(raw.header.begin(), raw.header.end(), name);
    if (it == raw.header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - raw.header.begin());
  };
  const auto id_pos = find(options.id_column);
  if (!id_pos) throw IngestError("id column '" + options.id_column + "' not found");
  if (!options.label_column.empty() && !find(options.label_column)) {
    throw IngestError("label column '" + options.label_column + "' not found");
  }
  const auto file_pos = find(data_file_column);
  if (!file_pos) throw IngestError("data file column '" + data_file_column + "' not found");

  std::unordered_set<std::string> names;
  for (const auto& name : raw.header) {
    if (!valid_segment(name)) throw IngestError("invalid column name '" + name + "'");
    if (!names.insert(name).second) throw IngestError("duplicate column name '" + name + "'");
  }

  // Instance ids: present and unique.
  const auto& ids = raw.columns[*id_pos];
  auto layout = std::make_shared<RowLayout>();
  layout->instance_ids.reserve(ids.size());
  std::unordered_map<std::string_view, std::size_t> seen;
  std::vector<std::string> duplicates;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (is_missing_cell(ids[r]) || ids[r].empty()) {
      throw IngestError("missing instance id on line " + std::to_string(raw.line_numbers[r]),
                        raw.line_numbers[r]);
    }
    auto [it, inserted] = seen.emplace(ids[r], 1);
    if (!inserted && it->second++ == 1) duplicates.emplace_back(ids[r]);
    layout->instance_ids.emplace_back(ids[r]);
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate instance ids:";
    for (const auto& d : duplicates) msg += " " + d;
    throw IngestError(msg, 0, duplicates);
  }
  const auto& files = raw.columns[*file_pos];
  layout->data_files.reserve(files.size());
  for (const auto f : files) layout->data_files.emplace_back(is_missing_cell(f) ? "" : f);
  layout->transforms = {std::string(kNoTransform)};
  layout->transform_codes.assign(ids.size(), 0);
  layout->parents.resize(ids.size());
  for (RowId r = 0; r < ids.size(); ++r) layout->parents[r] = r;
  layout->base_row_count = ids.size();
  layout->rebuild_indexes();

  std::vector<std::shared_ptr<const Column>> columns;
  std::string id_id, label_id;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    const auto& name = raw.header[c];
    ColumnDescriptor desc;
    if (c == *id_pos) {
      desc = ColumnDescriptor::instance_id(name);
      id_id = desc.id;
    } else {
      const auto inferred = infer_dtype(raw.columns[c]);
      if (inferred.warning) spdlog::warn("column '{}': {}", name, *inferred.warning);
      if (name == options.label_column) {
        desc = ColumnDescriptor::label(name, inferred.dtype);
        label_id = desc.id;
      } else {
        desc = ColumnDescriptor::raw(name, inferred.dtype);
      }
    }
    columns.push_back(build_column(std::move(desc), raw.columns[c]));
  }
  MetadataTable table(std::move(columns), std::move(layout));
  table.set_key_columns(id_id, label_id);
  return table;
}

MetadataTable ingest(const std::filesystem::path& metadata_file, const IngestOptions& options) {
  if (!std::filesystem::exists(metadata_file)) {
    throw IngestError("metadata file '" + metadata_file.string() + "' does not exist");
  }
  auto text = std::make_shared<const std::string>(read_file(metadata_file));
  const auto ext = metadata_file.extension().string();
  RawTable raw;
  if (ext == ".jsonl" || ext == ".ndjson") {
    raw = read_json_lines(std::move(text));
  } else if (ext == ".tsv") {
    raw = read_delimited(std::move(text), '\t');
  } else {
    raw = read_delimited(std::move(text), ',');
  }
  return build_table(raw, options);
}

std::string export_base_csv(const MetadataTable& table) {
  std::vector<const Column*> cols;
  for (const auto& c : table.columns()) {
    const auto origin = c->descriptor().origin;
    if (origin == Origin::raw || origin == Origin::label || origin == Origin::id) {
      cols.push_back(c.get());
    }
  }
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(cols[i]->descriptor().short_name());
  }
  out += '\n';
  for (RowId r = 0; r < table.base_row_count(); ++r) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out += ',';
      if (!cols[i]->missing(r)) out += csv_escape(canonical_text(cols[i]->cell(r)));
    }
    out += '\n';
  }
  return out;
}

}  // namespace sliceval
