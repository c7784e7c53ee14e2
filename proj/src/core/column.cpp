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

#include "sliceval/column.hpp"

#include <vector>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

std::vector<std::string_view> split_segments(std::string_view id) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = id.find(kIdSeparator, start);
    if (pos == std::string_view::npos) {
      parts.push_back(id.substr(start));
      break;
    }
    parts.push_back(id.substr(start, pos - start));
    start = pos + kIdSeparator.size();
  }
  return parts;
}

void require_segment(std::string_view segment, std::string_view what) {
  if (!valid_segment(segment)) {
    throw SchemaError("invalid " + std::string(what) + " segment '" + std::string(segment) + "'");
  }
}

}  // namespace

bool valid_segment(std::string_view segment) {
  if (segment.empty()) return false;
  if (segment.find(kIdSeparator) != std::string_view::npos) return false;
  // A trailing ':' would merge with the separator.
  return segment.front() != ':' && segment.back() != ':';
}

ColumnDescriptor ColumnDescriptor::raw(std::string name, DType dtype) {
  ColumnDescriptor d;
  d.id = make_column_id({Origin::raw, name, std::nullopt, std::nullopt});
  d.display_name = std::move(name);
  d.dtype = dtype;
  d.origin = Origin::raw;
  return d;
}

ColumnDescriptor ColumnDescriptor::label(std::string name, DType dtype) {
  ColumnDescriptor d;
  d.id = make_column_id({Origin::label, name, std::nullopt, std::nullopt});
  d.display_name = std::move(name);
  d.dtype = dtype;
  d.origin = Origin::label;
  return d;
}

ColumnDescriptor ColumnDescriptor::instance_id(std::string name) {
  ColumnDescriptor d;
  d.id = make_column_id({Origin::id, name, std::nullopt, std::nullopt});
  d.display_name = std::move(name);
  d.dtype = DType::string;
  d.origin = Origin::id;
  return d;
}

ColumnDescriptor ColumnDescriptor::output(std::string model, std::string transform,
                                          DType dtype) {
  ColumnDescriptor d;
  d.id = make_column_id({Origin::output, "", model, transform});
  d.display_name = "output (" + model + (transform == kNoTransform ? "" : ", " + transform) + ")";
  d.dtype = dtype;
  d.origin = Origin::output;
  d.model_scope = std::move(model);
  d.transform_scope = std::move(transform);
  return d;
}

ColumnDescriptor ColumnDescriptor::distill(std::string fn, DType dtype,
                                           std::optional<std::string> model,
                                           std::optional<std::string> transform) {
  ColumnDescriptor d;
  d.id = make_column_id({Origin::distill, fn, model, transform});
  d.display_name = fn;
  if (model) d.display_name += " (" + *model + (transform ? ", " + *transform : "") + ")";
  d.dtype = dtype;
  d.origin = Origin::distill;
  d.model_scope = std::move(model);
  d.transform_scope = std::move(transform);
  return d;
}

std::string ColumnDescriptor::short_name() const {
  const auto parts = parse_column_id(id);
  return parts.name;
}

std::string make_column_id(const ParsedColumnId& p) {
  const std::string sep(kIdSeparator);
  switch (p.origin) {
    case Origin::raw:
    case Origin::label:
    case Origin::id:
      require_segment(p.name, "name");
      if (p.model_scope || p.transform_scope) {
        throw SchemaError(std::string(to_string(p.origin)) + " columns cannot be scoped");
      }
      return std::string(to_string(p.origin)) + sep + p.name;
    case Origin::output:
      if (!p.name.empty()) throw SchemaError("output columns have no name segment");
      if (!p.model_scope || !p.transform_scope) {
        throw SchemaError("output columns need a model and a transform scope");
      }
      require_segment(*p.model_scope, "model");
      require_segment(*p.transform_scope, "transform");
      return "output" + sep + *p.model_scope + sep + *p.transform_scope;
    case Origin::distill: {
      require_segment(p.name, "name");
      std::string id = "distill" + sep + p.name;
      if (p.transform_scope && !p.model_scope) {
        throw SchemaError("distill columns with a transform scope need a model scope");
      }
      if (p.model_scope) {
        require_segment(*p.model_scope, "model");
        id += sep + *p.model_scope;
      }
      if (p.transform_scope) {
        require_segment(*p.transform_scope, "transform");
        id += sep + *p.transform_scope;
      }
      return id;
    }
  }
  throw SchemaError("unknown origin");
}

ParsedColumnId parse_column_id(std::string_view id) {
  const auto parts = split_segments(id);
  const auto origin = parse_origin(parts.front());
  if (!origin) throw SchemaError("column id '" + std::string(id) + "' has no known origin");
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (!valid_segment(parts[i])) {
      throw SchemaError("column id '" + std::string(id) + "' has an empty segment");
    }
  }
  ParsedColumnId out;
  out.origin = *origin;
  const std::size_t n = parts.size();
  switch (*origin) {
    case Origin::raw:
    case Origin::label:
    case Origin::id:
      if (n != 2) break;
      out.name = parts[1];
      return out;
    case Origin::output:
      if (n != 3) break;
      out.model_scope = std::string(parts[1]);
      out.transform_scope = std::string(parts[2]);
      return out;
    case Origin::distill:
      if (n < 2 || n > 4) break;
      out.name = parts[1];
      if (n >= 3) out.model_scope = std::string(parts[2]);
      if (n == 4) out.transform_scope = std::string(parts[3]);
      return out;
  }
  throw SchemaError("column id '" + std::string(id) + "' has the wrong number of segments");
}

void check_descriptor(const ColumnDescriptor& d) {
  const ParsedColumnId parts{d.origin, d.origin == Origin::output ? "" : d.short_name(),
                             d.model_scope, d.transform_scope};
  if (make_column_id(parts) != d.id) {
    throw SchemaError("column id '" + d.id + "' does not match its origin and scopes");
  }
}

}  // namespace sliceval
