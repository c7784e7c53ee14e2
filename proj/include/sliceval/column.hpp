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

#include <optional>
#include <string>
#include <string_view>

#include "sliceval/value.hpp"

namespace sliceval {

// Transform id of untransformed (base) rows.
inline constexpr std::string_view kNoTransform = "none";

// Separator between canonical column-id segments.
inline constexpr std::string_view kIdSeparator = "::";

// Canonical ids:
//   raw::<name>  label::<name>  id::<name>  output::<model>::<transform>
//   distill::<fn>  distill::<fn>::<model>  distill::<fn>::<model>::<transform>
struct ColumnDescriptor {
  std::string id;
  std::string display_name;
  DType dtype = DType::string;
  Origin origin = Origin::raw;
  std::optional<std::string> model_scope;
  std::optional<std::string> transform_scope;

  static ColumnDescriptor raw(std::string name, DType dtype);
  static ColumnDescriptor label(std::string name, DType dtype);
  static ColumnDescriptor instance_id(std::string name);
  static ColumnDescriptor output(std::string model, std::string transform, DType dtype);
  static ColumnDescriptor distill(std::string fn, DType dtype,
                                  std::optional<std::string> model = std::nullopt,
                                  std::optional<std::string> transform = std::nullopt);

  // The segment a user types in the predicate DSL (empty for outputs).
  std::string short_name() const;
  bool model_scoped() const { return model_scope.has_value(); }

  friend bool operator==(const ColumnDescriptor&, const ColumnDescriptor&) = default;
};

struct ParsedColumnId {
  Origin origin = Origin::raw;
  std::string name;  // empty for output columns
  std::optional<std::string> model_scope;
  std::optional<std::string> transform_scope;

  friend bool operator==(const ParsedColumnId&, const ParsedColumnId&) = default;
};

// Throws SchemaError on a malformed combination or segment.
std::string make_column_id(const ParsedColumnId& parts);
// Throws SchemaError when `id` is not canonical.
ParsedColumnId parse_column_id(std::string_view id);

// Throws SchemaError when the descriptor breaks an origin/scope invariant.
void check_descriptor(const ColumnDescriptor& desc);

bool valid_segment(std::string_view segment);

}  // namespace sliceval
