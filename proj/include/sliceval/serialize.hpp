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

#include <string>
#include <string_view>

#include <json.hpp>

#include "sliceval/objects.hpp"
#include "sliceval/predicate.hpp"

namespace sliceval {

using Json = nlohmann::ordered_json;

// Every persisted top-level object carries this in its `version` field.
inline constexpr int kSchemaVersion = 1;

Json value_to_json(const Value& value);
// Datetimes travel as {"datetime": "<ISO-8601>"}; null is a missing value.
Value value_from_json(const Json& json);

Json to_json(const FilterPredicate& predicate);
Json to_json(const Slice& slice);
Json to_json(const BehavioralTest& test);
Json to_json(const Report& report);
Json to_json(const MetricRecord& record);

// Readers throw UnknownVersionError on a foreign version and SerializationError on
// structural problems. Predicates are not versioned on their own.
FilterPredicate predicate_from_json(const Json& json);
Slice slice_from_json(const Json& json);
BehavioralTest test_from_json(const Json& json);
Report report_from_json(const Json& json);
MetricRecord metric_record_from_json(const Json& json);

// Canonical text: two-space indentation, fixed field order.
std::string dump(const Json& json);
// Throws SerializationError on malformed JSON.
Json parse_json(std::string_view text);

template <typename T>
std::string serialize(const T& object) {
  return dump(to_json(object));
}

}  // namespace sliceval
