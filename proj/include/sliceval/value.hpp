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

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace sliceval {

// The five metadata types a column can hold.
enum class DType { continuous, nominal, boolean, datetime, string };

// Where a column's values come from.
enum class Origin { raw, distill, output, label, id };

std::string_view to_string(DType dtype);
std::string_view to_string(Origin origin);
std::optional<DType> parse_dtype(std::string_view text);
std::optional<Origin> parse_origin(std::string_view text);

// Milliseconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t millis = 0;

  double seconds() const { return static_cast<double>(millis) / 1000.0; }
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

// A single cell. monostate is a missing value.
using Value = std::variant<std::monostate, double, bool, std::string, Timestamp>;

inline bool is_missing(const Value& v) { return std::holds_alternative<std::monostate>(v); }

// Parses YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|(+|-)HH[:]MM].
std::optional<Timestamp> parse_iso8601(std::string_view text);
// Always UTC with a trailing Z; milliseconds are printed only when nonzero.
std::string format_iso8601(Timestamp ts);
Timestamp now_timestamp();

// Shortest text that parses back to the same double.
std::string format_number(double value);
// Strict finite decimal parse; rejects trailing garbage, nan and inf.
std::optional<double> parse_number(std::string_view text);

// Text form used for exact-match comparisons between labels and outputs.
std::string canonical_text(const Value& value);

std::string_view trim(std::string_view text);

}  // namespace sliceval
