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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sliceval/column.hpp"
#include "sliceval/value.hpp"

namespace sliceval {

inline constexpr std::size_t kMaxPredicateDepth = 32;

enum class CompareOp {
  eq,
  ne,
  lt,
  le,
  gt,
  ge,
  in_set,
  matches_substring,
  matches_regex,
  is_missing,
};

std::string_view to_string(CompareOp op);
std::optional<CompareOp> parse_compare_op(std::string_view text);
bool is_order_op(CompareOp op);

// Right-hand side of a leaf: nothing (is-missing), one scalar, or a set.
using Literal = std::variant<std::monostate, double, bool, std::string, Timestamp,
                             std::vector<Value>>;

Value literal_scalar(const Literal& literal);

struct LeafPredicate {
  std::string column;
  CompareOp op = CompareOp::eq;
  Literal literal;

  friend bool operator==(const LeafPredicate&, const LeafPredicate&) = default;
};

// Boolean tree over columns. `All` matches every row.
class FilterPredicate {
 public:
  enum class Kind { all, leaf, conjunction, disjunction };

  FilterPredicate() = default;

  static FilterPredicate all() { return FilterPredicate(); }
  static FilterPredicate leaf(std::string column, CompareOp op, Literal literal = {});
  static FilterPredicate conjunction(std::vector<FilterPredicate> children);
  static FilterPredicate disjunction(std::vector<FilterPredicate> children);

  Kind kind() const { return kind_; }
  bool is_all() const { return kind_ == Kind::all; }
  const LeafPredicate& as_leaf() const { return leaf_; }
  const std::vector<FilterPredicate>& children() const { return children_; }

  std::size_t depth() const;
  // Every column id referenced by a leaf, in tree order.
  std::vector<std::string> columns() const;

  friend bool operator==(const FilterPredicate&, const FilterPredicate&) = default;

 private:
  Kind kind_ = Kind::all;
  LeafPredicate leaf_;
  std::vector<FilterPredicate> children_;
};

// And(lhs, rhs) that collapses `All` operands.
FilterPredicate conjoin(FilterPredicate lhs, FilterPredicate rhs);

struct Violation {
  enum class Kind {
    unknown_column,
    type_mismatch,
    invalid_literal,
    depth_exceeded,
    empty_connective,
  };
  Kind kind;
  std::string column;
  std::string message;
};

std::string_view to_string(Violation::Kind kind);

// Returns every problem found, in tree order. Empty means valid.
std::vector<Violation> validate_predicate(const FilterPredicate& predicate,
                                          std::span<const ColumnDescriptor> schema);

// Throws PredicateError for the first violation.
void require_valid(const FilterPredicate& predicate, std::span<const ColumnDescriptor> schema);

// Canonical DSL text. parse_predicate(print_predicate(p)) == p for any tree whose
// connectives have at least two children.
std::string print_predicate(const FilterPredicate& predicate);

// Parses the predicate DSL and validates the result against `schema`.
//   col OP literal           OP in == != < <= > >=
//   a < col < b              desugars to And(col > a, col < b)
//   col in [v1, v2]          col matches "sub"    col matches_regex "re"
//   col is missing           *   (&&, ||, parentheses)
// Columns are canonical ids or unambiguous short names; `backticks` quote odd names.
FilterPredicate parse_predicate(std::string_view text, std::span<const ColumnDescriptor> schema);

}  // namespace sliceval
