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

#include "sliceval/predicate.hpp"

#include <array>
#include <regex>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

constexpr std::array<std::string_view, 10> kOpNames = {
    "==", "!=", "<", "<=", ">", ">=", "in", "matches", "matches_regex", "is_missing"};

const ColumnDescriptor* find_column(std::span<const ColumnDescriptor> schema,
                                    std::string_view id) {
  for (const auto& c : schema) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

bool scalar_fits(DType dtype, const Value& v) {
  switch (dtype) {
    case DType::continuous:
      return std::holds_alternative<double>(v);
    case DType::datetime:
      return std::holds_alternative<Timestamp>(v);
    case DType::boolean:
      return std::holds_alternative<bool>(v);
    case DType::nominal:
    case DType::string:
      return std::holds_alternative<std::string>(v);
  }
  return false;
}

void check_leaf(const LeafPredicate& leaf, const ColumnDescriptor& col,
                std::vector<Violation>& out) {
  auto mismatch = [&](const std::string& why) {
    out.push_back({Violation::Kind::type_mismatch, leaf.column,
                   "operator '" + std::string(to_string(leaf.op)) + "' on " +
                       std::string(to_string(col.dtype)) + " column '" + leaf.column + "': " +
                       why});
  };
  const DType dt = col.dtype;
  switch (leaf.op) {
    case CompareOp::is_missing:
      if (!std::holds_alternative<std::monostate>(leaf.literal)) {
        mismatch("is-missing takes no literal");
      }
      return;
    case CompareOp::lt:
    case CompareOp::le:
    case CompareOp::gt:
    case CompareOp::ge:
      if (dt != DType::continuous && dt != DType::datetime) {
        mismatch("order comparisons need a continuous or datetime column");
        return;
      }
      [[fallthrough]];
    case CompareOp::eq:
    case CompareOp::ne:
      if (std::holds_alternative<std::vector<Value>>(leaf.literal) ||
          !scalar_fits(dt, literal_scalar(leaf.literal))) {
        mismatch("literal type does not match the column");
      }
      return;
    case CompareOp::in_set: {
      const auto* set = std::get_if<std::vector<Value>>(&leaf.literal);
      if (set == nullptr) {
        mismatch("in needs a list literal");
        return;
      }
      for (const auto& v : *set) {
        if (!scalar_fits(dt, v)) {
          mismatch("list element type does not match the column");
          return;
        }
      }
      return;
    }
    case CompareOp::matches_substring:
    case CompareOp::matches_regex: {
      if (dt != DType::string && dt != DType::nominal) {
        mismatch("pattern matching needs a string or nominal column");
        return;
      }
      const auto* text = std::get_if<std::string>(&leaf.literal);
      if (text == nullptr) {
        mismatch("pattern must be a string");
        return;
      }
      if (leaf.op == CompareOp::matches_regex) {
        try {
          std::regex re(*text);
        } catch (const std::regex_error& e) {
          out.push_back({Violation::Kind::invalid_literal, leaf.column,
                         "invalid regular expression '" + *text + "': " + e.what()});
        }
      }
      return;
    }
  }
}

void validate_rec(const FilterPredicate& p, std::span<const ColumnDescriptor> schema,
                  std::vector<Violation>& out) {
  switch (p.kind()) {
    case FilterPredicate::Kind::all:
      return;
    case FilterPredicate::Kind::leaf: {
      const auto& leaf = p.as_leaf();
      const auto* col = find_column(schema, leaf.column);
      if (col == nullptr) {
        out.push_back({Violation::Kind::unknown_column, leaf.column,
                       "unknown column '" + leaf.column + "'"});
        return;
      }
      check_leaf(leaf, *col, out);
      return;
    }
    case FilterPredicate::Kind::conjunction:
    case FilterPredicate::Kind::disjunction:
      if (p.children().empty()) {
        out.push_back({Violation::Kind::empty_connective, {},
                       std::string(p.kind() == FilterPredicate::Kind::conjunction ? "And"
                                                                                  : "Or") +
                           " needs at least one child"});
      }
      for (const auto& child : p.children()) validate_rec(child, schema, out);
      return;
  }
}

bool plain_identifier(std::string_view id) {
  if (id.empty()) return false;
  const char first = id.front();
  if (!((first >= 'A' && first <= 'Z') || (first >= 'a' && first <= 'z') || first == '_')) {
    return false;
  }
  if (id == "true" || id == "false") return false;
  for (std::size_t i = 1; i < id.size(); ++i) {
    const char c = id[i];
    const bool word = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                      (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (word) continue;
    if (c == ':' && i + 1 < id.size() && id[i + 1] == ':') {
      ++i;
      continue;
    }
    return false;
  }
  return id.back() != ':';
}

std::string quote_string(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\t':
        out += "\\t";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        out += c;
    }
  }
  out += '"';
  return out;
}

std::string print_value(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(const std::string& s) const { return quote_string(s); }
    std::string operator()(Timestamp t) const { return format_iso8601(t); }
  };
  return std::visit(Visitor{}, v);
}

std::string print_column(const std::string& id) {
  if (plain_identifier(id)) return id;
  std::string out = "`";
  for (const char c : id) {
    if (c == '`') out += '`';
    out += c;
  }
  out += '`';
  return out;
}

void print_rec(const FilterPredicate& p, std::string& out, bool nested) {
  switch (p.kind()) {
    case FilterPredicate::Kind::all:
      out += '*';
      return;
    case FilterPredicate::Kind::leaf: {
      const auto& leaf = p.as_leaf();
      out += print_column(leaf.column);
      switch (leaf.op) {
        case CompareOp::is_missing:
          out += " is missing";
          return;
        case CompareOp::in_set: {
          out += " in [";
          const auto& set = std::get<std::vector<Value>>(leaf.literal);
          for (std::size_t i = 0; i < set.size(); ++i) {
            if (i) out += ", ";
            out += print_value(set[i]);
          }
          out += ']';
          return;
        }
        default:
          out += ' ';
          out += to_string(leaf.op);
          out += ' ';
          out += print_value(literal_scalar(leaf.literal));
          return;
      }
    }
    case FilterPredicate::Kind::conjunction:
    case FilterPredicate::Kind::disjunction: {
      const bool wrap = nested && p.children().size() > 1;
      if (wrap) out += '(';
      const char* joiner = p.kind() == FilterPredicate::Kind::conjunction ? " && " : " || ";
      for (std::size_t i = 0; i < p.children().size(); ++i) {
        if (i) out += joiner;
        print_rec(p.children()[i], out, true);
      }
      if (wrap) out += ')';
      return;
    }
  }
}

}  // namespace

const char* to_string(PredicateError::Kind kind) {
  switch (kind) {
    case PredicateError::Kind::syntax:
      return "syntax";
    case PredicateError::Kind::unknown_column:
      return "unknown_column";
    case PredicateError::Kind::ambiguous_column:
      return "ambiguous_column";
    case PredicateError::Kind::type_mismatch:
      return "type_mismatch";
    case PredicateError::Kind::invalid:
      return "invalid";
  }
  return "invalid";
}

std::string_view to_string(CompareOp op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<CompareOp> parse_compare_op(std::string_view text) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == text) return static_cast<CompareOp>(i);
  }
  return std::nullopt;
}

bool is_order_op(CompareOp op) {
  return op == CompareOp::lt || op == CompareOp::le || op == CompareOp::gt ||
         op == CompareOp::ge;
}

std::string_view to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::unknown_column:
      return "unknown_column";
    case Violation::Kind::type_mismatch:
      return "type_mismatch";
    case Violation::Kind::invalid_literal:
      return "invalid_literal";
    case Violation::Kind::depth_exceeded:
      return "depth_exceeded";
    case Violation::Kind::empty_connective:
      return "empty_connective";
  }
  return "invalid";
}

Value literal_scalar(const Literal& literal) {
  struct Visitor {
    Value operator()(std::monostate) const { return std::monostate{}; }
    Value operator()(double d) const { return d; }
    Value operator()(bool b) const { return b; }
    Value operator()(const std::string& s) const { return s; }
    Value operator()(Timestamp t) const { return t; }
    Value operator()(const std::vector<Value>&) const { return std::monostate{}; }
  };
  return std::visit(Visitor{}, literal);
}

FilterPredicate FilterPredicate::leaf(std::string column, CompareOp op, Literal literal) {
  FilterPredicate p;
  p.kind_ = Kind::leaf;
  p.leaf_ = LeafPredicate{std::move(column), op, std::move(literal)};
  return p;
}

FilterPredicate FilterPredicate::conjunction(std::vector<FilterPredicate> children) {
  FilterPredicate p;
  p.kind_ = Kind::conjunction;
  p.children_ = std::move(children);
  return p;
}

FilterPredicate FilterPredicate::disjunction(std::vector<FilterPredicate> children) {
  FilterPredicate p;
  p.kind_ = Kind::disjunction;
  p.children_ = std::move(children);
  return p;
}

std::size_t FilterPredicate::depth() const {
  std::size_t deepest = 0;
  for (const auto& c : children_) deepest = std::max(deepest, c.depth());
  return deepest + 1;
}

std::vector<std::string> FilterPredicate::columns() const {
  std::vector<std::string> out;
  if (kind_ == Kind::leaf) out.push_back(leaf_.column);
  for (const auto& c : children_) {
    auto sub = c.columns();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

FilterPredicate conjoin(FilterPredicate lhs, FilterPredicate rhs) {
  if (lhs.is_all()) return rhs;
  if (rhs.is_all()) return lhs;
  return FilterPredicate::conjunction({std::move(lhs), std::move(rhs)});
}

std::vector<Violation> validate_predicate(const FilterPredicate& predicate,
                                          std::span<const ColumnDescriptor> schema) {
  std::vector<Violation> out;
  const std::size_t depth = predicate.depth();
  if (depth > kMaxPredicateDepth) {
    out.push_back({Violation::Kind::depth_exceeded, {},
                   "predicate depth " + std::to_string(depth) + " exceeds " +
                       std::to_string(kMaxPredicateDepth)});
  }
  validate_rec(predicate, schema, out);
  return out;
}

void require_valid(const FilterPredicate& predicate, std::span<const ColumnDescriptor> schema) {
  const auto violations = validate_predicate(predicate, schema);
  if (violations.empty()) return;
  const auto& v = violations.front();
  PredicateError::Kind kind = PredicateError::Kind::invalid;
  if (v.kind == Violation::Kind::unknown_column) kind = PredicateError::Kind::unknown_column;
  if (v.kind == Violation::Kind::type_mismatch) kind = PredicateError::Kind::type_mismatch;
  throw PredicateError(kind, 0, v.message);
}

std::string print_predicate(const FilterPredicate& predicate) {
  std::string out;
  print_rec(predicate, out, false);
  return out;
}

}  // namespace sliceval
