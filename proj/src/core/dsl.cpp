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

// Recursive-descent parser for the predicate DSL.

#include <regex>
#include <unordered_map>

#include "sliceval/errors.hpp"
#include "sliceval/predicate.hpp"

namespace sliceval {
namespace {

enum class Tok {
  end,
  ident,
  number,
  string,
  datetime,
  relop,
  and_and,
  or_or,
  lparen,
  rparen,
  lbracket,
  rbracket,
  comma,
  star,
};

struct Token {
  Tok kind = Tok::end;
  std::string text;  // decoded text (identifier, string contents, operator, number)
  std::size_t pos = 0;
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c) || c == '.' || c == '-'; }

[[noreturn]] void syntax_error(std::size_t pos, const std::string& msg) {
  throw PredicateError(PredicateError::Kind::syntax, pos,
                       "syntax error at position " + std::to_string(pos) + ": " + msg);
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (pos_ >= src_.size()) {
        out.push_back({Tok::end, {}, pos_});
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  void skip_space() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  Token next() {
    const std::size_t start = pos_;
    const char c = src_[pos_];
    auto two = [&](std::string_view s) { return src_.substr(pos_, 2) == s; };
    if (two("&&")) return advance(Tok::and_and, 2, start);
    if (two("||")) return advance(Tok::or_or, 2, start);
    if (two("==") || two("!=") || two("<=") || two(">=")) return advance(Tok::relop, 2, start);
    if (c == '<' || c == '>') return advance(Tok::relop, 1, start);
    if (c == '(') return advance(Tok::lparen, 1, start);
    if (c == ')') return advance(Tok::rparen, 1, start);
    if (c == '[') return advance(Tok::lbracket, 1, start);
    if (c == ']') return advance(Tok::rbracket, 1, start);
    if (c == ',') return advance(Tok::comma, 1, start);
    if (c == '*') return advance(Tok::star, 1, start);
    if (c == '"') return string_token();
    if (c == '`') return quoted_ident();
    if (is_digit(c) || c == '-' || c == '+' || c == '.') return number_or_date();
    if (is_ident_start(c)) return identifier();
    syntax_error(start, std::string("unexpected character '") + c + "'");
  }

  Token advance(Tok kind, std::size_t n, std::size_t start) {
    pos_ += n;
    return {kind, std::string(src_.substr(start, n)), start};
  }

  Token string_token() {
    const std::size_t start = pos_++;
    std::string out;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      char c = src_[pos_++];
      if (c == '\\') {
        if (pos_ >= src_.size()) break;
        const char e = src_[pos_++];
        switch (e) {
          case 'n':
            c = '\n';
            break;
          case 't':
            c = '\t';
            break;
          case 'r':
            c = '\r';
            break;
          case '"':
          case '\\':
            c = e;
            break;
          default:
            syntax_error(pos_ - 1, std::string("unknown escape '\\") + e + "'");
        }
      }
      out += c;
    }
    if (pos_ >= src_.size()) syntax_error(start, "unterminated string");
    ++pos_;
    return {Tok::string, std::move(out), start};
  }

  Token quoted_ident() {
    const std::size_t start = pos_++;
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) syntax_error(start, "unterminated quoted column");
      const char c = src_[pos_++];
      if (c == '`') {
        if (pos_ < src_.size() && src_[pos_] == '`') {
          out += '`';
          ++pos_;
          continue;
        }
        break;
      }
      out += c;
    }
    if (out.empty()) syntax_error(start, "empty quoted column");
    return {Tok::ident, std::move(out), start};
  }

  Token number_or_date() {
    const std::size_t start = pos_;
    static const std::regex kDate(
        R"(^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?)");
    std::cmatch m;
    const char* begin = src_.data() + pos_;
    if (std::regex_search(begin, src_.data() + src_.size(), m, kDate)) {
      std::string text = m.str(0);
      // A date followed by a space and time only counts when the time parses.
      if (!parse_iso8601(text)) syntax_error(start, "invalid datetime '" + text + "'");
      pos_ += text.size();
      return {Tok::datetime, std::move(text), start};
    }
    std::size_t end = pos_;
    if (src_[end] == '-' || src_[end] == '+') ++end;
    while (end < src_.size() && (is_digit(src_[end]) || src_[end] == '.')) ++end;
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      ++end;
      if (end < src_.size() && (src_[end] == '-' || src_[end] == '+')) ++end;
      while (end < src_.size() && is_digit(src_[end])) ++end;
    }
    const std::string text(src_.substr(pos_, end - pos_));
    if (!parse_number(text)) syntax_error(start, "invalid number '" + text + "'");
    pos_ = end;
    return {Tok::number, text, start};
  }

  Token identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size()) {
      if (is_ident_char(src_[pos_])) {
        ++pos_;
      } else if (src_.substr(pos_, 2) == "::" && pos_ + 2 < src_.size() &&
                 src_[pos_ + 2] != ':') {
        pos_ += 2;
      } else {
        break;
      }
    }
    return {Tok::ident, std::string(src_.substr(start, pos_ - start)), start};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

CompareOp relop_from(const std::string& text) {
  if (text == "==") return CompareOp::eq;
  if (text == "!=") return CompareOp::ne;
  if (text == "<") return CompareOp::lt;
  if (text == "<=") return CompareOp::le;
  if (text == ">") return CompareOp::gt;
  return CompareOp::ge;
}

CompareOp flip(CompareOp op) {
  switch (op) {
    case CompareOp::lt:
      return CompareOp::gt;
    case CompareOp::le:
      return CompareOp::ge;
    case CompareOp::gt:
      return CompareOp::lt;
    case CompareOp::ge:
      return CompareOp::le;
    default:
      return op;
  }
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::span<const ColumnDescriptor> schema)
      : toks_(std::move(tokens)), schema_(schema) {
    for (const auto& c : schema_) {
      by_id_.emplace(c.id, &c);
      const std::string shortname = c.short_name();
      if (!shortname.empty()) by_short_[shortname].push_back(&c);
    }
  }

  FilterPredicate parse() {
    auto p = expr();
    if (peek().kind != Tok::end) syntax_error(peek().pos, "expected '&&', '||' or end of input");
    return p;
  }

 private:
  const Token& peek() const { return toks_[i_]; }
  const Token& take() { return toks_[i_++]; }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    ++i_;
    return true;
  }
  const Token& expect(Tok k, const char* what) {
    if (peek().kind != k) syntax_error(peek().pos, std::string("expected ") + what);
    return take();
  }

  FilterPredicate expr() {
    std::vector<FilterPredicate> terms;
    terms.push_back(and_expr());
    while (accept(Tok::or_or)) terms.push_back(and_expr());
    if (terms.size() == 1) return std::move(terms.front());
    return FilterPredicate::disjunction(std::move(terms));
  }

  FilterPredicate and_expr() {
    std::vector<FilterPredicate> terms;
    terms.push_back(primary());
    while (accept(Tok::and_and)) terms.push_back(primary());
    if (terms.size() == 1) return std::move(terms.front());
    return FilterPredicate::conjunction(std::move(terms));
  }

  FilterPredicate primary() {
    if (accept(Tok::lparen)) {
      auto inner = expr();
      expect(Tok::rparen, "')'");
      return inner;
    }
    if (accept(Tok::star)) return FilterPredicate::all();
    if (starts_literal()) return chained();
    return comparison();
  }

  bool starts_literal() const {
    const auto& t = peek();
    if (t.kind == Tok::number || t.kind == Tok::string || t.kind == Tok::datetime) return true;
    return t.kind == Tok::ident && (t.text == "true" || t.text == "false") &&
           toks_[i_ + 1].kind == Tok::relop;
  }

  // lit OP col [OP lit]
  FilterPredicate chained() {
    const Token lhs = take();
    const Token& op1 = expect(Tok::relop, "comparison operator after literal");
    const CompareOp first = flip(relop_from(op1.text));
    const Token& col_tok = expect(Tok::ident, "column");
    const ColumnDescriptor& col = resolve(col_tok);
    auto left = make_leaf(col, first, coerce(lhs, col), col_tok.pos);
    if (peek().kind != Tok::relop) return left;
    const CompareOp second = relop_from(take().text);
    const Token rhs = take_literal();
    auto right = make_leaf(col, second, coerce(rhs, col), col_tok.pos);
    return FilterPredicate::conjunction({std::move(left), std::move(right)});
  }

  FilterPredicate comparison() {
    const Token& col_tok = expect(Tok::ident, "column, literal, '*' or '('");
    const ColumnDescriptor& col = resolve(col_tok);
    const Token& op = peek();
    if (op.kind == Tok::relop) {
      take();
      const Token lit = take_literal();
      return make_leaf(col, relop_from(op.text), coerce(lit, col), col_tok.pos);
    }
    if (op.kind == Tok::ident && op.text == "in") {
      take();
      expect(Tok::lbracket, "'['");
      std::vector<Value> values;
      if (!accept(Tok::rbracket)) {
        do {
          const Token lit = take_literal();
          values.push_back(literal_scalar(coerce(lit, col)));
        } while (accept(Tok::comma));
        expect(Tok::rbracket, "']'");
      }
      return make_leaf(col, CompareOp::in_set, std::move(values), col_tok.pos);
    }
    if (op.kind == Tok::ident && (op.text == "matches" || op.text == "matches_regex")) {
      const CompareOp kind =
          op.text == "matches" ? CompareOp::matches_substring : CompareOp::matches_regex;
      take();
      const Token& pattern = expect(Tok::string, "quoted pattern");
      return make_leaf(col, kind, pattern.text, col_tok.pos);
    }
    if (op.kind == Tok::ident && op.text == "is") {
      take();
      const Token& m = expect(Tok::ident, "'missing'");
      if (m.text != "missing") syntax_error(m.pos, "expected 'missing'");
      return make_leaf(col, CompareOp::is_missing, std::monostate{}, col_tok.pos);
    }
    syntax_error(op.pos, "expected operator after column '" + col_tok.text + "'");
  }

  Token take_literal() {
    const Token& t = peek();
    const bool boolean = t.kind == Tok::ident && (t.text == "true" || t.text == "false");
    if (t.kind != Tok::number && t.kind != Tok::string && t.kind != Tok::datetime && !boolean) {
      syntax_error(t.pos, "expected literal");
    }
    return take();
  }

  const ColumnDescriptor& resolve(const Token& t) {
    if (auto it = by_id_.find(t.text); it != by_id_.end()) return *it->second;
    if (auto it = by_short_.find(t.text); it != by_short_.end()) {
      if (it->second.size() == 1) return *it->second.front();
      throw PredicateError(PredicateError::Kind::ambiguous_column, t.pos,
                           "column '" + t.text + "' is ambiguous; use its canonical id");
    }
    throw PredicateError(PredicateError::Kind::unknown_column, t.pos,
                         "unknown column '" + t.text + "' at position " + std::to_string(t.pos));
  }

  // Literal tokens adopt the column's type where the text allows it.
  Literal coerce(const Token& t, const ColumnDescriptor& col) {
    switch (t.kind) {
      case Tok::number:
        return *parse_number(t.text);
      case Tok::datetime:
        if (col.dtype == DType::string || col.dtype == DType::nominal) return t.text;
        return *parse_iso8601(t.text);
      case Tok::string:
        if (col.dtype == DType::datetime) {
          if (auto ts = parse_iso8601(t.text)) return *ts;
        }
        return t.text;
      default:
        return t.text == "true";
    }
  }

  FilterPredicate make_leaf(const ColumnDescriptor& col, CompareOp op, Literal lit,
                            std::size_t pos) {
    auto leaf = FilterPredicate::leaf(col.id, op, std::move(lit));
    const ColumnDescriptor one[] = {col};
    const auto violations = validate_predicate(leaf, one);
    if (!violations.empty()) {
      const auto& v = violations.front();
      const auto kind = v.kind == Violation::Kind::type_mismatch
                            ? PredicateError::Kind::type_mismatch
                            : PredicateError::Kind::invalid;
      throw PredicateError(kind, pos, v.message + " (position " + std::to_string(pos) + ")");
    }
    return leaf;
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  std::span<const ColumnDescriptor> schema_;
  std::unordered_map<std::string, const ColumnDescriptor*> by_id_;
  std::unordered_map<std::string, std::vector<const ColumnDescriptor*>> by_short_;
};

}  // namespace

FilterPredicate parse_predicate(std::string_view text, std::span<const ColumnDescriptor> schema) {
  if (trim(text).empty()) syntax_error(0, "empty predicate");
  Parser parser(Lexer(text).run(), schema);
  FilterPredicate p = parser.parse();
  const std::size_t depth = p.depth();
  if (depth > kMaxPredicateDepth) {
    throw PredicateError(PredicateError::Kind::invalid, 0,
                         "predicate depth " + std::to_string(depth) + " exceeds " +
                             std::to_string(kMaxPredicateDepth));
  }
  return p;
}

}  // namespace sliceval
