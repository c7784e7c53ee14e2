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

// Random tables plus brute-force reference implementations of filtering,
// histograms and built-in metrics. Deliberately slow and cell-by-cell.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "sliceval/query.hpp"
#include "sliceval/table.hpp"

namespace sliceval::test {

struct RandomTableShape {
  std::size_t max_rows = 10000;
  std::size_t max_columns = 20;  // including id, label and outputs
};

inline std::string pick_word(std::mt19937_64& rng, std::size_t pool) {
  static const char* kSyll[] = {"ka", "lo", "mi", "ne", "ru", "sa", "to", "vi"};
  std::uniform_int_distribution<std::size_t> d(0, pool - 1);
  std::size_t k = d(rng);
  std::string out;
  do {
    out += kSyll[k % 8];
    k /= 8;
  } while (k);
  return out;
}

// id, label (3 classes), outputs of m1/m2 on "none" and on "noise" when the
// table has variants, then raw columns of every dtype with ties and gaps.
inline MetadataTable random_table(std::mt19937_64& rng, const RandomTableShape& shape = {}) {
  std::uniform_int_distribution<std::size_t> nd(0, shape.max_rows);
  const std::size_t base = std::max<std::size_t>(1, nd(rng));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool variants = u(rng) < 0.4;
  const std::size_t variant_count = variants ? base / 3 + 1 : 0;

  auto layout = std::make_shared<RowLayout>();
  layout->transforms = {"none"};
  for (std::size_t i = 0; i < base; ++i) {
    layout->instance_ids.push_back("i" + std::to_string(i));
    layout->transform_codes.push_back(0);
    layout->data_files.push_back("f/" + std::to_string(i) + ".wav");
    layout->parents.push_back(static_cast<RowId>(i));
  }
  layout->base_row_count = base;
  if (variants) {
    layout->transforms.push_back("noise");
    for (std::size_t k = 0; k < variant_count; ++k) {
      const std::size_t parent = k;
      layout->instance_ids.push_back("i" + std::to_string(parent));
      layout->transform_codes.push_back(1);
      layout->data_files.push_back("_transforms/noise/" + std::to_string(parent) + ".wav");
      layout->parents.push_back(static_cast<RowId>(parent));
    }
  }
  layout->rebuild_indexes();
  const std::size_t n = layout->instance_ids.size();

  std::vector<std::shared_ptr<const Column>> cols;
  auto inherit = [&](std::vector<Value> v) {
    for (std::size_t r = base; r < n; ++r) v[r] = v[layout->parents[r]];
    return v;
  };

  std::vector<Value> ids(n), labels(n);
  static const char* kClasses[] = {"dog", "cat", "bird"};
  for (std::size_t r = 0; r < base; ++r) {
    ids[r] = layout->instance_ids[r];
    labels[r] = std::string(kClasses[rng() % 3]);
  }
  cols.push_back(Column::from_values(ColumnDescriptor::instance_id("id"), inherit(ids)));
  cols.push_back(Column::from_values(ColumnDescriptor::label("label", DType::nominal), inherit(labels)));
  const std::vector<Value> label_values = inherit(labels);

  for (const std::string model : {"m1", "m2"}) {
    for (const std::string& t : layout->transforms) {
      const double skill = 0.3 + 0.6 * u(rng);
      const double missing_rate = u(rng) < 0.3 ? 0.1 : 0.0;
      std::vector<Value> out(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (layout->transforms[static_cast<std::size_t>(layout->transform_codes[r])] != t) continue;
        if (u(rng) < missing_rate) continue;
        out[r] = u(rng) < skill ? label_values[r] : Value(std::string(kClasses[rng() % 3]));
      }
      cols.push_back(Column::from_values(ColumnDescriptor::output(model, t, DType::nominal), out));
    }
  }

  std::uniform_int_distribution<std::size_t> cd(1, shape.max_columns > cols.size() ? shape.max_columns - cols.size() : 1);
  const std::size_t extra = cd(rng);
  for (std::size_t c = 0; c < extra; ++c) {
    const auto dtype = static_cast<DType>(rng() % 5);
    const double missing_rate = u(rng) < 0.5 ? 0.0 : 0.2 * u(rng);
    const bool few_values = u(rng) < 0.5;
    std::vector<Value> v(n);
    for (std::size_t r = 0; r < base; ++r) {
      if (u(rng) < missing_rate) continue;
      switch (dtype) {
        case DType::continuous:
          v[r] = few_values ? static_cast<double>(rng() % 7) * 0.25 - 0.5 : std::round((u(rng) * 200.0 - 50.0) * 1e4) / 1e4;
          break;
        case DType::boolean:
          v[r] = u(rng) < 0.4;
          break;
        case DType::nominal:
          v[r] = pick_word(rng, few_values ? 4 : 45);
          break;
        case DType::string:
          v[r] = pick_word(rng, 5000) + " " + pick_word(rng, 12);
          break;
        case DType::datetime:
          v[r] = Timestamp{1600000000000LL + static_cast<std::int64_t>(rng() % (few_values ? 5 : 400000)) * 86400LL};
          break;
      }
    }
    if (u(rng) < 0.15) std::fill(v.begin(), v.end(), Value{});  // all missing
    const std::string name = "c" + std::to_string(c);
    if (u(rng) < 0.25 && dtype != DType::string) {
      // a model-dependent distill on the base scope, not inherited
      cols.push_back(Column::from_values(ColumnDescriptor::distill(name, dtype, "m1", "none"), v));
    } else {
      cols.push_back(Column::from_values(ColumnDescriptor::raw(name, dtype), inherit(v)));
    }
  }

  MetadataTable table(std::move(cols), layout);
  table.set_key_columns("id::id", "label::label");
  return table;
}

// A value drawn from the column (or, sometimes, one it never holds).
inline Value sample_value(std::mt19937_64& rng, const Column& col) {
  if (col.size() > 0 && rng() % 5 != 0) {
    for (int tries = 0; tries < 8; ++tries) {
      const Value v = col.cell(static_cast<RowId>(rng() % col.size()));
      if (!is_missing(v)) return v;
    }
  }
  switch (col.dtype()) {
    case DType::continuous:
      return static_cast<double>(static_cast<int>(rng() % 200) - 50) * 0.5;
    case DType::boolean:
      return rng() % 2 == 0;
    case DType::datetime:
      return Timestamp{1600000000000LL + static_cast<std::int64_t>(rng() % 400000) * 86400LL};
    default:
      return pick_word(rng, 45);
  }
}

inline Literal as_literal(const Value& v) {
  return std::visit([](const auto& x) -> Literal {
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, std::monostate>) {
      return std::monostate{};
    } else {
      return x;
    }
  }, v);
}

inline FilterPredicate random_leaf(std::mt19937_64& rng, const MetadataTable& table) {
  const auto& cols = table.columns();
  const Column& col = *cols[rng() % cols.size()];
  const std::string& id = col.id();
  if (rng() % 10 == 0) return FilterPredicate::leaf(id, CompareOp::is_missing);
  switch (col.dtype()) {
    case DType::continuous:
    case DType::datetime: {
      static const CompareOp ops[] = {CompareOp::eq, CompareOp::ne, CompareOp::lt, CompareOp::le,
                                      CompareOp::gt, CompareOp::ge, CompareOp::in_set};
      const CompareOp op = ops[rng() % 7];
      if (op == CompareOp::in_set) {
        std::vector<Value> vs;
        for (std::size_t k = 0, m = 1 + rng() % 3; k < m; ++k) vs.push_back(sample_value(rng, col));
        return FilterPredicate::leaf(id, op, vs);
      }
      return FilterPredicate::leaf(id, op, as_literal(sample_value(rng, col)));
    }
    case DType::boolean: {
      const CompareOp op = rng() % 3 == 0 ? CompareOp::ne : CompareOp::eq;
      return FilterPredicate::leaf(id, op, rng() % 2 == 0);
    }
    default: {
      const auto pick = rng() % 5;
      const Value v = sample_value(rng, col);
      const auto& s = std::get<std::string>(v);
      if (pick == 0) return FilterPredicate::leaf(id, CompareOp::ne, s);
      if (pick == 1) {
        std::vector<Value> vs{v};
        for (std::size_t k = 0, m = rng() % 3; k < m; ++k) vs.push_back(sample_value(rng, col));
        return FilterPredicate::leaf(id, CompareOp::in_set, vs);
      }
      if (pick == 2) return FilterPredicate::leaf(id, CompareOp::matches_substring, s.substr(0, 1 + rng() % 3));
      if (pick == 3) return FilterPredicate::leaf(id, CompareOp::matches_regex, "^" + s.substr(0, 2) + "[a-z]");
      return FilterPredicate::leaf(id, CompareOp::eq, s);
    }
  }
}

inline FilterPredicate random_predicate(std::mt19937_64& rng, const MetadataTable& table, int depth = 3) {
  const auto roll = rng() % 10;
  if (depth <= 0 || roll < 5) return random_leaf(rng, table);
  if (roll == 5) return FilterPredicate::all();
  std::vector<FilterPredicate> kids;
  for (std::size_t k = 0, m = 2 + rng() % 2; k < m; ++k) kids.push_back(random_predicate(rng, table, depth - 1));
  return roll < 8 ? FilterPredicate::conjunction(std::move(kids)) : FilterPredicate::disjunction(std::move(kids));
}

// A random widget state: a few selections that suit their columns.
inline CrossFilterState random_state(std::mt19937_64& rng, const MetadataTable& table) {
  CrossFilterState s;
  const auto& transforms = table.transforms();
  s.transform = transforms[rng() % transforms.size()];
  if (rng() % 2 == 0) s.model = rng() % 2 == 0 ? "m1" : "m2";
  const auto& cols = table.columns();
  for (std::size_t k = 0, m = rng() % 4; k < m; ++k) {
    const Column& col = *cols[rng() % cols.size()];
    switch (col.dtype()) {
      case DType::continuous:
      case DType::datetime: {
        auto num = [&] {
          const Value v = sample_value(rng, col);
          if (const auto* t = std::get_if<Timestamp>(&v)) return t->seconds();
          return std::get<double>(v);
        };
        RangeSelection r;
        if (rng() % 4 != 0) r.min = num();
        if (rng() % 4 != 0 || !r.min) r.max = num();
        if (r.min && r.max && *r.min > *r.max) std::swap(*r.min, *r.max);
        r.min_inclusive = rng() % 2 == 0;
        r.max_inclusive = rng() % 2 == 0;
        s.selections[col.id()] = r;
        break;
      }
      case DType::boolean:
        s.selections[col.id()] = CategorySelection{{Value(rng() % 2 == 0)}};
        break;
      case DType::nominal: {
        CategorySelection c;
        for (std::size_t j = 0, q = 1 + rng() % 3; j < q; ++j) c.values.push_back(sample_value(rng, col));
        s.selections[col.id()] = c;
        break;
      }
      case DType::string: {
        const auto v = std::get<std::string>(sample_value(rng, col));
        s.selections[col.id()] = SubstringSelection{v.substr(0, 1 + rng() % 4)};
        break;
      }
    }
  }
  if (rng() % 3 == 0) s.predicate = random_predicate(rng, table, 2);
  return s;
}

// ---- oracle ---------------------------------------------------------------

inline double oracle_number(const Value& v) {
  if (const auto* t = std::get_if<Timestamp>(&v)) return static_cast<double>(t->millis) / 1000.0;
  return std::get<double>(v);
}

inline bool oracle_equal(const Value& cell, const Value& lit) {
  if (std::holds_alternative<double>(cell) || std::holds_alternative<Timestamp>(cell)) {
    return oracle_number(cell) == oracle_number(lit);
  }
  return cell == lit;
}

inline bool oracle_leaf(const Value& cell, const LeafPredicate& leaf) {
  if (leaf.op == CompareOp::is_missing) return is_missing(cell);
  if (is_missing(cell)) return false;
  switch (leaf.op) {
    case CompareOp::eq:
      return oracle_equal(cell, literal_scalar(leaf.literal));
    case CompareOp::ne:
      return !oracle_equal(cell, literal_scalar(leaf.literal));
    case CompareOp::lt:
      return oracle_number(cell) < oracle_number(literal_scalar(leaf.literal));
    case CompareOp::le:
      return oracle_number(cell) <= oracle_number(literal_scalar(leaf.literal));
    case CompareOp::gt:
      return oracle_number(cell) > oracle_number(literal_scalar(leaf.literal));
    case CompareOp::ge:
      return oracle_number(cell) >= oracle_number(literal_scalar(leaf.literal));
    case CompareOp::in_set:
      for (const auto& v : std::get<std::vector<Value>>(leaf.literal)) {
        if (oracle_equal(cell, v)) return true;
      }
      return false;
    case CompareOp::matches_substring:
      return std::get<std::string>(cell).find(std::get<std::string>(leaf.literal)) != std::string::npos;
    case CompareOp::matches_regex:
      return std::regex_search(std::get<std::string>(cell), std::regex(std::get<std::string>(leaf.literal)));
    default:
      return false;
  }
}

inline bool oracle_match(const MetadataTable& t, RowId r, const FilterPredicate& p) {
  switch (p.kind()) {
    case FilterPredicate::Kind::all:
      return true;
    case FilterPredicate::Kind::leaf:
      return oracle_leaf(t.column(p.as_leaf().column).cell(r), p.as_leaf());
    case FilterPredicate::Kind::conjunction:
      for (const auto& c : p.children()) {
        if (!oracle_match(t, r, c)) return false;
      }
      return true;
    case FilterPredicate::Kind::disjunction:
      for (const auto& c : p.children()) {
        if (oracle_match(t, r, c)) return true;
      }
      return false;
  }
  return false;
}

inline std::vector<RowId> oracle_filter(const MetadataTable& t, const FilterPredicate& p,
                                        const std::string& transform) {
  std::vector<RowId> out;
  for (RowId r = 0; r < t.row_count(); ++r) {
    if (t.transform_of(r) == transform && oracle_match(t, r, p)) out.push_back(r);
  }
  return out;
}

// Row passes a widget selection, checked directly against the cell.
inline bool oracle_selected(const Value& cell, const Selection& sel) {
  if (is_missing(cell)) return false;
  if (const auto* r = std::get_if<RangeSelection>(&sel)) {
    const double x = oracle_number(cell);
    // datetime bounds are compared at millisecond precision
    auto bound = [&](double b) {
      return std::holds_alternative<Timestamp>(cell) ? std::llround(b * 1000.0) / 1000.0 : b;
    };
    if (r->min && (r->min_inclusive ? x < bound(*r->min) : x <= bound(*r->min))) return false;
    if (r->max && (r->max_inclusive ? x > bound(*r->max) : x >= bound(*r->max))) return false;
    return true;
  }
  if (const auto* c = std::get_if<CategorySelection>(&sel)) {
    return std::find(c->values.begin(), c->values.end(), cell) != c->values.end();
  }
  return std::get<std::string>(cell).find(std::get<SubstringSelection>(sel).text) != std::string::npos;
}

inline std::vector<RowId> oracle_state_rows(const MetadataTable& t, const CrossFilterState& s) {
  std::vector<RowId> out;
  for (RowId r = 0; r < t.row_count(); ++r) {
    if (t.transform_of(r) != s.transform || !oracle_match(t, r, s.predicate)) continue;
    bool ok = true;
    for (const auto& [id, sel] : s.selections) ok = ok && oracle_selected(t.column(id).cell(r), sel);
    if (ok) out.push_back(r);
  }
  return out;
}

struct OracleHistogram {
  std::string column_id;
  std::vector<double> edges;
  std::vector<std::string> categories;
  bool has_other = false;
  std::vector<std::uint64_t> total, filtered;
  std::uint64_t total_missing = 0, filtered_missing = 0;
};

inline std::vector<OracleHistogram> oracle_histograms(const MetadataTable& t, const CrossFilterState& s,
                                                      std::size_t bins = kDefaultHistogramBins,
                                                      std::size_t max_categories = kMaxCategories) {
  std::vector<RowId> scope;
  for (RowId r = 0; r < t.row_count(); ++r) {
    if (t.transform_of(r) == s.transform) scope.push_back(r);
  }
  const auto chosen = oracle_state_rows(t, s);
  std::vector<OracleHistogram> out;
  for (const auto& c : t.columns()) {
    const auto& d = c->descriptor();
    if (d.origin == Origin::id || d.dtype == DType::string) continue;
    if (d.model_scope) {
      if (d.transform_scope != s.transform) continue;
      if (s.model && d.model_scope != s.model) continue;
    }
    OracleHistogram h;
    h.column_id = d.id;
    std::function<std::optional<std::size_t>(const Value&)> bucket;
    if (d.dtype == DType::continuous || d.dtype == DType::datetime) {
      double lo = INFINITY, hi = -INFINITY;
      for (const RowId r : scope) {
        const Value v = c->cell(r);
        if (is_missing(v)) continue;
        lo = std::min(lo, oracle_number(v));
        hi = std::max(hi, oracle_number(v));
      }
      if (lo <= hi) {
        if (hi == lo) hi = lo + 1;
        for (std::size_t i = 0; i <= bins; ++i) {
          const double e = i == bins ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
          if (h.edges.empty() || e > h.edges.back()) h.edges.push_back(e);
        }
      }
      bucket = [&h](const Value& v) -> std::optional<std::size_t> {
        const double x = oracle_number(v);
        const std::size_t nb = h.edges.size() - 1;
        for (std::size_t i = 0; i < nb; ++i) {
          if (h.edges[i] <= x && (x < h.edges[i + 1] || i + 1 == nb)) return i;
        }
        return std::nullopt;
      };
    } else {
      std::map<std::string, std::uint64_t> counts;
      if (d.dtype == DType::boolean) {
        h.categories = {"false", "true"};
      } else {
        for (const RowId r : scope) {
          const Value v = c->cell(r);
          if (!is_missing(v)) ++counts[std::get<std::string>(v)];
        }
        std::vector<std::pair<std::string, std::uint64_t>> order(counts.begin(), counts.end());
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        for (std::size_t i = 0; i < order.size() && i < max_categories; ++i) h.categories.push_back(order[i].first);
        h.has_other = order.size() > max_categories;
      }
      bucket = [&h, dt = d.dtype](const Value& v) -> std::optional<std::size_t> {
        const std::string text = dt == DType::boolean ? (std::get<bool>(v) ? "true" : "false") : std::get<std::string>(v);
        for (std::size_t i = 0; i < h.categories.size(); ++i) {
          if (h.categories[i] == text) return i;
        }
        return h.categories.size();  // other
      };
    }
    const std::size_t buckets = h.edges.empty() ? h.categories.size() + (h.has_other ? 1 : 0) : h.edges.size() - 1;
    h.total.assign(buckets, 0);
    h.filtered.assign(buckets, 0);
    auto count = [&](const std::vector<RowId>& rows, std::vector<std::uint64_t>& into, std::uint64_t& missing) {
      for (const RowId r : rows) {
        const Value v = c->cell(r);
        if (is_missing(v)) {
          ++missing;
          continue;
        }
        into.at(*bucket(v)) += 1;
      }
    };
    count(scope, h.total, h.total_missing);
    count(chosen, h.filtered, h.filtered_missing);
    out.push_back(std::move(h));
  }
  return out;
}

struct OracleMetric {
  std::uint64_t n = 0;
  std::optional<double> value;
};

inline OracleMetric oracle_accuracy(const MetadataTable& t, const FilterPredicate& p, const std::string& model,
                                    const std::string& transform) {
  const Column& out = t.column("output::" + model + "::" + transform);
  const Column& label = t.column(t.label_column());
  OracleMetric m;
  std::uint64_t correct = 0;
  for (const RowId r : oracle_filter(t, p, transform)) {
    ++m.n;
    const Value o = out.cell(r), l = label.cell(r);
    if (!is_missing(o) && !is_missing(l) && canonical_text(o) == canonical_text(l)) ++correct;
  }
  if (m.n) m.value = static_cast<double>(correct) / static_cast<double>(m.n);
  return m;
}

}  // namespace sliceval::test
