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

#include "sliceval/query.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <regex>
#include <unordered_set>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

constexpr std::uint16_t kMissingCode = 0xffff;

double literal_number(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* t = std::get_if<Timestamp>(&v)) return t->seconds();
  throw PredicateError(PredicateError::Kind::type_mismatch, 0, "expected a numeric literal");
}

RowMask numeric_leaf(const Column& col, const LeafPredicate& leaf, std::size_t n) {
  RowMask mask(n);
  const auto data = col.numbers();
  switch (leaf.op) {
    case CompareOp::is_missing:
      for (RowId r = 0; r < n; ++r) {
        if (std::isnan(data[r])) mask.set(r);
      }
      return mask;
    case CompareOp::ne: {
      const double x = literal_number(literal_scalar(leaf.literal));
      for (RowId r = 0; r < n; ++r) {
        if (!std::isnan(data[r]) && data[r] != x) mask.set(r);
      }
      return mask;
    }
    case CompareOp::in_set: {
      std::vector<double> xs;
      for (const auto& v : std::get<std::vector<Value>>(leaf.literal)) xs.push_back(literal_number(v));
      std::sort(xs.begin(), xs.end());
      for (RowId r = 0; r < n; ++r) {
        if (!std::isnan(data[r]) && std::binary_search(xs.begin(), xs.end(), data[r])) mask.set(r);
      }
      return mask;
    }
    case CompareOp::eq:
    case CompareOp::lt:
    case CompareOp::le:
    case CompareOp::gt:
    case CompareOp::ge: {
      const double x = literal_number(literal_scalar(leaf.literal));
      const auto& index = col.sorted_index();
      const auto begin = index.values.begin();
      const auto end = index.values.end();
      auto lo = begin;
      auto hi = end;
      switch (leaf.op) {
        case CompareOp::eq:
          lo = std::lower_bound(begin, end, x);
          hi = std::upper_bound(begin, end, x);
          break;
        case CompareOp::lt:
          hi = std::lower_bound(begin, end, x);
          break;
        case CompareOp::le:
          hi = std::upper_bound(begin, end, x);
          break;
        case CompareOp::gt:
          lo = std::upper_bound(begin, end, x);
          break;
        default:
          lo = std::lower_bound(begin, end, x);
          break;
      }
      for (auto i = static_cast<std::size_t>(lo - begin); i < static_cast<std::size_t>(hi - begin); ++i) {
        mask.set(index.rows[i]);
      }
      return mask;
    }
    default:
      throw PredicateError(PredicateError::Kind::type_mismatch, 0,
                           "operator not supported on numeric column '" + leaf.column + "'");
  }
}

RowMask boolean_leaf(const Column& col, const LeafPredicate& leaf, std::size_t n) {
  RowMask mask(n);
  const auto data = col.flags();
  bool accept[2] = {false, false};
  bool missing = false;
  switch (leaf.op) {
    case CompareOp::is_missing:
      missing = true;
      break;
    case CompareOp::eq:
    case CompareOp::ne: {
      const bool x = std::get<bool>(literal_scalar(leaf.literal));
      accept[x] = leaf.op == CompareOp::eq;
      accept[!x] = leaf.op == CompareOp::ne;
      break;
    }
    case CompareOp::in_set:
      for (const auto& v : std::get<std::vector<Value>>(leaf.literal)) accept[std::get<bool>(v)] = true;
      break;
    default:
      throw PredicateError(PredicateError::Kind::type_mismatch, 0,
                           "operator not supported on boolean column '" + leaf.column + "'");
  }
  for (RowId r = 0; r < n; ++r) {
    const auto v = data[r];
    if (v < 0 ? missing : accept[v]) mask.set(r);
  }
  return mask;
}

RowMask dictionary_leaf(const Column& col, const LeafPredicate& leaf, std::size_t n) {
  RowMask mask(n);
  const auto codes = col.codes();
  const auto& dict = col.dictionary();
  if (leaf.op == CompareOp::is_missing) {
    for (RowId r = 0; r < n; ++r) {
      if (codes[r] < 0) mask.set(r);
    }
    return mask;
  }
  std::vector<char> accept(dict.size(), 0);
  switch (leaf.op) {
    case CompareOp::eq:
    case CompareOp::ne: {
      const auto& x = std::get<std::string>(literal_scalar(leaf.literal));
      for (std::size_t c = 0; c < dict.size(); ++c) accept[c] = (dict[c] == x) == (leaf.op == CompareOp::eq);
      break;
    }
    case CompareOp::in_set:
      for (const auto& v : std::get<std::vector<Value>>(leaf.literal)) {
        const auto c = col.code_of(std::get<std::string>(v));
        if (c >= 0) accept[static_cast<std::size_t>(c)] = 1;
      }
      break;
    case CompareOp::matches_substring: {
      const auto& x = std::get<std::string>(leaf.literal);
      for (std::size_t c = 0; c < dict.size(); ++c) accept[c] = dict[c].find(x) != std::string::npos;
      break;
    }
    case CompareOp::matches_regex: {
      const std::regex re(std::get<std::string>(leaf.literal));
      for (std::size_t c = 0; c < dict.size(); ++c) accept[c] = std::regex_search(dict[c], re);
      break;
    }
    default:
      throw PredicateError(PredicateError::Kind::type_mismatch, 0,
                           "operator not supported on text column '" + leaf.column + "'");
  }
  for (RowId r = 0; r < n; ++r) {
    const auto c = codes[r];
    if (c >= 0 && accept[static_cast<std::size_t>(c)]) mask.set(r);
  }
  return mask;
}

RowMask eval_rec(const MetadataTable& table, const FilterPredicate& p) {
  const std::size_t n = table.row_count();
  switch (p.kind()) {
    case FilterPredicate::Kind::all:
      return RowMask(n, true);
    case FilterPredicate::Kind::leaf: {
      const auto& leaf = p.as_leaf();
      const Column& col = table.column(leaf.column);
      switch (col.dtype()) {
        case DType::continuous:
        case DType::datetime:
          return numeric_leaf(col, leaf, n);
        case DType::boolean:
          return boolean_leaf(col, leaf, n);
        case DType::nominal:
        case DType::string:
          return dictionary_leaf(col, leaf, n);
      }
      return RowMask(n);
    }
    case FilterPredicate::Kind::conjunction: {
      RowMask mask(n, true);
      for (const auto& c : p.children()) mask &= eval_rec(table, c);
      return mask;
    }
    case FilterPredicate::Kind::disjunction: {
      RowMask mask(n);
      for (const auto& c : p.children()) mask |= eval_rec(table, c);
      return mask;
    }
  }
  return RowMask(n);
}

Timestamp to_timestamp(double seconds) {
  return Timestamp{static_cast<std::int64_t>(std::llround(seconds * 1000.0))};
}

Json number_or_null(const std::optional<double>& v) { return v ? Json(*v) : Json(); }

std::optional<double> json_bound(const Json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_number()) return j.get<double>();
  const Value v = value_from_json(j);
  if (const auto* t = std::get_if<Timestamp>(&v)) return t->seconds();
  if (const auto* s = std::get_if<std::string>(&v)) {
    if (const auto ts = parse_iso8601(*s)) return ts->seconds();
  }
  throw InvalidRequestError("range bounds must be numbers, ISO datetimes or null");
}

std::string rows_key(const FilterPredicate& p, const std::string& model, const std::string& transform,
                     const std::string& metric) {
  return metric + '\x1f' + model + '\x1f' + transform + '\x1f' + print_predicate(p);
}

bool model_scope_visible(const ColumnDescriptor& d, const std::string& transform,
                         const std::optional<std::string>& model) {
  if (!d.model_scoped()) return true;
  if (d.transform_scope.value_or(std::string(kNoTransform)) != transform) return false;
  return !model || d.model_scope == model;
}

}  // namespace

RowMask::RowMask(std::size_t size, bool value)
    : size_(size), words_((size + 63) / 64, value ? ~std::uint64_t{0} : 0) {
  trim();
}

void RowMask::trim() {
  if (size_ % 64 != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
  }
}

std::size_t RowMask::count() const {
  std::size_t total = 0;
  for (const auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

RowMask& RowMask::operator&=(const RowMask& other) {
  if (other.size_ != size_) throw Error("row mask size mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

RowMask& RowMask::operator|=(const RowMask& other) {
  if (other.size_ != size_) throw Error("row mask size mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

std::vector<RowId> RowMask::rows() const {
  std::vector<RowId> out;
  out.reserve(count());
  for_each([&](RowId r) { out.push_back(r); });
  return out;
}

RowMask scope_mask(const MetadataTable& table, std::string_view transform) {
  RowMask mask(table.row_count());
  for (const RowId r : table.rows_in(transform)) mask.set(r);
  return mask;
}

RowMask evaluate(const MetadataTable& table, const FilterPredicate& predicate,
                 std::string_view transform) {
  const auto schema = table.schema();
  require_valid(predicate, schema);
  RowMask mask = eval_rec(table, predicate);
  mask &= scope_mask(table, transform);
  return mask;
}

std::vector<RowId> filter_rows(const MetadataTable& table, const FilterPredicate& predicate,
                               std::string_view transform) {
  return evaluate(table, predicate, transform).rows();
}

FilterPredicate selection_predicate(const ColumnDescriptor& column, const Selection& selection) {
  auto mismatch = [&](const std::string& why) {
    return PredicateError(PredicateError::Kind::type_mismatch, 0,
                          "selection on " + std::string(to_string(column.dtype)) + " column '" +
                              column.id + "': " + why);
  };
  const DType dt = column.dtype;
  if (const auto* range = std::get_if<RangeSelection>(&selection)) {
    if (dt != DType::continuous && dt != DType::datetime) throw mismatch("ranges need a numeric column");
    auto lit = [&](double v) -> Literal {
      if (dt == DType::datetime) return to_timestamp(v);
      return v;
    };
    std::vector<FilterPredicate> parts;
    if (range->min) {
      parts.push_back(FilterPredicate::leaf(column.id, range->min_inclusive ? CompareOp::ge : CompareOp::gt,
                                            lit(*range->min)));
    }
    if (range->max) {
      parts.push_back(FilterPredicate::leaf(column.id, range->max_inclusive ? CompareOp::le : CompareOp::lt,
                                            lit(*range->max)));
    }
    if (parts.empty()) throw InvalidRequestError("range selection on '" + column.id + "' has no bounds");
    if (parts.size() == 1) return parts.front();
    return FilterPredicate::conjunction(std::move(parts));
  }
  if (const auto* cats = std::get_if<CategorySelection>(&selection)) {
    if (dt != DType::nominal && dt != DType::boolean) throw mismatch("categories need a nominal or boolean column");
    for (const auto& v : cats->values) {
      const bool ok = dt == DType::boolean ? std::holds_alternative<bool>(v) : std::holds_alternative<std::string>(v);
      if (!ok) throw mismatch("category values must match the column type");
    }
    return FilterPredicate::leaf(column.id, CompareOp::in_set, cats->values);
  }
  const auto& sub = std::get<SubstringSelection>(selection);
  if (dt != DType::string && dt != DType::nominal) throw mismatch("substring search needs a text column");
  return FilterPredicate::leaf(column.id, CompareOp::matches_substring, sub.text);
}

FilterPredicate state_predicate(const MetadataTable& table, const CrossFilterState& state) {
  FilterPredicate p = FilterPredicate::all();
  for (const auto& [id, selection] : state.selections) {
    const Column* col = table.find(id);
    if (!col) throw PredicateError(PredicateError::Kind::unknown_column, 0, "unknown column '" + id + "'");
    p = conjoin(std::move(p), selection_predicate(col->descriptor(), selection));
  }
  return conjoin(std::move(p), state.predicate);
}

Json to_json(const Selection& selection) {
  Json j = Json::object();
  if (const auto* r = std::get_if<RangeSelection>(&selection)) {
    Json range = Json::object();
    range["min"] = number_or_null(r->min);
    range["max"] = number_or_null(r->max);
    range["min_inclusive"] = r->min_inclusive;
    range["max_inclusive"] = r->max_inclusive;
    j["range"] = range;
  } else if (const auto* c = std::get_if<CategorySelection>(&selection)) {
    Json values = Json::array();
    for (const auto& v : c->values) values.push_back(value_to_json(v));
    j["categories"] = values;
  } else {
    j["substring"] = std::get<SubstringSelection>(selection).text;
  }
  return j;
}

Selection selection_from_json(const Json& j) {
  if (!j.is_object() || j.size() != 1) {
    throw InvalidRequestError("a selection is an object with one of range, categories, substring");
  }
  if (const auto it = j.find("range"); it != j.end()) {
    if (!it->is_object()) throw InvalidRequestError("range must be an object");
    RangeSelection r;
    r.min = json_bound(it->value("min", Json()));
    r.max = json_bound(it->value("max", Json()));
    r.min_inclusive = it->value("min_inclusive", true);
    r.max_inclusive = it->value("max_inclusive", true);
    return r;
  }
  if (const auto it = j.find("categories"); it != j.end()) {
    if (!it->is_array()) throw InvalidRequestError("categories must be an array");
    CategorySelection c;
    for (const auto& v : *it) {
      if (!v.is_string() && !v.is_boolean()) throw InvalidRequestError("categories hold strings or booleans");
      c.values.push_back(value_from_json(v));
    }
    return c;
  }
  if (const auto it = j.find("substring"); it != j.end()) {
    if (!it->is_string()) throw InvalidRequestError("substring must be a string");
    return SubstringSelection{it->get<std::string>()};
  }
  throw InvalidRequestError("a selection is an object with one of range, categories, substring");
}

CrossFilterState state_from_json(const Json& j, const MetadataTable& table) {
  CrossFilterState s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw InvalidRequestError("state must be a JSON object");
  try {
    if (const auto it = j.find("selections"); it != j.end() && !it->is_null()) {
      if (!it->is_object()) throw InvalidRequestError("selections must be an object keyed by column id");
      for (const auto& [id, sel] : it->items()) s.selections.emplace(id, selection_from_json(sel));
    }
    if (const auto it = j.find("transform"); it != j.end() && !it->is_null()) s.transform = it->get<std::string>();
    if (const auto it = j.find("model"); it != j.end() && !it->is_null()) s.model = it->get<std::string>();
    if (const auto it = j.find("metric"); it != j.end() && !it->is_null()) s.metric = it->get<std::string>();
    if (const auto it = j.find("predicate"); it != j.end() && !it->is_null()) {
      if (it->is_string()) {
        const auto schema = table.schema();
        s.predicate = parse_predicate(it->get<std::string>(), schema);
      } else {
        s.predicate = predicate_from_json(*it);
      }
    }
  } catch (const Json::type_error& e) {
    throw InvalidRequestError(std::string("malformed state: ") + e.what());
  }
  return s;
}

bool is_builtin_metric(std::string_view id) {
  return id == kAccuracy || id == kErrorRate || id.substr(0, kMeanPrefix.size()) == kMeanPrefix;
}

std::string resolve_metric_column(const MetadataTable& table, const std::string& name,
                                  const std::string& model, const std::string& transform) {
  if (name == "output") return ColumnDescriptor::output(model, transform, DType::string).id;
  if (table.find(name)) return name;
  std::vector<std::string> scoped, plain;
  for (const auto& c : table.columns()) {
    const auto& d = c->descriptor();
    if (d.origin == Origin::output || d.short_name() != name) continue;
    if (d.model_scoped()) {
      if (d.model_scope == model && d.transform_scope == transform) scoped.push_back(d.id);
    } else {
      plain.push_back(d.id);
    }
  }
  if (scoped.size() == 1) return scoped.front();
  if (scoped.empty() && plain.size() == 1) return plain.front();
  throw NotFoundError("cannot resolve metric column '" + name + "'");
}

struct QueryEngine::Binned {
  HistogramSpec spec;
  std::vector<std::uint16_t> codes;  // per table row; kMissingCode outside the scope too
  std::vector<std::uint64_t> total;
  std::uint64_t total_missing = 0;
};

QueryEngine::QueryEngine(MetadataTable table, HistogramOptions options, MetricRunner metric_runner)
    : table_(std::move(table)), options_(std::move(options)), metric_runner_(std::move(metric_runner)) {}

QueryEngine::~QueryEngine() = default;

std::vector<std::string> QueryEngine::widget_columns(const CrossFilterState& state) const {
  std::vector<std::string> out;
  for (const auto& c : table_.columns()) {
    const auto& d = c->descriptor();
    if (d.origin == Origin::id || d.dtype == DType::string) continue;
    if (!model_scope_visible(d, state.transform, state.model)) continue;
    out.push_back(d.id);
  }
  return out;
}

const QueryEngine::Binned& QueryEngine::binned(const std::string& column_id,
                                               const std::string& transform) const {
  std::lock_guard lock(mu_);
  const auto key = std::make_pair(column_id, transform);
  if (const auto it = binned_.find(key); it != binned_.end()) return *it->second;

  const Column& col = table_.column(column_id);
  const auto rows = table_.rows_in(transform);
  auto b = std::make_shared<Binned>();
  b->spec.column_id = column_id;
  b->spec.dtype = col.dtype();
  b->codes.assign(table_.row_count(), kMissingCode);

  switch (col.dtype()) {
    case DType::continuous:
    case DType::datetime: {
      const auto data = col.numbers();
      double lo = INFINITY, hi = -INFINITY;
      for (const RowId r : rows) {
        if (std::isnan(data[r])) continue;
        lo = std::min(lo, data[r]);
        hi = std::max(hi, data[r]);
      }
      if (lo <= hi) {
        if (lo == hi) hi = lo + 1.0;
        const auto it = options_.bins.find(column_id);
        const std::size_t bins = std::max<std::size_t>(1, it != options_.bins.end() ? it->second : options_.default_bins);
        auto& edges = b->spec.edges;
        for (std::size_t i = 0; i < bins; ++i) {
          edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
        }
        edges.push_back(hi);
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        if (edges.size() < 2) edges = {lo, hi};
        const std::size_t nb = edges.size() - 1;
        for (const RowId r : rows) {
          const double v = data[r];
          if (std::isnan(v)) continue;
          auto idx = static_cast<std::size_t>(
              std::clamp((v - lo) / (hi - lo) * static_cast<double>(nb), 0.0, static_cast<double>(nb - 1)));
          while (idx > 0 && v < edges[idx]) --idx;
          while (idx + 1 < nb && v >= edges[idx + 1]) ++idx;
          b->codes[r] = static_cast<std::uint16_t>(idx);
        }
      }
      break;
    }
    case DType::boolean: {
      b->spec.categories = {"false", "true"};
      const auto data = col.flags();
      for (const RowId r : rows) {
        if (data[r] >= 0) b->codes[r] = static_cast<std::uint16_t>(data[r]);
      }
      break;
    }
    case DType::nominal:
    case DType::string: {
      const auto codes = col.codes();
      const auto& dict = col.dictionary();
      std::vector<std::uint64_t> counts(dict.size(), 0);
      for (const RowId r : rows) {
        if (codes[r] >= 0) ++counts[static_cast<std::size_t>(codes[r])];
      }
      std::vector<std::size_t> order;
      for (std::size_t c = 0; c < dict.size(); ++c) {
        if (counts[c] > 0) order.push_back(c);
      }
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
        return counts[a] != counts[c] ? counts[a] > counts[c] : dict[a] < dict[c];
      });
      const std::size_t keep = std::min(order.size(), options_.max_categories);
      std::vector<std::uint16_t> bucket(dict.size(), static_cast<std::uint16_t>(keep));
      for (std::size_t i = 0; i < keep; ++i) {
        b->spec.categories.push_back(dict[order[i]]);
        bucket[order[i]] = static_cast<std::uint16_t>(i);
      }
      b->spec.has_other = order.size() > keep;
      for (const RowId r : rows) {
        if (codes[r] >= 0) b->codes[r] = bucket[static_cast<std::size_t>(codes[r])];
      }
      break;
    }
  }

  b->total.assign(b->spec.bucket_count(), 0);
  for (const RowId r : rows) {
    const auto c = b->codes[r];
    if (c == kMissingCode) {
      ++b->total_missing;
    } else {
      ++b->total[c];
    }
  }
  auto& slot = binned_[key];
  slot = std::move(b);
  return *slot;
}

const HistogramSpec& QueryEngine::histogram_spec(const std::string& column_id,
                                                 const std::string& transform) const {
  return binned(column_id, transform).spec;
}

RowMask QueryEngine::filtered(const CrossFilterState& state) const {
  return evaluate(table_, state_predicate(table_, state), state.transform);
}

std::vector<ColumnHistogram> QueryEngine::histograms(const CrossFilterState& state) const {
  const auto rows = filtered(state).rows();
  std::vector<ColumnHistogram> out;
  for (const auto& id : widget_columns(state)) {
    const Binned& b = binned(id, state.transform);
    ColumnHistogram h;
    h.spec = b.spec;
    h.total = b.total;
    h.total_missing = b.total_missing;
    h.filtered.assign(b.total.size(), 0);
    const auto* codes = b.codes.data();
    auto* filtered = h.filtered.data();
    std::uint64_t missing = 0;
    for (const RowId r : rows) {
      const auto c = codes[r];
      if (c == kMissingCode) {
        ++missing;
      } else {
        ++filtered[c];
      }
    }
    h.filtered_missing = missing;
    out.push_back(std::move(h));
  }
  return out;
}

InstancePage QueryEngine::page_instances(const CrossFilterState& state, std::size_t offset,
                                         std::size_t limit) const {
  if (limit > kMaxPageSize) {
    throw InvalidRequestError("limit " + std::to_string(limit) + " exceeds " + std::to_string(kMaxPageSize));
  }
  const auto mask = filtered(state);
  InstancePage page;
  page.total = mask.count();
  page.offset = offset;
  const Column* label = table_.find(table_.label_column());
  const Column* output = state.model ? table_.find(ColumnDescriptor::output(*state.model, state.transform,
                                                                            DType::string).id)
                                     : nullptr;
  std::vector<const Column*> shown;
  for (const auto& c : table_.columns()) {
    const auto& d = c->descriptor();
    if (d.origin == Origin::id || !model_scope_visible(d, state.transform, state.model)) continue;
    shown.push_back(c.get());
  }
  std::size_t index = 0;
  mask.for_each([&](RowId r) {
    if (index++ < offset || page.instances.size() >= limit) return;
    InstanceRecord rec;
    rec.row = r;
    rec.instance_id = table_.instance_id(r);
    rec.data_file = table_.data_file(r);
    if (label) rec.label = label->cell(r);
    if (output) rec.output = output->cell(r);
    for (const auto* c : shown) rec.values.emplace_back(c->id(), c->cell(r));
    page.instances.push_back(std::move(rec));
  });
  return page;
}

double QueryEngine::metric_value_builtin(const std::string& metric_id, const std::vector<RowId>& rows,
                                         const std::string& model, const std::string& transform,
                                         bool& has_value) const {
  has_value = false;
  if (rows.empty()) return 0.0;
  if (metric_id == kAccuracy || metric_id == kErrorRate) {
    const Column& out = table_.column(ColumnDescriptor::output(model, transform, DType::string).id);
    const Column* label = table_.find(table_.label_column());
    std::uint64_t correct = 0;
    for (const RowId r : rows) {
      if (!label || out.missing(r) || label->missing(r)) continue;
      if (canonical_text(out.cell(r)) == canonical_text(label->cell(r))) ++correct;
    }
    has_value = true;
    const auto n = static_cast<double>(rows.size());
    return metric_id == kAccuracy ? static_cast<double>(correct) / n
                                  : static_cast<double>(rows.size() - correct) / n;
  }
  const std::string name = metric_id.substr(kMeanPrefix.size());
  const Column& col = table_.column(resolve_metric_column(table_, name, model, transform));
  if (col.dtype() != DType::continuous && col.dtype() != DType::boolean) {
    throw InvalidRequestError("mean needs a continuous or boolean column, '" + col.id() + "' is " +
                              std::string(to_string(col.dtype())));
  }
  double sum = 0;
  std::uint64_t k = 0;
  for (const RowId r : rows) {
    const Value v = col.cell(r);
    if (const auto* d = std::get_if<double>(&v)) {
      sum += *d;
      ++k;
    } else if (const auto* b = std::get_if<bool>(&v)) {
      sum += *b ? 1.0 : 0.0;
      ++k;
    }
  }
  if (k == 0) return 0.0;
  has_value = true;
  return sum / static_cast<double>(k);
}

MetricRecord QueryEngine::metric(const FilterPredicate& predicate, const std::string& model,
                                 const std::string& transform, const std::string& metric_id) const {
  const std::string output_id = ColumnDescriptor::output(model, transform, DType::string).id;
  if (!table_.find(output_id)) {
    throw NotProcessedError("outputs of model '" + model + "' on transform '" + transform +
                            "' have not been processed");
  }
  if (!is_builtin_metric(metric_id) && !metric_runner_) {
    throw NotFoundError("unknown metric '" + metric_id + "'");
  }
  const auto key = rows_key(predicate, model, transform, metric_id);
  {
    std::lock_guard lock(mu_);
    if (const auto it = metrics_.find(key); it != metrics_.end()) return it->second;
  }

  const auto rows = filter_rows(table_, predicate, transform);
  MetricRecord rec;
  rec.model_id = model;
  rec.transform_id = transform;
  rec.metric_id = metric_id;
  rec.n = rows.size();
  rec.computed_at = now_timestamp();
  if (is_builtin_metric(metric_id)) {
    bool has_value = false;
    const double v = metric_value_builtin(metric_id, rows, model, transform, has_value);
    if (has_value) rec.value = v;
  } else if (!rows.empty()) {
    std::vector<const Column*> fields;
    for (const auto& c : table_.columns()) {
      const auto o = c->descriptor().origin;
      if (o == Origin::raw || o == Origin::label || o == Origin::id || c->id() == output_id) fields.push_back(c.get());
    }
    Json payload = Json::array();
    for (const RowId r : rows) {
      Json row = Json::object();
      row["id"] = table_.instance_id(r);
      row["data_file"] = table_.data_file(r);
      for (const auto* c : fields) row[c->id()] = value_to_json(c->cell(r));
      payload.push_back(std::move(row));
    }
    Json options = Json::object();
    options["id_column"] = table_.id_column();
    options["label_column"] = table_.label_column();
    options["output_column"] = output_id;
    const Value v = metric_runner_(metric_id, payload, options);
    if (const auto* d = std::get_if<double>(&v)) rec.value = *d;
  }
  std::lock_guard lock(mu_);
  metrics_.emplace(key, rec);
  return rec;
}

MetricRecord QueryEngine::slice_metric(const Slice& slice, const std::string& model,
                                       const std::string& transform, const std::string& metric_id) const {
  auto rec = metric(slice.predicate, model, transform, metric_id);
  rec.slice_id = slice.slice_id;
  return rec;
}

}  // namespace sliceval
