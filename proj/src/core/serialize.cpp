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

#include "sliceval/serialize.hpp"

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

void check_version(const Json& json) {
  if (!json.is_object()) throw SerializationError("expected a JSON object");
  const auto it = json.find("version");
  if (it == json.end() || !it->is_number_integer()) {
    throw SerializationError("missing integer 'version' field");
  }
  const int version = it->get<int>();
  if (version != kSchemaVersion) throw UnknownVersionError(version);
}

const Json& field(const Json& json, const char* key) {
  const auto it = json.find(key);
  if (it == json.end()) throw SerializationError(std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const Json& json, const char* key) {
  const Json& f = field(json, key);
  if (!f.is_string()) throw SerializationError(std::string("field '") + key + "' must be text");
  return f.get<std::string>();
}

std::optional<std::string> optional_string(const Json& json, const char* key) {
  const auto it = json.find(key);
  if (it == json.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SerializationError(std::string("field '") + key + "' must be text");
  return it->get<std::string>();
}

Json optional_to_json(const std::optional<std::string>& v) { return v ? Json(*v) : Json(nullptr); }

Timestamp timestamp_field(const Json& json, const char* key) {
  const auto ts = parse_iso8601(string_field(json, key));
  if (!ts) throw SerializationError(std::string("field '") + key + "' is not ISO-8601");
  return *ts;
}

Json test_body(const BehavioralTest& t) {
  Json j;
  j["version"] = kSchemaVersion;
  j["test_id"] = t.test_id;
  j["slice_id"] = t.slice_id;
  j["metric_id"] = t.metric_id;
  j["transform_id"] = optional_to_json(t.transform_id);
  j["comparator"] = std::string(to_string(t.comparator));
  j["threshold"] = t.threshold;
  return j;
}

}  // namespace

std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::gt:
      return ">";
    case Comparator::ge:
      return ">=";
    case Comparator::lt:
      return "<";
    case Comparator::le:
      return "<=";
  }
  return ">";
}

std::optional<Comparator> parse_comparator(std::string_view text) {
  if (text == ">") return Comparator::gt;
  if (text == ">=") return Comparator::ge;
  if (text == "<") return Comparator::lt;
  if (text == "<=") return Comparator::le;
  return std::nullopt;
}

bool compare(double value, Comparator c, double threshold) {
  switch (c) {
    case Comparator::gt:
      return value > threshold;
    case Comparator::ge:
      return value >= threshold;
    case Comparator::lt:
      return value < threshold;
    case Comparator::le:
      return value <= threshold;
  }
  return false;
}

std::string BehavioralTest::effective_transform() const {
  return transform_id.value_or(std::string(kNoTransform));
}

Json value_to_json(const Value& value) {
  struct Visitor {
    Json operator()(std::monostate) const { return nullptr; }
    Json operator()(double d) const { return d; }
    Json operator()(bool b) const { return b; }
    Json operator()(const std::string& s) const { return s; }
    Json operator()(Timestamp t) const { return Json{{"datetime", format_iso8601(t)}}; }
  };
  return std::visit(Visitor{}, value);
}

Value value_from_json(const Json& json) {
  if (json.is_null()) return std::monostate{};
  if (json.is_boolean()) return json.get<bool>();
  if (json.is_number()) return json.get<double>();
  if (json.is_string()) return json.get<std::string>();
  if (json.is_object() && json.contains("datetime")) {
    const auto ts = parse_iso8601(json.at("datetime").get<std::string>());
    if (!ts) throw SerializationError("invalid datetime literal");
    return *ts;
  }
  throw SerializationError("unsupported value " + json.dump());
}

Json to_json(const FilterPredicate& p) {
  Json j;
  switch (p.kind()) {
    case FilterPredicate::Kind::all:
      j["kind"] = "all";
      return j;
    case FilterPredicate::Kind::leaf: {
      const auto& leaf = p.as_leaf();
      j["kind"] = "leaf";
      j["column"] = leaf.column;
      j["op"] = std::string(to_string(leaf.op));
      if (const auto* set = std::get_if<std::vector<Value>>(&leaf.literal)) {
        Json arr = Json::array();
        for (const auto& v : *set) arr.push_back(value_to_json(v));
        j["value"] = std::move(arr);
      } else if (!std::holds_alternative<std::monostate>(leaf.literal)) {
        j["value"] = value_to_json(literal_scalar(leaf.literal));
      }
      return j;
    }
    case FilterPredicate::Kind::conjunction:
    case FilterPredicate::Kind::disjunction: {
      j["kind"] = p.kind() == FilterPredicate::Kind::conjunction ? "and" : "or";
      Json children = Json::array();
      for (const auto& c : p.children()) children.push_back(to_json(c));
      j["children"] = std::move(children);
      return j;
    }
  }
  return j;
}

FilterPredicate predicate_from_json(const Json& j) {
  if (!j.is_object()) throw SerializationError("predicate must be an object");
  const std::string kind = string_field(j, "kind");
  if (kind == "all") return FilterPredicate::all();
  if (kind == "and" || kind == "or") {
    const Json& children = field(j, "children");
    if (!children.is_array()) throw SerializationError("'children' must be an array");
    std::vector<FilterPredicate> out;
    for (const auto& c : children) out.push_back(predicate_from_json(c));
    return kind == "and" ? FilterPredicate::conjunction(std::move(out))
                         : FilterPredicate::disjunction(std::move(out));
  }
  if (kind != "leaf") throw SerializationError("unknown predicate kind '" + kind + "'");
  const auto op = parse_compare_op(string_field(j, "op"));
  if (!op) throw SerializationError("unknown operator '" + string_field(j, "op") + "'");
  Literal literal;
  if (const auto it = j.find("value"); it != j.end()) {
    if (it->is_array()) {
      std::vector<Value> set;
      for (const auto& v : *it) set.push_back(value_from_json(v));
      literal = std::move(set);
    } else {
      const Value v = value_from_json(*it);
      std::visit(
          [&](const auto& x) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(x)>, std::monostate>) literal = x;
          },
          v);
    }
  }
  return FilterPredicate::leaf(string_field(j, "column"), *op, std::move(literal));
}

Json to_json(const Slice& s) {
  Json j;
  j["version"] = kSchemaVersion;
  j["slice_id"] = s.slice_id;
  j["name"] = s.name;
  j["folder"] = optional_to_json(s.folder);
  j["predicate"] = to_json(s.predicate);
  j["predicate_text"] = print_predicate(s.predicate);
  j["created_at"] = format_iso8601(s.created_at);
  return j;
}

Slice slice_from_json(const Json& j) {
  check_version(j);
  Slice s;
  s.slice_id = string_field(j, "slice_id");
  s.name = string_field(j, "name");
  s.folder = optional_string(j, "folder");
  s.predicate = predicate_from_json(field(j, "predicate"));
  s.created_at = timestamp_field(j, "created_at");
  return s;
}

Json to_json(const BehavioralTest& t) { return test_body(t); }

BehavioralTest test_from_json(const Json& j) {
  check_version(j);
  BehavioralTest t;
  t.test_id = string_field(j, "test_id");
  t.slice_id = string_field(j, "slice_id");
  t.metric_id = string_field(j, "metric_id");
  t.transform_id = optional_string(j, "transform_id");
  const auto cmp = parse_comparator(string_field(j, "comparator"));
  if (!cmp) throw SerializationError("unknown comparator");
  t.comparator = *cmp;
  const Json& th = field(j, "threshold");
  if (!th.is_number()) throw SerializationError("'threshold' must be a number");
  t.threshold = th.get<double>();
  return t;
}

Json to_json(const Report& r) {
  Json j;
  j["version"] = kSchemaVersion;
  j["report_id"] = r.report_id;
  j["name"] = r.name;
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json ej;
    ej["slice_id"] = e.slice_id;
    ej["metric_id"] = e.metric_id;
    ej["transform_id"] = e.transform_id;
    ej["test"] = e.test ? test_body(*e.test) : Json(nullptr);
    entries.push_back(std::move(ej));
  }
  j["entries"] = std::move(entries);
  return j;
}

Report report_from_json(const Json& j) {
  check_version(j);
  Report r;
  r.report_id = string_field(j, "report_id");
  r.name = string_field(j, "name");
  const Json& entries = field(j, "entries");
  if (!entries.is_array()) throw SerializationError("'entries' must be an array");
  for (const auto& ej : entries) {
    ReportEntry e;
    e.slice_id = string_field(ej, "slice_id");
    e.metric_id = string_field(ej, "metric_id");
    e.transform_id = string_field(ej, "transform_id");
    if (const auto it = ej.find("test"); it != ej.end() && !it->is_null()) {
      e.test = test_from_json(*it);
    }
    r.entries.push_back(std::move(e));
  }
  return r;
}

Json to_json(const MetricRecord& m) {
  Json j;
  j["version"] = kSchemaVersion;
  j["slice_id"] = m.slice_id;
  j["model_id"] = m.model_id;
  j["transform_id"] = m.transform_id;
  j["metric_id"] = m.metric_id;
  j["value"] = m.value ? Json(*m.value) : Json(nullptr);
  j["n"] = m.n;
  j["computed_at"] = format_iso8601(m.computed_at);
  return j;
}

MetricRecord metric_record_from_json(const Json& j) {
  check_version(j);
  MetricRecord m;
  m.slice_id = string_field(j, "slice_id");
  m.model_id = string_field(j, "model_id");
  m.transform_id = string_field(j, "transform_id");
  m.metric_id = string_field(j, "metric_id");
  const Json& v = field(j, "value");
  if (!v.is_null()) m.value = v.get<double>();
  m.n = field(j, "n").get<std::uint64_t>();
  m.computed_at = timestamp_field(j, "computed_at");
  return m;
}

std::string dump(const Json& json) { return json.dump(2); }

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SerializationError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace sliceval
