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

#include "sliceval/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

// Slack for the decline comparison so an exact 0.05 drop is not lost to rounding.
constexpr double kFlagEpsilon = 1e-12;

const MetricRecord* find_record(std::span<const MetricRecord> records, const std::string& slice_id,
                                const std::string& model, const std::string& transform,
                                const std::string& metric) {
  const MetricRecord* found = nullptr;
  for (const auto& r : records) {
    if (r.slice_id == slice_id && r.model_id == model && r.transform_id == transform && r.metric_id == metric) {
      // the newest wins when a caller passes history
      if (!found || found->computed_at <= r.computed_at) found = &r;
    }
  }
  return found;
}

Json opt_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> number_or_null(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw SerializationError(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

const Json& need(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw SerializationError(std::string("missing field '") + key + "'");
  return *it;
}

std::string text(const Json& j, const char* key) {
  const Json& v = need(j, key);
  if (!v.is_string()) throw SerializationError(std::string("field '") + key + "' must be text");
  return v.get<std::string>();
}

std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string md_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    if (c == '|' || c == '\\' || c == '*' || c == '_' || c == '`') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

std::string fmt(const std::optional<double>& v) { return v ? format_number(*v) : std::string("n/a"); }

std::string test_text(const BehavioralTest& t) {
  return t.metric_id + " " + std::string(to_string(t.comparator)) + " " + format_number(t.threshold);
}

std::string sparkline_svg(const MetricSeries& s) {
  constexpr double kW = 120, kH = 28, kPad = 3;
  std::vector<double> ys;
  for (const auto& p : s.points) {
    if (p.value) ys.push_back(*p.value);
  }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\" role=\"img\">";
  if (!ys.empty()) {
    double lo = *std::min_element(ys.begin(), ys.end());
    double hi = *std::max_element(ys.begin(), ys.end());
    if (hi - lo < 1e-9) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double span_x = s.points.size() > 1 ? static_cast<double>(s.points.size() - 1) : 1.0;
    auto px = [&](std::size_t x) { return kPad + (kW - 2 * kPad) * static_cast<double>(x) / span_x; };
    auto py = [&](double y) { return kPad + (kH - 2 * kPad) * (hi - y) / (hi - lo); };
    const char* stroke = s.flag == SeriesFlag::none ? "#455a64" : "#c62828";
    std::string run;
    auto flush = [&] {
      if (!run.empty()) svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"" << run << "\"/>";
      run.clear();
    };
    for (const auto& p : s.points) {
      if (!p.value) {
        flush();
        continue;
      }
      std::ostringstream pt;
      pt.precision(4);
      pt << std::fixed << px(p.x) << ',' << py(*p.value);
      run += (run.empty() ? "" : " ") + pt.str();
      svg << "<circle cx=\"" << pt.str().substr(0, pt.str().find(',')) << "\" cy=\""
          << pt.str().substr(pt.str().find(',') + 1) << "\" r=\"1.8\" fill=\"" << stroke << "\"/>";
    }
    flush();
  }
  svg << "</svg>";
  return svg.str();
}

std::string sparkline_text(const MetricSeries& s) {
  static const char* kBlocks[] = {"▁", "▂", "▃", "▄", "▅", "▆", "▇", "█"};
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& p : s.points) {
    if (p.value) {
      lo = std::min(lo, *p.value);
      hi = std::max(hi, *p.value);
    }
  }
  std::string out;
  for (const auto& p : s.points) {
    if (!p.value) {
      out += ' ';
      continue;
    }
    const double t = hi > lo ? (*p.value - lo) / (hi - lo) : 0.5;
    out += kBlocks[std::clamp(static_cast<int>(std::lround(t * 7)), 0, 7)];
  }
  return out;
}

std::string_view flag_symbol(SeriesFlag f) {
  switch (f) {
    case SeriesFlag::downward:
      return "↓";
    case SeriesFlag::high_variance:
      return "↕";
    default:
      return "";
  }
}

Json points_json(const std::vector<SeriesPoint>& points) {
  Json out = Json::array();
  for (const auto& p : points) {
    Json pj;
    pj["x"] = p.x;
    pj["model_id"] = p.model_id;
    pj["value"] = opt_number(p.value);
    pj["n"] = p.n;
    out.push_back(std::move(pj));
  }
  return out;
}

Json fit_json(const std::optional<LinearFit>& fit) {
  if (!fit) return nullptr;
  Json fj;
  fj["slope"] = fit->slope;
  fj["intercept"] = fit->intercept;
  fj["residual_sd"] = fit->residual_sd;
  fj["points"] = fit->points;
  return fj;
}

}  // namespace

std::optional<LinearFit> fit_series(std::span<const SeriesPoint> points) {
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : points) {
    if (p.value) xy.emplace_back(static_cast<double>(p.x), *p.value);
  }
  const std::size_t k = xy.size();
  if (k < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  LinearFit fit;
  fit.points = k;
  fit.slope = sxx > 0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  if (k >= 3) {
    double sse = 0;
    for (const auto& [x, y] : xy) {
      const double r = y - (fit.intercept + fit.slope * x);
      sse += r * r;
    }
    fit.residual_sd = std::sqrt(sse / static_cast<double>(k - 2));
  }
  return fit;
}

std::string_view to_string(SeriesFlag flag) {
  switch (flag) {
    case SeriesFlag::downward:
      return "downward";
    case SeriesFlag::high_variance:
      return "high_variance";
    default:
      return "none";
  }
}

std::optional<SeriesFlag> parse_series_flag(std::string_view text) {
  if (text == "none") return SeriesFlag::none;
  if (text == "downward") return SeriesFlag::downward;
  if (text == "high_variance") return SeriesFlag::high_variance;
  return std::nullopt;
}

SeriesFlag flag_series(const MetricSeries& series, const FlagConfig& config) {
  if (!series.fit) return SeriesFlag::none;
  std::size_t first = 0, last = 0;
  bool any = false;
  for (const auto& p : series.points) {
    if (!p.value) continue;
    if (!any) first = p.x;
    last = p.x;
    any = true;
  }
  const double decline = -series.fit->slope * static_cast<double>(last - first);
  if (series.fit->slope < 0 && decline >= config.decline_threshold - kFlagEpsilon) return SeriesFlag::downward;
  if (series.fit->residual_sd >= config.variance_threshold) return SeriesFlag::high_variance;
  return SeriesFlag::none;
}

MetricSeries build_series(const std::string& slice_id, const std::string& metric_id,
                          const std::string& transform_id, std::span<const std::string> model_order,
                          std::span<const MetricRecord> records, const FlagConfig& config) {
  MetricSeries s;
  s.slice_id = slice_id;
  s.metric_id = metric_id;
  s.transform_id = transform_id;
  for (std::size_t i = 0; i < model_order.size(); ++i) {
    SeriesPoint p;
    p.x = i;
    p.model_id = model_order[i];
    if (const auto* r = find_record(records, slice_id, model_order[i], transform_id, metric_id)) {
      p.value = r->value;
      p.n = r->n;
    }
    s.points.push_back(std::move(p));
  }
  s.fit = fit_series(s.points);
  s.flag = flag_series(s, config);
  return s;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::indeterminate_fail:
      return "indeterminate_fail";
    default:
      return "not_evaluated";
  }
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  for (const auto v : {Verdict::pass, Verdict::fail, Verdict::indeterminate_fail, Verdict::not_evaluated}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

TestResult evaluate_test(const BehavioralTest& test, std::span<const std::string> model_order,
                         std::span<const MetricRecord> records) {
  TestResult result;
  result.test_id = test.test_id;
  const std::string transform = test.effective_transform();
  for (const auto& model : model_order) {
    ModelVerdict v;
    v.model_id = model;
    if (const auto* r = find_record(records, test.slice_id, model, transform, test.metric_id)) {
      v.n = r->n;
      v.value = r->value;
      if (r->n == 0 || !r->value) {
        v.verdict = Verdict::indeterminate_fail;
      } else {
        v.verdict = compare(*r->value, test.comparator, test.threshold) ? Verdict::pass : Verdict::fail;
      }
    }
    result.verdicts.push_back(std::move(v));
  }
  result.latest_model_failed = !result.verdicts.empty() && is_failure(result.verdicts.back().verdict);
  return result;
}

void check_test_references(const BehavioralTest& test, std::span<const Slice> slices,
                           std::span<const std::string> metric_ids) {
  const bool slice_ok = std::any_of(slices.begin(), slices.end(),
                                    [&](const Slice& s) { return s.slice_id == test.slice_id; });
  if (!slice_ok) throw ConfigError("test '" + test.test_id + "' references unknown slice '" + test.slice_id + "'");
  if (std::find(metric_ids.begin(), metric_ids.end(), test.metric_id) == metric_ids.end()) {
    throw ConfigError("test '" + test.test_id + "' references unknown metric '" + test.metric_id + "'");
  }
}

ReportDocument build_report(const Report& report, std::span<const Slice> slices,
                            std::span<const std::string> model_order,
                            std::span<const MetricRecord> records, Timestamp generated_at,
                            const FlagConfig& config) {
  ReportDocument doc;
  doc.report_id = report.report_id;
  doc.name = report.name;
  doc.generated_at = generated_at;
  doc.models.assign(model_order.begin(), model_order.end());
  for (const auto& e : report.entries) {
    ReportEntryDocument d;
    d.slice_id = e.slice_id;
    for (const auto& s : slices) {
      if (s.slice_id == e.slice_id) {
        d.slice_name = s.name;
        d.predicate = print_predicate(s.predicate);
      }
    }
    d.series = build_series(e.slice_id, e.metric_id, e.transform_id, model_order, records, config);
    if (e.test) {
      d.test = e.test;
      d.result = evaluate_test(*e.test, model_order, records);
      if (d.result->latest_model_failed) ++doc.failures_latest_count;
    }
    doc.entries.push_back(std::move(d));
  }
  return doc;
}

Json to_json(const MetricSeries& series) {
  Json j;
  j["slice_id"] = series.slice_id;
  j["metric_id"] = series.metric_id;
  j["transform_id"] = series.transform_id;
  j["points"] = points_json(series.points);
  j["fit"] = fit_json(series.fit);
  j["flag"] = std::string(to_string(series.flag));
  return j;
}

Json to_json(const TestResult& result) {
  Json rj;
  rj["test_id"] = result.test_id;
  rj["latest_model_failed"] = result.latest_model_failed;
  Json verdicts = Json::array();
  for (const auto& v : result.verdicts) {
    Json vj;
    vj["model_id"] = v.model_id;
    vj["value"] = opt_number(v.value);
    vj["n"] = v.n;
    vj["verdict"] = std::string(to_string(v.verdict));
    verdicts.push_back(std::move(vj));
  }
  rj["verdicts"] = std::move(verdicts);
  return rj;
}

Json to_json(const ReportDocument& doc) {
  Json j;
  j["version"] = kSchemaVersion;
  j["report_id"] = doc.report_id;
  j["name"] = doc.name;
  j["generated_at"] = format_iso8601(doc.generated_at);
  j["models"] = doc.models;
  j["failures_latest_count"] = doc.failures_latest_count;
  Json entries = Json::array();
  for (const auto& e : doc.entries) {
    Json ej;
    ej["slice_id"] = e.slice_id;
    ej["slice_name"] = e.slice_name;
    ej["predicate"] = e.predicate;
    ej["metric_id"] = e.series.metric_id;
    ej["transform_id"] = e.series.transform_id;
    ej["points"] = points_json(e.series.points);
    ej["fit"] = fit_json(e.series.fit);
    ej["flag"] = std::string(to_string(e.series.flag));
    ej["test"] = e.test ? to_json(*e.test) : Json(nullptr);
    ej["result"] = e.result ? to_json(*e.result) : Json(nullptr);
    entries.push_back(std::move(ej));
  }
  j["entries"] = std::move(entries);
  return j;
}

ReportDocument report_document_from_json(const Json& j) {
  if (!j.is_object()) throw SerializationError("expected a JSON object");
  const Json& ver = need(j, "version");
  if (!ver.is_number_integer()) throw SerializationError("missing integer 'version' field");
  if (ver.get<int>() != kSchemaVersion) throw UnknownVersionError(ver.get<int>());
  try {
    ReportDocument doc;
    doc.report_id = text(j, "report_id");
    doc.name = text(j, "name");
    const auto ts = parse_iso8601(text(j, "generated_at"));
    if (!ts) throw SerializationError("'generated_at' is not ISO-8601");
    doc.generated_at = *ts;
    doc.models = need(j, "models").get<std::vector<std::string>>();
    doc.failures_latest_count = need(j, "failures_latest_count").get<std::size_t>();
    for (const auto& ej : need(j, "entries")) {
      ReportEntryDocument e;
      e.slice_id = text(ej, "slice_id");
      e.slice_name = text(ej, "slice_name");
      e.predicate = text(ej, "predicate");
      e.series.slice_id = e.slice_id;
      e.series.metric_id = text(ej, "metric_id");
      e.series.transform_id = text(ej, "transform_id");
      for (const auto& pj : need(ej, "points")) {
        SeriesPoint p;
        p.x = need(pj, "x").get<std::size_t>();
        p.model_id = text(pj, "model_id");
        p.value = number_or_null(pj, "value");
        p.n = need(pj, "n").get<std::uint64_t>();
        e.series.points.push_back(std::move(p));
      }
      if (const Json& fj = need(ej, "fit"); !fj.is_null()) {
        LinearFit f;
        f.slope = need(fj, "slope").get<double>();
        f.intercept = need(fj, "intercept").get<double>();
        f.residual_sd = need(fj, "residual_sd").get<double>();
        f.points = need(fj, "points").get<std::size_t>();
        e.series.fit = f;
      }
      const auto flag = parse_series_flag(text(ej, "flag"));
      if (!flag) throw SerializationError("unknown flag");
      e.series.flag = *flag;
      if (const Json& tj = need(ej, "test"); !tj.is_null()) e.test = test_from_json(tj);
      if (const Json& rj = need(ej, "result"); !rj.is_null()) {
        TestResult r;
        r.test_id = text(rj, "test_id");
        r.latest_model_failed = need(rj, "latest_model_failed").get<bool>();
        for (const auto& vj : need(rj, "verdicts")) {
          ModelVerdict v;
          v.model_id = text(vj, "model_id");
          v.value = number_or_null(vj, "value");
          v.n = need(vj, "n").get<std::uint64_t>();
          const auto verdict = parse_verdict(text(vj, "verdict"));
          if (!verdict) throw SerializationError("unknown verdict");
          v.verdict = *verdict;
          r.verdicts.push_back(std::move(v));
        }
        e.result = std::move(r);
      }
      doc.entries.push_back(std::move(e));
    }
    return doc;
  } catch (const Json::exception& e) {
    throw SerializationError(std::string("malformed report document: ") + e.what());
  }
}

std::string render_html(const ReportDocument& doc) {
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>"
    << html_escape(doc.name) << "</title>\n"
    << "<style>\n"
       "body{font-family:-apple-system,'Segoe UI',Helvetica,Arial,sans-serif;margin:24px;color:#212121}\n"
       "h1{font-size:20px;margin:0 0 4px}\n"
       ".meta{color:#616161;font-size:12px;margin-bottom:16px}\n"
       ".badge{display:inline-block;padding:2px 8px;border-radius:10px;font-size:12px;font-weight:600}\n"
       ".badge.bad{background:#ffebee;color:#c62828}.badge.ok{background:#e8f5e9;color:#2e7d32}\n"
       "table{border-collapse:collapse;width:100%;font-size:13px}\n"
       "th,td{border:1px solid #e0e0e0;padding:4px 8px;text-align:left;vertical-align:middle}\n"
       "th{background:#fafafa}\n"
       "td.num{text-align:right;font-variant-numeric:tabular-nums}\n"
       "td.fail{background:#ffebee;color:#c62828;font-weight:600}\n"
       "td.pass{color:#2e7d32}\n"
       ".flag{color:#c62828;font-weight:700}\n"
       "code{font-size:12px;color:#455a64}\n"
       "@media print{body{margin:0}.badge{border:1px solid currentColor}}\n"
       "</style>\n</head>\n<body>\n";
  h << "<h1>" << html_escape(doc.name) << "</h1>\n";
  h << "<div class=\"meta\">Report <code>" << html_escape(doc.report_id) << "</code> &middot; generated "
    << format_iso8601(doc.generated_at) << " &middot; " << doc.entries.size() << " entries</div>\n";
  h << "<p><span class=\"badge " << (doc.failures_latest_count ? "bad" : "ok") << "\" data-failures-latest=\""
    << doc.failures_latest_count << "\">" << doc.failures_latest_count << " failing on latest model</span></p>\n";
  h << "<table>\n<thead><tr><th>Slice</th><th>Metric</th><th>Transform</th>";
  for (const auto& m : doc.models) h << "<th>" << html_escape(m) << "</th>";
  h << "<th>Trend</th><th>Test</th></tr></thead>\n<tbody>\n";
  for (const auto& e : doc.entries) {
    h << "<tr><td><strong>" << html_escape(e.slice_name.empty() ? e.slice_id : e.slice_name)
      << "</strong><br><code>" << html_escape(e.predicate) << "</code></td>";
    h << "<td>" << html_escape(e.series.metric_id) << "</td><td>" << html_escape(e.series.transform_id) << "</td>";
    for (std::size_t i = 0; i < e.series.points.size(); ++i) {
      const auto& p = e.series.points[i];
      std::string cls = "num";
      if (e.result && i < e.result->verdicts.size()) {
        const auto v = e.result->verdicts[i].verdict;
        if (is_failure(v)) cls += " fail";
        if (v == Verdict::pass) cls += " pass";
      }
      h << "<td class=\"" << cls << "\" title=\"n=" << p.n << "\">" << fmt(p.value) << "</td>";
    }
    h << "<td>" << sparkline_svg(e.series);
    if (e.series.flag != SeriesFlag::none) {
      h << " <span class=\"flag\" title=\"" << to_string(e.series.flag) << "\">" << flag_symbol(e.series.flag)
        << "</span>";
    }
    if (e.series.fit) {
      h << "<br><code>slope " << format_number(e.series.fit->slope) << ", sd "
        << format_number(e.series.fit->residual_sd) << "</code>";
    }
    h << "</td><td>";
    if (e.test) {
      h << html_escape(test_text(*e.test));
      if (e.result && e.result->latest_model_failed) h << " <span class=\"badge bad\">latest fails</span>";
    }
    h << "</td></tr>\n";
  }
  h << "</tbody>\n</table>\n</body>\n</html>\n";
  return h.str();
}

std::string render_markdown(const ReportDocument& doc) {
  std::ostringstream m;
  m << "# " << md_escape(doc.name) << "\n\n";
  m << "Report `" << doc.report_id << "`, generated " << format_iso8601(doc.generated_at) << ".\n\n";
  m << "Tests failing on the latest model: **" << doc.failures_latest_count << "**\n\n";
  m << "| Slice | Metric | Transform |";
  for (const auto& model : doc.models) m << ' ' << md_escape(model) << " |";
  m << " Trend | Test |\n|---|---|---|";
  for (std::size_t i = 0; i < doc.models.size(); ++i) m << "---:|";
  m << "---|---|\n";
  for (const auto& e : doc.entries) {
    m << "| " << md_escape(e.slice_name.empty() ? e.slice_id : e.slice_name);
    if (!e.predicate.empty()) m << " (" << md_escape(e.predicate) << ")";
    m << " | " << md_escape(e.series.metric_id) << " | " << md_escape(e.series.transform_id) << " |";
    for (std::size_t i = 0; i < e.series.points.size(); ++i) {
      m << ' ' << fmt(e.series.points[i].value);
      if (e.result && i < e.result->verdicts.size() && is_failure(e.result->verdicts[i].verdict)) m << " ✗";
      m << " |";
    }
    m << ' ' << sparkline_text(e.series);
    if (e.series.flag != SeriesFlag::none) m << ' ' << flag_symbol(e.series.flag) << ' ' << to_string(e.series.flag);
    m << " | " << (e.test ? md_escape(test_text(*e.test)) : std::string()) << " |\n";
  }
  return m.str();
}

}  // namespace sliceval
