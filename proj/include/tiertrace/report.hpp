// Copyright 2026 The tiertrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Output artifacts:
//
//   overview.html         one inline-SVG chart per request spec: time on X,
//                         response time on Y, threshold line, and a marker per
//                         over-threshold request linking to its detailed report
//   detailed_<stem>.txt   fixed-layout text report for one snapshot
//
// The overview links by snapshot stem, so both files can be produced by
// separate runs over the same output directory.

#ifndef TIERTRACE_REPORT_HPP_
#define TIERTRACE_REPORT_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "tiertrace/analyzer.hpp"
#include "tiertrace/detailed_session.hpp"
#include "tiertrace/light_session.hpp"
#include "tiertrace/units.hpp"

namespace tiertrace {

inline constexpr std::size_t kRuleWidth = 72;
inline constexpr Nanos kDefaultBucketWidth = kNanosPerSecond;

// ---------------------------------------------------------------------------
// Overview

struct AnomalyMarker {
  RequestRecord request;
  std::optional<std::string> snapshot_stem;  // none: suppressed by cooldown
};

struct SpecOverview {
  std::string label;
  Nanos threshold = kDefaultThreshold;
  DurationSeries series;
  std::vector<AnomalyMarker> anomalies;
};

struct OverviewModel {
  std::vector<SpecOverview> specs;
  Nanos t_min = 0;
  Nanos t_max = 0;
};

// Groups records by spec (in `specs` order; unknown labels are appended with
// the default threshold), marks every request over its threshold and links
// those that triggered a snapshot, matched on (spec, key, ts_end).
inline OverviewModel build_overview_model(std::span<const RequestRecord> records,
                                          std::span<const RequestSpec> specs,
                                          std::span<const SnapshotMeta> metas,
                                          Nanos bucket_width = kDefaultBucketWidth) {
  std::vector<std::string> order;
  std::map<std::string, Nanos> thresholds;
  for (const auto& s : specs) {
    if (thresholds.emplace(s.label, s.threshold).second) order.push_back(s.label);
  }
  std::map<std::string, std::vector<RequestRecord>> grouped;
  for (const auto& r : records) {
    if (!thresholds.count(r.spec_label)) {
      thresholds.emplace(r.spec_label, kDefaultThreshold);
      order.push_back(r.spec_label);
    }
    grouped[r.spec_label].push_back(r);
  }
  std::map<std::tuple<std::string, std::string, Nanos>, std::string> stems;
  for (const auto& m : metas) {
    stems.emplace(std::make_tuple(m.trigger_spec, m.trigger_key, m.trigger_ts_end),
                  m.stem());
  }

  OverviewModel model;
  bool first = true;
  for (const auto& label : order) {
    auto it = grouped.find(label);
    if (it == grouped.end()) continue;
    SpecOverview so;
    so.label = label;
    so.threshold = thresholds[label];
    so.series = bucketize(it->second, bucket_width);
    so.series.spec_label = label;
    for (const auto& r : it->second) {
      if (r.duration <= so.threshold) continue;
      AnomalyMarker m{r, std::nullopt};
      if (auto s = stems.find({r.spec_label, r.key, r.ts_end}); s != stems.end()) {
        m.snapshot_stem = s->second;
      }
      so.anomalies.push_back(std::move(m));
    }
    const Nanos lo = so.series.buckets.front().start;
    const Nanos hi = so.series.buckets.back().start + bucket_width;
    model.t_min = first ? lo : std::min(model.t_min, lo);
    model.t_max = first ? hi : std::max(model.t_max, hi);
    first = false;
    model.specs.push_back(std::move(so));
  }
  return model;
}

namespace detail {

inline std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Linear chart geometry shared by the renderer and its tests.
struct ChartGeometry {
  static constexpr double kWidth = 900, kHeight = 320;
  static constexpr double kLeft = 80, kRight = 20, kTop = 20, kBottom = 40;

  Nanos t_min = 0, t_max = 0;
  Nanos y_max = 1;

  static ChartGeometry for_spec(const OverviewModel& m, const SpecOverview& s) {
    Nanos longest = 0;
    for (const auto& b : s.series.buckets) longest = std::max(longest, b.max_duration);
    ChartGeometry g;
    g.t_min = m.t_min;
    g.t_max = m.t_max;
    // 1.25 x max(longest, threshold), computed as x + x/4.
    const Nanos top = std::max(longest, s.threshold);
    g.y_max = std::max<Nanos>(top + top / 4, 1);
    return g;
  }

  double x(Nanos ts) const {
    const double w = kWidth - kLeft - kRight;
    if (t_max <= t_min) return kLeft + w / 2;
    return kLeft + w * static_cast<double>(ts - t_min) /
                       static_cast<double>(t_max - t_min);
  }
  // Larger durations map to smaller y (up is slower).
  double y(Nanos duration) const {
    const double h = kHeight - kTop - kBottom;
    return kTop + h * (1.0 - static_cast<double>(duration) / static_cast<double>(y_max));
  }
};

inline std::string render_overview_html(const OverviewModel& model) {
  using G = ChartGeometry;
  std::ostringstream o;
  o << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
    << "<title>Request latency overview</title>\n<style>\n"
    << "body{font-family:sans-serif;margin:24px;color:#222}\n"
    << "svg{border:1px solid #ccc;background:#fff}\n"
    << ".axis{stroke:#444;stroke-width:1}\n"
    << ".grid{stroke:#eee;stroke-width:1}\n"
    << ".series{fill:none;stroke:#2a6fdb;stroke-width:1.5}\n"
    << ".threshold{stroke:#d33;stroke-width:1;stroke-dasharray:6 4}\n"
    << ".anomaly{fill:#d33;stroke:#700;stroke-width:1}\n"
    << ".suppressed{fill:#f5a623;stroke:#a60;stroke-width:1}\n"
    << "text{font-size:11px;fill:#444}\n"
    << "</style>\n</head>\n<body>\n<h1>Request latency overview</h1>\n";
  for (const auto& s : model.specs) {
    const G g = G::for_spec(model, s);
    std::size_t total = 0;
    for (const auto& b : s.series.buckets) total += b.count;
    std::size_t linked = 0;
    for (const auto& a : s.anomalies) linked += a.snapshot_stem ? 1 : 0;
    o << "<h2>" << detail::html_escape(s.label) << "</h2>\n"
      << "<p>" << total << " requests, threshold " << format_duration(s.threshold)
      << ", " << s.anomalies.size() << " over threshold, " << linked
      << " with detailed report</p>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << G::kWidth
      << "\" height=\"" << G::kHeight << "\" viewBox=\"0 0 " << G::kWidth << ' '
      << G::kHeight << "\">\n";
    const double x0 = G::kLeft, x1 = G::kWidth - G::kRight;
    const double y0 = G::kHeight - G::kBottom, y1 = G::kTop;
    for (int i = 1; i <= 4; ++i) {
      const Nanos d = g.y_max / 4 * i;
      const std::string yy = detail::fixed2(g.y(d));
      o << "<line class=\"grid\" x1=\"" << detail::fixed2(x0) << "\" y1=\"" << yy
        << "\" x2=\"" << detail::fixed2(x1) << "\" y2=\"" << yy << "\"/>\n"
        << "<text x=\"" << detail::fixed2(x0 - 6) << "\" y=\"" << yy
        << "\" text-anchor=\"end\">" << format_duration(d) << "</text>\n";
    }
    o << "<line class=\"axis\" x1=\"" << detail::fixed2(x0) << "\" y1=\""
      << detail::fixed2(y0) << "\" x2=\"" << detail::fixed2(x1) << "\" y2=\""
      << detail::fixed2(y0) << "\"/>\n"
      << "<line class=\"axis\" x1=\"" << detail::fixed2(x0) << "\" y1=\""
      << detail::fixed2(y0) << "\" x2=\"" << detail::fixed2(x0) << "\" y2=\""
      << detail::fixed2(y1) << "\"/>\n"
      << "<text x=\"" << detail::fixed2(x0) << "\" y=\"" << detail::fixed2(y0 + 16)
      << "\">" << format_duration(g.t_min) << "</text>\n"
      << "<text x=\"" << detail::fixed2(x1) << "\" y=\"" << detail::fixed2(y0 + 16)
      << "\" text-anchor=\"end\">" << format_duration(g.t_max) << "</text>\n"
      << "<text x=\"" << detail::fixed2((x0 + x1) / 2) << "\" y=\""
      << detail::fixed2(y0 + 30) << "\" text-anchor=\"middle\">time</text>\n"
      << "<text x=\"14\" y=\"" << detail::fixed2((y0 + y1) / 2)
      << "\" transform=\"rotate(-90 14 " << detail::fixed2((y0 + y1) / 2)
      << ")\" text-anchor=\"middle\">response time</text>\n";

    const std::string ty = detail::fixed2(g.y(s.threshold));
    o << "<line class=\"threshold\" x1=\"" << detail::fixed2(x0) << "\" y1=\"" << ty
      << "\" x2=\"" << detail::fixed2(x1) << "\" y2=\"" << ty << "\"/>\n";

    o << "<polyline class=\"series\" points=\"";
    bool first = true;
    for (const auto& b : s.series.buckets) {
      const Nanos mid = std::min(b.start + s.series.bucket_width / 2, g.t_max);
      o << (first ? "" : " ") << detail::fixed2(g.x(mid)) << ','
        << detail::fixed2(g.y(b.max_duration));
      first = false;
    }
    o << "\"/>\n";

    for (const auto& a : s.anomalies) {
      const auto& r = a.request;
      const std::string cx = detail::fixed2(g.x(r.ts_end));
      const std::string cy = detail::fixed2(g.y(r.duration));
      const std::string tip = detail::html_escape(
          s.label + " " + r.key + ": " + format_duration(r.duration));
      if (a.snapshot_stem) {
        o << "<a href=\"detailed_" << detail::html_escape(*a.snapshot_stem)
          << ".txt\"><circle class=\"anomaly\" cx=\"" << cx << "\" cy=\"" << cy
          << "\" r=\"5\"><title>" << tip << "</title></circle></a>\n";
      } else {
        o << "<circle class=\"suppressed\" cx=\"" << cx << "\" cy=\"" << cy
          << "\" r=\"4\"><title>" << tip << " (suppressed)</title></circle>\n";
      }
    }
    o << "</svg>\n";
  }
  if (model.specs.empty()) o << "<p>No requests.</p>\n";
  o << "</body>\n</html>\n";
  return o.str();
}

namespace detail {

inline void write_file(const std::filesystem::path& out, const std::string& text) {
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(out, "cannot open for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError(out, "write failed");
}

}  // namespace detail

inline void render_overview(const OverviewModel& model,
                            const std::filesystem::path& out) {
  detail::write_file(out, render_overview_html(model));
}

// ---------------------------------------------------------------------------
// Detailed text

namespace detail {

inline std::string pad_right(std::string s, std::size_t w) {
  // Width in code points so "µs" lines up.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  if (cps < w) s.append(w - cps, ' ');
  return s;
}

inline std::string percent(double share) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%5.1f%%", share * 100.0);
  return buf;
}

inline std::string render_value(std::uint64_t v, Unit u) {
  switch (u) {
    case Unit::kNanos: return format_duration(v);
    case Unit::kBytes: return std::to_string(v) + " B";
    case Unit::kCount: break;
  }
  return std::to_string(v);
}

inline void section_rule(std::ostringstream& o, char c) {
  o << std::string(kRuleWidth, c) << '\n';
}

inline void render_top(std::ostringstream& o, const TopNSection& s) {
  o << '\n' << s.title << '\n';
  o << std::string(s.title.size(), '-') << '\n';
  if (!s.has_data) {
    o << "  no data\n";
    return;
  }
  if (s.rows.empty()) {
    o << "  no completed entries\n";
    return;
  }
  o << "  " << pad_right("#", 4) << pad_right("value", 12) << pad_right("share", 8)
    << "label\n";
  std::size_t i = 1;
  for (const auto& r : s.rows) {
    std::string label = r.label;
    if (!r.detail.empty()) label += " " + r.detail;
    if (r.truncated) label += " [truncated]";
    o << "  " << pad_right(std::to_string(i++), 4)
      << pad_right(render_value(r.value, s.unit), 12) << pad_right(percent(r.share), 8)
      << label << '\n';
  }
  o << "  total " << render_value(s.total, s.unit) << '\n';
}

inline void render_histogram(std::ostringstream& o, const LatencyHistogram& h) {
  o << '\n' << h.title << '\n' << std::string(h.title.size(), '-') << '\n';
  if (!h.has_data) {
    o << "  no data\n";
    return;
  }
  if (h.total == 0) {
    o << "  no completed entries\n";
    return;
  }
  o << "  requests " << h.total << ", min " << format_duration(h.min) << ", max "
    << format_duration(h.max) << '\n';
  std::uint64_t peak = 0;
  for (auto c : h.counts) peak = std::max(peak, c);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] == 0) continue;
    std::string range;
    if (i == 0) {
      range = "< " + format_duration(h.edges.front());
    } else if (i == h.edges.size()) {
      range = ">= " + format_duration(h.edges.back());
    } else {
      range = format_duration(h.edges[i - 1]) + " .. " + format_duration(h.edges[i]);
    }
    const std::size_t bar =
        static_cast<std::size_t>((h.counts[i] * 30 + peak - 1) / peak);
    o << "  " << pad_right(range, 22) << pad_right(std::to_string(h.counts[i]), 8)
      << std::string(bar, '#') << '\n';
  }
}

}  // namespace detail

inline std::string render_detailed_string(const DetailedReport& r) {
  std::ostringstream o;
  detail::section_rule(o, '=');
  o << "DETAILED REPORT  " << r.snapshot_name << '\n';
  detail::section_rule(o, '=');
  auto row = [&](const char* k, const std::string& v) {
    o << detail::pad_right(k, 18) << ": " << v << '\n';
  };
  if (r.meta) {
    const auto& m = *r.meta;
    row("Trigger request", m.trigger_spec + " key=" + m.trigger_key + " duration=" +
                               format_duration(m.trigger_duration));
    row("Detection rule", std::string(to_string(m.rule)));
    row("Flushed at", format_duration(m.flushed_at));
    row("Suppressed", std::to_string(m.suppressed_triggers) + " triggers");
    row("Dropped fields", std::to_string(m.dropped_fields));
  } else {
    row("Trigger request", "unknown (no meta file)");
    row("Detection rule", "unknown");
    row("Flushed at", "unknown");
    row("Suppressed", "unknown");
    row("Dropped fields", "unknown");
  }
  row("Events", std::to_string(r.event_count));
  if (r.event_count > 0) {
    row("Window", format_duration(r.ts_last - r.ts_first) + " (" +
                      format_duration(r.ts_first) + " .. " +
                      format_duration(r.ts_last) + ")");
  } else {
    row("Window", "empty");
  }
  if (r.event_count >= 2 && r.ts_last > r.ts_first) {
    row("Observed rate",
        observed_event_rate(r.event_count, r.ts_first, r.ts_last).to_decimal(1) +
            " events/s");
  } else {
    row("Observed rate", "undefined");
  }

  o << '\n';
  detail::section_rule(o, '-');
  o << "USER SPACE\n";
  detail::section_rule(o, '-');
  for (const auto& s : r.user_sections) detail::render_top(o, s);

  o << '\n';
  detail::section_rule(o, '-');
  o << "KERNEL SPACE\n";
  detail::section_rule(o, '-');
  detail::render_histogram(o, r.io);
  detail::render_top(o, r.syscalls);
  detail::render_top(o, r.irqs);

  o << '\n';
  detail::section_rule(o, '-');
  o << "DIAGNOSTICS\n";
  detail::section_rule(o, '-');
  if (r.diagnostics.counters.empty()) {
    o << "  none\n";
  } else {
    for (const auto& [k, v] : r.diagnostics.counters) {
      o << "  " << detail::pad_right(k, 34) << v << '\n';
    }
  }
  detail::section_rule(o, '=');
  return o.str();
}

inline void render_detailed_text(const DetailedReport& r,
                                 const std::filesystem::path& out) {
  detail::write_file(out, render_detailed_string(r));
}

}  // namespace tiertrace

#endif  // TIERTRACE_REPORT_HPP_
