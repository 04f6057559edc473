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

// Post-mortem analysis of one snapshot. Every function here is pure over a
// parsed TraceStream; sorts are total (value desc, then label asc) so that
// identical input always yields identical reports.
//
// Kernel vocabulary follows LTTng tracepoint naming:
//   syscall_entry_<x> / syscall_exit_<x>        per tid, non-nesting
//   block_rq_issue / block_rq_complete          correlated by field `rq`
//   irq_handler_entry / irq_handler_exit        per tid, field `irq`

#ifndef TIERTRACE_ANALYZER_HPP_
#define TIERTRACE_ANALYZER_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tiertrace/detailed_session.hpp"
#include "tiertrace/event_model.hpp"
#include "tiertrace/light_session.hpp"
#include "tiertrace/units.hpp"

namespace tiertrace {

inline constexpr std::size_t kDefaultTopN = 10;
inline constexpr std::size_t kStatementLabelLimit = 120;

enum class Unit { kNanos, kCount, kBytes };

struct TopNRow {
  std::string label;   // sort key
  std::uint64_t value = 0;
  double share = 0;    // of the section total over all items, not just rows
  std::string detail;  // rendered after the label, e.g. "(2 calls)"
  bool truncated = false;

  friend bool operator==(const TopNRow&, const TopNRow&) = default;
};

struct TopNSection {
  std::string title;
  Unit unit = Unit::kNanos;
  std::size_t n = kDefaultTopN;
  std::vector<TopNRow> rows;
  std::uint64_t total = 0;
  // False when none of the section's input events occur in the snapshot.
  bool has_data = true;
};

struct LatencyHistogram {
  std::string title = "Top I/O Request Distribution";
  // Bucket 0 is [0, edges[0]); bucket i is [edges[i-1], edges[i]); the last
  // bucket is open-ended.
  std::vector<Nanos> edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  Nanos min = 0;
  Nanos max = 0;
  bool has_data = true;

  std::size_t bucket_of(Nanos latency) const {
    return static_cast<std::size_t>(
        std::upper_bound(edges.begin(), edges.end(), latency) - edges.begin());
  }
};

struct CallRecord {
  std::string function;
  std::uint32_t tid = 0;
  Nanos ts_entry = 0;
  Nanos ts_exit = 0;
  Nanos duration = 0;  // inclusive
  std::size_t depth = 0;
  bool truncated = false;  // still open at the snapshot's end

  friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

// Counters for imperfect input. Expected at snapshot edges.
struct Diagnostics {
  std::map<std::string, std::uint64_t> counters;

  void add(const std::string& name, std::uint64_t v) {
    if (v > 0) counters[name] += v;
  }
};

namespace detail {

// Sorts value desc / label asc, fills shares and keeps the top n.
inline void finalize_rows(TopNSection& section, std::vector<TopNRow> rows) {
  std::uint64_t total = 0;
  for (const auto& r : rows) total += r.value;
  section.total = total;
  std::sort(rows.begin(), rows.end(), [](const TopNRow& a, const TopNRow& b) {
    return a.value != b.value ? a.value > b.value : a.label < b.label;
  });
  if (rows.size() > section.n) rows.resize(section.n);
  for (auto& r : rows) {
    r.share = total == 0 ? 0.0
                         : static_cast<double>(r.value) / static_cast<double>(total);
  }
  section.rows = std::move(rows);
}

inline bool has_event(const TraceStream& s, std::string_view name) {
  return std::any_of(s.events.begin(), s.events.end(),
                     [&](const Event& e) { return e.name == name; });
}

inline std::string truncate_utf8(std::string_view s, std::size_t limit) {
  if (s.size() <= limit) return std::string(s);
  std::size_t cut = limit;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

inline Nanos last_ts(const TraceStream& s) {
  Nanos t = 0;
  for (const auto& e : s.events) t = std::max(t, e.ts);
  return t;
}

}  // namespace detail

// The n longest completed requests of `spec`, labeled by correlation key.
inline TopNSection top_requests(const TraceStream& snapshot,
                                const RequestSpec& spec, std::size_t n,
                                Diagnostics* diag = nullptr) {
  TopNSection section;
  section.title = "Top " + spec.label + " Requests";
  section.n = std::max<std::size_t>(n, 1);
  section.has_data = detail::has_event(snapshot, spec.start_name) ||
                     detail::has_event(snapshot, spec.end_name);
  MatcherState state;
  std::vector<TopNRow> rows;
  const std::span<const RequestSpec> specs(&spec, 1);
  for (const auto& e : snapshot.events) {
    for (auto& r : observe(specs, e, state)) {
      rows.push_back(TopNRow{r.key, r.duration, 0, "", false});
    }
  }
  if (diag != nullptr) {
    diag->add(spec.label + ".orphan_ends", state.orphan_ends());
    diag->add(spec.label + ".abandoned_starts", state.abandoned_starts());
    diag->add(spec.label + ".truncated", state.open_requests());
  }
  detail::finalize_rows(section, std::move(rows));
  return section;
}

// Like top_requests, but rows are labeled by the start event's `statement`
// field (cut to 120 bytes on a UTF-8 boundary), falling back to the key.
inline TopNSection top_queries(const TraceStream& snapshot,
                               const RequestSpec& spec, std::size_t n,
                               Diagnostics* diag = nullptr) {
  TopNSection section;
  section.title = "Top DB Queries";
  section.n = std::max<std::size_t>(n, 1);
  section.has_data = detail::has_event(snapshot, spec.start_name) ||
                     detail::has_event(snapshot, spec.end_name);
  // Statements are looked up by the key the matcher reports. FIFO-matched
  // specs have synthesized keys, so they fall back to the key label.
  std::unordered_map<std::string, std::string> statements;
  MatcherState state;
  std::vector<TopNRow> rows;
  const std::span<const RequestSpec> specs(&spec, 1);
  for (const auto& e : snapshot.events) {
    if (e.name == spec.start_name && spec.correlation_key) {
      const FieldValue* k = e.field(*spec.correlation_key);
      const FieldValue* st = e.field("statement");
      if (k != nullptr) {
        if (st != nullptr) {
          statements[k->to_string()] =
              detail::truncate_utf8(st->to_string(), kStatementLabelLimit);
        } else {
          statements.erase(k->to_string());
        }
      }
    }
    for (auto& r : observe(specs, e, state)) {
      auto it = statements.find(r.key);
      std::string label = it != statements.end() ? it->second : r.key;
      rows.push_back(TopNRow{std::move(label), r.duration, 0, "", false});
    }
  }
  if (diag != nullptr) {
    diag->add(spec.label + ".orphan_ends", state.orphan_ends());
    diag->add(spec.label + ".abandoned_starts", state.abandoned_starts());
    diag->add(spec.label + ".truncated", state.open_requests());
  }
  detail::finalize_rows(section, std::move(rows));
  return section;
}

struct FunctionCallResult {
  TopNSection section;
  std::vector<CallRecord> calls;
  std::uint64_t unbalanced = 0;
  std::uint64_t truncated = 0;
};

// Per-tid stack pairing of entry/exit events carrying a `func` field. An exit
// that does not match the top frame is skipped; frames still open at the end
// are closed at the snapshot's last timestamp and flagged.
inline FunctionCallResult top_function_calls(const TraceStream& snapshot,
                                             std::string_view entry_name,
                                             std::string_view exit_name,
                                             std::size_t n) {
  FunctionCallResult out;
  out.section.title = "Top Function Calls";
  out.section.n = std::max<std::size_t>(n, 1);
  out.section.has_data = detail::has_event(snapshot, entry_name) ||
                         detail::has_event(snapshot, exit_name);

  struct Frame {
    std::string func;
    Nanos ts;
  };
  std::map<std::uint32_t, std::vector<Frame>> stacks;
  for (const auto& e : snapshot.events) {
    const bool entry = e.name == entry_name;
    if (!entry && e.name != exit_name) continue;
    const FieldValue* f = e.field("func");
    std::string func = f != nullptr ? f->to_string() : std::string();
    auto& stack = stacks[e.tid];
    if (entry) {
      stack.push_back(Frame{std::move(func), e.ts});
      continue;
    }
    if (stack.empty() || stack.back().func != func) {
      ++out.unbalanced;
      continue;
    }
    const Frame& top = stack.back();
    out.calls.push_back(CallRecord{top.func, e.tid, top.ts, e.ts,
                                   e.ts - top.ts, stack.size() - 1, false});
    stack.pop_back();
  }
  const Nanos end = detail::last_ts(snapshot);
  for (auto& [tid, stack] : stacks) {
    while (!stack.empty()) {
      const Frame& top = stack.back();
      out.calls.push_back(CallRecord{top.func, tid, top.ts, end, end - top.ts,
                                     stack.size() - 1, true});
      ++out.truncated;
      stack.pop_back();
    }
  }

  std::map<std::string, std::pair<Nanos, bool>> totals;
  std::map<std::string, std::uint64_t> counts;
  for (const auto& c : out.calls) {
    auto& t = totals[c.function];
    t.first += c.duration;
    t.second = t.second || c.truncated;
    ++counts[c.function];
  }
  std::vector<TopNRow> rows;
  for (const auto& [func, t] : totals) {
    const auto calls = counts[func];
    rows.push_back(TopNRow{func, t.first, 0,
                           "(" + std::to_string(calls) +
                               (calls == 1 ? " call)" : " calls)"),
                           t.second});
  }
  detail::finalize_rows(out.section, std::move(rows));
  return out;
}

struct HistogramOptions {
  Nanos base = kNanosPerMicro;
  unsigned max_exponent = 30;  // edges base * 2^k for k = 0..max_exponent
};

// Completion latency of block requests, paired by `rq`, over geometric
// buckets [base * 2^k, base * 2^(k+1)).
inline LatencyHistogram io_distribution(const TraceStream& snapshot,
                                        HistogramOptions opts = {},
                                        Diagnostics* diag = nullptr) {
  LatencyHistogram h;
  for (unsigned k = 0; k <= opts.max_exponent; ++k) {
    h.edges.push_back(opts.base << k);
  }
  h.counts.assign(h.edges.size() + 1, 0);
  h.has_data = detail::has_event(snapshot, "block_rq_issue") ||
               detail::has_event(snapshot, "block_rq_complete");

  std::unordered_map<std::string, Nanos> open;
  std::uint64_t unmatched_completes = 0, duplicate_issues = 0;
  for (const auto& e : snapshot.events) {
    const bool issue = e.name == "block_rq_issue";
    if (!issue && e.name != "block_rq_complete") continue;
    const FieldValue* rq = e.field("rq");
    if (rq == nullptr) {
      ++unmatched_completes;
      continue;
    }
    std::string key = rq->to_string();
    if (issue) {
      if (!open.insert_or_assign(std::move(key), e.ts).second) ++duplicate_issues;
      continue;
    }
    auto it = open.find(key);
    if (it == open.end()) {
      ++unmatched_completes;
      continue;
    }
    const Nanos lat = e.ts - it->second;
    open.erase(it);
    ++h.counts[h.bucket_of(lat)];
    h.min = h.total == 0 ? lat : std::min(h.min, lat);
    h.max = std::max(h.max, lat);
    ++h.total;
  }
  if (diag != nullptr) {
    diag->add("io.unmatched_completes", unmatched_completes);
    diag->add("io.duplicate_issues", duplicate_issues);
    diag->add("io.unmatched_issues", open.size());
  }
  return h;
}

struct SyscallResult {
  TopNSection section;
  std::uint64_t unmatched = 0;
  std::uint64_t truncated = 0;
};

// Ranked by total time; the call count goes into each row's detail.
inline SyscallResult syscall_stats(const TraceStream& snapshot, std::size_t n) {
  static constexpr std::string_view kEntry = "syscall_entry_";
  static constexpr std::string_view kExit = "syscall_exit_";
  SyscallResult out;
  out.section.title = "Top System Calls";
  out.section.n = std::max<std::size_t>(n, 1);
  out.section.has_data = false;

  struct OpenCall {
    std::string name;
    Nanos ts;
  };
  std::map<std::uint32_t, OpenCall> open;
  std::map<std::string, std::pair<Nanos, std::uint64_t>> per_name;
  for (const auto& e : snapshot.events) {
    const std::string_view name(e.name);
    if (name.starts_with(kEntry)) {
      out.section.has_data = true;
      auto [it, fresh] =
          open.try_emplace(e.tid, OpenCall{std::string(name.substr(kEntry.size())), e.ts});
      if (!fresh) {
        ++out.unmatched;
        it->second = OpenCall{std::string(name.substr(kEntry.size())), e.ts};
      }
    } else if (name.starts_with(kExit)) {
      out.section.has_data = true;
      const std::string_view call = name.substr(kExit.size());
      auto it = open.find(e.tid);
      if (it == open.end() || it->second.name != call) {
        ++out.unmatched;
        continue;
      }
      auto& agg = per_name[it->second.name];
      agg.first += e.ts - it->second.ts;
      ++agg.second;
      open.erase(it);
    }
  }
  out.truncated = open.size();
  std::vector<TopNRow> rows;
  for (const auto& [name, agg] : per_name) {
    rows.push_back(TopNRow{name, agg.first, 0,
                           "(" + std::to_string(agg.second) +
                               (agg.second == 1 ? " call)" : " calls)"),
                           false});
  }
  detail::finalize_rows(out.section, std::move(rows));
  return out;
}

struct IrqResult {
  TopNSection section;
  std::map<std::string, Nanos> total_duration;  // per irq line
  std::uint64_t unmatched = 0;
};

// Every irq line, ranked by handler count; total handler time in the detail.
inline IrqResult irq_stats(const TraceStream& snapshot) {
  IrqResult out;
  out.section.title = "Interrupt Statistics";
  out.section.unit = Unit::kCount;
  out.section.n = SIZE_MAX;
  out.section.has_data = false;

  struct OpenIrq {
    std::string irq;
    Nanos ts;
  };
  std::map<std::uint32_t, OpenIrq> open;
  std::map<std::string, std::uint64_t> counts;
  for (const auto& e : snapshot.events) {
    const bool entry = e.name == "irq_handler_entry";
    if (!entry && e.name != "irq_handler_exit") continue;
    out.section.has_data = true;
    const FieldValue* f = e.field("irq");
    if (f == nullptr) {
      ++out.unmatched;
      continue;
    }
    std::string irq = f->to_string();
    if (entry) {
      if (!open.insert_or_assign(e.tid, OpenIrq{std::move(irq), e.ts}).second) {
        ++out.unmatched;
      }
      continue;
    }
    auto it = open.find(e.tid);
    if (it == open.end() || it->second.irq != irq) {
      ++out.unmatched;
      continue;
    }
    ++counts[irq];
    out.total_duration[irq] += e.ts - it->second.ts;
    open.erase(it);
  }
  out.unmatched += open.size();
  std::vector<TopNRow> rows;
  for (const auto& [irq, count] : counts) {
    rows.push_back(TopNRow{"irq " + irq, count, 0,
                           "(total " + format_duration(out.total_duration[irq]) + ")",
                           false});
  }
  detail::finalize_rows(out.section, std::move(rows));
  return out;
}

struct AnalyzerConfig {
  // One "Top <label> Requests" section per entry.
  std::vector<RequestSpec> request_specs;
  std::optional<RequestSpec> query_spec;
  std::string func_entry = "func_entry";
  std::string func_exit = "func_exit";
  std::size_t top_n = kDefaultTopN;
  HistogramOptions histogram;
};

struct DetailedReport {
  std::string snapshot_name;
  std::optional<SnapshotMeta> meta;
  std::uint64_t event_count = 0;
  Nanos ts_first = 0;
  Nanos ts_last = 0;

  std::vector<TopNSection> user_sections;  // requests..., calls, queries
  LatencyHistogram io;
  TopNSection syscalls;
  TopNSection irqs;
  Diagnostics diagnostics;
};

inline DetailedReport analyze_stream(const TraceStream& snapshot,
                                     const AnalyzerConfig& config,
                                     std::optional<SnapshotMeta> meta = {}) {
  DetailedReport r;
  r.meta = std::move(meta);
  r.event_count = snapshot.events.size();
  if (!snapshot.events.empty()) {
    r.ts_first = snapshot.events.front().ts;
    r.ts_last = snapshot.events.back().ts;
  }
  for (const auto& spec : config.request_specs) {
    r.user_sections.push_back(
        top_requests(snapshot, spec, config.top_n, &r.diagnostics));
  }
  auto calls = top_function_calls(snapshot, config.func_entry, config.func_exit,
                                   config.top_n);
  r.diagnostics.add("calls.unbalanced", calls.unbalanced);
  r.diagnostics.add("calls.truncated", calls.truncated);
  r.user_sections.push_back(std::move(calls.section));
  if (config.query_spec) {
    r.user_sections.push_back(
        top_queries(snapshot, *config.query_spec, config.top_n, &r.diagnostics));
  } else {
    TopNSection none;
    none.title = "Top DB Queries";
    none.has_data = false;
    r.user_sections.push_back(std::move(none));
  }
  r.io = io_distribution(snapshot, config.histogram, &r.diagnostics);
  auto sys = syscall_stats(snapshot, config.top_n);
  r.diagnostics.add("syscalls.unmatched", sys.unmatched);
  r.diagnostics.add("syscalls.truncated", sys.truncated);
  r.syscalls = std::move(sys.section);
  auto irq = irq_stats(snapshot);
  r.diagnostics.add("irq.unmatched", irq.unmatched);
  r.irqs = std::move(irq.section);
  return r;
}

// Reads the snapshot strictly and its `.meta.json` sibling when present.
inline DetailedReport build_detailed_report(const std::filesystem::path& snapshot_path,
                                            std::optional<SnapshotMeta> meta,
                                            const AnalyzerConfig& config) {
  TraceStream stream = read_snapshot(snapshot_path);
  DetailedReport r = analyze_stream(stream, config, std::move(meta));
  r.snapshot_name = snapshot_path.filename().string();
  return r;
}

}  // namespace tiertrace

#endif  // TIERTRACE_ANALYZER_HPP_
