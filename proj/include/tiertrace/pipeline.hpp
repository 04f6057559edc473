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

// End-to-end run: every event goes into the ring, the light session pairs and
// judges requests, and anomalies trigger a debounced snapshot that is then
// analyzed into a detailed report. The overview is rendered at the end.

#ifndef TIERTRACE_PIPELINE_HPP_
#define TIERTRACE_PIPELINE_HPP_

#include <spawn.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tiertrace/analyzer.hpp"
#include "tiertrace/config.hpp"
#include "tiertrace/detailed_session.hpp"
#include "tiertrace/event_model.hpp"
#include "tiertrace/light_session.hpp"
#include "tiertrace/report.hpp"
#include "tiertrace/units.hpp"

extern char** environ;

namespace tiertrace {

inline constexpr std::string_view kRequestLogName = "requests.jsonl";
inline constexpr std::string_view kOverviewName = "overview.html";

struct RunSummary {
  std::uint64_t events = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t late_events = 0;
  std::uint64_t requests = 0;
  std::uint64_t anomalies = 0;
  std::uint64_t snapshots = 0;
  std::uint64_t suppressed_triggers = 0;
  std::uint64_t flush_failures = 0;
  std::uint64_t hook_failures = 0;
  std::uint64_t orphan_ends = 0;
  std::uint64_t abandoned_starts = 0;
  // Events the light session actually handles (start/end of a spec).
  std::uint64_t light_events = 0;
  std::uint64_t light_ns_total = 0;
  std::uint64_t record_ns_total = 0;
  Nanos duration_sum = 0;
  std::size_t ring_capacity = 0;
  std::size_t ring_footprint_bytes = 0;
  std::optional<Rational> observed_event_rate;
  std::vector<SnapshotMeta> snapshot_metas;
  std::vector<LineDiagnostic> diagnostics;

  double light_ns_per_event() const {
    return light_events == 0 ? 0.0
                             : static_cast<double>(light_ns_total) / light_events;
  }
  double record_ns_per_event() const {
    return events == 0 ? 0.0 : static_cast<double>(record_ns_total) / events;
  }
  Nanos mean_duration() const { return requests == 0 ? 0 : duration_sum / requests; }
};

// Runs `command snapshot_path` and waits for it. Returns the exit status, or
// -1 when it could not be started.
inline int run_hook(const std::string& command, const std::filesystem::path& snapshot) {
  const std::string arg = snapshot.string();
  std::vector<char*> argv{const_cast<char*>(command.c_str()),
                          const_cast<char*>(arg.c_str()), nullptr};
  pid_t pid = 0;
  if (::posix_spawnp(&pid, command.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
    return -1;
  }
  int status = 0;
  if (::waitpid(pid, &status, 0) < 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Pipeline {
 public:
  // `warn` receives non-fatal problems (bad lines, failed hooks).
  Pipeline(PipelineConfig config, std::ostream& warn)
      : config_(std::move(config)),
        warn_(warn),
        ring_(config_.ring_capacity),
        window_(config_.max_skew),
        debouncer_(config_.cooldown),
        histories_(config_.specs.size()) {
    config_.validate();
    std::error_code ec;
    std::filesystem::create_directories(config_.out_dir, ec);
    if (ec) throw IoError(config_.out_dir, ec.message());
    log_path_ = config_.out_dir / kRequestLogName;
    log_.open(log_path_, std::ios::binary | std::ios::trunc);
    if (!log_) throw IoError(log_path_, "cannot open request log");
    for (const auto& s : config_.specs) {
      light_names_.insert(s.start_name);
      light_names_.insert(s.end_name);
    }
    summary_.ring_capacity = config_.ring_capacity;
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  ~Pipeline() {
    // Never leave a worker writing into a ring that is going away.
    if (inflight_.valid()) inflight_.wait();
  }

  // Parses one JSON line. Bad lines are reported and skipped.
  void feed_line(std::string_view line) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    try {
      feed(parse_event_line(line));
    } catch (const Error& e) {
      ++summary_.parse_errors;
      if (summary_.diagnostics.size() < 100) {
        summary_.diagnostics.push_back({line_no_, e.what()});
      }
      warn_ << "warning: line " << line_no_ << ": " << e.what() << '\n';
    }
  }

  void feed(Event e) {
    if (!window_.push(std::move(e), [this](Event&& ev) { process(ev); })) {
      ++summary_.late_events;
    }
  }

  RunSummary finish() {
    window_.finish([this](Event&& ev) { process(ev); });
    complete_inflight();
    log_.flush();
    log_.close();
    if (!log_) throw IoError(log_path_, "write failed");

    summary_.orphan_ends = matcher_.orphan_ends();
    summary_.abandoned_starts = matcher_.abandoned_starts();
    summary_.ring_footprint_bytes = ring_.footprint_bytes();
    if (ring_.size() >= 2) {
      const auto s = ring_.span();
      if (s.ts_last > s.ts_first) summary_.observed_event_rate = observed_event_rate(ring_);
    }

    // Re-read the log rather than keeping every record in memory.
    std::vector<RequestRecord> records;
    {
      std::ifstream in(log_path_, std::ios::binary);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) records.push_back(parse_request_record(line));
      }
    }
    render_overview(build_overview_model(records, config_.specs, summary_.snapshot_metas,
                                         config_.bucket_width),
                    config_.out_dir / kOverviewName);
    return summary_;
  }

  const RingBuffer& ring() const { return ring_; }
  const PipelineConfig& config() const { return config_; }

 private:
  using Clock = std::chrono::steady_clock;

  static std::uint64_t elapsed_ns(Clock::time_point a, Clock::time_point b) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
  }

  void process(const Event& e) {
    ++summary_.events;
    const auto t0 = Clock::now();
    ring_.record(e);
    const auto t1 = Clock::now();
    summary_.record_ns_total += elapsed_ns(t0, t1);

    if ((summary_.events & 0xfff) == 0) poll_inflight();
    if (light_names_.find(e.name) == light_names_.end()) return;

    ++summary_.light_events;
    const auto done = observe(config_.specs, e, matcher_);
    std::vector<Anomaly> anomalies;
    for (const auto& r : done) {
      ++summary_.requests;
      summary_.duration_sum += r.duration;
      log_ << serialize_request_record(r) << '\n';
      std::size_t idx = 0;
      while (config_.specs[idx].label != r.spec_label) ++idx;
      auto a = detect(config_.specs[idx], r, config_.detector, &histories_[idx]);
      if (a) anomalies.push_back(std::move(*a));
    }
    summary_.light_ns_total += elapsed_ns(t1, Clock::now());

    for (const auto& a : anomalies) on_anomaly(a);
  }

  void on_anomaly(const Anomaly& a) {
    ++summary_.anomalies;
    if (!debouncer_.admit(a.detected_at)) {
      ++summary_.suppressed_triggers;
      return;
    }
    complete_inflight();
    try {
      inflight_ = flush_snapshot_async(ring_, a, config_.out_dir, a.detected_at,
                                       debouncer_.take_suppressed());
    } catch (const Error& err) {
      ++summary_.flush_failures;
      warn_ << "warning: snapshot failed: " << err.what() << '\n';
    }
  }

  void poll_inflight() {
    if (inflight_.valid() &&
        inflight_.wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
      complete_inflight();
    }
  }

  void complete_inflight() {
    if (!inflight_.valid()) return;
    SnapshotMeta meta;
    try {
      meta = inflight_.get();
    } catch (const Error& err) {
      ++summary_.flush_failures;
      warn_ << "warning: snapshot failed: " << err.what() << '\n';
      return;
    }
    ++summary_.snapshots;
    summary_.snapshot_metas.push_back(meta);
    try {
      const auto report = build_detailed_report(meta.snapshot_path, meta, config_.analyzer);
      render_detailed_text(report, config_.out_dir / ("detailed_" + meta.stem() + ".txt"));
    } catch (const Error& err) {
      warn_ << "warning: analysis of " << meta.snapshot_path.string()
            << " failed: " << err.what() << '\n';
    }
    if (config_.on_anomaly_exec) {
      const int rc = run_hook(*config_.on_anomaly_exec, meta.snapshot_path);
      if (rc != 0) {
        ++summary_.hook_failures;
        warn_ << "warning: on_anomaly_exec exited with " << rc << '\n';
      }
    }
  }

  PipelineConfig config_;
  std::ostream& warn_;
  RingBuffer ring_;
  ReorderWindow window_;
  FlushDebouncer debouncer_;
  MatcherState matcher_;
  std::vector<DurationHistory> histories_;
  std::unordered_set<std::string> light_names_;
  std::filesystem::path log_path_;
  std::ofstream log_;
  std::future<SnapshotMeta> inflight_;
  std::size_t line_no_ = 0;
  RunSummary summary_;
};

inline RunSummary run_pipeline(const PipelineConfig& config, std::istream& in,
                               std::ostream& warn) {
  Pipeline p(config, warn);
  std::string line;
  while (std::getline(in, line)) p.feed_line(line);
  if (in.bad()) throw IoError("<input>", "read failure");
  return p.finish();
}

// The overhead lines depend on wall-clock measurements; everything else is a
// pure function of the input.
inline void write_summary(const RunSummary& s, std::ostream& out) {
  out << "events:              " << s.events << '\n'
      << "parse errors:        " << s.parse_errors << '\n'
      << "late events:         " << s.late_events << '\n'
      << "requests:            " << s.requests << '\n'
      << "anomalies:           " << s.anomalies << '\n'
      << "snapshots:           " << s.snapshots << '\n'
      << "suppressed triggers: " << s.suppressed_triggers << '\n'
      << "orphan ends:         " << s.orphan_ends << '\n'
      << "abandoned starts:    " << s.abandoned_starts << '\n'
      << "mean duration:       " << format_duration(s.mean_duration()) << '\n'
      << "ring footprint:      " << s.ring_footprint_bytes << " bytes ("
      << s.ring_capacity << " slots)\n";
  if (s.observed_event_rate && s.observed_event_rate->num() > 0) {
    const std::uint64_t rate = s.observed_event_rate->num() / s.observed_event_rate->den();
    out << "event rate:          " << s.observed_event_rate->to_decimal(3) << " /s\n";
    if (rate > 0) {
      out << "window duration:     "
          << window_duration(s.ring_capacity, rate).to_decimal(3) << " s\n";
    }
  }
  const auto light = static_cast<Nanos>(s.light_ns_per_event() + 0.5);
  const auto record = static_cast<Nanos>(s.record_ns_per_event() + 0.5);
  out << "light cost:          " << light << " ns/event\n"
      << "record cost:         " << record << " ns/event\n";
  if (s.mean_duration() > 0) {
    out << "light overhead:      "
        << relative_overhead(light, 1, s.mean_duration()).to_decimal(9) << " per event, "
        << relative_overhead(light, 2, s.mean_duration()).to_decimal(9) << " per request\n";
  }
}

}  // namespace tiertrace

#endif  // TIERTRACE_PIPELINE_HPP_
