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

// The always-on light level: pairs request start/end events into completed
// requests, detects slow requests and buckets durations for the overview.
//
// Only events whose names appear in a RequestSpec are looked at; everything
// else passes through without touching matcher state.

#ifndef TIERTRACE_LIGHT_SESSION_HPP_
#define TIERTRACE_LIGHT_SESSION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tiertrace/error.hpp"
#include "tiertrace/event_model.hpp"
#include "tiertrace/rational.hpp"

namespace tiertrace {

inline constexpr Nanos kDefaultThreshold = kNanosPerSecond;
inline constexpr std::size_t kMaxOpenRequests = 65'536;

struct RequestSpec {
  std::string label;
  std::string start_name;
  std::string end_name;
  // Payload field matching a start to its end. Without one, requests are
  // matched FIFO per (pid, tid).
  std::optional<std::string> correlation_key;
  Nanos threshold = kDefaultThreshold;

  void validate() const {
    if (label.empty()) throw ConfigError("label", "empty request label");
    if (start_name.empty()) throw ConfigError("start", "empty start event name");
    if (end_name.empty()) throw ConfigError("end", "empty end event name");
    if (start_name == end_name) {
      throw ConfigError("end", "start and end event names must differ");
    }
    if (threshold == 0) throw ConfigError("threshold_ns", "must be > 0");
  }
};

struct RequestRecord {
  std::string spec_label;
  std::string key;
  Nanos ts_start = 0;
  Nanos ts_end = 0;
  Nanos duration = 0;
  std::uint32_t pid = 0;
  std::uint32_t tid = 0;

  friend bool operator==(const RequestRecord&, const RequestRecord&) = default;
};

enum class DetectionRule { kThreshold, kStatistical };

inline std::string_view to_string(DetectionRule r) {
  return r == DetectionRule::kThreshold ? "threshold" : "statistical";
}

struct Anomaly {
  RequestRecord request;
  Nanos detected_at = 0;
  DetectionRule rule = DetectionRule::kThreshold;
};

struct DetectorConfig {
  bool enabled = true;
  // mean + k * stddev over the last `window` requests; off by default.
  bool statistical = false;
  double k = 3.0;
  std::size_t window = 100;
};

class MatcherState {
 public:
  std::uint64_t orphan_ends() const noexcept { return orphan_ends_; }
  std::uint64_t abandoned_starts() const noexcept { return abandoned_starts_; }
  // Start events lacking the configured correlation field.
  std::uint64_t missing_keys() const noexcept { return missing_keys_; }

  std::size_t open_requests() const noexcept {
    std::size_t n = 0;
    for (const auto& s : per_spec_) n += s.age.size();
    return n;
  }

 private:
  friend std::vector<RequestRecord> observe(std::span<const RequestSpec>,
                                            const Event&, MatcherState&);

  struct Open {
    Nanos ts;
    std::uint32_t pid;
    std::uint32_t tid;
    std::uint64_t seq;
    std::string key;
  };
  using ThreadId = std::pair<std::uint32_t, std::uint32_t>;

  struct PerSpec {
    std::unordered_map<std::string, Open> by_key;
    std::map<ThreadId, std::deque<Open>> by_thread;
    // seq -> key (keyed mode) or seq -> thread (FIFO mode), oldest first.
    std::map<std::uint64_t, std::variant<std::string, ThreadId>> age;
    std::uint64_t next_seq = 0;
  };

  std::vector<PerSpec> per_spec_;
  std::uint64_t orphan_ends_ = 0;
  std::uint64_t abandoned_starts_ = 0;
  std::uint64_t missing_keys_ = 0;
};

// Feeds one event to the matcher. Returns the requests it completes (usually
// none). A duplicate start under a live key replaces the older one and an end
// with no open request is ignored; both are counted on `state`.
inline std::vector<RequestRecord> observe(std::span<const RequestSpec> specs,
                                          const Event& e, MatcherState& state) {
  std::vector<RequestRecord> done;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const RequestSpec& spec = specs[i];
    const bool is_start = e.name == spec.start_name;
    const bool is_end = e.name == spec.end_name;
    if (!is_start && !is_end) continue;
    if (state.per_spec_.size() < specs.size()) {
      state.per_spec_.resize(specs.size());
    }
    auto& ps = state.per_spec_[i];

    if (spec.correlation_key) {
      const FieldValue* kv = e.field(*spec.correlation_key);
      if (kv == nullptr) {
        if (is_start) ++state.missing_keys_;
        else ++state.orphan_ends_;
        continue;
      }
      std::string key = kv->to_string();
      if (is_start) {
        if (auto it = ps.by_key.find(key); it != ps.by_key.end()) {
          ps.age.erase(it->second.seq);
          ps.by_key.erase(it);
          ++state.abandoned_starts_;
        } else if (ps.age.size() >= kMaxOpenRequests) {
          auto oldest = ps.age.begin();
          ps.by_key.erase(std::get<std::string>(oldest->second));
          ps.age.erase(oldest);
          ++state.abandoned_starts_;
        }
        const std::uint64_t seq = ps.next_seq++;
        ps.age.emplace(seq, key);
        ps.by_key.emplace(key, MatcherState::Open{e.ts, e.pid, e.tid, seq, key});
      } else {
        auto it = ps.by_key.find(key);
        if (it == ps.by_key.end()) {
          ++state.orphan_ends_;
          continue;
        }
        const auto& open = it->second;
        const Nanos start = open.ts;
        done.push_back(RequestRecord{spec.label, std::move(key), start, e.ts,
                                     e.ts >= start ? e.ts - start : 0,
                                     open.pid, open.tid});
        ps.age.erase(open.seq);
        ps.by_key.erase(it);
      }
      continue;
    }

    const MatcherState::ThreadId thread{e.pid, e.tid};
    if (is_start) {
      if (ps.age.size() >= kMaxOpenRequests) {
        auto oldest = ps.age.begin();
        auto& q = ps.by_thread[std::get<MatcherState::ThreadId>(oldest->second)];
        q.pop_front();
        ps.age.erase(oldest);
        ++state.abandoned_starts_;
      }
      const std::uint64_t seq = ps.next_seq++;
      std::string key = std::to_string(e.pid) + ":" + std::to_string(e.tid) +
                        "#" + std::to_string(seq);
      ps.age.emplace(seq, thread);
      ps.by_thread[thread].push_back(
          MatcherState::Open{e.ts, e.pid, e.tid, seq, std::move(key)});
    } else {
      auto it = ps.by_thread.find(thread);
      if (it == ps.by_thread.end() || it->second.empty()) {
        ++state.orphan_ends_;
        continue;
      }
      MatcherState::Open open = std::move(it->second.front());
      it->second.pop_front();
      if (it->second.empty()) ps.by_thread.erase(it);
      ps.age.erase(open.seq);
      done.push_back(RequestRecord{spec.label, std::move(open.key), open.ts,
                                   e.ts, e.ts >= open.ts ? e.ts - open.ts : 0,
                                   open.pid, open.tid});
    }
  }
  return done;
}

// Sliding window of recent durations for the statistical rule.
class DurationHistory {
 public:
  void push(Nanos d, std::size_t limit) {
    window_.push_back(d);
    while (window_.size() > limit) window_.pop_front();
  }
  std::size_t size() const noexcept { return window_.size(); }

  // mean + k * population stddev over the window.
  long double upper_bound(double k) const {
    if (window_.empty()) return 0;
    long double sum = 0;
    for (Nanos d : window_) sum += static_cast<long double>(d);
    const long double mean = sum / window_.size();
    long double sq = 0;
    for (Nanos d : window_) {
      const long double dev = static_cast<long double>(d) - mean;
      sq += dev * dev;
    }
    return mean + k * std::sqrt(sq / window_.size());
  }

 private:
  std::deque<Nanos> window_;
};

// Threshold rule: strict `duration > threshold`. The statistical rule (when
// enabled) is evaluated against the history *before* this request is added
// and stays silent until the window holds `detector.window` requests.
inline std::optional<Anomaly> detect(const RequestSpec& spec,
                                     const RequestRecord& r,
                                     const DetectorConfig& detector,
                                     DurationHistory* history = nullptr) {
  if (!detector.enabled) return std::nullopt;
  std::optional<Anomaly> hit;
  if (r.duration > spec.threshold) {
    hit = Anomaly{r, r.ts_end, DetectionRule::kThreshold};
  } else if (detector.statistical && history != nullptr &&
             history->size() >= detector.window && detector.window > 0 &&
             static_cast<long double>(r.duration) >
                 history->upper_bound(detector.k)) {
    hit = Anomaly{r, r.ts_end, DetectionRule::kStatistical};
  }
  if (detector.statistical && history != nullptr) {
    history->push(r.duration, detector.window);
  }
  return hit;
}

struct DurationBucket {
  Nanos start = 0;
  std::uint64_t count = 0;
  Nanos max_duration = 0;
  Nanos mean_duration = 0;

  friend bool operator==(const DurationBucket&, const DurationBucket&) = default;
};

struct DurationSeries {
  std::string spec_label;
  Nanos bucket_width = 0;
  std::vector<DurationBucket> buckets;
};

// Buckets records by floor(ts_end / width). Empty buckets between the first
// and last populated ones are materialized; means round half up.
inline DurationSeries bucketize(std::span<const RequestRecord> records,
                                Nanos bucket_width) {
  if (bucket_width == 0) throw RangeError("bucket_width", "must be > 0");
  DurationSeries series;
  series.bucket_width = bucket_width;
  if (records.empty()) return series;
  series.spec_label = records.front().spec_label;

  Nanos lo = UINT64_MAX, hi = 0;
  for (const auto& r : records) {
    lo = std::min(lo, r.ts_end / bucket_width);
    hi = std::max(hi, r.ts_end / bucket_width);
  }
  std::vector<unsigned __int128> totals(hi - lo + 1, 0);
  series.buckets.resize(hi - lo + 1);
  for (std::size_t i = 0; i < series.buckets.size(); ++i) {
    series.buckets[i].start = (lo + i) * bucket_width;
  }
  for (const auto& r : records) {
    const std::size_t i = r.ts_end / bucket_width - lo;
    auto& b = series.buckets[i];
    ++b.count;
    b.max_duration = std::max(b.max_duration, r.duration);
    totals[i] += r.duration;
  }
  for (std::size_t i = 0; i < series.buckets.size(); ++i) {
    auto& b = series.buckets[i];
    if (b.count > 0) {
      b.mean_duration =
          static_cast<Nanos>((totals[i] + b.count / 2) / b.count);
    }
  }
  return series;
}

// (per_event_cost * events_per_request) / mean_duration, exactly.
inline Rational relative_overhead(Nanos per_event_cost,
                                  std::uint64_t events_per_request,
                                  Nanos mean_duration) {
  if (mean_duration == 0) {
    throw UndefinedError("relative overhead with zero mean duration");
  }
  return Rational::of(
      static_cast<unsigned __int128>(per_event_cost) * events_per_request,
      mean_duration);
}

// Light-mode log line: {"spec":..,"key":..,"ts_start":..,"ts_end":..,
// "duration":..}
inline std::string serialize_request_record(const RequestRecord& r) {
  std::string out = "{\"spec\":";
  detail::append_json_string(out, r.spec_label);
  out += ",\"key\":";
  detail::append_json_string(out, r.key);
  out += ",\"ts_start\":" + std::to_string(r.ts_start);
  out += ",\"ts_end\":" + std::to_string(r.ts_end);
  out += ",\"duration\":" + std::to_string(r.duration);
  out += "}";
  return out;
}

inline RequestRecord parse_request_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("line", e.what());
  }
  if (!j.is_object()) throw ParseError("line", "record is not an object");
  auto str = [&](const char* k) {
    auto it = j.find(k);
    if (it == j.end() || !it->is_string()) throw ParseError(k, "expected string");
    return it->get<std::string>();
  };
  auto u64 = [&](const char* k) {
    auto it = j.find(k);
    if (it == j.end() || !it->is_number_unsigned()) {
      throw ParseError(k, "expected unsigned integer");
    }
    return it->get<std::uint64_t>();
  };
  RequestRecord r;
  r.spec_label = str("spec");
  r.key = str("key");
  r.ts_start = u64("ts_start");
  r.ts_end = u64("ts_end");
  r.duration = u64("duration");
  if (r.ts_end < r.ts_start || r.duration != r.ts_end - r.ts_start) {
    throw RangeError("duration", "must equal ts_end - ts_start");
  }
  return r;
}

}  // namespace tiertrace

#endif  // TIERTRACE_LIGHT_SESSION_HPP_
