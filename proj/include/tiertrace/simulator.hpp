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

// Deterministic synthetic workload: a web -> app -> db request stack plus
// kernel syscall / block I/O / interrupt filler, with injectable latency
// faults. Identical (config, faults, seed) always produce identical bytes.
//
// Randomness comes from xorshift64* (Vigna 2014):
//   x ^= x >> 12; x ^= x << 25; x ^= x >> 27; return x * 0x2545F4914F6CDD1D
// seeded through one round of splitmix64
//   z = seed + 0x9E3779B97F4A7C15
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z ^= z >> 31   (a zero result is replaced by 1)
// and uniform doubles take the top 53 bits.

#ifndef TIERTRACE_SIMULATOR_HPP_
#define TIERTRACE_SIMULATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "tiertrace/error.hpp"
#include "tiertrace/event_model.hpp"

namespace tiertrace {

class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    state_ = z == 0 ? 1 : z;
  }

  std::uint64_t next() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  // [0, 1)
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }

 private:
  std::uint64_t state_;
};

// Role of a layer decides which extra events surround it.
//   kWeb: recvfrom/sendto syscalls around the inner layer
//   kApp: func_entry/func_exit call tree
//   kDb:  `statement` field, pread64 syscall and one block request
enum class LayerKind { kPlain, kWeb, kApp, kDb };

struct LayerConfig {
  std::string label;
  std::string start_name;
  std::string end_name;
  std::string key_field;   // correlation field carried by start and end
  Nanos base_latency = 0;  // exclusive time of this layer
  double jitter = 0;       // own time is base * (1 +- U*jitter)
  LayerKind kind = LayerKind::kPlain;
};

struct WorkloadConfig {
  double duration_s = 60;
  double request_rate = 20;  // requests per second
  std::vector<LayerConfig> layers;
  double kernel_noise = 2000;  // filler events per second
  std::uint64_t seed = 1;

  void validate() const {
    if (!(duration_s > 0) || !std::isfinite(duration_s)) {
      throw ConfigError("duration_s", "must be > 0");
    }
    if (!(request_rate > 0) || !std::isfinite(request_rate)) {
      throw ConfigError("request_rate", "must be > 0");
    }
    if (!(kernel_noise >= 0) || !std::isfinite(kernel_noise)) {
      throw ConfigError("kernel_noise", "must be >= 0");
    }
    if (layers.empty()) throw ConfigError("layers", "at least one layer required");
    for (const auto& l : layers) {
      if (l.label.empty()) throw ConfigError("layers.label", "empty label");
      if (l.start_name.empty() || l.end_name.empty() || l.start_name == l.end_name) {
        throw ConfigError("layers.start", "distinct start/end names required");
      }
      if (l.key_field.empty()) throw ConfigError("layers.key", "empty key field");
      if (l.base_latency == 0) throw ConfigError("layers.base_latency_ns", "must be > 0");
      if (!(l.jitter >= 0 && l.jitter < 1)) {
        throw ConfigError("jitter", "must be in [0, 1)");
      }
    }
  }

  Nanos duration_ns() const {
    return static_cast<Nanos>(std::llround(duration_s * 1e9));
  }
  std::uint64_t request_count() const {
    return static_cast<std::uint64_t>(std::floor(duration_s * request_rate + 1e-9));
  }
};

struct FaultSpec {
  Nanos at = 0;  // offset from stream start
  std::string layer;
  Nanos extra_latency = 0;
  std::uint64_t count = 1;  // requests affected, from the first arriving at/after `at`

  void validate(const WorkloadConfig& config) const {
    if (at >= config.duration_ns()) throw ConfigError("faults.at_ns", "must be < duration");
    if (extra_latency == 0) throw ConfigError("faults.extra_latency_ns", "must be > 0");
    if (count == 0) throw ConfigError("faults.count", "must be >= 1");
    const bool known = std::any_of(config.layers.begin(), config.layers.end(),
                                   [&](const LayerConfig& l) { return l.label == layer; });
    if (!known) throw ConfigError("faults.layer", "unknown layer '" + layer + "'");
  }
};

// Apache / PHP / MariaDB stand-in. Base latencies are exclusive, so an
// unfaulted request takes roughly 60 ms end to end.
inline std::vector<LayerConfig> default_layers() {
  return {
      {"apache", "apache_request_received", "apache_request_handled", "req_id",
       20 * kNanosPerMilli, 0.5, LayerKind::kWeb},
      {"php", "php_request_start", "php_request_end", "req_id",
       30 * kNanosPerMilli, 0.5, LayerKind::kApp},
      {"db", "db_query_start", "db_query_end", "query_id", 10 * kNanosPerMilli,
       0.5, LayerKind::kDb},
  };
}

inline constexpr std::uint32_t kServerPid = 1000;
inline constexpr std::uint32_t kBackgroundPid = 1;
inline constexpr std::uint32_t kBackgroundSyscallTid = 2;
inline constexpr std::uint32_t kBackgroundIoTid = 3;
inline constexpr std::uint32_t kIrqTid = 0;

namespace detail {

inline constexpr const char* kStatements[] = {
    "SELECT * FROM node WHERE nid = ?",
    "SELECT name, mail FROM users WHERE uid = ?",
    "UPDATE sessions SET timestamp = ? WHERE sid = ?",
    "SELECT data FROM cache_bootstrap WHERE cid = ?",
    "INSERT INTO watchdog (uid, type, message) VALUES (?, ?, ?)",
    "SELECT revision_id FROM page WHERE title = ? ORDER BY rev DESC LIMIT 1",
};
inline constexpr const char* kBackgroundSyscalls[] = {"read", "write", "futex",
                                                      "epoll_wait", "poll"};
inline constexpr std::uint32_t kIrqLines[] = {3, 7, 11, 19, 24};

// Per-request event builder; appends in non-decreasing ts order.
class RequestBuilder {
 public:
  RequestBuilder(std::vector<Event>& out, std::uint32_t tid) : out_(out), tid_(tid) {}

  void user(Nanos ts, std::string name, Fields f = {}) {
    emit(ts, Source::kUser, std::move(name), std::move(f));
  }
  void kernel(Nanos ts, std::string name, Fields f = {}) {
    emit(ts, Source::kKernel, std::move(name), std::move(f));
  }

 private:
  void emit(Nanos ts, Source src, std::string name, Fields f) {
    ts = std::max(ts, last_);
    last_ = ts;
    out_.push_back(Event{ts, src, std::move(name), kServerPid, tid_, std::move(f)});
  }

  std::vector<Event>& out_;
  std::uint32_t tid_;
  Nanos last_ = 0;
};

}  // namespace detail

// Streams the workload to `sink(Event&&)` in non-decreasing ts order.
template <class Sink>
void generate(const WorkloadConfig& config, std::span<const FaultSpec> faults,
              Sink&& sink) {
  config.validate();
  for (const auto& f : faults) f.validate(config);

  Xorshift64Star rng(config.seed);
  const std::uint64_t requests = config.request_count();
  const std::uint64_t noise_units =
      static_cast<std::uint64_t>(std::floor(config.duration_s * config.kernel_noise / 2));
  const double noise_gap = config.kernel_noise > 0 ? 2e9 / config.kernel_noise : 0;
  std::vector<std::uint64_t> fault_left;
  for (const auto& f : faults) fault_left.push_back(f.count);

  struct Pending {
    Nanos ts;
    std::uint64_t seq;
    Event event;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      return a.ts != b.ts ? a.ts > b.ts : a.seq > b.seq;
    }
  };
  std::priority_queue<Pending, std::vector<Pending>, Later> heap;
  std::uint64_t seq = 0;
  auto enqueue = [&](std::vector<Event>& evs) {
    for (auto& e : evs) {
      const Nanos ts = e.ts;
      heap.push(Pending{ts, seq++, std::move(e)});
    }
    evs.clear();
  };
  auto drain_before = [&](Nanos bound) {
    while (!heap.empty() && heap.top().ts < bound) {
      Event e = std::move(const_cast<Pending&>(heap.top()).event);
      heap.pop();
      sink(std::move(e));
    }
  };

  std::vector<Nanos> worker_free;  // per worker tid, when it becomes idle
  std::uint64_t next_request = 0, next_noise = 0, rq_id = 0, query_id = 0;
  std::vector<Event> batch;
  const std::size_t n_layers = config.layers.size();
  std::vector<Nanos> own(n_layers), start(n_layers), end(n_layers);

  for (;;) {
    const Nanos t_req = next_request < requests
                            ? static_cast<Nanos>(std::llround(
                                  static_cast<double>(next_request) * 1e9 /
                                  config.request_rate))
                            : UINT64_MAX;
    const Nanos t_noise =
        next_noise < noise_units
            ? static_cast<Nanos>(std::llround((static_cast<double>(next_noise) + 0.5) *
                                              noise_gap))
            : UINT64_MAX;
    if (t_req == UINT64_MAX && t_noise == UINT64_MAX) break;
    drain_before(std::min(t_req, t_noise));

    if (t_req <= t_noise) {
      const Nanos arrival = t_req;
      const std::uint64_t idx = next_request++;
      // Inner-to-outer durations; faults stretch a layer's own time.
      for (std::size_t i = 0; i < n_layers; ++i) {
        const auto& l = config.layers[i];
        const double u = rng.uniform() * 2.0 - 1.0;
        own[i] = static_cast<Nanos>(std::max(
            1.0, std::round(static_cast<double>(l.base_latency) * (1.0 + u * l.jitter))));
        for (std::size_t f = 0; f < faults.size(); ++f) {
          if (faults[f].layer == l.label && arrival >= faults[f].at && fault_left[f] > 0) {
            own[i] += faults[f].extra_latency;
            --fault_left[f];
          }
        }
      }
      // Layer i spends own[i]/2 before entering layer i+1, the rest after.
      start[0] = arrival;
      for (std::size_t i = 1; i < n_layers; ++i) start[i] = start[i - 1] + own[i - 1] / 2;
      end[n_layers - 1] = start[n_layers - 1] + own[n_layers - 1];
      for (std::size_t i = n_layers - 1; i-- > 0;) {
        end[i] = end[i + 1] + (own[i] - own[i] / 2);
      }

      std::size_t worker = 0;
      while (worker < worker_free.size() && worker_free[worker] > arrival) ++worker;
      if (worker == worker_free.size()) worker_free.push_back(0);
      worker_free[worker] = end[0] + 1;
      const std::uint32_t tid = kServerPid + 1 + static_cast<std::uint32_t>(worker);

      detail::RequestBuilder b(batch, tid);
      const std::string req_key = "r" + std::to_string(idx);
      // Emits everything from layer i inward, in time order.
      auto emit_layer = [&](auto&& self, std::size_t i) -> void {
        const auto& l = config.layers[i];
        const Nanos s = start[i], e = end[i];
        const bool inner = i + 1 < n_layers;
        const Nanos pre_end = inner ? start[i + 1] : s + own[i] / 2;
        const Nanos post_start = inner ? end[i + 1] : pre_end;
        const Nanos pre = pre_end - s, post = e - post_start;
        std::string key =
            l.kind == LayerKind::kDb ? "q" + std::to_string(query_id++) : req_key;
        Fields sf{{l.key_field, key}};
        if (l.kind == LayerKind::kDb) {
          sf.emplace_back("statement",
                          detail::kStatements[rng.below(std::size(detail::kStatements))]);
        }
        b.user(s, l.start_name, std::move(sf));
        switch (l.kind) {
          case LayerKind::kWeb:
            b.kernel(s + pre / 8, "syscall_entry_recvfrom", {{"fd", 9}});
            b.kernel(s + pre / 4, "syscall_exit_recvfrom", {{"ret", 512}});
            if (inner) self(self, i + 1);
            b.kernel(post_start + post / 4, "syscall_entry_sendto", {{"fd", 9}});
            b.kernel(post_start + post / 2, "syscall_exit_sendto", {{"ret", 4096}});
            break;
          case LayerKind::kApp:
            b.user(s + pre / 10, "func_entry", {{"func", "main"}});
            b.user(s + pre * 2 / 10, "func_entry", {{"func", "bootstrap"}});
            b.user(s + pre * 4 / 10, "func_entry", {{"func", "load_config"}});
            b.user(s + pre * 5 / 10, "func_exit", {{"func", "load_config"}});
            b.user(s + pre * 6 / 10, "func_exit", {{"func", "bootstrap"}});
            if (inner) {
              b.user(s + pre * 8 / 10, "func_entry", {{"func", "db_query"}});
              self(self, i + 1);
              b.user(post_start + post / 10, "func_exit", {{"func", "db_query"}});
            }
            b.user(post_start + post * 3 / 10, "func_entry", {{"func", "render_page"}});
            b.user(post_start + post * 5 / 10, "func_entry", {{"func", "theme"}});
            b.user(post_start + post * 6 / 10, "func_exit", {{"func", "theme"}});
            b.user(post_start + post * 8 / 10, "func_exit", {{"func", "render_page"}});
            b.user(post_start + post * 9 / 10, "func_exit", {{"func", "main"}});
            break;
          case LayerKind::kDb: {
            const std::uint64_t rq = rq_id++;
            b.kernel(s + pre / 4, "syscall_entry_pread64", {{"fd", 17}});
            b.kernel(s + pre / 2, "block_rq_issue", {{"rq", rq}, {"dev", 8}});
            if (inner) self(self, i + 1);
            b.kernel(post_start + post / 2, "block_rq_complete", {{"rq", rq}, {"dev", 8}});
            b.kernel(post_start + post * 3 / 4, "syscall_exit_pread64", {{"ret", 16384}});
            break;
          }
          case LayerKind::kPlain:
            if (inner) self(self, i + 1);
            break;
        }
        b.user(e, l.end_name, {{l.key_field, std::move(key)}});
      };
      emit_layer(emit_layer, 0);
      enqueue(batch);
    } else {
      const Nanos t = t_noise;
      ++next_noise;
      const double kind = rng.uniform();
      const double cap = noise_gap / 2;
      if (kind < 0.6) {
        const char* name =
            detail::kBackgroundSyscalls[rng.below(std::size(detail::kBackgroundSyscalls))];
        const Nanos lat = static_cast<Nanos>(std::max(
            1.0, std::min(cap, 1000.0 + rng.uniform() * 29000.0)));
        batch.push_back(Event{t, Source::kKernel, std::string("syscall_entry_") + name,
                              kBackgroundPid, kBackgroundSyscallTid, {}});
        batch.push_back(Event{t + lat, Source::kKernel, std::string("syscall_exit_") + name,
                              kBackgroundPid, kBackgroundSyscallTid, {{"ret", 0}}});
      } else if (kind < 0.85) {
        const std::uint32_t irq =
            detail::kIrqLines[rng.below(std::size(detail::kIrqLines))];
        const Nanos lat = static_cast<Nanos>(
            std::max(1.0, std::min(cap, 1000.0 + rng.uniform() * 7000.0)));
        batch.push_back(Event{t, Source::kKernel, "irq_handler_entry", 0, kIrqTid,
                              {{"irq", irq}}});
        batch.push_back(Event{t + lat, Source::kKernel, "irq_handler_exit", 0, kIrqTid,
                              {{"irq", irq}, {"ret", 1}}});
      } else {
        const std::uint64_t rq = rq_id++;
        // 20 us .. 20 ms, log-uniform.
        const Nanos lat = static_cast<Nanos>(20000.0 * std::exp2(rng.uniform() * 10.0));
        batch.push_back(Event{t, Source::kKernel, "block_rq_issue", kBackgroundPid,
                              kBackgroundIoTid, {{"rq", rq}, {"dev", 8}}});
        batch.push_back(Event{t + lat, Source::kKernel, "block_rq_complete",
                              kBackgroundPid, kBackgroundIoTid, {{"rq", rq}, {"dev", 8}}});
      }
      enqueue(batch);
    }
  }
  drain_before(UINT64_MAX);
  while (!heap.empty()) {
    Event e = std::move(const_cast<Pending&>(heap.top()).event);
    heap.pop();
    sink(std::move(e));
  }
}

inline TraceStream generate(const WorkloadConfig& config,
                            std::span<const FaultSpec> faults = {}) {
  TraceStream s;
  s.epoch = "simulated";
  generate(config, faults, [&](Event&& e) { s.events.push_back(std::move(e)); });
  return s;
}

inline void generate_jsonl(const WorkloadConfig& config,
                           std::span<const FaultSpec> faults, std::ostream& out) {
  std::string chunk;
  chunk.reserve(1 << 20);
  generate(config, faults, [&](Event&& e) {
    chunk += serialize_event(e);
    chunk.push_back('\n');
    if (chunk.size() >= (1 << 20)) {
      out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
      chunk.clear();
    }
  });
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
}

}  // namespace tiertrace

#endif  // TIERTRACE_SIMULATOR_HPP_
