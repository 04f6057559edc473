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

// The detailed level: a flight recorder. Every event is encoded into one
// fixed 64-byte slot of an in-memory ring; nothing touches disk until an
// anomaly asks for a snapshot.
//
// Slot layout (host byte order, in-memory only):
//
//   offset  size  field
//        0     8  ts
//        8     4  name id
//       12     4  pid
//       16     4  tid
//       20     1  source
//       21     1  inline field count (0..4)
//       22     1  value kinds, 2 bits per field (string/int64/uint64)
//       23     1  fields dropped from this event (saturating)
//       24  4x10  (key id u16, value u64); string values hold a name id
//
// A ring of 1,000,000 events therefore occupies exactly 64,000,000 bytes of
// slots, plus the name tables.

#ifndef TIERTRACE_DETAILED_SESSION_HPP_
#define TIERTRACE_DETAILED_SESSION_HPP_

#include <sys/resource.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tiertrace/error.hpp"
#include "tiertrace/event_model.hpp"
#include "tiertrace/light_session.hpp"
#include "tiertrace/rational.hpp"

namespace tiertrace {

inline constexpr std::size_t kRecordSize = 64;
inline constexpr std::size_t kInlineFields = 4;
inline constexpr Nanos kDefaultCooldown = kNanosPerSecond;

// Raw copy of the occupied slots, oldest first.
struct SlotImage {
  std::unique_ptr<std::byte[]> bytes;
  std::size_t count = 0;
};

class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity)
      : capacity_(capacity),
        slots_(capacity > 0 ? new std::byte[capacity * kRecordSize]
                            : nullptr) {
    if (capacity == 0) throw ConfigError("ring_capacity", "must be >= 1");
  }
  RingBuffer(const RingBuffer&) = delete;
  RingBuffer& operator=(const RingBuffer&) = delete;

  // Encodes `e` into the next slot, overwriting the oldest when full. Fields
  // past the fourth are counted as dropped, never stored.
  void record(const Event& e) {
    std::byte slot[kRecordSize] = {};
    put(slot, 0, e.ts);
    put(slot, 8, names_.intern(e.name));
    put(slot, 12, e.pid);
    put(slot, 16, e.tid);
    std::uint8_t source = static_cast<std::uint8_t>(e.source);
    std::uint8_t count = 0, kinds = 0;
    std::size_t dropped = 0;
    for (const auto& [key, value] : e.fields) {
      if (count == kInlineFields) {
        ++dropped;
        continue;
      }
      std::optional<std::uint32_t> key_id = keys_.find(key);
      if (!key_id) {
        if (keys_.size() > UINT16_MAX) {
          ++dropped;
          continue;
        }
        key_id = keys_.intern(key);
      }
      std::uint64_t bits;
      std::uint8_t kind;
      if (value.is_string()) {
        bits = names_.intern(value.as_string());
        kind = kString;
      } else if (value.is_negative()) {
        bits = static_cast<std::uint64_t>(value.as_int64());
        kind = kSigned;
      } else {
        bits = value.as_uint64();
        kind = kUnsigned;
      }
      const std::size_t off = 24 + count * 10;
      put(slot, off, static_cast<std::uint16_t>(*key_id));
      put(slot, off + 2, bits);
      kinds |= static_cast<std::uint8_t>(kind << (2 * count));
      ++count;
    }
    put(slot, 20, source);
    put(slot, 21, count);
    put(slot, 22, kinds);
    put(slot, 23, static_cast<std::uint8_t>(std::min<std::size_t>(dropped, 255)));

    std::lock_guard<std::mutex> lock(mu_);
    const std::uint64_t n = cursor_.load(std::memory_order_relaxed);
    std::memcpy(slots_.get() + (n % capacity_) * kRecordSize, slot, kRecordSize);
    cursor_.store(n + 1, std::memory_order_release);
    dropped_fields_ += dropped;
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t total_recorded() const noexcept {
    return cursor_.load(std::memory_order_acquire);
  }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(
        std::min<std::uint64_t>(total_recorded(), capacity_));
  }
  // Lifetime total, including events since overwritten.
  std::uint64_t dropped_fields() const {
    std::lock_guard<std::mutex> lock(mu_);
    return dropped_fields_;
  }

  std::size_t slots_footprint_bytes() const noexcept {
    return capacity_ * kRecordSize;
  }
  std::size_t name_table_bytes() const noexcept {
    return names_.memory_bytes() + keys_.memory_bytes();
  }
  std::size_t footprint_bytes() const noexcept {
    return slots_footprint_bytes() + name_table_bytes();
  }

  // Copies the occupied slots, linearized oldest first. The writer is held
  // off only for the memcpy; the destination is allocated and faulted in
  // beforehand.
  SlotImage copy_slots() const {
    for (;;) {
      const std::size_t want = size();
      SlotImage image;
      image.bytes.reset(new std::byte[std::max<std::size_t>(want, 1) * kRecordSize]);
      std::memset(image.bytes.get(), 0, std::max<std::size_t>(want, 1) * kRecordSize);
      std::lock_guard<std::mutex> lock(mu_);
      const std::uint64_t n = cursor_.load(std::memory_order_relaxed);
      const std::size_t have =
          static_cast<std::size_t>(std::min<std::uint64_t>(n, capacity_));
      if (have > want) continue;  // grew while allocating; retry
      const std::size_t head = static_cast<std::size_t>(n % capacity_);
      if (have < capacity_) {
        std::memcpy(image.bytes.get(), slots_.get(), have * kRecordSize);
      } else {
        const std::size_t tail = capacity_ - head;
        std::memcpy(image.bytes.get(), slots_.get() + head * kRecordSize,
                    tail * kRecordSize);
        std::memcpy(image.bytes.get() + tail * kRecordSize, slots_.get(),
                    head * kRecordSize);
      }
      image.count = have;
      return image;
    }
  }

  // Safe to call concurrently with record(): every id in the image was
  // interned before the copy took the lock.
  Event decode_slot(const std::byte* slot) const {
    Event e;
    e.ts = get<std::uint64_t>(slot, 0);
    e.name = names_.name(get<std::uint32_t>(slot, 8));
    e.pid = get<std::uint32_t>(slot, 12);
    e.tid = get<std::uint32_t>(slot, 16);
    e.source = static_cast<Source>(get<std::uint8_t>(slot, 20));
    const auto count = get<std::uint8_t>(slot, 21);
    const auto kinds = get<std::uint8_t>(slot, 22);
    e.fields.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t off = 24 + i * 10;
      const auto& key = keys_.name(get<std::uint16_t>(slot, off));
      const auto bits = get<std::uint64_t>(slot, off + 2);
      switch ((kinds >> (2 * i)) & 3) {
        case kString:
          e.fields.emplace_back(key, names_.name(static_cast<std::uint32_t>(bits)));
          break;
        case kSigned:
          e.fields.emplace_back(key, static_cast<std::int64_t>(bits));
          break;
        default:
          e.fields.emplace_back(key, bits);
      }
    }
    return e;
  }

  std::vector<Event> decode(const SlotImage& image) const {
    std::vector<Event> out;
    out.reserve(image.count);
    for (std::size_t i = 0; i < image.count; ++i) {
      out.push_back(decode_slot(image.bytes.get() + i * kRecordSize));
    }
    return out;
  }

  static std::uint64_t dropped_in(const SlotImage& image) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < image.count; ++i) {
      total += get<std::uint8_t>(image.bytes.get() + i * kRecordSize, 23);
    }
    return total;
  }

  // Retained events, oldest first.
  std::vector<Event> events() const { return decode(copy_slots()); }

  // (count, oldest ts, newest ts) without decoding the whole ring.
  struct Span {
    std::size_t count = 0;
    Nanos ts_first = 0;
    Nanos ts_last = 0;
  };
  Span span() const {
    std::lock_guard<std::mutex> lock(mu_);
    const std::uint64_t n = cursor_.load(std::memory_order_relaxed);
    if (n == 0) return {};
    const std::size_t have =
        static_cast<std::size_t>(std::min<std::uint64_t>(n, capacity_));
    const std::size_t oldest =
        have < capacity_ ? 0 : static_cast<std::size_t>(n % capacity_);
    const std::size_t newest = static_cast<std::size_t>((n - 1) % capacity_);
    return {have, get<std::uint64_t>(slots_.get() + oldest * kRecordSize, 0),
            get<std::uint64_t>(slots_.get() + newest * kRecordSize, 0)};
  }

 private:
  static constexpr std::uint8_t kString = 0;
  static constexpr std::uint8_t kSigned = 1;
  static constexpr std::uint8_t kUnsigned = 2;

  template <class T>
  static void put(std::byte* slot, std::size_t off, T v) {
    std::memcpy(slot + off, &v, sizeof(T));
  }
  template <class T>
  static T get(const std::byte* slot, std::size_t off) {
    T v;
    std::memcpy(&v, slot + off, sizeof(T));
    return v;
  }

  std::size_t capacity_;
  std::unique_ptr<std::byte[]> slots_;
  std::atomic<std::uint64_t> cursor_{0};
  std::uint64_t dropped_fields_ = 0;
  mutable std::mutex mu_;
  NameTable names_;  // event names and string field values
  NameTable keys_;   // field keys, at most 65536
};

// capacity / event_rate, in seconds.
inline Rational window_duration(std::uint64_t capacity, std::uint64_t event_rate) {
  if (event_rate == 0) throw UndefinedError("window duration with zero event rate");
  return Rational::of(capacity, event_rate);
}

// Events per second over a window of `count` events spanning
// [ts_first, ts_last]: the number of inter-event intervals divided by the
// span, so 11 events 1 ms apart give 1,000/s.
inline Rational observed_event_rate(std::uint64_t count, Nanos ts_first,
                                    Nanos ts_last) {
  if (count < 2 || ts_last <= ts_first) {
    throw UndefinedError("observed event rate over a zero-length span");
  }
  return Rational::of(
      static_cast<unsigned __int128>(count - 1) * kNanosPerSecond,
      ts_last - ts_first);
}

inline Rational observed_event_rate(const RingBuffer& buf) {
  const auto s = buf.span();
  return observed_event_rate(s.count, s.ts_first, s.ts_last);
}

inline Rational observed_event_rate(std::span<const Event> events) {
  if (events.empty()) throw UndefinedError("observed event rate of no events");
  Nanos lo = events.front().ts, hi = events.front().ts;
  for (const auto& e : events) {
    lo = std::min(lo, e.ts);
    hi = std::max(hi, e.ts);
  }
  return observed_event_rate(events.size(), lo, hi);
}

struct SnapshotMeta {
  std::string trigger_spec;
  std::string trigger_key;
  Nanos trigger_duration = 0;
  Nanos trigger_ts_start = 0;
  Nanos trigger_ts_end = 0;
  DetectionRule rule = DetectionRule::kThreshold;
  Nanos flushed_at = 0;
  std::uint64_t event_count = 0;
  Nanos ts_first = 0;
  Nanos ts_last = 0;
  std::optional<Rational> observed_event_rate;
  std::uint64_t dropped_fields = 0;
  std::uint64_t suppressed_triggers = 0;
  std::filesystem::path snapshot_path;

  std::string stem() const { return snapshot_path.stem().string(); }
};

namespace detail {

inline std::string sanitize_for_filename(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "_" : out;
}

}  // namespace detail

inline std::string snapshot_stem(Nanos flushed_at, std::string_view spec,
                                 std::string_view key) {
  return "snapshot_" + std::to_string(flushed_at) + "_" +
         detail::sanitize_for_filename(spec) + "_" +
         detail::sanitize_for_filename(key);
}

inline nlohmann::ordered_json meta_to_json(const SnapshotMeta& m) {
  nlohmann::ordered_json j;
  j["trigger_spec"] = m.trigger_spec;
  j["trigger_key"] = m.trigger_key;
  j["duration"] = m.trigger_duration;
  j["trigger_ts_start"] = m.trigger_ts_start;
  j["trigger_ts_end"] = m.trigger_ts_end;
  j["rule"] = std::string(to_string(m.rule));
  j["flushed_at"] = m.flushed_at;
  j["event_count"] = m.event_count;
  j["ts_first"] = m.ts_first;
  j["ts_last"] = m.ts_last;
  if (m.observed_event_rate) {
    j["observed_event_rate"] = m.observed_event_rate->to_decimal(3);
  } else {
    j["observed_event_rate"] = nullptr;
  }
  j["dropped_fields"] = m.dropped_fields;
  j["suppressed_triggers"] = m.suppressed_triggers;
  j["snapshot"] = m.snapshot_path.filename().string();
  return j;
}

// Reads `<stem>.meta.json`. The snapshot path is resolved next to it.
inline SnapshotMeta read_snapshot_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open snapshot meta");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta", e.what());
  }
  SnapshotMeta m;
  try {
    m.trigger_spec = j.at("trigger_spec").get<std::string>();
    m.trigger_key = j.at("trigger_key").get<std::string>();
    m.trigger_duration = j.at("duration").get<Nanos>();
    m.trigger_ts_start = j.value("trigger_ts_start", Nanos{0});
    m.trigger_ts_end = j.value("trigger_ts_end", m.trigger_ts_start + m.trigger_duration);
    m.rule = j.value("rule", std::string("threshold")) == "statistical"
                 ? DetectionRule::kStatistical
                 : DetectionRule::kThreshold;
    m.flushed_at = j.at("flushed_at").get<Nanos>();
    m.event_count = j.at("event_count").get<std::uint64_t>();
    m.ts_first = j.at("ts_first").get<Nanos>();
    m.ts_last = j.at("ts_last").get<Nanos>();
    m.dropped_fields = j.value("dropped_fields", std::uint64_t{0});
    m.suppressed_triggers = j.value("suppressed_triggers", std::uint64_t{0});
    const std::string snap = j.value(
        "snapshot", path.filename().string().substr(
                        0, path.filename().string().size() - 10) + ".jsonl");
    m.snapshot_path = path.parent_path() / snap;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta", e.what());
  }
  if (m.event_count >= 2 && m.ts_last > m.ts_first) {
    m.observed_event_rate =
        observed_event_rate(m.event_count, m.ts_first, m.ts_last);
  }
  return m;
}

// A snapshot whose slots have been copied but not yet written.
struct PendingSnapshot {
  const RingBuffer* buffer = nullptr;
  SlotImage image;
  Anomaly trigger;
  std::filesystem::path dir;
  Nanos flushed_at = 0;
  std::uint64_t suppressed = 0;
};

// Takes the brief copy of the ring. Throws PreconditionError when empty.
inline PendingSnapshot begin_snapshot(const RingBuffer& buf, const Anomaly& trigger,
                                      const std::filesystem::path& dir,
                                      Nanos flushed_at,
                                      std::uint64_t suppressed = 0) {
  PendingSnapshot p{&buf, buf.copy_slots(), trigger, dir, flushed_at, suppressed};
  if (p.image.count == 0) {
    throw PreconditionError("cannot flush an empty ring buffer");
  }
  return p;
}

// Decodes the copied slots and writes `<stem>.jsonl` (events in ts order) and
// `<stem>.meta.json`. Throws IoError carrying the partial file on failure.
inline SnapshotMeta finish_snapshot(const PendingSnapshot& p) {
  std::vector<Event> events = p.buffer->decode(p.image);
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });

  SnapshotMeta meta;
  const auto& req = p.trigger.request;
  meta.trigger_spec = req.spec_label;
  meta.trigger_key = req.key;
  meta.trigger_duration = req.duration;
  meta.trigger_ts_start = req.ts_start;
  meta.trigger_ts_end = req.ts_end;
  meta.rule = p.trigger.rule;
  meta.flushed_at = p.flushed_at;
  meta.event_count = events.size();
  meta.ts_first = events.front().ts;
  meta.ts_last = events.back().ts;
  if (events.size() >= 2 && meta.ts_last > meta.ts_first) {
    meta.observed_event_rate =
        observed_event_rate(events.size(), meta.ts_first, meta.ts_last);
  }
  meta.dropped_fields = RingBuffer::dropped_in(p.image);
  meta.suppressed_triggers = p.suppressed;

  const std::string stem = snapshot_stem(p.flushed_at, req.spec_label, req.key);
  meta.snapshot_path = p.dir / (stem + ".jsonl");
  {
    std::ofstream out(meta.snapshot_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(meta.snapshot_path, "cannot create snapshot");
    std::string chunk;
    chunk.reserve(1 << 20);
    for (const auto& e : events) {
      chunk += serialize_event(e);
      chunk.push_back('\n');
      if (chunk.size() >= (1 << 20)) {
        out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
        chunk.clear();
      }
    }
    out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    out.flush();
    if (!out) throw IoError(meta.snapshot_path, "short write to snapshot");
  }
  const auto meta_path = p.dir / (stem + ".meta.json");
  std::ofstream mout(meta_path, std::ios::binary | std::ios::trunc);
  if (!mout) throw IoError(meta_path, "cannot create snapshot meta");
  mout << meta_to_json(meta).dump(2) << '\n';
  if (!mout) throw IoError(meta_path, "short write to snapshot meta");
  return meta;
}

// Synchronous flush. The ring is left intact, so later snapshots may overlap.
inline SnapshotMeta flush_snapshot(const RingBuffer& buf, const Anomaly& trigger,
                                   const std::filesystem::path& dir,
                                   std::optional<Nanos> flushed_at = std::nullopt,
                                   std::uint64_t suppressed = 0) {
  return finish_snapshot(begin_snapshot(
      buf, trigger, dir, flushed_at.value_or(trigger.detected_at), suppressed));
}

// Copies the slots on the calling thread, then decodes and writes on a
// background-priority worker so the recording thread keeps the CPU.
inline std::future<SnapshotMeta> flush_snapshot_async(
    const RingBuffer& buf, const Anomaly& trigger,
    const std::filesystem::path& dir, std::optional<Nanos> flushed_at = std::nullopt,
    std::uint64_t suppressed = 0) {
  auto pending = std::make_shared<PendingSnapshot>(begin_snapshot(
      buf, trigger, dir, flushed_at.value_or(trigger.detected_at), suppressed));
  return std::async(std::launch::async, [pending] {
    const auto tid = static_cast<id_t>(::syscall(SYS_gettid));
    ::setpriority(PRIO_PROCESS, tid, 19);
    return finish_snapshot(*pending);
  });
}

// Reads a snapshot strictly: any malformed line is fatal and names its line.
inline TraceStream read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open snapshot");
  TraceStream stream;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      stream.events.push_back(parse_event_line(line));
    } catch (const Error& e) {
      throw LineError(n, e.what());
    }
  }
  if (in.bad()) throw IoError(path, "read failure");
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });
  return stream;
}

// At most one flush per cooldown, measured in stream time. Triggers that land
// inside the cooldown are counted and handed to the next flush.
class FlushDebouncer {
 public:
  explicit FlushDebouncer(Nanos cooldown = kDefaultCooldown) : cooldown_(cooldown) {}

  bool admit(Nanos now) {
    if (last_ && now < *last_ + cooldown_) {
      ++pending_suppressed_;
      ++total_suppressed_;
      return false;
    }
    last_ = now;
    return true;
  }

  std::uint64_t take_suppressed() noexcept {
    return std::exchange(pending_suppressed_, 0);
  }
  std::uint64_t pending_suppressed() const noexcept { return pending_suppressed_; }
  std::uint64_t total_suppressed() const noexcept { return total_suppressed_; }

 private:
  Nanos cooldown_;
  std::optional<Nanos> last_;
  std::uint64_t pending_suppressed_ = 0;
  std::uint64_t total_suppressed_ = 0;
};

}  // namespace tiertrace

#endif  // TIERTRACE_DETAILED_SESSION_HPP_
