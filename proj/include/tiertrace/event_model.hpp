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

// Trace event data model and its JSON Lines wire format.
//
// One event per line:
//
//   {"ts":100,"src":"user","name":"apache_request_received","pid":7,
//    "tid":7,"fields":{"req_id":"a1"}}
//
// `ts` is unsigned nanoseconds since the stream epoch. Field values are
// strings or 64-bit integers; floats are rejected so that every downstream
// statistic stays exact.

#ifndef TIERTRACE_EVENT_MODEL_HPP_
#define TIERTRACE_EVENT_MODEL_HPP_

#include <array>
#include <atomic>
#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tiertrace/error.hpp"

namespace tiertrace {

using Nanos = std::uint64_t;

inline constexpr Nanos kNanosPerMicro = 1'000;
inline constexpr Nanos kNanosPerMilli = 1'000'000;
inline constexpr Nanos kNanosPerSecond = 1'000'000'000;

enum class Source : std::uint8_t { kKernel = 0, kUser = 1 };

inline std::string_view to_string(Source s) {
  return s == Source::kKernel ? "kernel" : "user";
}

// A scalar payload value. Integers are normalized on construction:
// non-negative values are always held as uint64 and negative ones as int64,
// so a value compares equal to its own re-parsed wire form.
class FieldValue {
 public:
  FieldValue() : value_(std::uint64_t{0}) {}
  FieldValue(std::string s) : value_(std::move(s)) {}             // NOLINT
  FieldValue(std::string_view s) : value_(std::string(s)) {}      // NOLINT
  FieldValue(const char* s) : value_(std::string(s)) {}           // NOLINT
  template <std::integral T>
    requires(!std::same_as<T, bool> && !std::same_as<T, char>)
  FieldValue(T v) {  // NOLINT
    if constexpr (std::is_signed_v<T>) {
      if (v < 0) {
        value_ = static_cast<std::int64_t>(v);
        return;
      }
    }
    value_ = static_cast<std::uint64_t>(v);
  }

  bool is_string() const noexcept {
    return std::holds_alternative<std::string>(value_);
  }
  bool is_negative() const noexcept {
    return std::holds_alternative<std::int64_t>(value_);
  }
  bool is_unsigned() const noexcept {
    return std::holds_alternative<std::uint64_t>(value_);
  }

  const std::string& as_string() const { return std::get<std::string>(value_); }
  std::int64_t as_int64() const { return std::get<std::int64_t>(value_); }
  std::uint64_t as_uint64() const { return std::get<std::uint64_t>(value_); }

  // Text form used for correlation keys and report labels.
  std::string to_string() const {
    if (is_string()) return as_string();
    if (is_negative()) return std::to_string(as_int64());
    return std::to_string(as_uint64());
  }

  friend bool operator==(const FieldValue&, const FieldValue&) = default;

 private:
  std::variant<std::string, std::int64_t, std::uint64_t> value_;
};

using Fields = std::vector<std::pair<std::string, FieldValue>>;

struct Event {
  Nanos ts = 0;
  Source source = Source::kUser;
  std::string name;
  std::uint32_t pid = 0;
  std::uint32_t tid = 0;
  Fields fields;

  const FieldValue* field(std::string_view key) const {
    for (const auto& [k, v] : fields) {
      if (k == key) return &v;
    }
    return nullptr;
  }

  friend bool operator==(const Event&, const Event&) = default;
};

struct TraceStream {
  std::vector<Event> events;
  // Wall-clock anchor of ts=0; informational only.
  std::string epoch;
};

// Bidirectional string <-> dense id map. Ids start at 0 in first-seen order.
//
// Single writer, many readers: intern() and find() belong to the owning
// thread, while name() may be called from any thread for any id that was
// returned before the reader synchronized with the writer (e.g. through a
// mutex). Storage is chunked and never moves, so readers need no lock.
class NameTable {
 public:
  static constexpr std::size_t kChunkSize = 4096;
  static constexpr std::size_t kMaxChunks = 1 << 15;
  static constexpr std::size_t kMaxNames = kChunkSize * kMaxChunks;

  NameTable() : chunks_(new std::atomic<Chunk*>[kMaxChunks]) {
    for (std::size_t i = 0; i < kMaxChunks; ++i) {
      chunks_[i].store(nullptr, std::memory_order_relaxed);
    }
  }
  ~NameTable() {
    for (std::size_t i = 0; i < kMaxChunks; ++i) {
      delete chunks_[i].load(std::memory_order_relaxed);
    }
  }
  NameTable(const NameTable&) = delete;
  NameTable& operator=(const NameTable&) = delete;

  std::uint32_t intern(std::string_view s) {
    if (auto it = index_.find(s); it != index_.end()) return it->second;
    const std::size_t id = size_.load(std::memory_order_relaxed);
    if (id >= kMaxNames) throw RangeError("name_table", "too many names");
    const std::size_t chunk = id / kChunkSize;
    Chunk* c = chunks_[chunk].load(std::memory_order_relaxed);
    if (c == nullptr) {
      c = new Chunk;
      chunks_[chunk].store(c, std::memory_order_release);
    }
    (*c)[id % kChunkSize] = std::string(s);
    bytes_ += s.size();
    index_.emplace(std::string(s), static_cast<std::uint32_t>(id));
    size_.store(id + 1, std::memory_order_release);
    return static_cast<std::uint32_t>(id);
  }

  std::optional<std::uint32_t> find(std::string_view s) const {
    if (auto it = index_.find(s); it != index_.end()) return it->second;
    return std::nullopt;
  }

  const std::string& name(std::uint32_t id) const {
    if (id >= size_.load(std::memory_order_acquire)) {
      throw RangeError("name_table", "unknown id " + std::to_string(id));
    }
    return (*chunks_[id / kChunkSize].load(std::memory_order_acquire))
        [id % kChunkSize];
  }

  std::size_t size() const noexcept {
    return size_.load(std::memory_order_acquire);
  }

  // Approximate heap footprint: string storage, index nodes and chunks.
  std::size_t memory_bytes() const noexcept {
    const std::size_t n = size();
    const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
    return kMaxChunks * sizeof(std::atomic<Chunk*>) + chunks * sizeof(Chunk) +
           2 * bytes_ + n * (sizeof(std::string) + 2 * sizeof(void*) + 8) +
           index_.bucket_count() * sizeof(void*);
  }

 private:
  using Chunk = std::array<std::string, kChunkSize>;

  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::unique_ptr<std::atomic<Chunk*>[]> chunks_;
  std::atomic<std::size_t> size_{0};
  std::size_t bytes_ = 0;
  std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> index_;
};

namespace detail {

inline void append_json_string(std::string& out, std::string_view s) {
  static constexpr char kHex[] = "0123456789abcdef";
  out.push_back('"');
  for (const char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          out += "\\u00";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xf]);
        } else {
          out.push_back(ch);
        }
    }
  }
  out.push_back('"');
}

inline std::uint32_t require_u32(const nlohmann::ordered_json& v,
                                 const char* key) {
  if (v.is_number_integer() && !v.is_number_unsigned()) {
    throw RangeError(key, "negative value");
  }
  if (!v.is_number_unsigned()) throw ParseError(key, "expected unsigned integer");
  const auto x = v.get<std::uint64_t>();
  if (x > UINT32_MAX) throw RangeError(key, "exceeds 32 bits");
  return static_cast<std::uint32_t>(x);
}

}  // namespace detail

// Decodes one wire-format record. Unknown top-level keys are rejected; the
// order of `fields` entries is preserved.
inline Event parse_event_line(std::string_view line) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("line", e.what());
  }
  if (!j.is_object()) throw ParseError("line", "record is not an object");

  bool seen[6] = {};
  Event e;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "ts") {
      seen[0] = true;
      if (v.is_number_integer() && !v.is_number_unsigned()) {
        throw RangeError("ts", "negative timestamp");
      }
      if (v.is_number_float() && v.get<double>() < 0) {
        throw RangeError("ts", "negative timestamp");
      }
      if (!v.is_number_unsigned()) throw ParseError("ts", "expected unsigned integer");
      e.ts = v.get<std::uint64_t>();
    } else if (key == "src") {
      seen[1] = true;
      if (v == "kernel") {
        e.source = Source::kKernel;
      } else if (v == "user") {
        e.source = Source::kUser;
      } else {
        throw ParseError("src", "expected \"kernel\" or \"user\"");
      }
    } else if (key == "name") {
      seen[2] = true;
      if (!v.is_string()) throw ParseError("name", "expected string");
      e.name = v.get<std::string>();
      if (e.name.empty()) throw ParseError("name", "empty event name");
    } else if (key == "pid") {
      seen[3] = true;
      e.pid = detail::require_u32(v, "pid");
    } else if (key == "tid") {
      seen[4] = true;
      e.tid = detail::require_u32(v, "tid");
    } else if (key == "fields") {
      seen[5] = true;
      if (!v.is_object()) throw ParseError("fields", "expected object");
      e.fields.reserve(v.size());
      for (auto f = v.begin(); f != v.end(); ++f) {
        const auto& fv = f.value();
        if (fv.is_string()) {
          e.fields.emplace_back(f.key(), fv.get<std::string>());
        } else if (fv.is_number_unsigned()) {
          e.fields.emplace_back(f.key(), fv.get<std::uint64_t>());
        } else if (fv.is_number_integer()) {
          e.fields.emplace_back(f.key(), fv.get<std::int64_t>());
        } else {
          throw ParseError("fields." + f.key(), "expected string or integer");
        }
      }
    } else {
      throw ParseError(key, "unknown key");
    }
  }
  static constexpr const char* kRequired[] = {"ts",  "src", "name",
                                              "pid", "tid", "fields"};
  for (int i = 0; i < 6; ++i) {
    if (!seen[i]) throw ParseError(kRequired[i], "missing required key");
  }
  return e;
}

// Encodes one event as a single wire-format line (no trailing newline). The
// output is byte-identical to nlohmann's compact dump of the same document.
inline std::string serialize_event(const Event& e) {
  std::string out;
  out.reserve(96 + e.name.size() + e.fields.size() * 24);
  out += "{\"ts\":";
  out += std::to_string(e.ts);
  out += e.source == Source::kKernel ? ",\"src\":\"kernel\",\"name\":"
                                     : ",\"src\":\"user\",\"name\":";
  detail::append_json_string(out, e.name);
  out += ",\"pid\":";
  out += std::to_string(e.pid);
  out += ",\"tid\":";
  out += std::to_string(e.tid);
  out += ",\"fields\":{";
  bool first = true;
  for (const auto& [k, v] : e.fields) {
    if (!first) out.push_back(',');
    first = false;
    detail::append_json_string(out, k);
    out.push_back(':');
    if (v.is_string()) {
      detail::append_json_string(out, v.as_string());
    } else {
      out += v.to_string();
    }
  }
  out += "}}";
  return out;
}

inline constexpr Nanos kDefaultMaxSkew = kNanosPerMilli;

// Bounded reorder window. An event may arrive up to `max_skew` behind the
// running maximum timestamp and still be emitted in order; anything older is
// rejected as late. Equal timestamps keep arrival order.
class ReorderWindow {
 public:
  explicit ReorderWindow(Nanos max_skew = kDefaultMaxSkew)
      : max_skew_(max_skew) {}

  // Returns false (and counts the event) when it is late.
  template <class Sink>
  bool push(Event e, Sink&& sink) {
    if (have_max_ && running_max_ > max_skew_ &&
        e.ts < running_max_ - max_skew_) {
      ++late_events_;
      return false;
    }
    if (!have_max_ || e.ts > running_max_) {
      running_max_ = e.ts;
      have_max_ = true;
    }
    heap_.push(Pending{e.ts, seq_++, std::move(e)});
    const Nanos bound = running_max_ > max_skew_ ? running_max_ - max_skew_ : 0;
    while (!heap_.empty() && heap_.top().ts < bound) pop_into(sink);
    return true;
  }

  template <class Sink>
  void finish(Sink&& sink) {
    while (!heap_.empty()) pop_into(sink);
  }

  std::uint64_t late_events() const noexcept { return late_events_; }
  std::size_t pending() const noexcept { return heap_.size(); }

 private:
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

  template <class Sink>
  void pop_into(Sink& sink) {
    // priority_queue::top is const; the element is discarded right after.
    Event e = std::move(const_cast<Pending&>(heap_.top()).event);
    heap_.pop();
    sink(std::move(e));
  }

  Nanos max_skew_;
  Nanos running_max_ = 0;
  bool have_max_ = false;
  std::uint64_t seq_ = 0;
  std::uint64_t late_events_ = 0;
  std::priority_queue<Pending, std::vector<Pending>, Later> heap_;
};

struct LineDiagnostic {
  std::size_t line;  // 1-based
  std::string message;
};

struct IngestResult {
  TraceStream stream;
  std::uint64_t late_events = 0;
  std::vector<LineDiagnostic> parse_errors;
};

// Parses and orders a sequence of wire-format lines. Blank lines are skipped;
// malformed lines are reported with their 1-based line number.
template <class Lines>
IngestResult ingest_stream(const Lines& lines, Nanos max_skew = kDefaultMaxSkew) {
  IngestResult result;
  ReorderWindow window(max_skew);
  auto sink = [&](Event&& e) { result.stream.events.push_back(std::move(e)); };
  std::size_t n = 0;
  for (const auto& raw : lines) {
    ++n;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      window.push(parse_event_line(line), sink);
    } catch (const Error& err) {
      result.parse_errors.push_back({n, err.what()});
    }
  }
  window.finish(sink);
  result.late_events = window.late_events();
  return result;
}

}  // namespace tiertrace

#endif  // TIERTRACE_EVENT_MODEL_HPP_
