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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "test_util.hpp"
#include "tiertrace/detailed_session.hpp"

namespace tiertrace {
namespace {

using testing::make_event;
using testing::TempDir;

Anomaly trigger_at(Nanos ts, std::string key = "r1") {
  return Anomaly{RequestRecord{"apache", std::move(key), ts - 10, ts, 10, 1, 1}, ts,
                 DetectionRule::kThreshold};
}

std::vector<Nanos> ts_of(const std::vector<Event>& events) {
  std::vector<Nanos> out;
  for (const auto& e : events) out.push_back(e.ts);
  return out;
}

TEST(RingBuffer, ZeroCapacityRejected) { EXPECT_THROW(RingBuffer(0), ConfigError); }

TEST(RingBuffer, KeepsLastK) {
  RingBuffer buf(3);
  for (Nanos t = 1; t <= 5; ++t) buf.record(make_event(t, "e"));
  EXPECT_EQ(ts_of(buf.events()), (std::vector<Nanos>{3, 4, 5}));
  EXPECT_EQ(buf.total_recorded(), 5u);
  EXPECT_EQ(buf.size(), 3u);
  const auto span = buf.span();
  EXPECT_EQ(span.count, 3u);
  EXPECT_EQ(span.ts_first, 3u);
  EXPECT_EQ(span.ts_last, 5u);
}

TEST(RingBuffer, DropsFieldsPastFour) {
  RingBuffer buf(4);
  Fields f;
  for (int i = 0; i < 20; ++i) f.emplace_back("f" + std::to_string(i), std::uint64_t(i));
  buf.record(make_event(1, "wide", 1, f));
  EXPECT_EQ(buf.dropped_fields(), 16u);
  const auto events = buf.events();
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].fields, Fields(f.begin(), f.begin() + 4));
}

TEST(RingBuffer, SlotFootprintIsExact) {
  RingBuffer buf(1'000'000);
  EXPECT_EQ(buf.slots_footprint_bytes(), 64'000'000u);
  EXPECT_GT(buf.footprint_bytes(), buf.slots_footprint_bytes());
}

// Retention across wrap boundaries, with the slot encoding round-tripping
// ts, source, name, pid, tid and every field (all events here have <= 4).
TEST(RingBufferProperty, RetentionAndRoundTrip) {
  std::mt19937_64 rng(17);
  for (std::size_t cap : {1u, 2u, 7u, 1024u}) {
    for (int iter = 0; iter < 20; ++iter) {
      RingBuffer buf(cap);
      const std::size_t n = rng() % (10 * cap + 1);
      std::vector<Event> input;
      for (std::size_t i = 0; i < n; ++i) {
        Fields f;
        const int nf = static_cast<int>(rng() % 5);
        for (int k = 0; k < nf; ++k) {
          switch (rng() % 3) {
            case 0: f.emplace_back("k" + std::to_string(k), rng()); break;
            case 1: f.emplace_back("s" + std::to_string(k), "v" + std::to_string(rng() % 50)); break;
            default: f.emplace_back("n" + std::to_string(k), -static_cast<std::int64_t>(rng() % 99) - 1);
          }
        }
        input.push_back(Event{rng(), rng() % 2 ? Source::kKernel : Source::kUser,
                              "ev" + std::to_string(rng() % 10),
                              static_cast<std::uint32_t>(rng()),
                              static_cast<std::uint32_t>(rng()), std::move(f)});
        buf.record(input.back());
      }
      const std::size_t keep = std::min(n, cap);
      const std::vector<Event> expected(input.end() - static_cast<std::ptrdiff_t>(keep),
                                        input.end());
      ASSERT_EQ(buf.events(), expected) << "cap " << cap << " n " << n;
    }
  }
}

TEST(WindowDuration, Examples) {
  EXPECT_EQ(window_duration(1'000'000, 100'000), Rational(10));
  EXPECT_EQ(window_duration(777, 777), Rational(1));
  EXPECT_EQ(window_duration(500'000, 200'000), Rational::of(5, 2));
  EXPECT_EQ(window_duration(500'000, 200'000).to_decimal(), "2.5");
  EXPECT_THROW(window_duration(1, 0), UndefinedError);
}

TEST(WindowDurationProperty, TimesRateIsCapacity) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t c = 1 + rng() % 100'000'000;
    const std::uint64_t r = 1 + rng() % 10'000'000;
    EXPECT_EQ(window_duration(c, r) * Rational(r), Rational(c));
  }
}

TEST(ObservedEventRate, Examples) {
  std::vector<Event> ev;
  for (Nanos i = 0; i <= 10; ++i) ev.push_back(make_event(i * kNanosPerMilli, "e"));
  EXPECT_EQ(observed_event_rate(ev), Rational(1000));
  // 1,000,000 events over exactly 10 s.
  EXPECT_EQ(observed_event_rate(1'000'001, 0, 10 * kNanosPerSecond), Rational(100'000));
  EXPECT_THROW(observed_event_rate(1, 5, 5), UndefinedError);
  EXPECT_THROW(observed_event_rate(3, 5, 5), UndefinedError);
}

TEST(ObservedEventRateProperty, MatchesCountOverSpan) {
  std::mt19937_64 rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    RingBuffer buf(64);
    Nanos t = rng() % 1000;
    const int n = 2 + static_cast<int>(rng() % 200);
    for (int i = 0; i < n; ++i) {
      t += 1 + rng() % 100'000;
      buf.record(make_event(t, "e"));
    }
    const auto events = buf.events();
    const Nanos span = events.back().ts - events.front().ts;
    EXPECT_EQ(observed_event_rate(buf),
              Rational::of(static_cast<unsigned __int128>(events.size() - 1) * kNanosPerSecond,
                           span));
  }
}

TEST(FlushSnapshot, WritesEventsAndMeta) {
  TempDir dir;
  RingBuffer buf(3);
  for (Nanos t = 1; t <= 5; ++t) buf.record(make_event(t, "e", 1, {{"i", t}}));
  const auto meta = flush_snapshot(buf, trigger_at(5), dir.path(), std::nullopt, 2);
  EXPECT_EQ(meta.event_count, 3u);
  EXPECT_EQ(meta.ts_first, 3u);
  EXPECT_EQ(meta.ts_last, 5u);
  EXPECT_EQ(meta.suppressed_triggers, 2u);
  EXPECT_EQ(meta.stem(), "snapshot_5_apache_r1");
  const auto text = testing::slurp(meta.snapshot_path);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(ts_of(read_snapshot(meta.snapshot_path).events), (std::vector<Nanos>{3, 4, 5}));

  const auto back = read_snapshot_meta(dir / "snapshot_5_apache_r1.meta.json");
  EXPECT_EQ(back.trigger_spec, "apache");
  EXPECT_EQ(back.trigger_key, "r1");
  EXPECT_EQ(back.trigger_duration, 10u);
  EXPECT_EQ(back.flushed_at, 5u);
  EXPECT_EQ(back.event_count, 3u);
  EXPECT_EQ(back.suppressed_triggers, 2u);
  EXPECT_EQ(back.snapshot_path, meta.snapshot_path);
  ASSERT_TRUE(back.observed_event_rate.has_value());
  EXPECT_EQ(*back.observed_event_rate, Rational(1'000'000'000));
}

TEST(FlushSnapshot, MetaKeys) {
  TempDir dir;
  RingBuffer buf(2);
  buf.record(make_event(1, "e"));
  const auto meta = flush_snapshot(buf, trigger_at(9), dir.path());
  const auto j = nlohmann::json::parse(testing::slurp(dir / (meta.stem() + ".meta.json")));
  for (const char* k : {"trigger_spec", "trigger_key", "duration", "flushed_at", "event_count",
                        "ts_first", "ts_last", "observed_event_rate", "dropped_fields",
                        "suppressed_triggers"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  // One event spans no time, so there is no rate.
  EXPECT_TRUE(j["observed_event_rate"].is_null());
}

TEST(FlushSnapshot, EmptyRingIsPrecondition) {
  TempDir dir;
  RingBuffer buf(4);
  EXPECT_THROW(flush_snapshot(buf, trigger_at(1), dir.path()), PreconditionError);
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
}

TEST(FlushSnapshot, UnwritableDirIsIoError) {
  RingBuffer buf(4);
  buf.record(make_event(1, "e"));
  EXPECT_THROW(flush_snapshot(buf, trigger_at(1), "/nonexistent/dir/x"), IoError);
}

TEST(FlushSnapshot, DoesNotClearAndOverlaps) {
  TempDir dir;
  RingBuffer buf(8);
  for (Nanos t = 1; t <= 20; ++t) buf.record(make_event(t, "e"));
  const auto a = flush_snapshot(buf, trigger_at(20, "a"), dir.path());
  const auto b = flush_snapshot(buf, trigger_at(20, "b"), dir.path());
  EXPECT_EQ(testing::slurp(a.snapshot_path), testing::slurp(b.snapshot_path));

  buf.record(make_event(21, "e"));
  const auto c = flush_snapshot(buf, trigger_at(21, "c"), dir.path());
  const auto ea = read_snapshot(a.snapshot_path).events;
  const auto ec = read_snapshot(c.snapshot_path).events;
  std::set<Nanos> sa, sc;
  for (const auto& e : ea) sa.insert(e.ts);
  for (const auto& e : ec) sc.insert(e.ts);
  std::vector<Nanos> shared;
  std::set_intersection(sa.begin(), sa.end(), sc.begin(), sc.end(),
                        std::back_inserter(shared));
  EXPECT_EQ(shared.size(), buf.capacity() - 1);
}

TEST(FlushSnapshot, FileIsTsOrdered) {
  TempDir dir;
  RingBuffer buf(16);
  for (Nanos t : {5u, 3u, 9u, 1u, 9u, 4u}) buf.record(make_event(t, "e"));
  const auto meta = flush_snapshot(buf, trigger_at(10), dir.path());
  const auto ts = ts_of(read_snapshot(meta.snapshot_path).events);
  EXPECT_TRUE(std::is_sorted(ts.begin(), ts.end()));
  EXPECT_EQ(meta.ts_first, 1u);
  EXPECT_EQ(meta.ts_last, 9u);
}

TEST(FlushSnapshot, AsyncMatchesSync) {
  TempDir a, b;
  RingBuffer buf(100);
  for (Nanos t = 0; t < 250; ++t) buf.record(make_event(t, "e", 1, {{"v", "x" + std::to_string(t % 7)}}));
  const auto sync = flush_snapshot(buf, trigger_at(249), a.path());
  auto fut = flush_snapshot_async(buf, trigger_at(249), b.path());
  // The writer keeps going while the worker encodes.
  for (Nanos t = 250; t < 5000; ++t) buf.record(make_event(t, "late", 2, {{"v", "y" + std::to_string(t)}}));
  const auto async = fut.get();
  EXPECT_EQ(testing::slurp(sync.snapshot_path), testing::slurp(async.snapshot_path));
}

TEST(ReadSnapshot, BadLineNamesLineNumber) {
  TempDir dir;
  testing::spit(dir / "s.jsonl",
                serialize_event(make_event(1, "e")) + "\n" + "{broken\n");
  try {
    read_snapshot(dir / "s.jsonl");
    FAIL();
  } catch (const LineError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(FlushDebouncer, OnePerCooldown) {
  FlushDebouncer d(kNanosPerSecond);
  EXPECT_TRUE(d.admit(0));
  EXPECT_FALSE(d.admit(500'000'000));
  EXPECT_FALSE(d.admit(999'999'999));
  EXPECT_EQ(d.pending_suppressed(), 2u);
  EXPECT_TRUE(d.admit(kNanosPerSecond));
  EXPECT_EQ(d.take_suppressed(), 2u);
  EXPECT_EQ(d.pending_suppressed(), 0u);
  EXPECT_EQ(d.total_suppressed(), 2u);
}

TEST(SnapshotStem, Sanitized) {
  EXPECT_EQ(snapshot_stem(12, "apache", "a/b c"), "snapshot_12_apache_a_b_c");
  EXPECT_EQ(snapshot_stem(0, "", ""), "snapshot_0____");
}

}  // namespace
}  // namespace tiertrace
