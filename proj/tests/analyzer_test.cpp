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
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tiertrace/analyzer.hpp"

namespace tiertrace {
namespace {

using testing::keyed_spec;
using testing::make_event;

TraceStream stream_of(std::vector<Event> events) {
  TraceStream s;
  s.events = std::move(events);
  return s;
}

const RequestSpec kReq = keyed_spec("apache", "req_start", "req_end");
const RequestSpec kQuery = keyed_spec("db", "q_start", "q_end", kDefaultThreshold, "query_id");

std::vector<std::string> labels(const TopNSection& s) {
  std::vector<std::string> out;
  for (const auto& r : s.rows) out.push_back(r.label);
  return out;
}

TEST(TopRequests, SortedByDuration) {
  const auto s = stream_of({
      make_event(0, "req_start", 1, {{"req_id", "a"}}),
      make_event(1, "req_start", 2, {{"req_id", "b"}}),
      make_event(2, "req_start", 3, {{"req_id", "c"}}),
      make_event(50'000'002, "req_end", 3, {{"req_id", "c"}}),
      make_event(300'000'000, "req_end", 1, {{"req_id", "a"}}),
      make_event(1'200'000'001, "req_end", 2, {{"req_id", "b"}}),
  });
  const auto top = top_requests(s, kReq, 2);
  ASSERT_EQ(top.rows.size(), 2u);
  EXPECT_EQ(top.rows[0].value, 1'200'000'000u);
  EXPECT_EQ(top.rows[1].value, 300'000'000u);
  EXPECT_EQ(top.total, 1'550'000'000u);
  EXPECT_EQ(top_requests(s, kReq, 50).rows.size(), 3u);
  EXPECT_EQ(top.title, "Top apache Requests");
}

TEST(TopRequests, TieBreakByLabel) {
  const auto s = stream_of({
      make_event(0, "req_start", 1, {{"req_id", "z"}}),
      make_event(0, "req_start", 1, {{"req_id", "m"}}),
      make_event(5, "req_end", 1, {{"req_id", "z"}}),
      make_event(5, "req_end", 1, {{"req_id", "m"}}),
  });
  EXPECT_EQ(labels(top_requests(s, kReq, 10)), (std::vector<std::string>{"m", "z"}));
}

TEST(TopRequests, NoDataWhenSpecAbsent) {
  const auto top = top_requests(stream_of({make_event(1, "sched_switch")}), kReq, 5);
  EXPECT_FALSE(top.has_data);
  EXPECT_TRUE(top.rows.empty());
}

TEST(TopFunctionCalls, Nested) {
  const auto s = stream_of({
      make_event(0, "func_entry", 1, {{"func", "f"}}),
      make_event(10, "func_entry", 1, {{"func", "g"}}),
      make_event(40, "func_exit", 1, {{"func", "g"}}),
      make_event(100, "func_exit", 1, {{"func", "f"}}),
  });
  const auto r = top_function_calls(s, "func_entry", "func_exit", 10);
  ASSERT_EQ(r.calls.size(), 2u);
  EXPECT_EQ(r.calls[0].function, "g");
  EXPECT_EQ(r.calls[0].duration, 30u);
  EXPECT_EQ(r.calls[0].depth, 1u);
  EXPECT_EQ(r.calls[1].function, "f");
  EXPECT_EQ(r.calls[1].duration, 100u);
  EXPECT_EQ(r.calls[1].depth, 0u);
  EXPECT_EQ(r.section.rows[0].detail, "(1 call)");
}

TEST(TopFunctionCalls, OrphanExit) {
  const auto r = top_function_calls(
      stream_of({make_event(5, "func_exit", 1, {{"func", "f"}})}), "func_entry", "func_exit", 10);
  EXPECT_TRUE(r.calls.empty());
  EXPECT_EQ(r.unbalanced, 1u);
}

TEST(TopFunctionCalls, OpenFrameClosedAtEdge) {
  const auto r = top_function_calls(
      stream_of({make_event(5, "func_entry", 1, {{"func", "f"}}), make_event(50, "other", 2)}),
      "func_entry", "func_exit", 10);
  ASSERT_EQ(r.calls.size(), 1u);
  EXPECT_TRUE(r.calls[0].truncated);
  EXPECT_EQ(r.calls[0].ts_exit, 50u);
  EXPECT_EQ(r.truncated, 1u);
  EXPECT_TRUE(r.section.rows[0].truncated);
}

TEST(TopQueries, LongestStatement) {
  const auto s = stream_of({
      make_event(0, "q_start", 1, {{"query_id", "1"}, {"statement", "SELECT a"}}),
      make_event(5'000'000, "q_end", 1, {{"query_id", "1"}}),
      make_event(6'000'000, "q_start", 1, {{"query_id", "2"}, {"statement", "SELECT b"}}),
      make_event(86'000'000, "q_end", 1, {{"query_id", "2"}}),
      make_event(90'000'000, "q_start", 1, {{"query_id", "3"}, {"statement", "SELECT c"}}),
      make_event(2'090'000'000, "q_end", 1, {{"query_id", "3"}}),
  });
  const auto top = top_queries(s, kQuery, 1);
  ASSERT_EQ(top.rows.size(), 1u);
  EXPECT_EQ(top.rows[0].label, "SELECT c");
  EXPECT_EQ(top.rows[0].value, 2'000'000'000u);
}

TEST(TopQueries, FallsBackToKey) {
  const auto s = stream_of({make_event(0, "q_start", 1, {{"query_id", "q9"}}),
                            make_event(7, "q_end", 1, {{"query_id", "q9"}})});
  EXPECT_EQ(labels(top_queries(s, kQuery, 5)), (std::vector<std::string>{"q9"}));
}

TEST(IoDistribution, BucketPlacement) {
  const auto h = io_distribution(stream_of({make_event(0, "block_rq_issue", 1, {{"rq", 1}}),
                                            make_event(5000, "block_rq_complete", 1, {{"rq", 1}})}));
  ASSERT_EQ(h.total, 1u);
  // [4 us, 8 us) is edges[2]..edges[3]; its counter sits at index 3.
  EXPECT_EQ(h.edges[2], 4000u);
  EXPECT_EQ(h.edges[3], 8000u);
  EXPECT_EQ(h.counts[3], 1u);
  EXPECT_EQ(h.min, 5000u);
  EXPECT_EQ(h.max, 5000u);
}

TEST(IoDistribution, Empty) {
  const auto h = io_distribution(stream_of({}));
  EXPECT_EQ(h.total, 0u);
  EXPECT_FALSE(h.has_data);
  for (auto c : h.counts) EXPECT_EQ(c, 0u);
}

TEST(IoDistribution, RandomLatenciesMatchDirectClassification) {
  std::mt19937_64 rng(44);
  std::vector<Event> ev;
  std::vector<Nanos> lats;
  Nanos t = 0;
  for (int i = 0; i < 1000; ++i) {
    const Nanos lat = rng() % (1ull << (rng() % 36));
    lats.push_back(lat);
    ev.push_back(make_event(t, "block_rq_issue", 1, {{"rq", std::uint64_t(i)}}));
    ev.push_back(make_event(t + lat, "block_rq_complete", 1, {{"rq", std::uint64_t(i)}}));
    t += 1;
  }
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
  const auto h = io_distribution(stream_of(ev));
  std::vector<std::uint64_t> expected(h.edges.size() + 1, 0);
  for (auto lat : lats) ++expected[oracle::classify(lat, h.edges)];
  EXPECT_EQ(h.counts, expected);
  EXPECT_EQ(h.total, 1000u);
}

TEST(SyscallStats, RankedByTotalTime) {
  const auto s = stream_of({
      make_event(0, "syscall_entry_read", 1),
      make_event(10'000, "syscall_exit_read", 1),
      make_event(20'000, "syscall_entry_write", 1),
      make_event(70'000, "syscall_exit_write", 1),
      make_event(80'000, "syscall_entry_read", 2),
      make_event(100'000, "syscall_exit_read", 2),
      make_event(110'000, "syscall_entry_futex", 3),
  });
  const auto r = syscall_stats(s, 2);
  ASSERT_EQ(r.section.rows.size(), 2u);
  EXPECT_EQ(r.section.rows[0].label, "write");
  EXPECT_EQ(r.section.rows[0].value, 50'000u);
  EXPECT_EQ(r.section.rows[1].label, "read");
  EXPECT_EQ(r.section.rows[1].value, 30'000u);
  EXPECT_EQ(r.section.rows[1].detail, "(2 calls)");
  EXPECT_EQ(r.truncated, 1u);
  EXPECT_EQ(r.section.total, 80'000u);
}

TEST(IrqStats, Counting) {
  std::vector<Event> ev;
  Nanos t = 0;
  for (int i = 0; i < 5; ++i) {
    ev.push_back(make_event(t++, "irq_handler_entry", 0, {{"irq", 3}}, Source::kKernel));
    ev.push_back(make_event(t++, "irq_handler_exit", 0, {{"irq", 3}}, Source::kKernel));
  }
  ev.push_back(make_event(t++, "irq_handler_entry", 0, {{"irq", 7}}, Source::kKernel));
  ev.push_back(make_event(t++, "irq_handler_exit", 0, {{"irq", 7}}, Source::kKernel));
  const auto r = irq_stats(stream_of(ev));
  EXPECT_EQ(labels(r.section), (std::vector<std::string>{"irq 3", "irq 7"}));
  EXPECT_EQ(r.section.rows[0].value, 5u);
  EXPECT_EQ(r.section.rows[1].value, 1u);
  EXPECT_EQ(r.total_duration.at("3"), 5u);
}

TEST(IrqStats, Empty) {
  const auto r = irq_stats(stream_of({make_event(1, "x")}));
  EXPECT_FALSE(r.section.has_data);
  EXPECT_TRUE(r.section.rows.empty());
}

void expect_rows(const TopNSection& got, const oracle::Section& want) {
  ASSERT_EQ(got.rows.size(), want.rows.size());
  for (std::size_t i = 0; i < want.rows.size(); ++i) {
    EXPECT_EQ(got.rows[i].label, want.rows[i].label) << i;
    EXPECT_EQ(got.rows[i].value, want.rows[i].value) << i;
    EXPECT_EQ(got.rows[i].detail, want.rows[i].detail) << i;
    EXPECT_EQ(got.rows[i].truncated, want.rows[i].truncated) << i;
    EXPECT_DOUBLE_EQ(got.rows[i].share, want.rows[i].share) << i;
  }
  EXPECT_EQ(got.total, want.total);
}

std::vector<CallRecord> sorted_calls(std::vector<CallRecord> c) {
  std::sort(c.begin(), c.end(), [](const CallRecord& a, const CallRecord& b) {
    return std::tie(a.tid, a.ts_entry, a.depth, a.ts_exit, a.function) <
           std::tie(b.tid, b.ts_entry, b.depth, b.ts_exit, b.function);
  });
  return c;
}

// Every section against its independent recomputation, 100 random traces.
TEST(AnalyzerOracle, AllSections) {
  std::mt19937_64 rng(1234);
  for (int iter = 0; iter < 100; ++iter) {
    const TraceStream s = testing::random_analysis_trace(rng, 1 + rng() % 1000);
    const std::size_t n = 1 + rng() % 12;
    SCOPED_TRACE("iteration " + std::to_string(iter));

    expect_rows(top_requests(s, kReq, n), oracle::top_requests(s.events, kReq, n));
    expect_rows(top_queries(s, kQuery, n), oracle::top_queries(s.events, kQuery, n));

    const auto calls = top_function_calls(s, "func_entry", "func_exit", n);
    const auto want_calls = oracle::top_function_calls(s.events, n);
    expect_rows(calls.section, want_calls.section);
    EXPECT_EQ(sorted_calls(calls.calls), sorted_calls(want_calls.calls));
    EXPECT_EQ(calls.unbalanced, want_calls.unbalanced);

    const auto sys = syscall_stats(s, n);
    const auto want_sys = oracle::syscall_stats(s.events, n);
    expect_rows(sys.section, want_sys.section);
    EXPECT_EQ(sys.unmatched, want_sys.unmatched);
    EXPECT_EQ(sys.truncated, want_sys.truncated);

    const auto irq = irq_stats(s);
    const auto want_irq = oracle::irq_stats(s.events);
    expect_rows(irq.section, want_irq.section);
    EXPECT_EQ(irq.total_duration, want_irq.total_duration);
    EXPECT_EQ(irq.unmatched, want_irq.unmatched);

    const auto h = io_distribution(s);
    const auto want_h = oracle::io_distribution(s.events, kNanosPerMicro, 30);
    EXPECT_EQ(h.counts, want_h.counts);
    EXPECT_EQ(h.total, want_h.total);
    EXPECT_EQ(h.min, want_h.min);
    EXPECT_EQ(h.max, want_h.max);
  }
}

TEST(AnalyzerProperty, ConservationAndNesting) {
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 50; ++iter) {
    const TraceStream s = testing::random_analysis_trace(rng, 800);
    const auto sys = syscall_stats(s, SIZE_MAX);
    std::uint64_t sum = 0;
    for (const auto& r : sys.section.rows) sum += r.value;
    EXPECT_EQ(sum, sys.section.total);

    const auto h = io_distribution(s);
    std::uint64_t hsum = 0;
    for (auto c : h.counts) hsum += c;
    EXPECT_EQ(hsum, h.total);

    const auto calls = top_function_calls(s, "func_entry", "func_exit", 5).calls;
    for (const auto& a : calls) {
      for (const auto& b : calls) {
        if (&a == &b || a.tid != b.tid) continue;
        const bool disjoint = a.ts_exit <= b.ts_entry || b.ts_exit <= a.ts_entry;
        const bool a_in_b = b.ts_entry <= a.ts_entry && a.ts_exit <= b.ts_exit;
        const bool b_in_a = a.ts_entry <= b.ts_entry && b.ts_exit <= a.ts_exit;
        EXPECT_TRUE(disjoint || a_in_b || b_in_a);
      }
    }
  }
}

TEST(AnalyzeStream, KernelOnlySnapshotHasNoUserData) {
  AnalyzerConfig cfg;
  cfg.request_specs = {kReq};
  cfg.query_spec = kQuery;
  const auto r = analyze_stream(
      stream_of({make_event(0, "syscall_entry_read", 1, {}, Source::kKernel),
                 make_event(9, "syscall_exit_read", 1, {}, Source::kKernel)}),
      cfg);
  for (const auto& s : r.user_sections) EXPECT_FALSE(s.has_data) << s.title;
  EXPECT_TRUE(r.syscalls.has_data);
}

}  // namespace
}  // namespace tiertrace
