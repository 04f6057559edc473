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

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tiertrace.hpp"

namespace tiertrace {
namespace {

WorkloadConfig small_config(double duration_s = 1, double rate = 10) {
  WorkloadConfig c;
  c.duration_s = duration_s;
  c.request_rate = rate;
  c.layers = default_layers();
  c.kernel_noise = 500;
  return c;
}

std::size_t count_named(const TraceStream& s, const std::string& name) {
  std::size_t n = 0;
  for (const auto& e : s.events) n += e.name == name;
  return n;
}

RequestSpec spec_of(const LayerConfig& l) { return spec_from_layer(l); }

TEST(Xorshift64Star, KnownSequence) {
  // Frozen so any change to the algorithm or seeding shows up here.
  Xorshift64Star a(1), b(1), c(2);
  std::vector<std::uint64_t> first;
  for (int i = 0; i < 3; ++i) first.push_back(a.next());
  for (auto v : first) EXPECT_EQ(b.next(), v);
  EXPECT_NE(c.next(), first[0]);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Generate, RequestCountIsRateTimesDuration) {
  const auto s = generate(small_config(1, 10));
  EXPECT_EQ(count_named(s, "apache_request_received"), 10u);
  EXPECT_EQ(count_named(s, "apache_request_handled"), 10u);
  const std::vector<RequestSpec> specs{spec_of(default_layers()[0])};
  EXPECT_EQ(oracle::pair_requests(s.events, specs).size(), 10u);
}

TEST(Generate, FaultCrossesThreshold) {
  const auto cfg = small_config(1, 10);
  const std::vector<FaultSpec> faults{{500 * kNanosPerMilli, "db", 2 * kNanosPerSecond, 1}};
  const auto s = generate(cfg, faults);
  const std::vector<RequestSpec> specs{spec_of(cfg.layers[0])};
  std::size_t slow = 0;
  for (const auto& r : oracle::pair_requests(s.events, specs)) slow += r.duration > kNanosPerSecond;
  EXPECT_GE(slow, 1u);
}

TEST(Generate, SameSeedSameBytes) {
  const auto cfg = small_config(3, 20);
  std::ostringstream a, b, c;
  generate_jsonl(cfg, {}, a);
  generate_jsonl(cfg, {}, b);
  auto other = cfg;
  other.seed = 2;
  generate_jsonl(other, {}, c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Generate, HundredThousandEventsPerSecond) {
  auto cfg = small_config(2, 20);
  cfg.kernel_noise = 100'000;
  const auto s = generate(cfg);
  const double rate = observed_event_rate(s.events).to_double();
  EXPECT_NEAR(rate, 100'000.0, 5'000.0);
}

TEST(Generate, RejectsBadJitter) {
  auto cfg = small_config();
  cfg.layers[1].jitter = 1.5;
  try {
    generate(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "jitter");
  }
}

TEST(Generate, RejectsBadFaults) {
  const auto cfg = small_config();
  EXPECT_THROW(generate(cfg, std::vector<FaultSpec>{{0, "nope", 1, 1}}), ConfigError);
  EXPECT_THROW(generate(cfg, std::vector<FaultSpec>{{5 * kNanosPerSecond, "db", 1, 1}}),
               ConfigError);
}

// Well-formed: ingestible with zero late events, every start ends, every
// frame closes, and faults are visible.
TEST(GenerateProperty, StructurallySound) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = small_config(4, 15);
    cfg.seed = seed;
    const std::vector<FaultSpec> faults{{kNanosPerSecond, "db", 400 * kNanosPerMilli, 3},
                                        {2 * kNanosPerSecond, "php", 300 * kNanosPerMilli, 2}};
    std::ostringstream out;
    generate_jsonl(cfg, faults, out);
    std::vector<std::string> lines;
    std::istringstream in(out.str());
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    const auto r = ingest_stream(lines, 0);
    ASSERT_EQ(r.late_events, 0u);
    ASSERT_TRUE(r.parse_errors.empty());
    const auto& ev = r.stream.events;

    for (const auto& l : cfg.layers) {
      const auto spec = spec_of(l);
      EXPECT_EQ(count_named(r.stream, l.start_name), count_named(r.stream, l.end_name));
      const auto recs = oracle::pair_requests(ev, {spec});
      EXPECT_EQ(recs.size(), count_named(r.stream, l.start_name)) << l.label;
      for (const auto& f : faults) {
        if (f.layer != l.label) continue;
        std::size_t slow = 0;
        for (const auto& rec : recs) slow += rec.duration > l.base_latency + f.extra_latency / 2;
        EXPECT_GE(slow, f.count) << l.label;
      }
    }
    const auto calls = oracle::top_function_calls(ev, 100);
    EXPECT_EQ(calls.unbalanced, 0u);
    for (const auto& c : calls.calls) EXPECT_FALSE(c.truncated);
    const auto sys = oracle::syscall_stats(ev, 100);
    EXPECT_EQ(sys.unmatched, 0u);
    EXPECT_EQ(sys.truncated, 0u);
    EXPECT_EQ(oracle::irq_stats(ev).unmatched, 0u);
  }
}

TEST(Generate, NestingOrder) {
  const auto s = generate(small_config(1, 1));
  std::vector<std::string> user;
  for (const auto& e : s.events) {
    if (e.name.find("request") != std::string::npos || e.name.find("query") != std::string::npos) {
      if (e.name.rfind("func_", 0) != 0) user.push_back(e.name);
    }
  }
  EXPECT_EQ(user, (std::vector<std::string>{
                      "apache_request_received", "php_request_start", "db_query_start",
                      "db_query_end", "php_request_end", "apache_request_handled"}));
}

}  // namespace
}  // namespace tiertrace
