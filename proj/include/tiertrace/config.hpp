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

// The single JSON configuration document shared by every subcommand. All
// keys are optional; unknown keys are rejected so typos surface early.
//
// {
//   "specs": [{"label": "apache", "start": "apache_request_received",
//              "end": "apache_request_handled", "key": "req_id",
//              "threshold_ns": 1000000000}],
//   "detector": {"enabled": true, "statistical": false, "k": 3, "window": 100},
//   "ring_capacity": 1000000,
//   "cooldown_ns": 1000000000,
//   "out": "out",
//   "on_anomaly_exec": "/path/to/hook",
//   "max_skew_ns": 1000000,
//   "bucket_width_ns": 1000000000,
//   "analyzer": {"requests": [<spec>...], "queries": <spec> | null,
//                "func_entry": "func_entry", "func_exit": "func_exit",
//                "top_n": 10, "hist_base_ns": 1000, "hist_max_exponent": 30},
//   "workload": {"duration_s": 60, "request_rate": 20, "kernel_noise": 2000,
//                "seed": 1,
//                "layers": [{"label": "db", "start": "db_query_start",
//                            "end": "db_query_end", "key": "query_id",
//                            "base_latency_ns": 10000000, "jitter": 0.5,
//                            "kind": "db"}],
//                "faults": [{"at_ns": 30000000000, "layer": "db",
//                            "extra_latency_ns": 2000000000, "count": 1}]}
// }

#ifndef TIERTRACE_CONFIG_HPP_
#define TIERTRACE_CONFIG_HPP_

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tiertrace/analyzer.hpp"
#include "tiertrace/detailed_session.hpp"
#include "tiertrace/error.hpp"
#include "tiertrace/light_session.hpp"
#include "tiertrace/simulator.hpp"

namespace tiertrace {

inline constexpr std::size_t kDefaultRingCapacity = 1'000'000;

struct PipelineConfig {
  std::vector<RequestSpec> specs;
  DetectorConfig detector;
  std::size_t ring_capacity = kDefaultRingCapacity;
  Nanos cooldown = kDefaultCooldown;
  std::filesystem::path out_dir = "out";
  std::optional<std::string> on_anomaly_exec;
  Nanos max_skew = kDefaultMaxSkew;
  Nanos bucket_width = kNanosPerSecond;
  AnalyzerConfig analyzer;
  WorkloadConfig workload;
  std::vector<FaultSpec> faults;

  void validate() const {
    if (specs.empty()) throw ConfigError("specs", "at least one request spec required");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      specs[i].validate();
      for (std::size_t j = 0; j < i; ++j) {
        if (specs[j].label == specs[i].label) {
          throw ConfigError("specs", "duplicate label '" + specs[i].label + "'");
        }
      }
    }
    if (ring_capacity == 0) throw ConfigError("ring_capacity", "must be >= 1");
    if (bucket_width == 0) throw ConfigError("bucket_width_ns", "must be > 0");
    if (detector.statistical && detector.window == 0) {
      throw ConfigError("detector.window", "must be >= 1");
    }
    if (analyzer.top_n == 0) throw ConfigError("analyzer.top_n", "must be >= 1");
  }
};

inline RequestSpec spec_from_layer(const LayerConfig& l, Nanos threshold = kDefaultThreshold) {
  return RequestSpec{l.label, l.start_name, l.end_name, l.key_field, threshold};
}

// Light mode watches the outermost layer; the analyzer covers every layer,
// with the db layer reported as queries.
inline PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.workload.layers = default_layers();
  c.specs.push_back(spec_from_layer(c.workload.layers.front()));
  for (const auto& l : c.workload.layers) {
    if (l.kind == LayerKind::kDb) {
      c.analyzer.query_spec = spec_from_layer(l);
    } else {
      c.analyzer.request_specs.push_back(spec_from_layer(l));
    }
  }
  return c;
}

namespace detail {

using Json = nlohmann::json;

inline void check_keys(const Json& j, std::string_view where,
                       std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where), "expected object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) {
      throw ConfigError(where.empty() ? it.key() : std::string(where) + "." + it.key(),
                        "unknown key");
    }
  }
}

template <class T>
T get_as(const Json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, e.what());
  }
}

inline std::uint64_t get_u64(const Json& j, const char* key, const std::string& path) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) {
    // Accept integral floats such as 1e9.
    if (v.is_number_float() && v.get<double>() >= 0 &&
        v.get<double>() == static_cast<double>(static_cast<std::uint64_t>(v.get<double>()))) {
      return static_cast<std::uint64_t>(v.get<double>());
    }
    throw ConfigError(path, "expected unsigned integer");
  }
  return v.get<std::uint64_t>();
}

inline double get_number(const Json& j, const char* key, const std::string& path) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path, "expected number");
  return v.get<double>();
}

inline RequestSpec parse_spec(const Json& j, const std::string& path) {
  check_keys(j, path, {"label", "start", "end", "key", "threshold_ns"});
  RequestSpec s;
  s.label = get_as<std::string>(j, "label", path + ".label");
  s.start_name = get_as<std::string>(j, "start", path + ".start");
  s.end_name = get_as<std::string>(j, "end", path + ".end");
  if (j.contains("key") && !j["key"].is_null()) {
    s.correlation_key = get_as<std::string>(j, "key", path + ".key");
  }
  if (j.contains("threshold_ns")) {
    s.threshold = get_u64(j, "threshold_ns", path + ".threshold_ns");
  }
  return s;
}

inline LayerKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "web") return LayerKind::kWeb;
  if (s == "app") return LayerKind::kApp;
  if (s == "db") return LayerKind::kDb;
  if (s == "plain") return LayerKind::kPlain;
  throw ConfigError(path, "expected web|app|db|plain");
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  using detail::get_u64;
  PipelineConfig c = default_pipeline_config();
  detail::check_keys(j, "", {"specs", "detector", "ring_capacity", "cooldown_ns", "out",
                             "on_anomaly_exec", "max_skew_ns", "bucket_width_ns",
                             "analyzer", "workload"});
  if (j.contains("specs")) {
    c.specs.clear();
    const auto& a = j["specs"];
    if (!a.is_array()) throw ConfigError("specs", "expected array");
    for (std::size_t i = 0; i < a.size(); ++i) {
      c.specs.push_back(detail::parse_spec(a[i], "specs[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    detail::check_keys(d, "detector", {"enabled", "statistical", "k", "window"});
    if (d.contains("enabled")) c.detector.enabled = detail::get_as<bool>(d, "enabled", "detector.enabled");
    if (d.contains("statistical")) {
      c.detector.statistical = detail::get_as<bool>(d, "statistical", "detector.statistical");
    }
    if (d.contains("k")) c.detector.k = detail::get_number(d, "k", "detector.k");
    if (d.contains("window")) c.detector.window = get_u64(d, "window", "detector.window");
  }
  if (j.contains("ring_capacity")) c.ring_capacity = get_u64(j, "ring_capacity", "ring_capacity");
  if (j.contains("cooldown_ns")) c.cooldown = get_u64(j, "cooldown_ns", "cooldown_ns");
  if (j.contains("out")) c.out_dir = detail::get_as<std::string>(j, "out", "out");
  if (j.contains("on_anomaly_exec") && !j["on_anomaly_exec"].is_null()) {
    c.on_anomaly_exec = detail::get_as<std::string>(j, "on_anomaly_exec", "on_anomaly_exec");
  }
  if (j.contains("max_skew_ns")) c.max_skew = get_u64(j, "max_skew_ns", "max_skew_ns");
  if (j.contains("bucket_width_ns")) {
    c.bucket_width = get_u64(j, "bucket_width_ns", "bucket_width_ns");
  }
  if (j.contains("analyzer")) {
    const auto& a = j["analyzer"];
    detail::check_keys(a, "analyzer", {"requests", "queries", "func_entry", "func_exit",
                                       "top_n", "hist_base_ns", "hist_max_exponent"});
    if (a.contains("requests")) {
      c.analyzer.request_specs.clear();
      const auto& r = a["requests"];
      if (!r.is_array()) throw ConfigError("analyzer.requests", "expected array");
      for (std::size_t i = 0; i < r.size(); ++i) {
        c.analyzer.request_specs.push_back(
            detail::parse_spec(r[i], "analyzer.requests[" + std::to_string(i) + "]"));
      }
    }
    if (a.contains("queries")) {
      if (a["queries"].is_null()) {
        c.analyzer.query_spec.reset();
      } else {
        c.analyzer.query_spec = detail::parse_spec(a["queries"], "analyzer.queries");
      }
    }
    if (a.contains("func_entry")) {
      c.analyzer.func_entry = detail::get_as<std::string>(a, "func_entry", "analyzer.func_entry");
    }
    if (a.contains("func_exit")) {
      c.analyzer.func_exit = detail::get_as<std::string>(a, "func_exit", "analyzer.func_exit");
    }
    if (a.contains("top_n")) c.analyzer.top_n = get_u64(a, "top_n", "analyzer.top_n");
    if (a.contains("hist_base_ns")) {
      c.analyzer.histogram.base = get_u64(a, "hist_base_ns", "analyzer.hist_base_ns");
      if (c.analyzer.histogram.base == 0) {
        throw ConfigError("analyzer.hist_base_ns", "must be > 0");
      }
    }
    if (a.contains("hist_max_exponent")) {
      const auto e = get_u64(a, "hist_max_exponent", "analyzer.hist_max_exponent");
      if (e > 40) throw ConfigError("analyzer.hist_max_exponent", "must be <= 40");
      c.analyzer.histogram.max_exponent = static_cast<unsigned>(e);
    }
  }
  if (j.contains("workload")) {
    const auto& w = j["workload"];
    detail::check_keys(w, "workload", {"duration_s", "request_rate", "kernel_noise",
                                       "seed", "layers", "faults"});
    if (w.contains("duration_s")) {
      c.workload.duration_s = detail::get_number(w, "duration_s", "workload.duration_s");
    }
    if (w.contains("request_rate")) {
      c.workload.request_rate = detail::get_number(w, "request_rate", "workload.request_rate");
    }
    if (w.contains("kernel_noise")) {
      c.workload.kernel_noise = detail::get_number(w, "kernel_noise", "workload.kernel_noise");
    }
    if (w.contains("seed")) c.workload.seed = get_u64(w, "seed", "workload.seed");
    if (w.contains("layers")) {
      c.workload.layers.clear();
      const auto& ls = w["layers"];
      if (!ls.is_array()) throw ConfigError("workload.layers", "expected array");
      for (std::size_t i = 0; i < ls.size(); ++i) {
        const std::string p = "workload.layers[" + std::to_string(i) + "]";
        const auto& l = ls[i];
        detail::check_keys(l, p, {"label", "start", "end", "key", "base_latency_ns",
                                  "jitter", "kind"});
        LayerConfig lc;
        lc.label = detail::get_as<std::string>(l, "label", p + ".label");
        lc.start_name = detail::get_as<std::string>(l, "start", p + ".start");
        lc.end_name = detail::get_as<std::string>(l, "end", p + ".end");
        lc.key_field = l.contains("key") ? detail::get_as<std::string>(l, "key", p + ".key")
                                         : std::string("req_id");
        lc.base_latency = get_u64(l, "base_latency_ns", p + ".base_latency_ns");
        if (l.contains("jitter")) lc.jitter = detail::get_number(l, "jitter", p + ".jitter");
        if (l.contains("kind")) {
          lc.kind = detail::parse_kind(detail::get_as<std::string>(l, "kind", p + ".kind"),
                                       p + ".kind");
        }
        c.workload.layers.push_back(std::move(lc));
      }
    }
    if (w.contains("faults")) {
      const auto& fs = w["faults"];
      if (!fs.is_array()) throw ConfigError("workload.faults", "expected array");
      for (std::size_t i = 0; i < fs.size(); ++i) {
        const std::string p = "workload.faults[" + std::to_string(i) + "]";
        const auto& f = fs[i];
        detail::check_keys(f, p, {"at_ns", "layer", "extra_latency_ns", "count"});
        FaultSpec fault;
        fault.at = get_u64(f, "at_ns", p + ".at_ns");
        fault.layer = detail::get_as<std::string>(f, "layer", p + ".layer");
        fault.extra_latency = get_u64(f, "extra_latency_ns", p + ".extra_latency_ns");
        if (f.contains("count")) fault.count = get_u64(f, "count", p + ".count");
        c.faults.push_back(std::move(fault));
      }
    }
  }
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", e.what());
  }
  return parse_pipeline_config(j);
}

}  // namespace tiertrace

#endif  // TIERTRACE_CONFIG_HPP_
