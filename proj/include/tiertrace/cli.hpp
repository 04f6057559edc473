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

// Command-line front end. Exit codes: 0 success, 1 usage or configuration
// error, 2 I/O error, 3 malformed or empty data.

#ifndef TIERTRACE_CLI_HPP_
#define TIERTRACE_CLI_HPP_

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tiertrace/analyzer.hpp"
#include "tiertrace/config.hpp"
#include "tiertrace/pipeline.hpp"
#include "tiertrace/report.hpp"
#include "tiertrace/simulator.hpp"

namespace tiertrace {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitData = 3 };

namespace cli {

inline PipelineConfig load_or_default(const std::string& path) {
  return path.empty() ? default_pipeline_config() : load_pipeline_config(path);
}

inline int cmd_simulate(const std::string& config_path, const std::string& out_path,
                        std::optional<std::uint64_t> seed, std::ostream& out) {
  PipelineConfig c = load_or_default(config_path);
  if (seed) c.workload.seed = *seed;
  if (out_path.empty() || out_path == "-") {
    generate_jsonl(c.workload, c.faults, out);
    out.flush();
    return kExitOk;
  }
  std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(out_path, "cannot open for writing");
  generate_jsonl(c.workload, c.faults, f);
  f.flush();
  if (!f) throw IoError(out_path, "write failed");
  return kExitOk;
}

inline int cmd_run(const std::string& config_path, const std::string& input,
                   const std::string& out_dir, std::ostream& out, std::ostream& err) {
  PipelineConfig c = load_or_default(config_path);
  if (!out_dir.empty()) c.out_dir = out_dir;
  RunSummary s;
  if (input.empty() || input == "-") {
    s = run_pipeline(c, std::cin, err);
  } else {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw IoError(input, "cannot open input");
    s = run_pipeline(c, in, err);
  }
  write_summary(s, out);
  return kExitOk;
}

inline int cmd_analyze(const std::string& config_path, const std::string& input,
                       const std::string& out_dir, std::ostream& out, std::ostream& err) {
  if (input.empty()) throw ConfigError("input", "a snapshot path is required");
  const PipelineConfig c = load_or_default(config_path);
  const std::filesystem::path snap(input);
  if (!std::filesystem::exists(snap)) throw IoError(snap, "no such snapshot");

  std::optional<SnapshotMeta> meta;
  auto meta_path = snap;
  meta_path.replace_extension(".meta.json");
  if (std::filesystem::exists(meta_path)) {
    meta = read_snapshot_meta(meta_path);
  } else {
    err << "warning: " << meta_path.string()
        << " not found; trigger fields reported as unknown\n";
  }
  const DetailedReport report = build_detailed_report(snap, meta, c.analyzer);
  const std::filesystem::path dir =
      out_dir.empty() ? snap.parent_path() : std::filesystem::path(out_dir);
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const auto target = dir / ("detailed_" + snap.stem().string() + ".txt");
  render_detailed_text(report, target);
  out << target.string() << '\n';
  return kExitOk;
}

inline int cmd_report(const std::string& config_path, const std::string& input,
                      const std::string& out_dir, std::ostream& out) {
  const PipelineConfig c = load_or_default(config_path);
  const std::filesystem::path dir = out_dir.empty() ? c.out_dir : std::filesystem::path(out_dir);
  const std::filesystem::path log =
      input.empty() ? dir / kRequestLogName : std::filesystem::path(input);

  std::ifstream in(log, std::ios::binary);
  if (!in) throw IoError(log, "cannot open request log");
  std::vector<RequestRecord> records;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      records.push_back(parse_request_record(line));
    } catch (const Error& e) {
      throw LineError(n, e.what());
    }
  }
  if (records.empty()) throw PreconditionError("no requests in " + log.string());

  // Link anomalies to whatever snapshots sit next to the output.
  std::vector<SnapshotMeta> metas;
  if (std::filesystem::is_directory(dir)) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.size() > 10 && name.ends_with(".meta.json")) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) metas.push_back(read_snapshot_meta(p));
  }
  std::filesystem::create_directories(dir);
  const auto target = dir / kOverviewName;
  render_overview(build_overview_model(records, c.specs, metas, c.bucket_width), target);
  out << target.string() << '\n';
  return kExitOk;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Two-level request tracing: light pairing, detailed snapshots."};
  app.require_subcommand(1);

  std::string config_path;
  std::string input;
  std::string out_path;
  std::optional<std::uint64_t> seed;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic multi-tier trace");
  sim->add_option("--config", config_path, "JSON config file");
  sim->add_option("--out", out_path, "Output trace path, or - for stdout");
  sim->add_option("--seed", seed, "Override workload.seed");

  auto* run = app.add_subcommand("run", "Trace a stream: light mode plus snapshots");
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--input", input, "Trace path, or - for stdin")->default_str("-");
  run->add_option("--out", out_path, "Output directory (overrides config)");

  auto* analyze = app.add_subcommand("analyze", "Build a detailed report from a snapshot");
  analyze->add_option("--config", config_path, "JSON config file");
  analyze->add_option("--input", input, "Snapshot .jsonl")->required();
  analyze->add_option("--out", out_path, "Output directory");

  auto* report = app.add_subcommand("report", "Render the overview from a request log");
  report->add_option("--config", config_path, "JSON config file");
  report->add_option("--input", input, "Request log (default <out>/requests.jsonl)");
  report->add_option("--out", out_path, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (sim->parsed()) return cli::cmd_simulate(config_path, out_path, seed, out);
    if (run->parsed()) return cli::cmd_run(config_path, input, out_path, out, err);
    if (analyze->parsed()) return cli::cmd_analyze(config_path, input, out_path, out, err);
    if (report->parsed()) return cli::cmd_report(config_path, input, out_path, out);
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace tiertrace

#endif  // TIERTRACE_CLI_HPP_
