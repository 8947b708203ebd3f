// Copyright 2026 The flowrl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// End-to-end composition of a scenario: a deterministic discrete-event run
// (or a threaded live run), the balance reports it produces, the metrics
// stream and the run summary.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowrl/autoscaler.hpp"
#include "flowrl/dataflow.hpp"
#include "flowrl/metrics.hpp"
#include "flowrl/scenario.hpp"
#include "flowrl/trainer.hpp"

namespace flowrl {

enum class RunMode { kSim, kLive };

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  RunMode mode = RunMode::kSim;
  /// Live mode only: wall seconds per simulated second.
  double live_time_scale = 1e-3;
};

struct TrainerSummary {
  Version final_version = 0;
  double busy_seconds = 0.0;
  double wait_seconds = 0.0;
};

struct RaasSummary {
  int gpus = 0;
  bool retired = false;
  std::uint64_t produced = 0;
  std::uint64_t accepted = 0;
  std::uint64_t refreshes = 0;
  double transfer_seconds = 0.0;
  double downtime_seconds = 0.0;
  double busy_seconds = 0.0;
};

struct BalanceReportRecord {
  PolicyId trainer;
  Version version = 0;  // trainer version closing the window
  SimTime time = 0.0;
  BalanceWindow window;
  MaintainResult maintenance;
};

struct RunResult {
  std::string scenario;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::kSim;
  SimTime wall_seconds = 0.0;
  double rollout_gpu_seconds = 0.0;  // integral of the pool size over time
  std::map<PolicyId, TrainerSummary> trainers;
  std::map<std::string, RaasSummary> raas;
  std::map<PolicyId, std::vector<StepRecord>> step_logs;
  ConservationLedger ledger;
  std::vector<BalanceReportRecord> reports;
  std::vector<std::string> events;  // executor commands and their failures
  MetricsStore metrics;

  nlohmann::json summary_json() const;
};

/// Runs a scenario to completion. Module errors abort the run with
/// kRunAborted naming the event that failed.
RunResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Writes summary.json, the metric files, reports/<trainer>-<NNNN>.txt and
/// balance_reports.log under `dir`.
void write_run(const RunResult& result, const std::filesystem::path& dir);

/// The last balance report written under `dir`.
std::string last_report(const std::filesystem::path& dir);

// Live mode lives in live.cpp.
RunResult run_live(const Scenario& scenario, const RunOptions& options);

}  // namespace flowrl
