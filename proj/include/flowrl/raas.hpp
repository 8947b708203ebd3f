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

// Simulated rollout service. Each instance pulls tasks, synthesizes trajectory
// groups after a modeled generation delay, and refreshes weights by pulling
// from the store. Generation is modeled at group granularity.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowrl/core.hpp"
#include "flowrl/dataflow.hpp"
#include "flowrl/rng.hpp"
#include "flowrl/weights.hpp"

namespace flowrl {

struct TokenDistribution {
  enum class Kind { kConstant, kUniform, kLognormal };

  Kind kind = Kind::kConstant;
  double a = 512.0;  // constant value | uniform lo | lognormal mu
  double b = 0.0;    // uniform hi | lognormal sigma

  static TokenDistribution constant(double v) { return {Kind::kConstant, v, 0.0}; }
  static TokenDistribution uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }
  static TokenDistribution lognormal(double mu, double sigma) { return {Kind::kLognormal, mu, sigma}; }

  /// Always >= 1. `scale` multiplies the drawn length before rounding.
  std::uint64_t draw(Rng& rng, double scale = 1.0) const;
  void validate() const;
};

struct RolloutModel {
  TokenDistribution tokens;
  std::map<std::string, TokenDistribution> role_tokens;  // per-role override
  /// Lengths scale by (1 + growth * held_version): generations get longer as
  /// training progresses.
  double token_growth_per_version = 0.0;
  double success_lo = 0.0;
  double success_hi = 1.0;
  double verifier_noise = 0.1;
  std::uint64_t seed = 0;

  /// Per-prompt success probability from a seeded table, in [success_lo, success_hi].
  double success_probability(std::uint64_t prompt_id) const;
  const TokenDistribution& tokens_for(const std::string& role) const;
  void validate() const;
};

struct RaasInstanceSpec {
  std::string uid;
  int gpus = 1;
  double throughput_share = 1.0;
  double base_tokens_per_sec_per_gpu = 1000.0;
  LinkModel link;
  double reload_seconds = 5.0;
  Version refresh_every = 1;
  std::string workflow;

  void validate() const;
  double tokens_per_second() const { return gpus * base_tokens_per_sec_per_gpu * throughput_share; }
};

struct WorkflowOutcome {
  std::vector<RolloutGroup> groups;  // one per role, in role order
  std::map<std::string, int> role_executions;
  std::uint64_t total_tokens = 0;
};

/// Runs every role of the task's workflow for `group_size` members. The first
/// role produces an answer; each later role reviews it and a rejection
/// triggers a retry of the first role while retries remain.
WorkflowOutcome execute_workflow(const RolloutTask& task, const RolloutModel& model,
                                 const std::map<PolicyId, Version>& held_versions, std::size_t group_size,
                                 const std::string& raas_uid, SimTime finish_time, Rng& rng, IdGenerator& traj_ids);

struct RefreshEvent {
  PolicyId policy;
  Version from_version = 0;
  Version to_version = 0;
  PullResult::Kind kind = PullResult::Kind::kUpToDate;
  std::uint64_t wire_bytes = 0;      // scaled bytes on the link
  double transfer_seconds = 0.0;
};

struct ServiceEvents {
  std::vector<RefreshEvent> refreshes;
  double downtime_seconds = 0.0;     // transfer + reload when a refresh started
  std::vector<IngestResult> ingested;
  std::vector<RolloutGroup> delivered;
  bool started_generation = false;
  bool idle = false;                 // asked for work and got none
  std::optional<SimTime> next_wake;  // nullopt once retired and drained
};

struct RefreshConfig {
  SyncPolicy sync;
  double bytes_scale = 1.0;  // emulated payload bytes per encoded byte
};

class RaasInstance {
 public:
  RaasInstance(RaasInstanceSpec spec, std::shared_ptr<const WorkflowSpec> workflow, RolloutModel model,
               std::map<PolicyId, WeightSnapshot> initial_weights, std::size_t group_size, RefreshConfig refresh,
               std::uint64_t seed, double idle_poll_seconds = 1.0);

  /// One turn of the service loop: finish due work, then refresh weights if
  /// the gap reached refresh_every, else pull a task and start generating.
  ServiceEvents service_step(DataflowLayer& dataflow, const WeightStore& store, SimTime now);

  /// Seconds to generate `tokens` on this instance.
  double generation_seconds(std::uint64_t tokens) const;

  void retire() { retired_ = true; }
  bool retired() const { return retired_; }
  bool transfer_active(SimTime now) const { return phase_ == Phase::kRefreshing && now < transfer_end_; }
  bool refreshing(SimTime now) const { return phase_ == Phase::kRefreshing && now < phase_end_; }
  Version held_version(const PolicyId& policy) const;
  const WeightSnapshot& held_weights(const PolicyId& policy) const;
  const RaasInstanceSpec& spec() const { return spec_; }

 private:
  enum class Phase { kIdle, kRefreshing, kGenerating };

  RaasInstanceSpec spec_;
  std::shared_ptr<const WorkflowSpec> workflow_;
  RolloutModel model_;
  std::map<PolicyId, WeightSnapshot> weights_;
  std::size_t group_size_;
  RefreshConfig refresh_;
  Rng rng_;
  double idle_poll_seconds_;
  IdGenerator traj_ids_;

  Phase phase_ = Phase::kIdle;
  SimTime phase_end_ = 0.0;
  SimTime transfer_end_ = 0.0;
  std::vector<RolloutGroup> pending_;
  bool retired_ = false;
};

struct InstanceThroughput {
  std::string uid;
  std::uint64_t produced = 0;
  double share = 0.0;  // fraction of the window's total production
};

/// Per-instance production over the trainer's last `window_versions` steps,
/// including instances retired inside the window.
std::vector<InstanceThroughput> fleet_throughput_report(const DataflowLayer& dataflow, const PolicyId& trainer,
                                                        std::size_t window_versions);

}  // namespace flowrl
