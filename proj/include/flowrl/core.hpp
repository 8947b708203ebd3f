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

// Shared vocabulary: policies, versions, tasks, trajectories, groups, batches
// and workflow descriptions. Everything here is a plain value record.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace flowrl {

struct PolicyId {
  std::string value;

  PolicyId() = default;
  explicit PolicyId(std::string v) : value(std::move(v)) {}

  bool empty() const { return value.empty(); }
  const std::string& str() const { return value; }

  friend auto operator<=>(const PolicyId&, const PolicyId&) = default;
  friend bool operator==(const PolicyId&, const PolicyId&) = default;
};

using Version = std::uint64_t;
using SimTime = double;  // simulated seconds

struct ModelVersion {
  PolicyId policy;
  Version version = 0;

  friend bool operator==(const ModelVersion&, const ModelVersion&) = default;
};

enum class RewardMode { kTerminal, kPerRole };

struct WorkflowRole {
  std::string name;
  PolicyId policy;
};

/// Ordered roles executed per task. The first role is the primary producer;
/// every later role reviews its output and may trigger a retry.
struct WorkflowSpec {
  std::string name;
  std::vector<WorkflowRole> roles;
  int max_retries = 0;
  std::map<std::string, RewardMode> reward_assignment;

  RewardMode reward_mode(const std::string& role) const;
  std::set<PolicyId> policies() const;
};

struct RolloutTask {
  std::string task_id;
  std::uint64_t prompt_id = 0;
  std::shared_ptr<const WorkflowSpec> workflow;
  std::map<PolicyId, Version> submit_version;
  SimTime issue_time = 0.0;
};

struct RewardStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;

  friend bool operator==(const RewardStats&, const RewardStats&) = default;
};

struct TrajectoryMeta {
  PolicyId producing_policy;
  Version produced_at_version = 0;
  SimTime produced_time = 0.0;
  std::string task_type;
  RewardStats reward_stats;
  std::string raas_uid;
};

struct Trajectory {
  std::string traj_id;
  std::shared_ptr<const RolloutTask> task;
  TrajectoryMeta meta;
  double reward = 0.0;
  std::uint64_t payload_tokens = 1;
};

struct RolloutGroup {
  std::uint64_t prompt_id = 0;
  PolicyId policy;
  std::string raas_uid;
  std::vector<Trajectory> members;

  std::size_t size() const { return members.size(); }
};

struct TrainingBatch {
  PolicyId trainer;
  std::vector<Trajectory> members;
  std::size_t fresh_count = 0;
  std::size_t replay_count = 0;
  Version assembled_at_version = 0;

  std::uint64_t total_tokens() const;
};

/// True iff every reward is exactly equal to every other (zero within-group
/// variance). Throws kInvalidArgument on an empty group.
bool group_is_zero_advantage(const RolloutGroup& group);
bool rewards_are_zero_advantage(std::span<const double> rewards);

/// Throws kInvalidArgument / kUnknownPolicy / kDuplicateRole.
void validate_workflow(const WorkflowSpec& spec, const std::set<PolicyId>& declared_policies);

/// Checks group-level invariants: shared prompt and policy, finite rewards,
/// payload_tokens >= 1, 1 <= size <= max_group_size (0 disables the bound).
void validate_group(const RolloutGroup& group, std::size_t max_group_size = 0);

RewardStats reward_stats(std::span<const double> rewards);

/// `<kind>-<counter>` identifiers for deterministic replay.
class IdGenerator {
 public:
  explicit IdGenerator(std::string kind) : kind_(std::move(kind)) {}
  std::string next();

 private:
  std::string kind_;
  std::uint64_t counter_ = 0;
};

}  // namespace flowrl

template <>
struct std::hash<flowrl::PolicyId> {
  std::size_t operator()(const flowrl::PolicyId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};
