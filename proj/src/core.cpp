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

#include "flowrl/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnknownPolicy: return "unknown-policy";
    case ErrorCode::kDuplicateRole: return "duplicate-role";
    case ErrorCode::kUnknownRaas: return "unknown-raas";
    case ErrorCode::kDuplicateUid: return "duplicate-uid";
    case ErrorCode::kUnregisteredWorkflow: return "unregistered-workflow";
    case ErrorCode::kUnknownTrainer: return "unknown-trainer";
    case ErrorCode::kEmptyWindow: return "empty-window";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kIndexOutOfRange: return "index-out-of-range";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kUnsortedIndices: return "unsorted-indices";
    case ErrorCode::kTrailingBytes: return "trailing-bytes";
    case ErrorCode::kBadMode: return "bad-mode";
    case ErrorCode::kNonMonotoneVersion: return "non-monotone-version";
    case ErrorCode::kInvalidW: return "invalid-w";
    case ErrorCode::kInsufficientCapacity: return "insufficient-capacity";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kValidationError: return "validation-error";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kRunAborted: return "run-aborted";
  }
  return "unknown";
}

RewardMode WorkflowSpec::reward_mode(const std::string& role) const {
  auto it = reward_assignment.find(role);
  return it == reward_assignment.end() ? RewardMode::kTerminal : it->second;
}

std::set<PolicyId> WorkflowSpec::policies() const {
  std::set<PolicyId> out;
  for (const auto& role : roles) out.insert(role.policy);
  return out;
}

std::uint64_t TrainingBatch::total_tokens() const {
  std::uint64_t total = 0;
  for (const auto& t : members) total += t.payload_tokens;
  return total;
}

bool rewards_are_zero_advantage(std::span<const double> rewards) {
  if (rewards.empty()) throw Error(ErrorCode::kInvalidArgument, "empty group");
  const double first = rewards.front();
  return std::all_of(rewards.begin(), rewards.end(), [first](double r) { return r == first; });
}

bool group_is_zero_advantage(const RolloutGroup& group) {
  if (group.members.empty()) throw Error(ErrorCode::kInvalidArgument, "empty group");
  const double first = group.members.front().reward;
  return std::all_of(group.members.begin(), group.members.end(),
                     [first](const Trajectory& t) { return t.reward == first; });
}

void validate_workflow(const WorkflowSpec& spec, const std::set<PolicyId>& declared_policies) {
  if (spec.roles.empty()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("workflow '{}' has no roles", spec.name));
  }
  if (spec.max_retries < 0) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("workflow '{}' has negative max_retries", spec.name));
  }
  std::set<std::string> seen;
  for (const auto& role : spec.roles) {
    if (!seen.insert(role.name).second) throw Error(ErrorCode::kDuplicateRole, role.name);
    if (!declared_policies.contains(role.policy)) throw Error(ErrorCode::kUnknownPolicy, role.name);
  }
}

void validate_group(const RolloutGroup& group, std::size_t max_group_size) {
  if (group.members.empty()) throw Error(ErrorCode::kInvalidArgument, "empty group");
  if (max_group_size != 0 && group.members.size() > max_group_size) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("group of {} exceeds group size {}", group.members.size(), max_group_size));
  }
  for (const auto& t : group.members) {
    if (t.meta.producing_policy != group.policy) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("trajectory {} has foreign policy", t.traj_id));
    }
    if (t.task && t.task->prompt_id != group.prompt_id) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("trajectory {} has foreign prompt", t.traj_id));
    }
    if (!std::isfinite(t.reward)) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("trajectory {} has non-finite reward", t.traj_id));
    }
    if (t.payload_tokens < 1) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("trajectory {} has empty payload", t.traj_id));
    }
  }
}

RewardStats reward_stats(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  const double sum = std::accumulate(rewards.begin(), rewards.end(), 0.0);
  return {*lo, *hi, sum / static_cast<double>(rewards.size())};
}

std::string IdGenerator::next() { return fmt::format("{}-{}", kind_, ++counter_); }

}  // namespace flowrl
