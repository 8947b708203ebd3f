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

#include "flowrl/raas.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {

std::uint64_t TokenDistribution::draw(Rng& rng, double scale) const {
  double x = a;
  switch (kind) {
    case Kind::kConstant:
      break;
    case Kind::kUniform:
      x = a + (b - a) * uniform01(rng);
      break;
    case Kind::kLognormal:
      x = std::exp(a + b * standard_normal(rng));
      break;
  }
  const double scaled = std::round(x * scale);
  return scaled < 1.0 ? 1 : static_cast<std::uint64_t>(scaled);
}

void TokenDistribution::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) throw Error(ErrorCode::kInvalidArgument, "token distribution must be finite");
  if (kind == Kind::kUniform && b < a) throw Error(ErrorCode::kInvalidArgument, "uniform token range has hi < lo");
  if (kind == Kind::kLognormal && b < 0.0) throw Error(ErrorCode::kInvalidArgument, "lognormal sigma < 0");
  if (kind != Kind::kLognormal && a < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative token count");
}

double RolloutModel::success_probability(std::uint64_t prompt_id) const {
  const double u = static_cast<double>(splitmix64(seed ^ splitmix64(prompt_id)) >> 11) * 0x1.0p-53;
  return success_lo + (success_hi - success_lo) * u;
}

const TokenDistribution& RolloutModel::tokens_for(const std::string& role) const {
  auto it = role_tokens.find(role);
  return it == role_tokens.end() ? tokens : it->second;
}

void RolloutModel::validate() const {
  tokens.validate();
  for (const auto& [_, d] : role_tokens) d.validate();
  if (!(success_lo >= 0.0 && success_lo <= success_hi && success_hi <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "success range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(verifier_noise >= 0.0 && verifier_noise <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "verifier_noise must lie in [0,1]");
  }
  if (token_growth_per_version < 0.0) throw Error(ErrorCode::kInvalidArgument, "token growth must be >= 0");
}

void RaasInstanceSpec::validate() const {
  if (uid.empty()) throw Error(ErrorCode::kInvalidArgument, "raas uid is empty");
  if (gpus < 1) throw Error(ErrorCode::kInvalidArgument, fmt::format("raas {}: gpus must be >= 1", uid));
  if (!(throughput_share > 0.0 && throughput_share <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("raas {}: throughput_share must lie in (0,1]", uid));
  }
  if (!(base_tokens_per_sec_per_gpu > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("raas {}: base rate must be > 0", uid));
  }
  if (!(link.bandwidth_bits_per_sec > 0.0) || link.rtt_seconds < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("raas {}: invalid link", uid));
  }
  if (reload_seconds < 0.0) throw Error(ErrorCode::kInvalidArgument, fmt::format("raas {}: reload < 0", uid));
  if (refresh_every < 1) throw Error(ErrorCode::kInvalidArgument, fmt::format("raas {}: refresh_every < 1", uid));
}

WorkflowOutcome execute_workflow(const RolloutTask& task, const RolloutModel& model,
                                 const std::map<PolicyId, Version>& held_versions, std::size_t group_size,
                                 const std::string& raas_uid, SimTime finish_time, Rng& rng, IdGenerator& traj_ids) {
  if (!task.workflow || task.workflow->roles.empty()) {
    throw Error(ErrorCode::kUnregisteredWorkflow, fmt::format("task {} has no workflow", task.task_id));
  }
  const auto& wf = *task.workflow;
  auto task_ptr = std::make_shared<const RolloutTask>(task);
  const double p_success = model.success_probability(task.prompt_id);

  auto version_of = [&](const PolicyId& p) {
    auto it = held_versions.find(p);
    return it == held_versions.end() ? Version{0} : it->second;
  };
  auto scale_of = [&](const PolicyId& p) {
    return 1.0 + model.token_growth_per_version * static_cast<double>(version_of(p));
  };

  WorkflowOutcome out;
  std::vector<std::vector<Trajectory>> per_role(wf.roles.size());
  for (std::size_t m = 0; m < group_size; ++m) {
    std::vector<std::uint64_t> tokens(wf.roles.size(), 0);
    std::vector<double> role_reward(wf.roles.size(), 0.0);
    bool correct = false;
    for (int attempt = 0;; ++attempt) {
      const auto& primary = wf.roles[0];
      tokens[0] = model.tokens_for(primary.name).draw(rng, scale_of(primary.policy));
      out.total_tokens += tokens[0];
      out.role_executions[primary.name] += 1;
      correct = uniform01(rng) < p_success;

      bool rejected = false;
      for (std::size_t r = 1; r < wf.roles.size(); ++r) {
        const auto& reviewer = wf.roles[r];
        tokens[r] = model.tokens_for(reviewer.name).draw(rng, scale_of(reviewer.policy));
        out.total_tokens += tokens[r];
        out.role_executions[reviewer.name] += 1;
        const double u = uniform01(rng);
        const bool accept = correct ? u >= model.verifier_noise : u < model.verifier_noise;
        role_reward[r] = accept == correct ? 1.0 : 0.0;
        rejected = rejected || !accept;
      }
      if (!rejected || attempt >= wf.max_retries) break;
    }

    const double terminal = correct ? 1.0 : 0.0;
    role_reward[0] = terminal;
    for (std::size_t r = 0; r < wf.roles.size(); ++r) {
      const auto& role = wf.roles[r];
      Trajectory t;
      t.traj_id = traj_ids.next();
      t.task = task_ptr;
      t.meta.producing_policy = role.policy;
      t.meta.produced_at_version = version_of(role.policy);
      t.meta.produced_time = finish_time;
      t.meta.task_type = wf.name + "/" + role.name;
      t.meta.raas_uid = raas_uid;
      t.reward = wf.reward_mode(role.name) == RewardMode::kTerminal ? terminal : role_reward[r];
      t.payload_tokens = tokens[r];
      per_role[r].push_back(std::move(t));
    }
  }

  for (std::size_t r = 0; r < wf.roles.size(); ++r) {
    RolloutGroup g;
    g.prompt_id = task.prompt_id;
    g.policy = wf.roles[r].policy;
    g.raas_uid = raas_uid;
    std::vector<double> rewards;
    for (const auto& t : per_role[r]) rewards.push_back(t.reward);
    const RewardStats stats = reward_stats(rewards);
    for (auto& t : per_role[r]) t.meta.reward_stats = stats;
    g.members = std::move(per_role[r]);
    out.groups.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------

RaasInstance::RaasInstance(RaasInstanceSpec spec, std::shared_ptr<const WorkflowSpec> workflow, RolloutModel model,
                           std::map<PolicyId, WeightSnapshot> initial_weights, std::size_t group_size,
                           RefreshConfig refresh, std::uint64_t seed, double idle_poll_seconds)
    : spec_(std::move(spec)),
      workflow_(std::move(workflow)),
      model_(std::move(model)),
      weights_(std::move(initial_weights)),
      group_size_(group_size),
      refresh_(refresh),
      rng_(seed),
      idle_poll_seconds_(idle_poll_seconds),
      traj_ids_("traj-" + spec_.uid) {
  spec_.validate();
  model_.validate();
  if (!workflow_) throw Error(ErrorCode::kUnregisteredWorkflow, spec_.workflow);
  if (group_size_ < 1) throw Error(ErrorCode::kInvalidArgument, "group_size must be >= 1");
  if (!(idle_poll_seconds_ > 0.0)) throw Error(ErrorCode::kInvalidArgument, "idle poll must be > 0");
  for (const auto& policy : workflow_->policies()) {
    if (!weights_.contains(policy)) {
      throw Error(ErrorCode::kUnknownPolicy, fmt::format("raas {} has no initial weights for {}", spec_.uid, policy.str()));
    }
  }
}

Version RaasInstance::held_version(const PolicyId& policy) const {
  auto it = weights_.find(policy);
  if (it == weights_.end()) throw Error(ErrorCode::kUnknownPolicy, policy.str());
  return it->second.version;
}

const WeightSnapshot& RaasInstance::held_weights(const PolicyId& policy) const {
  auto it = weights_.find(policy);
  if (it == weights_.end()) throw Error(ErrorCode::kUnknownPolicy, policy.str());
  return it->second;
}

double RaasInstance::generation_seconds(std::uint64_t tokens) const {
  return static_cast<double>(tokens) / spec_.tokens_per_second();
}

ServiceEvents RaasInstance::service_step(DataflowLayer& dataflow, const WeightStore& store, SimTime now) {
  ServiceEvents ev;

  if (phase_ == Phase::kGenerating) {
    if (now < phase_end_) {
      ev.next_wake = phase_end_;
      return ev;
    }
    for (auto& g : pending_) {
      ev.ingested.push_back(dataflow.ingest_trajectory_group(g, now));
      ev.delivered.push_back(std::move(g));
    }
    pending_.clear();
    phase_ = Phase::kIdle;
  } else if (phase_ == Phase::kRefreshing) {
    if (now < phase_end_) {
      ev.next_wake = phase_end_;
      return ev;
    }
    phase_ = Phase::kIdle;
  }

  if (retired_) return ev;

  // (1) weight refresh
  for (const auto& policy : workflow_->policies()) {
    if (!store.has_policy(policy)) continue;
    auto& held = weights_.at(policy);
    const Version latest = store.latest_version(policy);
    if (latest < held.version + spec_.refresh_every) continue;
    PullResult pull = store.pull_update(policy, held.version, refresh_.sync);
    if (pull.kind == PullResult::Kind::kUpToDate) continue;
    RefreshEvent r;
    r.policy = policy;
    r.from_version = held.version;
    r.to_version = pull.to_version;
    r.kind = pull.kind;
    r.wire_bytes = static_cast<std::uint64_t>(std::llround(static_cast<double>(pull.wire_bytes()) * refresh_.bytes_scale));
    r.transfer_seconds = transfer_time(r.wire_bytes, spec_.link);
    held = apply_pull(held, pull);
    ev.refreshes.push_back(r);
  }
  double transfer = 0.0;
  for (const auto& r : ev.refreshes) transfer += r.transfer_seconds;
  if (!ev.refreshes.empty()) ev.downtime_seconds = transfer + spec_.reload_seconds;
  // A free refresh (ideal link, no reload) does not interrupt the loop.
  if (ev.downtime_seconds > 0.0) {
    phase_ = Phase::kRefreshing;
    transfer_end_ = now + transfer;
    phase_end_ = now + ev.downtime_seconds;
    ev.next_wake = phase_end_;
    return ev;
  }

  // (2) task pull, (3) generation
  auto tasks = dataflow.next_rollout_tasks(spec_.uid, 1, now);
  if (tasks.empty()) {
    ev.idle = true;
    ev.next_wake = now + idle_poll_seconds_;
    return ev;
  }

  std::map<PolicyId, Version> held_versions;
  for (const auto& [p, w] : weights_) held_versions[p] = w.version;
  std::uint64_t tokens = 0;
  std::vector<WorkflowOutcome> outcomes;
  for (const auto& task : tasks) {
    // finish time is stamped once the duration is known
    outcomes.push_back(execute_workflow(task, model_, held_versions, group_size_, spec_.uid, 0.0, rng_, traj_ids_));
    tokens += outcomes.back().total_tokens;
  }
  const SimTime done = now + generation_seconds(tokens);
  for (auto& o : outcomes) {
    for (auto& g : o.groups) {
      for (auto& t : g.members) t.meta.produced_time = done;
      pending_.push_back(std::move(g));
    }
  }
  phase_ = Phase::kGenerating;
  phase_end_ = done;
  ev.started_generation = true;
  ev.next_wake = done;
  return ev;
}

std::vector<InstanceThroughput> fleet_throughput_report(const DataflowLayer& dataflow, const PolicyId& trainer,
                                                        std::size_t window_versions) {
  auto counts = dataflow.window_production(trainer, window_versions);
  std::uint64_t total = 0;
  for (const auto& [_, c] : counts) total += c.produced;
  std::vector<InstanceThroughput> out;
  for (const auto& [uid, c] : counts) {
    out.push_back({uid, c.produced, total > 0 ? static_cast<double>(c.produced) / static_cast<double>(total) : 0.0});
  }
  return out;
}

}  // namespace flowrl
