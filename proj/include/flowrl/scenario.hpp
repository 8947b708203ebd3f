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

// Declarative description of one deployment: policies and their trainers,
// workflows, rollout fleet and links, routing, hooks, sync and autoscaling.
// The text format is documented in README.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowrl/autoscaler.hpp"
#include "flowrl/data_algorithms.hpp"
#include "flowrl/dataflow.hpp"
#include "flowrl/raas.hpp"
#include "flowrl/trainer.hpp"
#include "flowrl/weights.hpp"

namespace flowrl {

struct HookConfig {
  std::string curator = "keep_all";   // keep_all | greso | fixed
  std::string filter = "keep_all";    // keep_all | zero_adv
  std::string composer = "fresh_only";  // fresh_only | replay
  double fixed_probability = 1.0;
  GresoConfig greso;
  ReplayConfig replay;
};

struct ScaleOutConfig {
  AutoscaleConfig controller;
  bool enabled = true;               // false: reports only
  std::string instance_template;     // raas section cloned for launches
  PolicyId reference_trainer;        // whose versions drive the cadence
  std::string launch_command = "launch --uid {uid} --gpus {gpus}";
  std::string retire_command = "retire --uid {uid}";
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  Version versions = 50;
  double max_sim_seconds = 1e8;
  double idle_poll_seconds = 1.0;

  DataflowConfig dataflow;
  std::vector<TrainerSpec> trainers;  // one per policy, declaration order
  std::vector<std::shared_ptr<const WorkflowSpec>> workflows;
  std::map<std::string, LinkModel> links;
  std::vector<RaasInstanceSpec> raas;
  RolloutModel model;
  HookConfig hooks;
  SyncPolicy sync;
  double bytes_scale = 1.0;
  std::optional<ScaleOutConfig> autoscale;
  std::set<PolicyId> stalled;  // trainers that never start

  std::set<PolicyId> policies() const;
  const TrainerSpec& trainer(const PolicyId& policy) const;
  std::shared_ptr<const WorkflowSpec> workflow(const std::string& name) const;
  /// Seed for a named component, derived from `seed`.
  std::uint64_t component_seed(std::string_view tag, std::uint64_t salt = 0) const;

  /// Throws kValidationError whose message starts with the violated rule.
  void validate() const;
};

Scenario parse_scenario(const std::string& text, const std::string& name = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace flowrl
