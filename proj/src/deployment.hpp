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

// Shared wiring for the simulated and live runners.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flowrl/harness.hpp"
#include "flowrl/raas.hpp"

namespace flowrl::detail {

class Deployment {
 public:
  Deployment(const Scenario& scenario, std::uint64_t seed);

  /// Registers a new instance with version-0 weights.
  RaasInstance& add_instance(RaasInstanceSpec spec);
  RaasInstanceSpec launch_spec(const std::string& uid, int gpus) const;

  AutoscaleConfig controller() const;
  bool acts_on(const PolicyId& trainer) const;

  /// Counters, ledger and per-instance totals known to the dataflow layer.
  void fill_result(RunResult& result) const;

  Scenario sc;
  std::unique_ptr<DataflowLayer> dataflow;
  WeightStore store;
  std::map<PolicyId, std::unique_ptr<TrainerSim>> trainers;  // active only
  std::map<PolicyId, WeightSnapshot> initial_weights;
  std::map<std::string, std::unique_ptr<RaasInstance>> raas;
  std::vector<std::string> raas_order;
  RefreshConfig refresh;
};

void record_step(MetricsStore& m, const PolicyId& policy, const StepRecord& rec);
void record_service(MetricsStore& m, RaasSummary& summary, const std::string& uid, const ServiceEvents& ev,
                    SimTime now);
void record_pool(MetricsStore& m, SimTime now, Version version, int gpus);
void record_window(MetricsStore& m, const DataflowLayer& dataflow, const PolicyId& trainer, std::size_t k,
                   const BalanceWindow& window, const ScalingDecision& decision, SimTime now, Version version);

}  // namespace flowrl::detail
