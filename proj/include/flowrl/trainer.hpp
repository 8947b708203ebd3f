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

// Simulated trainer: pulls batches, spends a step duration proportional to
// the batch token mass, perturbs its snapshot at a calibrated sparsity and
// publishes. There are no optimizer semantics.

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "flowrl/core.hpp"
#include "flowrl/dataflow.hpp"
#include "flowrl/weights.hpp"

namespace flowrl {

struct TrainerSpec {
  PolicyId policy;
  std::size_t batch_size = 64;
  double step_seconds_per_token = 1e-4;
  double target_sparsity = 0.99;
  std::size_t element_count = 100000;
  std::uint64_t seed = 0;

  void validate() const;
  /// round((1 - s) * N), the number of words each step flips.
  std::size_t changed_per_step() const;
};

struct StepRecord {
  Version version = 0;  // version published by this step
  double wait_seconds = 0.0;
  double step_seconds = 0.0;
  std::size_t fresh_count = 0;
  std::size_t replay_count = 0;
  std::size_t foreign_count = 0;  // members produced by another policy
  double delta_sparsity = 1.0;
  std::uint64_t tokens = 0;
  SimTime start_time = 0.0;
  SimTime end_time = 0.0;
};

struct Waiting {
  double waited_seconds = 0.0;  // blocked time so far in this iteration
};

/// Deterministic initial weights for a policy.
WeightSnapshot initial_snapshot(const PolicyId& policy, std::size_t element_count, std::uint64_t seed);

/// Returns prev with exactly `changed` words replaced by different words; the
/// indices and new words are a pure function of (seed, policy, version).
WeightSnapshot perturb_snapshot(const WeightSnapshot& prev, std::size_t changed, std::uint64_t seed);

class TrainerSim {
 public:
  TrainerSim(TrainerSpec spec, SimTime start_time = 0.0);

  /// Polls for a batch. On success the step is in flight until
  /// `pending_end_time()`; call complete_step then.
  std::variant<StepRecord, Waiting> begin_step(DataflowLayer& dataflow, SimTime now);
  /// Publishes the in-flight step and appends it to the log.
  StepRecord complete_step(DataflowLayer& dataflow, WeightStore& store, const SyncPolicy& sync);
  /// begin_step + complete_step for callers without an event queue.
  std::variant<StepRecord, Waiting> train_step(DataflowLayer& dataflow, WeightStore& store, const SyncPolicy& sync,
                                               SimTime now);

  bool in_step() const { return pending_.has_value(); }
  SimTime pending_end_time() const { return pending_ ? pending_->end_time : 0.0; }
  Version version() const { return snapshot_.version; }
  const WeightSnapshot& snapshot() const { return snapshot_; }
  const TrainerSpec& spec() const { return spec_; }
  const std::vector<StepRecord>& step_log() const { return log_; }

 private:
  TrainerSpec spec_;
  WeightSnapshot snapshot_;
  SimTime ready_since_;
  std::optional<StepRecord> pending_;
  std::vector<StepRecord> log_;
};

/// (version, wait_seconds) per logged step.
std::vector<std::pair<Version, double>> downtime_trace(const std::vector<StepRecord>& log);

}  // namespace flowrl
