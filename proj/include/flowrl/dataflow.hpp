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

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowrl/core.hpp"
#include "flowrl/data_algorithms.hpp"

namespace flowrl {

enum class RouteMode { kExclusive, kShared, kMixed };

struct RouteEntry {
  std::set<PolicyId> consumers;
  RouteMode mode = RouteMode::kExclusive;
};

/// Producing policy -> consuming trainers.
struct RoutingTable {
  std::map<PolicyId, RouteEntry> routes;

  void add(const PolicyId& producer, std::set<PolicyId> consumers, RouteMode mode = RouteMode::kExclusive);
  std::set<PolicyId> consumers(const PolicyId& producer) const;
  bool routes_to(const PolicyId& producer, const PolicyId& trainer) const;
  /// Every trainer must consume from at least one producer.
  void validate(const std::set<PolicyId>& trainers) const;
};

struct StalenessPolicy {
  Version max_version_gap = 8;

  bool usable(Version trainer_version, Version produced_at_version) const {
    return trainer_version < produced_at_version || trainer_version - produced_at_version <= max_version_gap;
  }
};

struct BufferConfig {
  std::size_t capacity = 0;  // 0: four times the trainer's batch size
  double backpressure_high_watermark = 0.9;
};

struct FlowCounts {
  std::uint64_t produced = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t consumed = 0;
  std::uint64_t stale_skipped = 0;

  FlowCounts& operator+=(const FlowCounts& o);
  friend FlowCounts operator-(FlowCounts a, const FlowCounts& b);
  friend bool operator==(const FlowCounts&, const FlowCounts&) = default;
};

struct InstanceLayoutRow {
  std::string uid;
  int gpus = 0;
  std::uint64_t produced = 0;
  std::uint64_t accepted = 0;
  double accept_rate = 0.0;
  double throughput_per_gpu = 0.0;
  bool suspect = false;
};

/// Window and production blocks of the balance report plus the per-instance
/// layout. Step time here is the full iteration (batch wait + compute).
struct BalanceWindow {
  std::size_t iterations = 0;
  double wall_time_sec = 0.0;
  double eval_time_sec = 0.0;
  double training_time_sec = 0.0;
  double avg_step_time_sec = 0.0;
  double avg_batch_wait_sec = 0.0;
  double wait_fraction = 0.0;

  int total_raas_gpus = 0;
  std::uint64_t produced = 0;
  std::uint64_t accepted = 0;
  std::uint64_t consumed = 0;
  std::uint64_t stale_skipped = 0;
  double accept_rate = 0.0;
  double stale_rate = 0.0;
  double throughput_per_gpu = 0.0;
  double produce_consume_ratio = 0.0;

  std::vector<InstanceLayoutRow> layout;
};

/// Fills the derived rates of `w` from its counts (zero denominators give 0).
void finalize_rates(BalanceWindow& w);
/// suspect = unavailable, or produced something with accept_rate < 0.5.
bool is_suspect(bool available, std::uint64_t produced, std::uint64_t accepted);

struct IngestResult {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  bool buffer_full = false;
};

struct DataflowConfig {
  RoutingTable routing;
  StalenessPolicy staleness;
  BufferConfig buffer;
  std::uint64_t prompt_count = 1024;
  std::size_t group_size = 8;
  bool fresher_first = false;
};

struct TrainerLedger {
  std::uint64_t entered = 0;
  std::uint64_t consumed = 0;
  std::uint64_t stale_skipped = 0;
  std::uint64_t replayed = 0;
  std::uint64_t buffered = 0;
  double wait_seconds = 0.0;
  double step_seconds = 0.0;
};

struct ProducerLedger {
  std::uint64_t produced = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t unrouted = 0;
};

struct ConservationLedger {
  std::map<PolicyId, ProducerLedger> producers;
  std::map<PolicyId, TrainerLedger> trainers;

  /// produced = accepted + rejected per producer, entered = consumed +
  /// stale_skipped + buffered per trainer.
  bool balanced() const;
};

/// Coordination plane between rollout services and trainers. Every public
/// operation is atomic with respect to the buffers and counters it touches.
class DataflowLayer {
 public:
  DataflowLayer(DataflowConfig cfg, std::unique_ptr<Curator> curator, std::unique_ptr<PostFilter> filter);

  void register_workflow(std::shared_ptr<const WorkflowSpec> workflow);
  void register_trainer(const PolicyId& trainer, std::size_t batch_size, std::unique_ptr<BatchComposer> composer);
  void publish_version(const PolicyId& policy, Version version);

  void register_raas(const std::string& uid, int gpus, const std::string& workflow);
  void mark_unavailable(const std::string& uid);
  void mark_available(const std::string& uid);
  void retire_raas(const std::string& uid);

  std::vector<RolloutTask> next_rollout_tasks(const std::string& raas_uid, std::size_t max_n, SimTime now);
  IngestResult ingest_trajectory_group(const RolloutGroup& group, SimTime now);
  std::optional<TrainingBatch> next_training_batch(const PolicyId& trainer, std::size_t batch_size,
                                                   Version trainer_version, SimTime now);

  /// Blocked time reported by a trainer; folded into its next step record.
  void accrue_wait(const PolicyId& trainer, double seconds);
  /// Closes one trainer iteration and snapshots the production counters.
  void record_step(const PolicyId& trainer, Version version, double step_seconds, SimTime now);

  BalanceWindow window_stats(const PolicyId& trainer, std::size_t last_n_versions) const;
  /// Counter deltas per instance (registration order, retired included) over
  /// the trainer's last `last_n_versions` steps.
  std::vector<std::pair<std::string, FlowCounts>> window_production(const PolicyId& trainer,
                                                                    std::size_t last_n_versions) const;

  int total_raas_gpus() const;
  bool is_registered(const std::string& uid) const;
  std::vector<std::string> active_raas() const;
  FlowCounts raas_counts(const std::string& uid) const;
  std::size_t buffer_occupancy(const PolicyId& trainer) const;
  std::size_t buffer_capacity(const PolicyId& trainer) const;
  std::size_t completed_steps(const PolicyId& trainer) const;
  ConservationLedger ledger() const;
  const DataflowConfig& config() const { return cfg_; }

 private:
  struct RaasState {
    int gpus = 0;
    std::string workflow;
    bool available = true;
    bool retired = false;
    FlowCounts counts;
  };
  struct StepMark {
    Version version = 0;
    double wait_seconds = 0.0;
    double step_seconds = 0.0;
    SimTime end_time = 0.0;
    std::map<std::string, FlowCounts> raas_counts;  // cumulative at end_time
  };
  struct TrainerState {
    std::size_t batch_size = 0;
    std::size_t capacity = 0;
    std::unique_ptr<BatchComposer> composer;
    std::deque<Trajectory> buffer;
    TrainerLedger ledger;
    double pending_wait = 0.0;
    std::vector<StepMark> marks;
  };

  RaasState& raas_locked(const std::string& uid, bool allow_retired);
  TrainerState& trainer_locked(const PolicyId& trainer);
  const TrainerState& trainer_locked(const PolicyId& trainer) const;
  std::vector<TrainerState*> targets_locked(const PolicyId& producer);
  std::map<std::string, FlowCounts> snapshot_counts_locked() const;

  DataflowConfig cfg_;
  std::unique_ptr<Curator> curator_;
  std::unique_ptr<PostFilter> filter_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const WorkflowSpec>> workflows_;
  std::map<std::string, std::uint64_t> prompt_cursor_;
  std::map<PolicyId, Version> latest_versions_;
  std::map<PolicyId, TrainerState> trainers_;
  std::map<std::string, RaasState> raas_;
  std::vector<std::string> raas_order_;
  std::map<PolicyId, ProducerLedger> producers_;
  IdGenerator task_ids_{"task"};
};

}  // namespace flowrl
