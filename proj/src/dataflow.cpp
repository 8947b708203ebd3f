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

#include "flowrl/dataflow.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {

void RoutingTable::add(const PolicyId& producer, std::set<PolicyId> consumers, RouteMode mode) {
  auto& entry = routes[producer];
  entry.consumers.insert(consumers.begin(), consumers.end());
  entry.mode = mode;
}

std::set<PolicyId> RoutingTable::consumers(const PolicyId& producer) const {
  auto it = routes.find(producer);
  return it == routes.end() ? std::set<PolicyId>{} : it->second.consumers;
}

bool RoutingTable::routes_to(const PolicyId& producer, const PolicyId& trainer) const {
  auto it = routes.find(producer);
  return it != routes.end() && it->second.consumers.contains(trainer);
}

void RoutingTable::validate(const std::set<PolicyId>& trainers) const {
  for (const auto& trainer : trainers) {
    const bool fed = std::any_of(routes.begin(), routes.end(),
                                 [&](const auto& kv) { return kv.second.consumers.contains(trainer); });
    if (!fed) throw Error(ErrorCode::kValidationError, fmt::format("trainer {} has no producer routed to it", trainer.str()));
  }
  for (const auto& [producer, entry] : routes) {
    for (const auto& consumer : entry.consumers) {
      if (!trainers.contains(consumer)) {
        throw Error(ErrorCode::kValidationError,
                    fmt::format("route {} -> {} names an unknown trainer", producer.str(), consumer.str()));
      }
    }
    if (entry.mode == RouteMode::kExclusive && entry.consumers.size() > 1) {
      throw Error(ErrorCode::kValidationError, fmt::format("exclusive route {} has several consumers", producer.str()));
    }
  }
}

FlowCounts& FlowCounts::operator+=(const FlowCounts& o) {
  produced += o.produced;
  accepted += o.accepted;
  rejected += o.rejected;
  consumed += o.consumed;
  stale_skipped += o.stale_skipped;
  return *this;
}

FlowCounts operator-(FlowCounts a, const FlowCounts& b) {
  a.produced -= b.produced;
  a.accepted -= b.accepted;
  a.rejected -= b.rejected;
  a.consumed -= b.consumed;
  a.stale_skipped -= b.stale_skipped;
  return a;
}

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

void finalize_rates(BalanceWindow& w) {
  w.accept_rate = ratio(static_cast<double>(w.accepted), static_cast<double>(w.produced));
  w.stale_rate = ratio(static_cast<double>(w.stale_skipped), static_cast<double>(w.accepted));
  w.throughput_per_gpu = ratio(static_cast<double>(w.accepted), static_cast<double>(w.total_raas_gpus));
  w.produce_consume_ratio = ratio(static_cast<double>(w.accepted), static_cast<double>(w.consumed));
  for (auto& row : w.layout) {
    row.accept_rate = ratio(static_cast<double>(row.accepted), static_cast<double>(row.produced));
    row.throughput_per_gpu = ratio(static_cast<double>(row.accepted), static_cast<double>(row.gpus));
  }
}

bool is_suspect(bool available, std::uint64_t produced, std::uint64_t accepted) {
  if (!available) return true;
  return produced > 0 && static_cast<double>(accepted) / static_cast<double>(produced) < 0.5;
}

bool ConservationLedger::balanced() const {
  for (const auto& [_, p] : producers) {
    if (p.produced != p.accepted + p.rejected) return false;
    if (p.unrouted > p.accepted) return false;
  }
  for (const auto& [_, t] : trainers) {
    if (t.entered != t.consumed + t.stale_skipped + t.buffered) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

DataflowLayer::DataflowLayer(DataflowConfig cfg, std::unique_ptr<Curator> curator, std::unique_ptr<PostFilter> filter)
    : cfg_(std::move(cfg)), curator_(std::move(curator)), filter_(std::move(filter)) {
  if (!curator_) curator_ = std::make_unique<KeepAllCurator>();
  if (!filter_) filter_ = std::make_unique<KeepAllFilter>();
  if (!(cfg_.buffer.backpressure_high_watermark > 0.0 && cfg_.buffer.backpressure_high_watermark <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "backpressure watermark must lie in (0,1]");
  }
  if (cfg_.prompt_count < 1) throw Error(ErrorCode::kInvalidArgument, "prompt_count must be >= 1");
}

void DataflowLayer::register_workflow(std::shared_ptr<const WorkflowSpec> workflow) {
  std::lock_guard lock(mutex_);
  workflows_[workflow->name] = std::move(workflow);
}

void DataflowLayer::register_trainer(const PolicyId& trainer, std::size_t batch_size,
                                     std::unique_ptr<BatchComposer> composer) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  std::lock_guard lock(mutex_);
  if (trainers_.contains(trainer)) throw Error(ErrorCode::kInvalidArgument, fmt::format("trainer {} registered twice", trainer.str()));
  auto& t = trainers_[trainer];
  t.batch_size = batch_size;
  t.capacity = cfg_.buffer.capacity > 0 ? cfg_.buffer.capacity : 4 * batch_size;
  t.composer = composer ? std::move(composer) : std::make_unique<FreshOnlyComposer>();
}

void DataflowLayer::publish_version(const PolicyId& policy, Version version) {
  std::lock_guard lock(mutex_);
  auto& v = latest_versions_[policy];
  v = std::max(v, version);
}

void DataflowLayer::register_raas(const std::string& uid, int gpus, const std::string& workflow) {
  if (gpus < 1) throw Error(ErrorCode::kInvalidArgument, "gpus must be >= 1");
  std::lock_guard lock(mutex_);
  if (raas_.contains(uid)) throw Error(ErrorCode::kDuplicateUid, uid);
  if (!workflows_.contains(workflow)) throw Error(ErrorCode::kUnregisteredWorkflow, workflow);
  raas_[uid] = RaasState{gpus, workflow, true, false, {}};
  raas_order_.push_back(uid);
}

DataflowLayer::RaasState& DataflowLayer::raas_locked(const std::string& uid, bool allow_retired) {
  auto it = raas_.find(uid);
  if (it == raas_.end() || (!allow_retired && it->second.retired)) throw Error(ErrorCode::kUnknownRaas, uid);
  return it->second;
}

void DataflowLayer::mark_unavailable(const std::string& uid) {
  std::lock_guard lock(mutex_);
  raas_locked(uid, false).available = false;
}

void DataflowLayer::mark_available(const std::string& uid) {
  std::lock_guard lock(mutex_);
  raas_locked(uid, false).available = true;
}

void DataflowLayer::retire_raas(const std::string& uid) {
  std::lock_guard lock(mutex_);
  raas_locked(uid, false).retired = true;
}

DataflowLayer::TrainerState& DataflowLayer::trainer_locked(const PolicyId& trainer) {
  auto it = trainers_.find(trainer);
  if (it == trainers_.end()) throw Error(ErrorCode::kUnknownTrainer, trainer.str());
  return it->second;
}

const DataflowLayer::TrainerState& DataflowLayer::trainer_locked(const PolicyId& trainer) const {
  auto it = trainers_.find(trainer);
  if (it == trainers_.end()) throw Error(ErrorCode::kUnknownTrainer, trainer.str());
  return it->second;
}

std::vector<DataflowLayer::TrainerState*> DataflowLayer::targets_locked(const PolicyId& producer) {
  std::vector<TrainerState*> out;
  for (const auto& consumer : cfg_.routing.consumers(producer)) {
    auto it = trainers_.find(consumer);
    if (it != trainers_.end()) out.push_back(&it->second);
  }
  return out;
}

std::vector<RolloutTask> DataflowLayer::next_rollout_tasks(const std::string& raas_uid, std::size_t max_n,
                                                           SimTime now) {
  if (max_n < 1) throw Error(ErrorCode::kInvalidArgument, "max_n must be >= 1");
  std::lock_guard lock(mutex_);
  auto& raas = raas_locked(raas_uid, false);
  auto wf_it = workflows_.find(raas.workflow);
  if (wf_it == workflows_.end()) throw Error(ErrorCode::kUnregisteredWorkflow, raas.workflow);
  if (!raas.available) return {};

  const auto& workflow = wf_it->second;
  for (const auto& policy : workflow->policies()) {
    for (const TrainerState* t : targets_locked(policy)) {
      if (static_cast<double>(t->buffer.size()) >=
          cfg_.buffer.backpressure_high_watermark * static_cast<double>(t->capacity)) {
        return {};
      }
    }
  }

  std::map<PolicyId, Version> stamp;
  for (const auto& policy : workflow->policies()) {
    auto it = latest_versions_.find(policy);
    stamp[policy] = it == latest_versions_.end() ? 0 : it->second;
  }

  std::vector<RolloutTask> tasks;
  auto& cursor = prompt_cursor_[workflow->name];
  for (std::uint64_t scanned = 0; scanned < cfg_.prompt_count && tasks.size() < max_n; ++scanned) {
    const std::uint64_t prompt = cursor++ % cfg_.prompt_count;
    if (!curator_->admit(prompt)) continue;
    tasks.push_back(RolloutTask{task_ids_.next(), prompt, workflow, stamp, now});
  }
  return tasks;
}

IngestResult DataflowLayer::ingest_trajectory_group(const RolloutGroup& group, SimTime) {
  validate_group(group, cfg_.group_size);
  std::lock_guard lock(mutex_);
  auto& raas = raas_locked(group.raas_uid, true);
  auto& producer = producers_[group.policy];
  const std::size_t n = group.members.size();

  raas.counts.produced += n;
  producer.produced += n;
  curator_->observe(group);

  IngestResult result;
  if (!filter_->keep(group)) {
    result.rejected = n;
  } else {
    auto targets = targets_locked(group.policy);
    result.buffer_full = std::any_of(targets.begin(), targets.end(),
                                     [n](const TrainerState* t) { return t->buffer.size() + n > t->capacity; });
    if (result.buffer_full) {
      result.rejected = n;
    } else {
      result.accepted = n;
      for (TrainerState* t : targets) {
        t->buffer.insert(t->buffer.end(), group.members.begin(), group.members.end());
        t->ledger.entered += n;
      }
      if (targets.empty()) producer.unrouted += n;
    }
  }
  raas.counts.accepted += result.accepted;
  raas.counts.rejected += result.rejected;
  producer.accepted += result.accepted;
  producer.rejected += result.rejected;
  return result;
}

std::optional<TrainingBatch> DataflowLayer::next_training_batch(const PolicyId& trainer, std::size_t batch_size,
                                                                Version trainer_version, SimTime) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  std::lock_guard lock(mutex_);
  auto& t = trainer_locked(trainer);

  auto credit = [&](const Trajectory& traj, auto field) {
    auto it = raas_.find(traj.meta.raas_uid);
    if (it != raas_.end()) it->second.counts.*field += 1;
  };

  for (auto it = t.buffer.begin(); it != t.buffer.end();) {
    if (!cfg_.staleness.usable(trainer_version, it->meta.produced_at_version)) {
      credit(*it, &FlowCounts::stale_skipped);
      t.ledger.stale_skipped += 1;
      it = t.buffer.erase(it);
    } else {
      ++it;
    }
  }

  auto plan = t.composer->plan(t.buffer.size(), batch_size, trainer_version);
  if (!plan) return std::nullopt;

  TrainingBatch batch;
  batch.trainer = trainer;
  batch.assembled_at_version = trainer_version;
  batch.fresh_count = plan->fresh_take;

  std::vector<Trajectory> fresh;
  fresh.reserve(plan->fresh_take);
  if (cfg_.fresher_first) {
    std::vector<std::size_t> order(t.buffer.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return t.buffer[a].meta.produced_at_version > t.buffer[b].meta.produced_at_version;
    });
    order.resize(plan->fresh_take);
    std::sort(order.begin(), order.end());
    std::deque<Trajectory> rest;
    std::size_t k = 0;
    for (std::size_t i = 0; i < t.buffer.size(); ++i) {
      if (k < order.size() && order[k] == i) {
        fresh.push_back(std::move(t.buffer[i]));
        ++k;
      } else {
        rest.push_back(std::move(t.buffer[i]));
      }
    }
    t.buffer = std::move(rest);
  } else {
    for (std::size_t i = 0; i < plan->fresh_take; ++i) {
      fresh.push_back(std::move(t.buffer.front()));
      t.buffer.pop_front();
    }
  }

  auto replay = t.composer->serve_replay(plan->replay_take, trainer_version);
  batch.replay_count = replay.size();
  t.composer->admit_fresh(fresh, trainer_version);

  for (const auto& traj : fresh) credit(traj, &FlowCounts::consumed);
  t.ledger.consumed += fresh.size();
  t.ledger.replayed += replay.size();

  batch.members = std::move(fresh);
  batch.members.insert(batch.members.end(), std::make_move_iterator(replay.begin()),
                       std::make_move_iterator(replay.end()));
  return batch;
}

void DataflowLayer::accrue_wait(const PolicyId& trainer, double seconds) {
  if (seconds < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative wait");
  std::lock_guard lock(mutex_);
  trainer_locked(trainer).pending_wait += seconds;
}

std::map<std::string, FlowCounts> DataflowLayer::snapshot_counts_locked() const {
  std::map<std::string, FlowCounts> out;
  for (const auto& [uid, state] : raas_) out[uid] = state.counts;
  return out;
}

void DataflowLayer::record_step(const PolicyId& trainer, Version version, double step_seconds, SimTime now) {
  if (step_seconds < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative step time");
  std::lock_guard lock(mutex_);
  auto& t = trainer_locked(trainer);
  StepMark mark{version, t.pending_wait, step_seconds, now, snapshot_counts_locked()};
  t.ledger.wait_seconds += t.pending_wait;
  t.ledger.step_seconds += step_seconds;
  t.pending_wait = 0.0;
  t.marks.push_back(std::move(mark));
}

BalanceWindow DataflowLayer::window_stats(const PolicyId& trainer, std::size_t last_n_versions) const {
  std::lock_guard lock(mutex_);
  const auto& t = trainer_locked(trainer);
  if (last_n_versions < 1 || t.marks.empty()) throw Error(ErrorCode::kEmptyWindow, trainer.str());

  const std::size_t n = std::min(last_n_versions, t.marks.size());
  const std::size_t first = t.marks.size() - n;
  const StepMark* base = first > 0 ? &t.marks[first - 1] : nullptr;
  const StepMark& last = t.marks.back();

  BalanceWindow w;
  w.iterations = n;
  double total_wait = 0.0;
  double total_iter = 0.0;
  for (std::size_t i = first; i < t.marks.size(); ++i) {
    total_wait += t.marks[i].wait_seconds;
    total_iter += t.marks[i].wait_seconds + t.marks[i].step_seconds;
    w.training_time_sec += t.marks[i].step_seconds;
  }
  w.wall_time_sec = last.end_time - (base ? base->end_time : last.end_time - total_iter);
  w.avg_step_time_sec = total_iter / static_cast<double>(n);
  w.avg_batch_wait_sec = total_wait / static_cast<double>(n);
  w.wait_fraction = total_iter > 0.0 ? total_wait / total_iter : 0.0;

  auto diff_for = [&](const std::string& uid) {
    FlowCounts now_counts;
    if (auto it = last.raas_counts.find(uid); it != last.raas_counts.end()) now_counts = it->second;
    if (base) {
      if (auto it = base->raas_counts.find(uid); it != base->raas_counts.end()) return now_counts - it->second;
    }
    return now_counts;
  };

  for (const auto& [uid, _] : last.raas_counts) {
    const FlowCounts d = diff_for(uid);
    w.produced += d.produced;
    w.accepted += d.accepted;
    w.consumed += d.consumed;
    w.stale_skipped += d.stale_skipped;
  }
  for (const auto& uid : raas_order_) {
    const auto& state = raas_.at(uid);
    if (state.retired) continue;
    w.total_raas_gpus += state.gpus;
    const FlowCounts d = diff_for(uid);
    InstanceLayoutRow row;
    row.uid = uid;
    row.gpus = state.gpus;
    row.produced = d.produced;
    row.accepted = d.accepted;
    row.suspect = is_suspect(state.available, d.produced, d.accepted);
    w.layout.push_back(row);
  }
  finalize_rates(w);
  return w;
}

std::vector<std::pair<std::string, FlowCounts>> DataflowLayer::window_production(const PolicyId& trainer,
                                                                                std::size_t last_n_versions) const {
  std::lock_guard lock(mutex_);
  const auto& t = trainer_locked(trainer);
  if (last_n_versions < 1 || t.marks.empty()) throw Error(ErrorCode::kEmptyWindow, trainer.str());
  const std::size_t n = std::min(last_n_versions, t.marks.size());
  const std::size_t first = t.marks.size() - n;
  const auto& last = t.marks.back().raas_counts;
  std::vector<std::pair<std::string, FlowCounts>> out;
  for (const auto& uid : raas_order_) {
    FlowCounts d;
    if (auto it = last.find(uid); it != last.end()) d = it->second;
    if (first > 0) {
      const auto& base = t.marks[first - 1].raas_counts;
      if (auto it = base.find(uid); it != base.end()) d = d - it->second;
    }
    out.emplace_back(uid, d);
  }
  return out;
}

int DataflowLayer::total_raas_gpus() const {
  std::lock_guard lock(mutex_);
  int total = 0;
  for (const auto& [_, s] : raas_) {
    if (!s.retired) total += s.gpus;
  }
  return total;
}

bool DataflowLayer::is_registered(const std::string& uid) const {
  std::lock_guard lock(mutex_);
  auto it = raas_.find(uid);
  return it != raas_.end() && !it->second.retired;
}

std::vector<std::string> DataflowLayer::active_raas() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& uid : raas_order_) {
    if (!raas_.at(uid).retired) out.push_back(uid);
  }
  return out;
}

FlowCounts DataflowLayer::raas_counts(const std::string& uid) const {
  std::lock_guard lock(mutex_);
  auto it = raas_.find(uid);
  if (it == raas_.end()) throw Error(ErrorCode::kUnknownRaas, uid);
  return it->second.counts;
}

std::size_t DataflowLayer::buffer_occupancy(const PolicyId& trainer) const {
  std::lock_guard lock(mutex_);
  return trainer_locked(trainer).buffer.size();
}

std::size_t DataflowLayer::buffer_capacity(const PolicyId& trainer) const {
  std::lock_guard lock(mutex_);
  return trainer_locked(trainer).capacity;
}

std::size_t DataflowLayer::completed_steps(const PolicyId& trainer) const {
  std::lock_guard lock(mutex_);
  return trainer_locked(trainer).marks.size();
}

ConservationLedger DataflowLayer::ledger() const {
  std::lock_guard lock(mutex_);
  ConservationLedger out;
  out.producers = producers_;
  for (const auto& [policy, t] : trainers_) {
    auto l = t.ledger;
    l.buffered = t.buffer.size();
    out.trainers[policy] = l;
  }
  return out;
}

}  // namespace flowrl
