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

#include "flowrl/trainer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "flowrl/error.hpp"
#include "flowrl/rng.hpp"

namespace flowrl {

void TrainerSpec::validate() const {
  if (policy.empty()) throw Error(ErrorCode::kInvalidArgument, "trainer policy is empty");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(step_seconds_per_token > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step_seconds_per_token must be > 0");
  if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target_sparsity must lie in [0,1)");
  }
  if (element_count < 1) throw Error(ErrorCode::kInvalidArgument, "element_count must be >= 1");
}

std::size_t TrainerSpec::changed_per_step() const {
  return static_cast<std::size_t>(std::round((1.0 - target_sparsity) * static_cast<double>(element_count)));
}

WeightSnapshot initial_snapshot(const PolicyId& policy, std::size_t element_count, std::uint64_t seed) {
  Rng rng(mix_seed(seed, policy.str(), 0xb0f));
  WeightSnapshot snap{policy, 0, std::vector<Word>(element_count)};
  for (auto& w : snap.words) w = static_cast<Word>(rng());
  return snap;
}

WeightSnapshot perturb_snapshot(const WeightSnapshot& prev, std::size_t changed, std::uint64_t seed) {
  const std::size_t n = prev.words.size();
  if (changed > n) throw Error(ErrorCode::kInvalidArgument, fmt::format("cannot change {} of {} words", changed, n));
  WeightSnapshot next{prev.policy, prev.version + 1, prev.words};
  Rng rng(mix_seed(seed, prev.policy.str(), next.version));

  // Floyd's sampling of `changed` distinct indices out of n.
  std::vector<char> chosen(n, 0);
  for (std::size_t j = n - changed; j < n; ++j) {
    const std::size_t t = uniform_index(rng, j + 1);
    const std::size_t pick = chosen[t] ? j : t;
    chosen[pick] = 1;
    next.words[pick] = static_cast<Word>(next.words[pick] ^ static_cast<Word>(1 + uniform_index(rng, 0xFFFF)));
  }
  return next;
}

TrainerSim::TrainerSim(TrainerSpec spec, SimTime start_time)
    : spec_(std::move(spec)), ready_since_(start_time) {
  spec_.validate();
  snapshot_ = initial_snapshot(spec_.policy, spec_.element_count, spec_.seed);
}

std::variant<StepRecord, Waiting> TrainerSim::begin_step(DataflowLayer& dataflow, SimTime now) {
  if (pending_) throw Error(ErrorCode::kInvalidArgument, fmt::format("trainer {} already in a step", spec_.policy.str()));
  auto batch = dataflow.next_training_batch(spec_.policy, spec_.batch_size, snapshot_.version, now);
  const double waited = std::max(0.0, now - ready_since_);
  if (!batch) return Waiting{waited};

  dataflow.accrue_wait(spec_.policy, waited);
  StepRecord rec;
  rec.version = snapshot_.version + 1;
  rec.wait_seconds = waited;
  rec.fresh_count = batch->fresh_count;
  rec.replay_count = batch->replay_count;
  for (const auto& t : batch->members) rec.foreign_count += t.meta.producing_policy != spec_.policy ? 1 : 0;
  rec.tokens = batch->total_tokens();
  rec.step_seconds = spec_.step_seconds_per_token * static_cast<double>(rec.tokens);
  rec.start_time = now;
  rec.end_time = now + rec.step_seconds;
  pending_ = rec;
  return rec;
}

StepRecord TrainerSim::complete_step(DataflowLayer& dataflow, WeightStore& store, const SyncPolicy& sync) {
  if (!pending_) throw Error(ErrorCode::kInvalidArgument, fmt::format("trainer {} has no step in flight", spec_.policy.str()));
  StepRecord rec = *pending_;
  pending_.reset();

  snapshot_ = perturb_snapshot(snapshot_, spec_.changed_per_step(), spec_.seed);
  const PublishRecord published = store.publish(snapshot_, sync);
  rec.delta_sparsity = published.delta ? published.delta->sparsity() : 1.0 - static_cast<double>(spec_.changed_per_step()) /
                                                                                static_cast<double>(spec_.element_count);
  dataflow.publish_version(spec_.policy, snapshot_.version);
  dataflow.record_step(spec_.policy, snapshot_.version, rec.step_seconds, rec.end_time);
  ready_since_ = rec.end_time;
  log_.push_back(rec);
  return rec;
}

std::variant<StepRecord, Waiting> TrainerSim::train_step(DataflowLayer& dataflow, WeightStore& store,
                                                         const SyncPolicy& sync, SimTime now) {
  auto begun = begin_step(dataflow, now);
  if (std::holds_alternative<Waiting>(begun)) return begun;
  return complete_step(dataflow, store, sync);
}

std::vector<std::pair<Version, double>> downtime_trace(const std::vector<StepRecord>& log) {
  std::vector<std::pair<Version, double>> out;
  out.reserve(log.size());
  for (const auto& r : log) out.emplace_back(r.version, r.wait_seconds);
  return out;
}

}  // namespace flowrl
