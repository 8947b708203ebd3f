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

#include "flowrl/data_algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {
namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void GresoConfig::validate() const {
  for (double p : {p_init_easy, p_init_hard, alpha_easy, alpha_hard, delta_p, floor_easy, floor_hard,
                   correctness_threshold}) {
    if (!is_probability(p)) throw Error(ErrorCode::kInvalidArgument, "greso parameters must lie in [0,1]");
  }
  if (floor_easy > p_init_easy || floor_hard > p_init_hard) {
    throw Error(ErrorCode::kInvalidArgument, "greso floors must not exceed initial probabilities");
  }
}

double GresoPromptState::zero_variance_ratio() const {
  return groups_seen == 0 ? 0.0 : static_cast<double>(zero_variance_seen) / static_cast<double>(groups_seen);
}

double greso_floor(GresoBucket bucket, const GresoConfig& cfg) {
  switch (bucket) {
    case GresoBucket::kEasy: return cfg.floor_easy;
    case GresoBucket::kHard: return cfg.floor_hard;
    case GresoBucket::kUnseen: return 1.0;
  }
  return 1.0;
}

bool greso_should_submit(const GresoPromptState& state, double uniform_draw) {
  if (state.bucket == GresoBucket::kUnseen) return true;
  return uniform_draw < state.submit_prob;
}

GresoPromptState greso_update(const GresoPromptState& state, const RolloutGroup& group, const GresoConfig& cfg) {
  GresoPromptState next = state;
  if (group.members.empty()) return next;

  const bool zero_var = group_is_zero_advantage(group);
  next.groups_seen += 1;
  next.zero_variance_seen += zero_var ? 1 : 0;
  for (const auto& t : group.members) {
    next.rewards_seen += 1;
    next.mean_correctness += (t.reward - next.mean_correctness) / static_cast<double>(next.rewards_seen);
  }

  const GresoBucket bucket =
      next.mean_correctness >= cfg.correctness_threshold ? GresoBucket::kEasy : GresoBucket::kHard;
  if (state.bucket == GresoBucket::kUnseen) {
    next.submit_prob = bucket == GresoBucket::kEasy ? cfg.p_init_easy : cfg.p_init_hard;
  }
  next.bucket = bucket;

  const double target = bucket == GresoBucket::kEasy ? cfg.alpha_easy : cfg.alpha_hard;
  const double ratio = next.zero_variance_ratio();
  if (ratio > target) next.submit_prob -= cfg.delta_p;
  else if (ratio < target) next.submit_prob += cfg.delta_p;
  next.submit_prob = std::clamp(next.submit_prob, greso_floor(bucket, cfg), 1.0);
  return next;
}

GresoCurator::GresoCurator(GresoConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) { cfg_.validate(); }

bool GresoCurator::admit(std::uint64_t prompt_id) {
  auto it = states_.find(prompt_id);
  if (it == states_.end()) return true;
  return greso_should_submit(it->second, uniform01(rng_));
}

void GresoCurator::observe(const RolloutGroup& group) {
  auto [it, inserted] = states_.try_emplace(group.prompt_id);
  if (inserted) it->second.prompt_id = group.prompt_id;
  it->second = greso_update(it->second, group, cfg_);
}

const GresoPromptState* GresoCurator::state(std::uint64_t prompt_id) const {
  auto it = states_.find(prompt_id);
  return it == states_.end() ? nullptr : &it->second;
}

FilterVerdict post_filter_zero_adv(const RolloutGroup& group) {
  if (group.members.empty()) return FilterVerdict::kDrop;
  return group_is_zero_advantage(group) ? FilterVerdict::kDrop : FilterVerdict::kKeep;
}

// ---------------------------------------------------------------------------

void ReplayConfig::validate() const {
  if (pool_capacity < 1) throw Error(ErrorCode::kInvalidArgument, "replay pool capacity must be >= 1");
  if (!is_probability(replay_ratio)) throw Error(ErrorCode::kInvalidArgument, "replay ratio must lie in [0,1]");
}

void ReplayPool::admit(Trajectory traj, Version trainer_version) {
  entries_.push_back({std::move(traj), trainer_version});
  while (entries_.size() > cfg_.pool_capacity) entries_.pop_front();
}

void ReplayPool::evict_stale(Version trainer_version) {
  const auto before = entries_.size();
  std::erase_if(entries_, [&](const Entry& e) {
    const Version origin = std::min(e.admitted_at_version, e.traj.meta.produced_at_version);
    return trainer_version > origin && trainer_version - origin > cfg_.max_staleness;
  });
  evicted_stale_ += before - entries_.size();
}

std::size_t ReplayPool::available(Version trainer_version) {
  evict_stale(trainer_version);
  return entries_.size();
}

std::vector<Trajectory> ReplayPool::serve(std::size_t k, Version trainer_version, Rng& rng) {
  if (k == 0) return {};
  evict_stale(trainer_version);
  const std::size_t n = entries_.size();
  const std::size_t take = std::min(k, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Trajectory> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
    out.push_back(entries_[idx[i]].traj);
  }
  return out;
}

std::size_t round_half_away(double x) {
  return static_cast<std::size_t>(std::round(x));  // std::round is half-away-from-zero
}

std::optional<Composition> compose_batch(std::size_t fresh_available, std::size_t pool_available,
                                         const ReplayConfig& cfg, std::size_t batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  Composition c;
  c.replay_take = std::min(round_half_away(cfg.replay_ratio * static_cast<double>(batch_size)), pool_available);
  c.replay_take = std::min(c.replay_take, batch_size);
  c.fresh_take = std::min(batch_size - c.replay_take, fresh_available);
  if (c.fresh_take + c.replay_take != batch_size) return std::nullopt;
  return c;
}

std::optional<Composition> FreshOnlyComposer::plan(std::size_t fresh_available, std::size_t batch_size, Version) {
  if (fresh_available < batch_size) return std::nullopt;
  return Composition{batch_size, 0};
}

std::optional<Composition> ReplayComposer::plan(std::size_t fresh_available, std::size_t batch_size,
                                                Version trainer_version) {
  return compose_batch(fresh_available, pool_.available(trainer_version), pool_.config(), batch_size);
}

std::vector<Trajectory> ReplayComposer::serve_replay(std::size_t k, Version trainer_version) {
  return pool_.serve(k, trainer_version, rng_);
}

void ReplayComposer::admit_fresh(const std::vector<Trajectory>& fresh, Version trainer_version) {
  for (const auto& t : fresh) pool_.admit(t, trainer_version);
}

std::string ReplayComposer::name() const { return fmt::format("replay({})", pool_.config().replay_ratio); }

}  // namespace flowrl
