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

// Data-path hooks at the three intervention points:
//   Curator      decides which prompts become rollout tasks (pre-rollout),
//   PostFilter   decides whether a finished group is kept (post-rollout),
//   BatchComposer mixes fresh and replayed trajectories into a batch.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowrl/core.hpp"
#include "flowrl/rng.hpp"

namespace flowrl {

// ---------------------------------------------------------------------------
// Selective rollout (GRESO)

struct GresoConfig {
  double p_init_easy = 0.5;
  double p_init_hard = 0.5;
  double alpha_easy = 0.083;
  double alpha_hard = 0.167;
  double delta_p = 0.01;
  double floor_easy = 0.05;
  double floor_hard = 0.30;
  double correctness_threshold = 0.5;

  void validate() const;
};

enum class GresoBucket { kUnseen, kEasy, kHard };

struct GresoPromptState {
  std::uint64_t prompt_id = 0;
  GresoBucket bucket = GresoBucket::kUnseen;
  double submit_prob = 1.0;
  std::uint64_t groups_seen = 0;
  std::uint64_t zero_variance_seen = 0;
  std::uint64_t rewards_seen = 0;
  double mean_correctness = 0.0;

  double zero_variance_ratio() const;
};

bool greso_should_submit(const GresoPromptState& state, double uniform_draw);
GresoPromptState greso_update(const GresoPromptState& state, const RolloutGroup& group, const GresoConfig& cfg);
double greso_floor(GresoBucket bucket, const GresoConfig& cfg);

// ---------------------------------------------------------------------------
// Replay

struct ReplayConfig {
  std::size_t pool_capacity = 10000;
  Version max_staleness = 8;
  double replay_ratio = 0.0;

  void validate() const;
};

/// FIFO-evicting pool of trajectories that may be served again. An entry is
/// stale once the trainer is more than max_staleness versions past the older
/// of its admission version and its producing version.
class ReplayPool {
 public:
  explicit ReplayPool(ReplayConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void admit(Trajectory traj, Version trainer_version);
  /// Evicts stale entries, then samples min(k, size) entries uniformly without
  /// replacement. Served entries stay in the pool.
  std::vector<Trajectory> serve(std::size_t k, Version trainer_version, Rng& rng);
  /// Number of entries that serve() at this version could draw from.
  std::size_t available(Version trainer_version);

  std::size_t size() const { return entries_.size(); }
  std::size_t evicted_stale() const { return evicted_stale_; }
  const ReplayConfig& config() const { return cfg_; }

 private:
  struct Entry {
    Trajectory traj;
    Version admitted_at_version;
  };
  void evict_stale(Version trainer_version);

  ReplayConfig cfg_;
  std::deque<Entry> entries_;
  std::size_t evicted_stale_ = 0;
};

struct Composition {
  std::size_t fresh_take = 0;
  std::size_t replay_take = 0;
};

/// replay_take = round(r * batch_size) capped by pool availability, fresh
/// fills the rest capped by fresh availability; nullopt when the two cannot
/// reach batch_size.
std::optional<Composition> compose_batch(std::size_t fresh_available, std::size_t pool_available,
                                         const ReplayConfig& cfg, std::size_t batch_size);

/// Rounds half away from zero.
std::size_t round_half_away(double x);

// ---------------------------------------------------------------------------
// Hook interfaces

class Curator {
 public:
  virtual ~Curator() = default;
  virtual bool admit(std::uint64_t prompt_id) = 0;
  virtual void observe(const RolloutGroup& group) = 0;
  virtual std::string name() const = 0;
};

class PostFilter {
 public:
  virtual ~PostFilter() = default;
  virtual bool keep(const RolloutGroup& group) = 0;
  virtual std::string name() const = 0;
};

class BatchComposer {
 public:
  virtual ~BatchComposer() = default;
  virtual std::optional<Composition> plan(std::size_t fresh_available, std::size_t batch_size,
                                          Version trainer_version) = 0;
  virtual std::vector<Trajectory> serve_replay(std::size_t k, Version trainer_version) = 0;
  virtual void admit_fresh(const std::vector<Trajectory>& fresh, Version trainer_version) = 0;
  virtual std::string name() const = 0;
};

class KeepAllCurator final : public Curator {
 public:
  bool admit(std::uint64_t) override { return true; }
  void observe(const RolloutGroup&) override {}
  std::string name() const override { return "keep_all"; }
};

class GresoCurator final : public Curator {
 public:
  GresoCurator(GresoConfig cfg, std::uint64_t seed);

  bool admit(std::uint64_t prompt_id) override;
  void observe(const RolloutGroup& group) override;
  std::string name() const override { return "greso"; }

  const GresoPromptState* state(std::uint64_t prompt_id) const;

 private:
  GresoConfig cfg_;
  Rng rng_;
  std::map<std::uint64_t, GresoPromptState> states_;
};

/// Admits nothing or everything with a fixed probability; used for tests and
/// degenerate scenarios.
class FixedProbabilityCurator final : public Curator {
 public:
  FixedProbabilityCurator(double probability, std::uint64_t seed) : probability_(probability), rng_(seed) {}
  bool admit(std::uint64_t) override { return uniform01(rng_) < probability_; }
  void observe(const RolloutGroup&) override {}
  std::string name() const override { return "fixed"; }

 private:
  double probability_;
  Rng rng_;
};

class KeepAllFilter final : public PostFilter {
 public:
  bool keep(const RolloutGroup&) override { return true; }
  std::string name() const override { return "keep_all"; }
};

enum class FilterVerdict { kKeep, kDrop };

FilterVerdict post_filter_zero_adv(const RolloutGroup& group);

class ZeroAdvantageFilter final : public PostFilter {
 public:
  bool keep(const RolloutGroup& group) override { return post_filter_zero_adv(group) == FilterVerdict::kKeep; }
  std::string name() const override { return "zero_adv"; }
};

class FreshOnlyComposer final : public BatchComposer {
 public:
  std::optional<Composition> plan(std::size_t fresh_available, std::size_t batch_size, Version) override;
  std::vector<Trajectory> serve_replay(std::size_t, Version) override { return {}; }
  void admit_fresh(const std::vector<Trajectory>&, Version) override {}
  std::string name() const override { return "fresh_only"; }
};

class ReplayComposer final : public BatchComposer {
 public:
  ReplayComposer(ReplayConfig cfg, std::uint64_t seed) : pool_(cfg), rng_(seed) {}

  std::optional<Composition> plan(std::size_t fresh_available, std::size_t batch_size,
                                  Version trainer_version) override;
  std::vector<Trajectory> serve_replay(std::size_t k, Version trainer_version) override;
  void admit_fresh(const std::vector<Trajectory>& fresh, Version trainer_version) override;
  std::string name() const override;

  const ReplayPool& pool() const { return pool_; }

 private:
  ReplayPool pool_;
  Rng rng_;
};

}  // namespace flowrl
