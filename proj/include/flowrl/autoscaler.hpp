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

// Rollout-pool controller: a three-zone rule on the trainer waiting fraction
// w, the balance report it is read from, and a maintainer that turns the
// suggested target into launch/retire commands.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "flowrl/dataflow.hpp"

namespace flowrl {

struct AutoscaleConfig {
  std::size_t report_every_k = 10;
  double tau_low = 0.05;
  double tau_high = 0.10;
  double rho = 1.10;
  int g_min = 6;
  int g_max = 11;
  std::vector<int> instance_sizes{1, 2, 4};

  void validate() const;
};

enum class ScalingBranch { kScaleUp, kScaleDown, kHold };

std::string_view branch_name(ScalingBranch branch);

struct ScalingDecision {
  ScalingBranch branch = ScalingBranch::kHold;
  int g_target = 0;
  int estimated_delta_gpus = 0;
  bool weight_transfer_active = false;

  friend bool operator==(const ScalingDecision&, const ScalingDecision&) = default;
};

///   w > tau_high                      -> ceil(G / (1 - w))
///   w < tau_low and n_p, n_c > 0      -> min(G, ceil(G * (n_c / n_p) * rho))
///   otherwise                         -> G
/// then clamped to [g_min, g_max]; a result equal to G is reported as hold.
ScalingDecision compute_target(int G, double w, std::uint64_t n_p, std::uint64_t n_c, const AutoscaleConfig& cfg);

/// Ceiling that treats values within 1e-12 (relative) of an integer as that
/// integer, so decimal inputs such as 11 * 0.8 * 1.1 land where exact
/// arithmetic does.
long long snapped_ceil(double x);

std::string render_report(const BalanceWindow& window, const ScalingDecision& decision);

/// Suspect instances first, then ascending throughput per GPU, ties by uid;
/// stops once the removed GPUs reach `gpus_to_remove` (overshoot allowed).
std::vector<std::string> select_scale_down_victims(const std::vector<InstanceLayoutRow>& rows, int gpus_to_remove);

/// Splits `gpus` into allowed instance sizes, largest first.
std::vector<int> compose_launch_sizes(int gpus, const std::vector<int>& sizes);

struct ExecutorCommand {
  enum class Kind { kLaunch, kRetire };
  Kind kind = Kind::kLaunch;
  std::string uid;
  int gpus = 0;

  friend bool operator==(const ExecutorCommand&, const ExecutorCommand&) = default;
};

class Executor {
 public:
  virtual ~Executor() = default;
  virtual void launch(const std::string& uid, int gpus) = 0;
  virtual void retire(const std::string& uid) = 0;
};

/// Renders commands from templates with {uid} and {gpus} placeholders.
class ShellExecutor final : public Executor {
 public:
  ShellExecutor(std::string launch_template, std::string retire_template, std::ostream& out)
      : launch_template_(std::move(launch_template)), retire_template_(std::move(retire_template)), out_(out) {}

  void launch(const std::string& uid, int gpus) override;
  void retire(const std::string& uid) override;

  static std::string expand(const std::string& tmpl, const std::string& uid, int gpus);

 private:
  std::string launch_template_;
  std::string retire_template_;
  std::ostream& out_;
};

/// Forwards to callbacks; the simulator plugs its fleet in through this.
class CallbackExecutor final : public Executor {
 public:
  CallbackExecutor(std::function<void(const std::string&, int)> on_launch,
                   std::function<void(const std::string&)> on_retire)
      : on_launch_(std::move(on_launch)), on_retire_(std::move(on_retire)) {}

  void launch(const std::string& uid, int gpus) override { on_launch_(uid, gpus); }
  void retire(const std::string& uid) override { on_retire_(uid); }

 private:
  std::function<void(const std::string&, int)> on_launch_;
  std::function<void(const std::string&)> on_retire_;
};

struct MaintainResult {
  std::size_t window_index = 0;
  ScalingDecision decision;
  std::string report;
  std::vector<ExecutorCommand> commands;
  bool deferred = false;
  bool repeated = false;  // window already handled; nothing issued
  std::vector<std::string> errors;
};

class Maintainer {
 public:
  Maintainer(AutoscaleConfig cfg, Executor* executor, std::string uid_kind = "auto");

  /// Reads one window, decides, and drives the executor (null executor:
  /// report only). Commands are issued at most once per window index.
  MaintainResult maintain(std::size_t window_index, const BalanceWindow& window, bool weight_transfer_active);

  const AutoscaleConfig& config() const { return cfg_; }

 private:
  AutoscaleConfig cfg_;
  Executor* executor_;
  IdGenerator uids_;
  std::set<std::size_t> handled_;
};

}  // namespace flowrl
