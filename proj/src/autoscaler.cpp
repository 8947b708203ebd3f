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

#include "flowrl/autoscaler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {

void AutoscaleConfig::validate() const {
  if (report_every_k == 0) throw Error(ErrorCode::kInvalidArgument, "report_every_k must be positive");
  if (!(tau_low >= 0.0 && tau_low < tau_high && tau_high < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "need 0 <= tau_low < tau_high < 1");
  if (!(rho >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "rho must be >= 1");
  if (g_min < 1 || g_min > g_max) throw Error(ErrorCode::kInvalidArgument, "need 1 <= g_min <= g_max");
  if (instance_sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "instance_sizes is empty");
  for (int s : instance_sizes)
    if (s < 1) throw Error(ErrorCode::kInvalidArgument, "instance sizes must be positive");
}

std::string_view branch_name(ScalingBranch branch) {
  switch (branch) {
    case ScalingBranch::kScaleUp: return "scale_up";
    case ScalingBranch::kScaleDown: return "scale_down";
    case ScalingBranch::kHold: return "hold";
  }
  return "hold";
}

long long snapped_ceil(double x) {
  double r = std::round(x);
  if (std::fabs(x - r) <= 1e-12 * std::max(1.0, std::fabs(x))) return static_cast<long long>(r);
  return static_cast<long long>(std::ceil(x));
}

ScalingDecision compute_target(int G, double w, std::uint64_t n_p, std::uint64_t n_c, const AutoscaleConfig& cfg) {
  if (G < 1) throw Error(ErrorCode::kInvalidArgument, fmt::format("G must be >= 1, got {}", G));
  if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::kInvalidW, fmt::format("w = {} outside [0, 1]", w));

  ScalingBranch formula = ScalingBranch::kHold;
  long long raw = G;
  if (w > cfg.tau_high) {
    formula = ScalingBranch::kScaleUp;
    raw = w >= 1.0 ? cfg.g_max : snapped_ceil(static_cast<double>(G) / (1.0 - w));
  } else if (w < cfg.tau_low && n_p > 0 && n_c > 0) {
    formula = ScalingBranch::kScaleDown;
    double ratio = static_cast<double>(n_c) / static_cast<double>(n_p);
    raw = std::min<long long>(G, snapped_ceil(static_cast<double>(G) * ratio * cfg.rho));
  }

  ScalingDecision d;
  d.g_target = static_cast<int>(std::clamp<long long>(raw, cfg.g_min, cfg.g_max));
  d.estimated_delta_gpus = d.g_target - G;
  d.branch = d.g_target == G ? ScalingBranch::kHold : formula;
  return d;
}

namespace {

void field(std::string& out, std::string_view key, std::string_view value) {
  fmt::format_to(std::back_inserter(out), "{:<23}: {}\n", key, value);
}

std::string f2(double v) { return fmt::format("{:.2f}", v); }
std::string f4(double v) { return fmt::format("{:.4f}", v); }

std::string signed_int(int v) { return v > 0 ? fmt::format("+{}", v) : fmt::format("{}", v); }

}  // namespace

std::string render_report(const BalanceWindow& w, const ScalingDecision& d) {
  std::string out;
  fmt::format_to(std::back_inserter(out), "--- Window (last {} iterations) ---\n", w.iterations);
  field(out, "wall_time_sec", f2(w.wall_time_sec));
  field(out, "eval_time_sec", f2(w.eval_time_sec));
  field(out, "training_time_sec", f2(w.training_time_sec));
  field(out, "avg_step_time_sec", f2(w.avg_step_time_sec));
  field(out, "avg_batch_wait_sec", f2(w.avg_batch_wait_sec));
  field(out, "rollout_wait_fraction", f4(w.wait_fraction));

  out += "\n--- Production ---\n";
  field(out, "total_raas_gpus", std::to_string(w.total_raas_gpus));
  field(out, "produced", std::to_string(w.produced));
  field(out, "entered", std::to_string(w.accepted));
  field(out, "  accept_rate", f4(w.accept_rate));
  field(out, "consumed", std::to_string(w.consumed));
  field(out, "stale_skipped", std::to_string(w.stale_skipped));
  field(out, "  stale_rate", f4(w.stale_rate));
  field(out, "throughput_per_gpu", f2(w.throughput_per_gpu));
  field(out, "produce_consume_ratio", f4(w.produce_consume_ratio));

  out += "\n--- Scaling decision ---\n";
  field(out, "branch", branch_name(d.branch));
  field(out, "G_target", std::to_string(d.g_target));
  field(out, "estimated_delta_gpus", signed_int(d.estimated_delta_gpus));
  field(out, "weight_transfer_active", d.weight_transfer_active ? "true" : "false");

  fmt::format_to(std::back_inserter(out), "\n--- RaaS Instance Layout (last {} iterations) ---\n", w.iterations);
  fmt::format_to(std::back_inserter(out), "{:<17} {:>4}{:>12}{:>12}{:>14}{:>16}{:>10}\n", "uid", "gpus", "produced",
                 "accepted", "accept_rate", "throughput/gpu", "status");
  long long sum_g = 0;
  std::uint64_t sum_p = 0, sum_a = 0;
  for (const auto& row : w.layout) {
    fmt::format_to(std::back_inserter(out), "{:<17} {:>4}{:>12}{:>12}{:>14.4f}{:>16.2f}{:>10}\n", row.uid, row.gpus,
                   row.produced, row.accepted, row.accept_rate, row.throughput_per_gpu,
                   row.suspect ? "suspect" : "healthy");
    sum_g += row.gpus;
    sum_p += row.produced;
    sum_a += row.accepted;
  }
  out += "---\n";
  fmt::format_to(std::back_inserter(out), "Total: {} instances, {} GPUs, {} produced, {} accepted\n", w.layout.size(),
                 sum_g, sum_p, sum_a);
  return out;
}

std::vector<std::string> select_scale_down_victims(const std::vector<InstanceLayoutRow>& rows, int gpus_to_remove) {
  if (gpus_to_remove < 1) throw Error(ErrorCode::kInvalidArgument, "gpus_to_remove must be positive");
  long long capacity = 0;
  for (const auto& r : rows) capacity += r.gpus;
  if (capacity < gpus_to_remove)
    throw Error(ErrorCode::kInsufficientCapacity,
                fmt::format("asked to remove {} GPUs, only {} present", gpus_to_remove, capacity));

  std::vector<const InstanceLayoutRow*> order;
  for (const auto& r : rows) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const InstanceLayoutRow* a, const InstanceLayoutRow* b) {
    if (a->suspect != b->suspect) return a->suspect;
    if (a->throughput_per_gpu != b->throughput_per_gpu) return a->throughput_per_gpu < b->throughput_per_gpu;
    return a->uid < b->uid;
  });

  std::vector<std::string> victims;
  int removed = 0;
  for (const auto* r : order) {
    if (removed >= gpus_to_remove) break;
    victims.push_back(r->uid);
    removed += r->gpus;
  }
  return victims;
}

std::vector<int> compose_launch_sizes(int gpus, const std::vector<int>& sizes) {
  if (sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "no instance sizes configured");
  std::vector<int> sorted = sizes;
  std::sort(sorted.rbegin(), sorted.rend());
  std::vector<int> out;
  int left = gpus;
  for (int s : sorted) {
    while (left >= s) {
      out.push_back(s);
      left -= s;
    }
  }
  if (left > 0) out.push_back(sorted.back());
  return out;
}

std::string ShellExecutor::expand(const std::string& tmpl, const std::string& uid, int gpus) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 5, "{uid}") == 0) {
      out += uid;
      i += 5;
    } else if (tmpl.compare(i, 6, "{gpus}") == 0) {
      out += std::to_string(gpus);
      i += 6;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

void ShellExecutor::launch(const std::string& uid, int gpus) { out_ << expand(launch_template_, uid, gpus) << '\n'; }

void ShellExecutor::retire(const std::string& uid) { out_ << expand(retire_template_, uid, 0) << '\n'; }

Maintainer::Maintainer(AutoscaleConfig cfg, Executor* executor, std::string uid_kind)
    : cfg_(std::move(cfg)), executor_(executor), uids_(std::move(uid_kind)) {
  cfg_.validate();
}

MaintainResult Maintainer::maintain(std::size_t window_index, const BalanceWindow& window,
                                    bool weight_transfer_active) {
  MaintainResult res;
  res.window_index = window_index;
  res.decision = compute_target(std::max(1, window.total_raas_gpus), window.wait_fraction, window.accepted,
                                window.consumed, cfg_);
  res.decision.weight_transfer_active = weight_transfer_active;
  res.report = render_report(window, res.decision);

  if (!handled_.insert(window_index).second) {
    res.repeated = true;
    return res;
  }
  if (executor_ == nullptr || res.decision.branch == ScalingBranch::kHold) return res;
  if (weight_transfer_active) {
    res.deferred = true;
    return res;
  }

  if (res.decision.estimated_delta_gpus > 0) {
    for (int size : compose_launch_sizes(res.decision.estimated_delta_gpus, cfg_.instance_sizes))
      res.commands.push_back({ExecutorCommand::Kind::kLaunch, uids_.next(), size});
  } else {
    try {
      std::map<std::string, int> gpus_of;
      for (const auto& r : window.layout) gpus_of[r.uid] = r.gpus;
      for (const auto& uid : select_scale_down_victims(window.layout, -res.decision.estimated_delta_gpus))
        res.commands.push_back({ExecutorCommand::Kind::kRetire, uid, gpus_of[uid]});
    } catch (const Error& e) {
      res.errors.emplace_back(e.what());
      res.commands.clear();
    }
  }

  for (const auto& cmd : res.commands) {
    try {
      if (cmd.kind == ExecutorCommand::Kind::kLaunch)
        executor_->launch(cmd.uid, cmd.gpus);
      else
        executor_->retire(cmd.uid);
    } catch (const std::exception& e) {
      res.errors.push_back(fmt::format("{} {}: {}", cmd.kind == ExecutorCommand::Kind::kLaunch ? "launch" : "retire",
                                       cmd.uid, e.what()));
    }
  }
  return res;
}

}  // namespace flowrl
