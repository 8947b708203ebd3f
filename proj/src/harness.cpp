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

#include "flowrl/harness.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "deployment.hpp"
#include "flowrl/error.hpp"

namespace flowrl {

namespace {

enum Kind : int { kTrainerEvent = 0, kRaasEvent = 1, kMaintainEvent = 2 };

std::string_view kind_name(int kind) {
  switch (kind) {
    case kTrainerEvent: return "trainer";
    case kRaasEvent: return "raas";
    default: return "maintain";
  }
}

struct Event {
  SimTime time;
  int kind;
  std::string uid;
  std::uint64_t seq;
  Version version = 0;  // maintain events: trainer version closing the window
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return std::tie(a.time, a.kind, a.uid, a.seq) > std::tie(b.time, b.kind, b.uid, b.seq);
  }
};

class Simulation {
 public:
  Simulation(const Scenario& sc, std::uint64_t seed) : d_(sc, seed), k_(d_.controller().report_every_k) {
    for (const auto& [policy, _] : d_.trainers) {
      maintainers_.emplace(policy, Maintainer(d_.controller(), nullptr, "auto"));
      remaining_.insert(policy);
    }
    if (d_.sc.autoscale && d_.sc.autoscale->enabled) {
      executor_ = std::make_unique<CallbackExecutor>([this](const std::string& uid, int gpus) { launch(uid, gpus); },
                                                     [this](const std::string& uid) { retire(uid); });
      maintainers_.insert_or_assign(d_.sc.autoscale->reference_trainer,
                                    Maintainer(d_.controller(), executor_.get(), "auto"));
    }
  }

  RunResult run() {
    RunResult res;
    res.scenario = d_.sc.name;
    res.seed = d_.sc.seed;
    result_ = &res;

    pool_gpus_ = d_.dataflow->total_raas_gpus();
    detail::record_pool(res.metrics, 0.0, 0, pool_gpus_);
    for (const auto& [policy, _] : d_.trainers) schedule(kTrainerEvent, policy.str(), 0.0);
    for (const auto& uid : d_.raas_order) schedule(kRaasEvent, uid, 0.0);

    while (!remaining_.empty()) {
      if (queue_.empty()) {
        throw Error(ErrorCode::kRunAborted,
                    fmt::format("no pending events at t={} with {} trainer(s) unfinished", now_, remaining_.size()));
      }
      Event ev = queue_.top();
      queue_.pop();
      if (ev.kind != kMaintainEvent && tokens_[{ev.kind, ev.uid}] != ev.seq) continue;
      if (ev.time > d_.sc.max_sim_seconds) {
        throw Error(ErrorCode::kRunAborted,
                    fmt::format("simulated time limit {} s reached at {} {}", d_.sc.max_sim_seconds, kind_name(ev.kind), ev.uid));
      }
      now_ = ev.time;
      try {
        dispatch(ev);
      } catch (const Error& e) {
        throw Error(ErrorCode::kRunAborted, fmt::format("t={} {} {}: {}", ev.time, kind_name(ev.kind), ev.uid, e.what()));
      }
    }

    // Windows closed by the final step are still reported.
    while (!queue_.empty() && queue_.top().time <= now_) {
      Event ev = queue_.top();
      queue_.pop();
      if (ev.kind == kMaintainEvent) on_maintain(PolicyId(ev.uid), ev.version);
    }

    res.wall_seconds = now_;
    gpu_seconds_ += pool_gpus_ * (now_ - pool_since_);
    res.rollout_gpu_seconds = gpu_seconds_;
    detail::record_pool(res.metrics, now_, reference_version(), pool_gpus_);
    res.raas = std::move(raas_summary_);
    d_.fill_result(res);
    return res;
  }

 private:
  void schedule(int kind, const std::string& uid, SimTime time, Version version = 0) {
    const auto seq = ++seq_;
    if (kind != kMaintainEvent) tokens_[{kind, uid}] = seq;
    queue_.push({time, kind, uid, seq, version});
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case kTrainerEvent: return on_trainer(PolicyId(ev.uid));
      case kRaasEvent: return on_raas(ev.uid);
      default: return on_maintain(PolicyId(ev.uid), ev.version);
    }
  }

  void on_trainer(const PolicyId& policy) {
    auto& tr = *d_.trainers.at(policy);
    if (tr.in_step()) {
      const StepRecord rec = tr.complete_step(*d_.dataflow, d_.store, d_.sc.sync);
      detail::record_step(result_->metrics, policy, rec);
      if (rec.version % k_ == 0) schedule(kMaintainEvent, policy.str(), now_, rec.version);
      if (rec.version >= d_.sc.versions) {
        remaining_.erase(policy);
        return;
      }
    }
    auto begun = tr.begin_step(*d_.dataflow, now_);
    if (auto* rec = std::get_if<StepRecord>(&begun)) {
      waiting_.erase(policy);
      schedule(kTrainerEvent, policy.str(), rec->end_time);
      wake_idle_raas();
    } else {
      waiting_.insert(policy);
    }
  }

  void on_raas(const std::string& uid) {
    auto& inst = *d_.raas.at(uid);
    const ServiceEvents ev = inst.service_step(*d_.dataflow, d_.store, now_);
    detail::record_service(result_->metrics, raas_summary_[uid], uid, ev, now_);
    bool fed = false;
    for (const auto& in : ev.ingested) fed = fed || in.accepted > 0;
    if (fed) {
      for (const auto& p : waiting_) schedule(kTrainerEvent, p.str(), now_);
      waiting_.clear();
    }
    if (ev.idle) idle_.insert(uid);
    else idle_.erase(uid);
    if (ev.next_wake) schedule(kRaasEvent, uid, *ev.next_wake);
    else idle_.erase(uid);
  }

  void wake_idle_raas() {
    for (const auto& uid : idle_) schedule(kRaasEvent, uid, now_);
    idle_.clear();
  }

  void on_maintain(const PolicyId& policy, Version version) {
    BalanceWindow window = d_.dataflow->window_stats(policy, k_);
    bool transfer = false;
    for (const auto& [_, inst] : d_.raas) transfer = transfer || inst->transfer_active(now_);
    auto& m = maintainers_.at(policy);
    MaintainResult mr = m.maintain(version / k_, window, transfer);
    for (const auto& e : mr.errors) result_->events.push_back(fmt::format("t={} {}", now_, e));
    detail::record_window(result_->metrics, *d_.dataflow, policy, k_, window, mr.decision, now_, version);
    result_->reports.push_back({policy, version, now_, std::move(window), std::move(mr)});
  }

  void pool_changed() {
    gpu_seconds_ += pool_gpus_ * (now_ - pool_since_);
    pool_since_ = now_;
    pool_gpus_ = d_.dataflow->total_raas_gpus();
    detail::record_pool(result_->metrics, now_, reference_version(), pool_gpus_);
  }

  void launch(const std::string& uid, int gpus) {
    d_.add_instance(d_.launch_spec(uid, gpus));
    result_->events.push_back(fmt::format("t={} launch {} gpus={}", now_, uid, gpus));
    schedule(kRaasEvent, uid, now_);
    pool_changed();
  }

  void retire(const std::string& uid) {
    d_.dataflow->retire_raas(uid);
    d_.raas.at(uid)->retire();
    idle_.erase(uid);
    result_->events.push_back(fmt::format("t={} retire {}", now_, uid));
    pool_changed();
  }

  Version reference_version() const {
    if (d_.sc.autoscale && d_.trainers.contains(d_.sc.autoscale->reference_trainer))
      return d_.trainers.at(d_.sc.autoscale->reference_trainer)->version();
    return d_.trainers.empty() ? 0 : d_.trainers.begin()->second->version();
  }

  detail::Deployment d_;
  std::size_t k_;
  std::map<PolicyId, Maintainer> maintainers_;
  std::unique_ptr<Executor> executor_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<std::pair<int, std::string>, std::uint64_t> tokens_;
  std::uint64_t seq_ = 0;
  SimTime now_ = 0.0;
  std::set<PolicyId> remaining_;
  std::set<PolicyId> waiting_;
  std::set<std::string> idle_;
  std::map<std::string, RaasSummary> raas_summary_;
  int pool_gpus_ = 0;
  SimTime pool_since_ = 0.0;
  double gpu_seconds_ = 0.0;
  RunResult* result_ = nullptr;
};

}  // namespace

nlohmann::json RunResult::summary_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["mode"] = mode == RunMode::kSim ? "sim" : "live";
  j["wall_seconds"] = wall_seconds;
  j["rollout_gpu_seconds"] = rollout_gpu_seconds;
  j["rollout_gpu_hours"] = rollout_gpu_seconds / 3600.0;
  for (const auto& [policy, t] : trainers) {
    j["trainers"][policy.str()] = {{"final_version", t.final_version},
                                   {"busy_seconds", t.busy_seconds},
                                   {"wait_seconds", t.wait_seconds}};
  }
  for (const auto& [uid, r] : raas) {
    j["raas"][uid] = {{"gpus", r.gpus},
                      {"retired", r.retired},
                      {"produced", r.produced},
                      {"accepted", r.accepted},
                      {"refreshes", r.refreshes},
                      {"transfer_seconds", r.transfer_seconds},
                      {"downtime_seconds", r.downtime_seconds},
                      {"busy_seconds", r.busy_seconds}};
  }
  auto& cons = j["conservation"];
  for (const auto& [policy, p] : ledger.producers) {
    cons["producers"][policy.str()] = {
        {"produced", p.produced}, {"accepted", p.accepted}, {"rejected", p.rejected}, {"unrouted", p.unrouted}};
  }
  for (const auto& [policy, t] : ledger.trainers) {
    cons["trainers"][policy.str()] = {{"entered", t.entered},   {"consumed", t.consumed},
                                      {"stale_skipped", t.stale_skipped}, {"replayed", t.replayed},
                                      {"buffered", t.buffered}};
  }
  cons["balanced"] = ledger.balanced();
  j["windows"] = reports.size();
  j["events"] = events;
  return j;
}

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  const std::uint64_t seed = options.seed.value_or(scenario.seed);
  if (options.mode == RunMode::kLive) return run_live(scenario, options);
  RunResult res = Simulation(scenario, seed).run();
  res.mode = RunMode::kSim;
  return res;
}

void write_run(const RunResult& result, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "reports", ec);
  if (ec) throw Error(ErrorCode::kIoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  result.metrics.write(dir / "metrics");

  auto write_file = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
    out << text;
    if (!out) throw Error(ErrorCode::kIoError, fmt::format("write failed for {}", path.string()));
  };

  write_file(dir / "summary.json", result.summary_json().dump(2) + "\n");
  std::string log;
  for (const auto& r : result.reports) {
    write_file(dir / "reports" / fmt::format("{}-{:04}.txt", r.trainer.str(), r.maintenance.window_index),
               r.maintenance.report);
    log += fmt::format("# trainer={} version={} time={}\n", r.trainer.str(), r.version, r.time);
    log += r.maintenance.report;
    log += '\n';
  }
  write_file(dir / "balance_reports.log", log);
}

std::string last_report(const std::filesystem::path& dir) {
  const auto path = dir / "balance_reports.log";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto start = text.rfind("--- Window");
  if (start == std::string::npos) return {};
  auto end = text.find("\n# trainer=", start);
  std::string report = text.substr(start, end == std::string::npos ? std::string::npos : end - start + 1);
  while (report.size() >= 2 && report.ends_with("\n\n")) report.pop_back();
  return report;
}

}  // namespace flowrl
