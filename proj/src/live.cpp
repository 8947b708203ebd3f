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

// Threaded live mode: every RaaS instance, trainer and the maintainer run as
// independent workers on a scaled wall clock and talk only through the
// dataflow layer and the weight store.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "deployment.hpp"
#include "flowrl/error.hpp"
#include "flowrl/harness.hpp"

namespace flowrl {

namespace {

using Clock = std::chrono::steady_clock;

class LiveRun {
 public:
  LiveRun(const Scenario& sc, std::uint64_t seed, double scale)
      : d_(sc, seed), scale_(scale), k_(d_.controller().report_every_k), start_(Clock::now()) {
    if (!(scale_ > 0.0)) throw Error(ErrorCode::kInvalidArgument, "live_time_scale must be positive");
  }

  RunResult run() {
    res_.scenario = d_.sc.name;
    res_.seed = d_.sc.seed;
    res_.mode = RunMode::kLive;
    pool_gpus_ = d_.dataflow->total_raas_gpus();
    detail::record_pool(res_.metrics, 0.0, 0, pool_gpus_);

    if (d_.sc.autoscale && d_.sc.autoscale->enabled) {
      executor_ = std::make_unique<CallbackExecutor>([this](const std::string& uid, int gpus) { launch(uid, gpus); },
                                                     [this](const std::string& uid) { retire(uid); });
    }
    {
      std::lock_guard lock(fleet_mu_);
      for (const auto& uid : d_.raas_order) start_instance(uid);
    }
    std::thread maintainer([this] { maintain_loop(); });
    std::vector<std::thread> trainers;
    for (const auto& [policy, _] : d_.trainers) trainers.emplace_back([this, p = policy] { trainer_loop(p); });
    for (auto& t : trainers) t.join();

    const SimTime end = now();
    stop_ = true;
    windows_cv_.notify_all();
    maintainer.join();
    {
      std::lock_guard lock(fleet_mu_);
      for (auto& [_, w] : workers_) w->thread.join();
    }
    if (failure_) std::rethrow_exception(failure_);

    std::lock_guard lock(mu_);
    res_.wall_seconds = end;
    gpu_seconds_ += pool_gpus_ * (end - pool_since_);
    res_.rollout_gpu_seconds = gpu_seconds_;
    detail::record_pool(res_.metrics, end, 0, pool_gpus_);
    res_.raas = raas_summary_;
    d_.fill_result(res_);
    return std::move(res_);
  }

 private:
  struct Worker {
    std::mutex mu;  // guards the instance against maintainer queries
    std::thread thread;
  };

  SimTime now() const { return std::chrono::duration<double>(Clock::now() - start_).count() / scale_; }

  void sleep_until(SimTime t) {
    while (!stop_) {
      const double left = (t - now()) * scale_;
      if (left <= 0.0) return;
      std::this_thread::sleep_for(std::chrono::duration<double>(std::min(left, 0.01)));
    }
  }

  void fail(const std::string& who) {
    try {
      throw;
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      if (!failure_)
        failure_ = std::make_exception_ptr(Error(ErrorCode::kRunAborted, fmt::format("{}: {}", who, e.what())));
    }
    stop_ = true;
    windows_cv_.notify_all();
  }

  // fleet_mu_ held by the caller
  void start_instance(const std::string& uid) {
    auto worker = std::make_unique<Worker>();
    Worker* w = worker.get();
    RaasInstance* inst = d_.raas.at(uid).get();
    workers_[uid] = std::move(worker);
    w->thread = std::thread([this, uid, w, inst] { raas_loop(uid, *w, *inst); });
  }

  void raas_loop(const std::string& uid, Worker& w, RaasInstance& inst) {
    try {
      while (!stop_) {
        const SimTime t = now();
        ServiceEvents ev;
        {
          std::lock_guard lock(w.mu);
          ev = inst.service_step(*d_.dataflow, d_.store, t);
        }
        {
          std::lock_guard lock(mu_);
          detail::record_service(res_.metrics, raas_summary_[uid], uid, ev, t);
        }
        if (!ev.next_wake) return;
        sleep_until(*ev.next_wake);
      }
    } catch (...) {
      fail("raas " + uid);
    }
  }

  void trainer_loop(const PolicyId& policy) {
    auto& tr = *d_.trainers.at(policy);
    try {
      while (!stop_) {
        if (now() > d_.sc.max_sim_seconds)
          throw Error(ErrorCode::kRunAborted, fmt::format("simulated time limit {} s reached", d_.sc.max_sim_seconds));
        auto begun = tr.begin_step(*d_.dataflow, now());
        if (std::holds_alternative<Waiting>(begun)) {
          sleep_until(now() + d_.sc.idle_poll_seconds);
          continue;
        }
        sleep_until(std::get<StepRecord>(begun).end_time);
        if (stop_) return;
        const StepRecord rec = tr.complete_step(*d_.dataflow, d_.store, d_.sc.sync);
        {
          std::lock_guard lock(mu_);
          detail::record_step(res_.metrics, policy, rec);
        }
        if (rec.version % k_ == 0) {
          std::lock_guard lock(windows_mu_);
          windows_.push_back({policy, rec.version});
          windows_cv_.notify_all();
        }
        if (rec.version >= d_.sc.versions) return;
      }
    } catch (...) {
      fail("trainer " + policy.str());
    }
  }

  void maintain_loop() {
    std::map<PolicyId, Maintainer> maintainers;
    for (const auto& [policy, _] : d_.trainers)
      maintainers.emplace(policy, Maintainer(d_.controller(), d_.acts_on(policy) ? executor_.get() : nullptr, "auto"));
    try {
      while (true) {
        std::pair<PolicyId, Version> job;
        {
          std::unique_lock lock(windows_mu_);
          windows_cv_.wait(lock, [&] { return stop_ || !windows_.empty(); });
          if (windows_.empty()) return;
          job = windows_.front();
          windows_.pop_front();
        }
        const SimTime t = now();
        BalanceWindow window = d_.dataflow->window_stats(job.first, k_);
        bool transfer = false;
        {
          std::lock_guard lock(fleet_mu_);
          for (auto& [uid, w] : workers_) {
            std::lock_guard wl(w->mu);
            transfer = transfer || d_.raas.at(uid)->transfer_active(t);
          }
        }
        MaintainResult mr = maintainers.at(job.first).maintain(job.second / k_, window, transfer);
        std::lock_guard lock(mu_);
        for (const auto& e : mr.errors) res_.events.push_back(fmt::format("t={} {}", t, e));
        detail::record_window(res_.metrics, *d_.dataflow, job.first, k_, window, mr.decision, t, job.second);
        res_.reports.push_back({job.first, job.second, t, std::move(window), std::move(mr)});
      }
    } catch (...) {
      fail("maintainer");
    }
  }

  void pool_changed(SimTime t) {
    std::lock_guard lock(mu_);
    gpu_seconds_ += pool_gpus_ * (t - pool_since_);
    pool_since_ = t;
    pool_gpus_ = d_.dataflow->total_raas_gpus();
    detail::record_pool(res_.metrics, t, 0, pool_gpus_);
  }

  void launch(const std::string& uid, int gpus) {
    const SimTime t = now();
    {
      std::lock_guard lock(fleet_mu_);
      d_.add_instance(d_.launch_spec(uid, gpus));
      start_instance(uid);
    }
    {
      std::lock_guard lock(mu_);
      res_.events.push_back(fmt::format("t={} launch {} gpus={}", t, uid, gpus));
    }
    pool_changed(t);
  }

  void retire(const std::string& uid) {
    const SimTime t = now();
    {
      std::lock_guard lock(fleet_mu_);
      d_.dataflow->retire_raas(uid);
      std::lock_guard wl(workers_.at(uid)->mu);
      d_.raas.at(uid)->retire();
    }
    {
      std::lock_guard lock(mu_);
      res_.events.push_back(fmt::format("t={} retire {}", t, uid));
    }
    pool_changed(t);
  }

  detail::Deployment d_;
  double scale_;
  std::size_t k_;
  Clock::time_point start_;
  std::atomic<bool> stop_{false};

  std::mutex mu_;  // result, metrics, summaries
  RunResult res_;
  std::map<std::string, RaasSummary> raas_summary_;
  std::exception_ptr failure_;
  int pool_gpus_ = 0;
  SimTime pool_since_ = 0.0;
  double gpu_seconds_ = 0.0;

  std::mutex fleet_mu_;  // workers_ and the deployment's instance map
  std::map<std::string, std::unique_ptr<Worker>> workers_;
  std::unique_ptr<Executor> executor_;

  std::mutex windows_mu_;
  std::condition_variable windows_cv_;
  std::deque<std::pair<PolicyId, Version>> windows_;
};

}  // namespace

RunResult run_live(const Scenario& scenario, const RunOptions& options) {
  return LiveRun(scenario, options.seed.value_or(scenario.seed), options.live_time_scale).run();
}

}  // namespace flowrl
