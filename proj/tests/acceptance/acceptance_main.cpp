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

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances are fixed constants below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "flowrl/autoscaler.hpp"
#include "flowrl/data_algorithms.hpp"
#include "flowrl/error.hpp"
#include "flowrl/harness.hpp"
#include "flowrl/trainer.hpp"
#include "flowrl/weights.hpp"
#include "golden_window.hpp"
#include "report_parser.hpp"
#include "test_util.hpp"

namespace {

using namespace flowrl;
namespace fs = std::filesystem;

constexpr double kTransferTol = 1e-9;
constexpr double kPayloadBound = 0.035;
constexpr double kSpikeFactor = 10.0;
constexpr double kOverlapWait = 0.01;
constexpr Version kOverlapSettle = 10;
constexpr double kHeldWait = 0.10;
constexpr double kShareTol = 0.05;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

Scenario load(const std::string& name) { return load_scenario(std::string(FLOWRL_SCENARIO_DIR) + "/" + name + ".scn"); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. three-zone controller against an integer re-implementation

// w = k / 10000, rho = 11/10; all arithmetic exact.
int oracle_target(int G, int k, std::uint64_t np, std::uint64_t nc, int gmin, int gmax) {
  long long t = G;
  if (k > 1000) {
    t = k >= 10000 ? gmax : (static_cast<long long>(G) * 10000 + (10000 - k) - 1) / (10000 - k);
  } else if (k < 500 && np > 0 && nc > 0) {
    const unsigned long long num = static_cast<unsigned long long>(G) * nc * 11;
    const unsigned long long den = np * 10;
    t = std::min<long long>(G, static_cast<long long>((num + den - 1) / den));
  }
  return static_cast<int>(std::clamp<long long>(t, gmin, gmax));
}

Outcome criterion_controller() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  AutoscaleConfig cfg;
  const auto up = compute_target(6, 0.269, 0, 0, cfg);
  o.check(up.g_target == 9 && up.branch == ScalingBranch::kScaleUp, fmt::format("G=6 w=0.269 -> {}", up.g_target));
  const auto down = compute_target(11, 0.021, 1000, 800, cfg);
  o.check(down.g_target == 10 && down.branch == ScalingBranch::kScaleDown,
          fmt::format("G=11 w=0.021 -> {}", down.g_target));
  const auto hold = compute_target(8, 0.07, 1000, 1000, cfg);
  o.check(hold.g_target == 8 && hold.branch == ScalingBranch::kHold, "dead band did not hold");

  std::mt19937_64 rng(20260101);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const int G = 1 + static_cast<int>(rng() % 20);
    const int k = static_cast<int>(rng() % 10001);
    const std::uint64_t np = rng() % 10001;
    const std::uint64_t nc = rng() % 10001;
    const auto d = compute_target(G, k / 10000.0, np, nc, cfg);
    const int want = oracle_target(G, k, np, nc, cfg.g_min, cfg.g_max);
    if (d.g_target != want || d.estimated_delta_gpus != want - G) ++mismatches;
  }
  o.check(mismatches == 0, fmt::format("{} of 1000 random inputs differ from the oracle", mismatches));
  const double elapsed = seconds_since(t0);
  o.check(elapsed < 1.0, fmt::format("runtime {:.3f} s", elapsed));
  o.note(fmt::format("3 worked cases + 1000 random inputs match, {:.3f} s", elapsed));
  return o;
}

// ---------------------------------------------------------------------------
// 2. golden balance report

Outcome criterion_report() {
  Outcome o;
  const auto w = testing::golden_window();
  const auto d = compute_target(w.total_raas_gpus, w.wait_fraction, w.accepted, w.consumed, AutoscaleConfig{});
  const std::string text = render_report(w, d);
  const std::string golden = testing::read_file(testing::golden_path());
  o.check(!golden.empty(), "golden file missing");
  o.check(text == golden, "rendering differs from golden file");

  const auto rep = testing::parse_report(text);
  auto near = [&](const std::string& key, double want, double tol) {
    o.check(std::fabs(rep.number(key) - want) <= tol, fmt::format("{} = {} vs {}", key, rep.number(key), want));
  };
  near("wall_time_sec", w.wall_time_sec, 0.005);
  near("eval_time_sec", w.eval_time_sec, 0.005);
  near("training_time_sec", w.training_time_sec, 0.005);
  near("avg_step_time_sec", w.avg_step_time_sec, 0.005);
  near("avg_batch_wait_sec", w.avg_batch_wait_sec, 0.005);
  near("rollout_wait_fraction", w.wait_fraction, 5e-5);
  near("total_raas_gpus", w.total_raas_gpus, 0);
  near("produced", static_cast<double>(w.produced), 0);
  near("entered", static_cast<double>(w.accepted), 0);
  near("accept_rate", w.accept_rate, 5e-5);
  near("consumed", static_cast<double>(w.consumed), 0);
  near("stale_skipped", static_cast<double>(w.stale_skipped), 0);
  near("stale_rate", w.stale_rate, 5e-5);
  near("throughput_per_gpu", w.throughput_per_gpu, 0.005);
  near("produce_consume_ratio", w.produce_consume_ratio, 5e-5);
  near("G_target", d.g_target, 0);
  near("estimated_delta_gpus", d.estimated_delta_gpus, 0);
  const double w_back = rep.number("avg_batch_wait_sec") / rep.number("avg_step_time_sec");
  o.check(std::fabs(w_back - w.wait_fraction) < 1e-3, fmt::format("w from rendered times {}", w_back));
  o.check(rep.rows.size() == w.layout.size(), "layout row count");
  for (std::size_t i = 0; i < std::min(rep.rows.size(), w.layout.size()); ++i) {
    const auto& a = rep.rows[i];
    const auto& b = w.layout[i];
    o.check(a.uid == b.uid && a.gpus == b.gpus && a.produced == b.produced && a.accepted == b.accepted &&
                std::fabs(a.accept_rate - b.accept_rate) <= 5e-5 &&
                std::fabs(a.throughput_per_gpu - b.throughput_per_gpu) <= 0.005 &&
                a.status == (b.suspect ? "suspect" : "healthy"),
            "layout row " + b.uid);
  }
  o.check(rep.total_instances == 3 && rep.total_gpus == 8 && rep.total_produced == 1000 && rep.total_accepted == 900,
          "total line");
  o.note(fmt::format("byte-identical to golden ({} bytes), {} fields + {} rows recovered", text.size(),
                     rep.fields.size(), rep.rows.size()));
  return o;
}

// ---------------------------------------------------------------------------
// 3. delta transfer exactness and payload bound

Outcome criterion_delta() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3);
  int diverged = 0;
  std::uint64_t pulls = 0;
  const PolicyId policy("p");
  for (int schedule = 0; schedule < 10000; ++schedule) {
    const SyncPolicy sync{1 + rng() % 8, 1 + rng() % 6};
    const std::size_t n = 1 + rng() % 48;
    WeightStore store;
    WeightSnapshot trainer = initial_snapshot(policy, n, rng());
    store.publish(trainer, sync);
    WeightSnapshot client = trainer;
    const int steps = 5 + static_cast<int>(rng() % 25);
    for (int s = 0; s < steps; ++s) {
      trainer = perturb_snapshot(trainer, rng() % (n + 1), rng());
      store.publish(trainer, sync);
      if (rng() % 4 == 0) {
        client = apply_pull(client, store.pull_update(policy, client.version, sync));
        ++pulls;
      }
    }
    // the final pull goes through the wire codec
    auto pull = store.pull_update(policy, client.version, sync);
    if (pull.kind == PullResult::Kind::kFull) {
      client = std::get<WeightSnapshot>(decode_update(encode_update(*pull.full)));
    } else {
      for (const auto& d : pull.chain) client = apply_delta(client, std::get<WeightDelta>(decode_update(encode_update(*d))));
    }
    ++pulls;
    if (!(client == *store.latest_snapshot(policy)) || !(client == trainer)) ++diverged;
  }
  o.check(diverged == 0, fmt::format("{} of 10000 schedules diverged", diverged));

  TrainerSpec spec;
  spec.policy = policy;
  spec.target_sparsity = 0.989;
  spec.element_count = 1'000'000;
  const auto base = initial_snapshot(policy, spec.element_count, 17);
  const auto next = perturb_snapshot(base, spec.changed_per_step(), 17);
  const auto delta = compute_delta(base, next);
  const double header = static_cast<double>(encoded_size(WeightDelta{policy, 0, 1, spec.element_count, {}}));
  const double full_payload = 2.0 * static_cast<double>(spec.element_count);
  const double delta_payload = static_cast<double>(encoded_size(delta)) - header;
  const double ratio = delta_payload / full_payload;
  o.check(delta.sparsity() == 0.989, fmt::format("measured sparsity {}", delta.sparsity()));
  o.check(ratio <= kPayloadBound, fmt::format("delta payload {:.4f} of full", ratio));
  const double elapsed = seconds_since(t0);
  o.check(elapsed < 30.0, fmt::format("runtime {:.1f} s", elapsed));
  o.note(fmt::format("10000 schedules ({} pulls) bit-identical; s={} payload {:.4f} of full (bound {}); {:.1f} s",
                     pulls, delta.sparsity(), ratio, kPayloadBound, elapsed));
  return o;
}

// ---------------------------------------------------------------------------
// 4. cross-region transfer-time model and full-sync spikes

Outcome criterion_transfer() {
  Outcome o;
  const LinkModel wan{4e9, 0.3};
  const double delta_t = transfer_time(1'500'000'000ULL, wan);
  const double full_t = transfer_time(28'000'000'000ULL, wan);
  o.check(std::fabs(delta_t - 3.3) <= kTransferTol, fmt::format("1.5 GB -> {:.12f} s", delta_t));
  o.check(std::fabs(full_t - 56.3) <= kTransferTol, fmt::format("28 GB -> {:.12f} s", full_t));

  const auto sc = load("cross_region");
  const auto res = run_scenario(sc);
  const auto rows = res.metrics.select(family::kTransferSeconds, "transfer_seconds");
  std::vector<double> values;
  for (const auto& r : rows) values.push_back(r.value);
  o.check(!values.empty(), "no transfers recorded");
  if (values.empty()) return o;
  std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
  const double median = values[values.size() / 2];
  std::set<Version> spikes;
  Version last_version = 0;
  for (const auto& r : rows) {
    last_version = std::max(last_version, r.version);
    if (r.value > kSpikeFactor * median) spikes.insert(r.version);
  }
  const Version interval = sc.sync.full_sync_interval;
  std::set<Version> expected;
  for (Version v = interval; v <= last_version; v += interval) expected.insert(v);
  o.check(interval == 20, "full_sync_interval is not 20");
  o.check(spikes == expected, fmt::format("spikes at [{}], expected [{}]", fmt::join(spikes, ","), fmt::join(expected, ",")));
  o.note(fmt::format("3.3 s / 56.3 s exact; {} spikes (> {}x median {:.2f} s) at versions {}", spikes.size(),
                     kSpikeFactor, median, fmt::join(spikes, ",")));
  return o;
}

// ---------------------------------------------------------------------------
// 5. overlap of transfer with training

Outcome criterion_overlap() {
  Outcome o;
  const auto growing = run_scenario(load("cross_region"));
  const PolicyId actor("actor");
  const auto& log = growing.step_logs.at(actor);
  const double full_transfer = [&] {
    double m = 0.0;
    for (const auto& r : growing.metrics.select(family::kTransferSeconds, "transfer_seconds", "kind=full"))
      m = std::max(m, r.value);
    return m;
  }();
  o.check(full_transfer > 0.0, "no full-sync transfer observed");
  std::optional<Version> crossover;
  for (const auto& r : log) {
    if (r.step_seconds > full_transfer) {
      crossover = r.version;
      break;
    }
  }
  o.check(crossover.has_value(), "step time never exceeds the full transfer time");
  double worst = 0.0;
  std::size_t checked = 0;
  if (crossover) {
    for (const auto& r : log) {
      if (r.version < *crossover + kOverlapSettle) continue;
      worst = std::max(worst, r.wait_seconds / r.step_seconds);
      ++checked;
    }
    o.check(checked >= 20, fmt::format("only {} versions after settling", checked));
    o.check(worst < kOverlapWait, fmt::format("wait/step reaches {:.4f} after crossover", worst));
  }

  const auto held = run_scenario(load("cross_region_flat"));
  double min_w = 1.0;
  std::size_t windows = 0;
  for (const auto& r : held.metrics.select(family::kWaitFraction, "wait_fraction")) {
    min_w = std::min(min_w, r.value);
    ++windows;
  }
  o.check(windows > 0, "no windows in the held scenario");
  o.check(min_w > kHeldWait, fmt::format("held-below window wait fraction drops to {:.4f}", min_w));
  o.note(fmt::format("crossover at v{} (step > {:.1f} s), max wait/step {:.5f} over {} later versions; "
                     "held-below min window w {:.3f} over {} windows",
                     crossover.value_or(0), full_transfer, worst, checked, min_w, windows));
  return o;
}

// ---------------------------------------------------------------------------
// 6. heterogeneous throughput shares

Outcome criterion_shares() {
  Outcome o;
  const auto sc = load("heterogeneous");
  const auto res = run_scenario(sc);
  o.check(sc.versions == 200 && sc.raas.size() == 3, "scenario is not the 200-version three-pool preset");
  std::map<std::string, double> total;
  std::map<Version, std::map<std::string, double>> per_window;
  for (const auto& r : res.metrics.select(family::kProduced, "produced")) {
    const auto uid = label_value(r.labels, "raas");
    total[uid] += r.value;
    per_window[r.version][uid] = r.value;
  }
  const std::vector<std::pair<std::string, double>> want = {
      {sc.raas[0].uid, 1.0}, {sc.raas[1].uid, 0.6}, {sc.raas[2].uid, 0.3}};
  const double base = total[want[0].first];
  o.check(base > 0, "reference pool produced nothing");
  std::vector<std::string> ratios;
  for (std::size_t i = 1; i < want.size() && base > 0; ++i) {
    const double got = total[want[i].first] / base;
    const double err = std::fabs(got / want[i].second - 1.0);
    o.check(err <= kShareTol, fmt::format("{}:{} ratio {:.4f} vs {:.1f} ({:.1f}% off)", want[i].first,
                                          want[0].first, got, want[i].second, 100 * err));
    ratios.push_back(fmt::format("{:.1f}", 100 * got));
  }
  double worst_window = 0.0;
  for (const auto& [v, counts] : per_window) {
    const auto a = counts.find(want[0].first);
    if (a == counts.end() || a->second <= 0) continue;
    for (std::size_t i = 1; i < want.size(); ++i) {
      const auto it = counts.find(want[i].first);
      if (it == counts.end()) continue;
      worst_window = std::max(worst_window, std::fabs(it->second / a->second / want[i].second - 1.0));
    }
  }
  o.note(fmt::format("{} windows, produced 100:{}:{} (target 100:60:30, tol {}%); worst single window {:.1f}% off",
                     per_window.size(), ratios.size() > 0 ? ratios[0] : "-", ratios.size() > 1 ? ratios[1] : "-",
                     100 * kShareTol, 100 * worst_window));
  return o;
}

// ---------------------------------------------------------------------------
// 7. closed-loop autoscaling

double run_wait_fraction(const RunResult& r, const PolicyId& p) {
  double wait = 0.0, total = 0.0;
  for (const auto& s : r.step_logs.at(p)) {
    wait += s.wait_seconds;
    total += s.wait_seconds + s.step_seconds;
  }
  return total > 0 ? wait / total : 0.0;
}

Outcome criterion_autoscale() {
  Outcome o;
  const PolicyId actor("actor");
  const auto fixed_min = run_scenario(load("elastic_fixed6"));
  const auto fixed_max = run_scenario(load("elastic_fixed11"));
  const auto autoscale_sc = load("elastic_autoscale");
  const auto autoscaled = run_scenario(autoscale_sc);
  const auto& cfg = autoscale_sc.autoscale->controller;

  const double h_auto = autoscaled.rollout_gpu_seconds / 3600.0;
  const double h_max = fixed_max.rollout_gpu_seconds / 3600.0;
  o.check(h_auto < h_max, fmt::format("autoscale {:.3f} GPU-h not below fixed-max {:.3f}", h_auto, h_max));

  // converged: windows after the last window that changed the pool
  std::size_t last_change = 0;
  for (std::size_t i = 0; i < autoscaled.reports.size(); ++i) {
    if (!autoscaled.reports[i].maintenance.commands.empty()) last_change = i + 1;
  }
  std::vector<double> converged;
  for (std::size_t i = last_change; i < autoscaled.reports.size(); ++i)
    converged.push_back(autoscaled.reports[i].window.wait_fraction);
  o.check(converged.size() >= 5, fmt::format("only {} windows after the last scaling action", converged.size()));
  o.check(last_change <= 5, fmt::format("still scaling at window {}", last_change));
  double lo = 1.0, hi = 0.0;
  for (double w : converged) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  o.check(!converged.empty() && lo >= cfg.tau_low && hi <= cfg.tau_high,
          fmt::format("converged w in [{:.4f}, {:.4f}], band [{}, {}]", lo, hi, cfg.tau_low, cfg.tau_high));

  const double w_min = run_wait_fraction(fixed_min, actor);
  o.check(w_min > cfg.tau_high, fmt::format("fixed-min w {:.4f}", w_min));
  o.note(fmt::format("GPU-h auto {:.3f} < fixed-max {:.3f} (fixed-min {:.3f}); converged after window {}, w in "
                     "[{:.4f}, {:.4f}]; fixed-min w {:.4f}, fixed-max w {:.4f}",
                     h_auto, h_max, fixed_min.rollout_gpu_seconds / 3600.0, last_change, lo, hi, w_min,
                     run_wait_fraction(fixed_max, actor)));
  return o;
}

// ---------------------------------------------------------------------------
// 8. data-algorithm oracles

Outcome criterion_data_algorithms() {
  Outcome o;
  std::mt19937_64 rng(8);

  int filter_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 1 + rng() % 16;
    std::vector<double> rewards(n);
    const int levels = 1 + static_cast<int>(rng() % 3);
    for (auto& r : rewards) r = static_cast<double>(rng() % levels) / 2.0;
    if (rng() % 10 == 0) rewards[rng() % n] += 1e-12;
    bool all_equal = true;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) all_equal = all_equal && rewards[a] == rewards[b];
    const bool dropped = post_filter_zero_adv(testing::make_group("A", 1, rewards)) == FilterVerdict::kDrop;
    if (dropped != all_equal) ++filter_mismatch;
  }
  o.check(filter_mismatch == 0, fmt::format("zero-adv filter disagrees on {} groups", filter_mismatch));

  const GresoConfig greso;
  int out_of_range = 0;
  GresoPromptState s;
  for (int i = 0; i < 20000; ++i) {
    std::vector<double> r(1 + rng() % 8);
    for (auto& x : r) x = static_cast<double>(rng() % 2);
    s = greso_update(s, testing::make_group("A", 1, r), greso);
    if (s.submit_prob < greso_floor(s.bucket, greso) || s.submit_prob > 1.0) ++out_of_range;
  }
  o.check(out_of_range == 0, fmt::format("{} GRESO probabilities outside [floor, 1]", out_of_range));

  // constant-q prompts: zero-variance with probability q, bucket fixed by the group shape
  struct Case {
    bool easy;
    double q;
    double want;
  };
  const std::vector<Case> cases = {{true, 0.3, greso.floor_easy}, {true, 0.02, 1.0},
                                   {false, 0.5, greso.floor_hard}, {false, 0.05, 1.0}};
  std::vector<std::string> drifted;
  for (const auto& c : cases) {
    Rng local(static_cast<std::uint64_t>(c.q * 1000) + (c.easy ? 1 : 2));
    GresoPromptState st;
    const std::vector<double> flat = c.easy ? std::vector<double>{1, 1, 1, 1} : std::vector<double>{0, 0, 0, 0};
    const std::vector<double> mixed = c.easy ? std::vector<double>{1, 1, 1, 0} : std::vector<double>{0, 0, 0, 1};
    for (int i = 0; i < 2000; ++i)
      st = greso_update(st, testing::make_group("A", 1, uniform01(local) < c.q ? flat : mixed), greso);
    const bool ok = std::fabs(st.submit_prob - c.want) < 1e-9 &&
                    st.bucket == (c.easy ? GresoBucket::kEasy : GresoBucket::kHard);
    o.check(ok, fmt::format("{} q={} ended at p={:.4f}, want {}", c.easy ? "easy" : "hard", c.q, st.submit_prob, c.want));
    drifted.push_back(fmt::format("{}/q={}->{:.2f}", c.easy ? "easy" : "hard", c.q, st.submit_prob));
  }

  // replay composition through the dataflow layer with a warm pool
  std::vector<std::string> compositions;
  std::size_t stale_served = 0;
  for (double r : {0.0, 0.3, 0.5, 0.7}) {
    DataflowConfig cfg;
    cfg.routing.add(PolicyId("A"), {PolicyId("A")});
    cfg.buffer.capacity = 4096;
    cfg.staleness.max_version_gap = 8;
    DataflowLayer df(cfg, nullptr, nullptr);
    df.register_workflow(testing::single_role_workflow("A"));
    df.register_trainer(PolicyId("A"), 256, std::make_unique<ReplayComposer>(ReplayConfig{10000, 8, r}, 5));
    df.register_raas("r0", 1, "A");
    const std::size_t want = round_half_away(r * 256);
    std::uint64_t prompt = 0;
    bool sizes_ok = true;
    for (Version v = 0; v < 40; ++v) {
      // producers lag the trainer by up to 3 versions
      while (df.buffer_occupancy(PolicyId("A")) < 256) {
        const Version lag = prompt % 4;
        df.ingest_trajectory_group(testing::make_group("A", prompt++, {0, 1, 0, 1, 1, 0, 1, 0}, v >= lag ? v - lag : 0),
                                   0);
      }
      auto batch = df.next_training_batch(PolicyId("A"), 256, v, 0);
      if (!batch) {
        sizes_ok = false;
        break;
      }
      if (v >= 1 && batch->replay_count != want) sizes_ok = false;
      for (std::size_t i = batch->fresh_count; i < batch->members.size(); ++i) {
        if (v > batch->members[i].meta.produced_at_version && v - batch->members[i].meta.produced_at_version > 8)
          ++stale_served;
      }
    }
    o.check(sizes_ok, fmt::format("r={} batches did not carry {} replayed members", r, want));
    compositions.push_back(fmt::format("r={}:{}", r, want));
  }
  o.check(stale_served == 0, fmt::format("{} replayed members older than 8 versions", stale_served));
  o.note(fmt::format("filter matches oracle on 10000 groups; GRESO in range, drift {}; replay {} with 0 stale",
                     fmt::join(drifted, " "), fmt::join(compositions, " ")));
  return o;
}

// ---------------------------------------------------------------------------
// 9. multi-policy isolation

bool same_log(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].version != b[i].version || a[i].wait_seconds != b[i].wait_seconds ||
        a[i].step_seconds != b[i].step_seconds || a[i].tokens != b[i].tokens || a[i].end_time != b[i].end_time ||
        a[i].delta_sparsity != b[i].delta_sparsity)
      return false;
  }
  return true;
}

Outcome criterion_isolation() {
  Outcome o;
  const auto sc = load("multi_policy");
  const auto both = run_scenario(sc);
  std::size_t foreign = 0;
  std::vector<std::string> finals;
  for (const auto& p : sc.policies()) {
    const auto& log = both.step_logs.at(p);
    o.check(both.trainers.at(p).final_version == 100 && log.size() == 100,
            fmt::format("{} stopped at v{}", p.str(), both.trainers.at(p).final_version));
    for (const auto& r : log) foreign += r.foreign_count;
    finals.push_back(fmt::format("{}=v{}", p.str(), both.trainers.at(p).final_version));
  }
  o.check(foreign == 0, fmt::format("{} cross-policy members in batches", foreign));
  o.check(both.ledger.balanced(), "conservation ledger unbalanced");

  for (const auto& stalled : sc.policies()) {
    auto solo_sc = sc;
    solo_sc.stalled = {stalled};
    const auto solo = run_scenario(solo_sc);
    for (const auto& p : sc.policies()) {
      if (p == stalled) continue;
      o.check(same_log(both.step_logs.at(p), solo.step_logs.at(p)),
              fmt::format("{} step log changes when {} is stalled", p.str(), stalled.str()));
      o.check(solo.metrics.render(family::kTrainerDowntime).empty() == false, "no downtime rows");
    }
  }
  o.note(fmt::format("{}; 0 foreign members; step logs identical with either trainer stalled", fmt::join(finals, " ")));
  return o;
}

// ---------------------------------------------------------------------------
// 10. determinism

Outcome criterion_determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / fmt::format("flowrl_acceptance_{}", ::getpid());
  std::size_t files = 0;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(FLOWRL_SCENARIO_DIR)) {
    if (entry.path().extension() == ".scn") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const auto sc = load(name);
    const fs::path a = root / name / "a";
    const fs::path b = root / name / "b";
    write_run(run_scenario(sc), a);
    write_run(run_scenario(sc), b);
    for (const auto& e : fs::directory_iterator(a / "metrics")) {
      const auto other = b / "metrics" / e.path().filename();
      o.check(testing::read_file(e.path()) == testing::read_file(other),
              fmt::format("{}: {} differs", name, e.path().filename().string()));
      ++files;
    }
    o.check(testing::read_file(a / "balance_reports.log") == testing::read_file(b / "balance_reports.log"),
            name + ": reports differ");
  }
  fs::remove_all(root);
  o.note(fmt::format("{} scenarios x 2 runs, {} metrics files byte-identical", names.size(), files));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"three-zone controller exactness", criterion_controller},
      {"balance report golden file", criterion_report},
      {"delta transfer exactness and payload bound", criterion_delta},
      {"cross-region transfer-time model", criterion_transfer},
      {"transfer/training overlap", criterion_overlap},
      {"heterogeneous throughput shares", criterion_shares},
      {"closed-loop autoscaling", criterion_autoscale},
      {"data-algorithm oracles", criterion_data_algorithms},
      {"multi-policy routing isolation", criterion_isolation},
      {"determinism", criterion_determinism},
  };
  const auto t0 = std::chrono::steady_clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    const auto t = std::chrono::steady_clock::now();
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    if (!out.pass) ++failed;
    std::printf("%s [%zu] %s (%.2f s): %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                seconds_since(t), out.detail.c_str());
    std::fflush(stdout);
  }
  const double total = seconds_since(t0);
  std::printf("%d/%zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(), total);
  return failed == 0 ? 0 : 1;
}
