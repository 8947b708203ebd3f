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

#include "deployment.hpp"

#include <climits>

#include <fmt/format.h>

#include "flowrl/error.hpp"
#include "flowrl/rng.hpp"

namespace flowrl::detail {

namespace {

std::unique_ptr<Curator> make_curator(const Scenario& sc) {
  const auto seed = sc.component_seed("curator");
  if (sc.hooks.curator == "greso") return std::make_unique<GresoCurator>(sc.hooks.greso, seed);
  if (sc.hooks.curator == "fixed") return std::make_unique<FixedProbabilityCurator>(sc.hooks.fixed_probability, seed);
  return std::make_unique<KeepAllCurator>();
}

std::unique_ptr<PostFilter> make_filter(const Scenario& sc) {
  if (sc.hooks.filter == "zero_adv") return std::make_unique<ZeroAdvantageFilter>();
  return std::make_unique<KeepAllFilter>();
}

std::unique_ptr<BatchComposer> make_composer(const Scenario& sc, const PolicyId& policy) {
  if (sc.hooks.composer == "replay")
    return std::make_unique<ReplayComposer>(sc.hooks.replay, sc.component_seed("composer:" + policy.str()));
  return std::make_unique<FreshOnlyComposer>();
}

}  // namespace

Deployment::Deployment(const Scenario& scenario, std::uint64_t seed) : sc(scenario) {
  sc.seed = seed;
  sc.model.seed = sc.component_seed("model", scenario.model.seed);
  for (auto& t : sc.trainers) t.seed = sc.component_seed("trainer:" + t.policy.str(), t.seed);
  refresh.sync = sc.sync;
  refresh.bytes_scale = sc.bytes_scale;

  dataflow = std::make_unique<DataflowLayer>(sc.dataflow, make_curator(sc), make_filter(sc));
  for (const auto& wf : sc.workflows) dataflow->register_workflow(wf);
  for (const auto& t : sc.trainers) {
    initial_weights[t.policy] = initial_snapshot(t.policy, t.element_count, t.seed);
    if (sc.stalled.contains(t.policy)) continue;
    dataflow->register_trainer(t.policy, t.batch_size, make_composer(sc, t.policy));
    trainers[t.policy] = std::make_unique<TrainerSim>(t, 0.0);
    // Version 0 is in the store from the start so version 1 ships as a delta.
    store.publish(initial_weights[t.policy], sc.sync);
  }
  for (const auto& spec : sc.raas) add_instance(spec);
}

RaasInstance& Deployment::add_instance(RaasInstanceSpec spec) {
  auto wf = sc.workflow(spec.workflow);
  std::map<PolicyId, WeightSnapshot> weights;
  for (const auto& p : wf->policies()) weights[p] = initial_weights.at(p);
  dataflow->register_raas(spec.uid, spec.gpus, spec.workflow);
  const auto seed = sc.component_seed("raas:" + spec.uid);
  const std::string uid = spec.uid;
  auto inst = std::make_unique<RaasInstance>(std::move(spec), wf, sc.model, std::move(weights),
                                             sc.dataflow.group_size, refresh, seed, sc.idle_poll_seconds);
  raas_order.push_back(uid);
  return *(raas[uid] = std::move(inst));
}

RaasInstanceSpec Deployment::launch_spec(const std::string& uid, int gpus) const {
  if (!sc.autoscale) throw Error(ErrorCode::kInvalidArgument, "scenario has no autoscale section");
  for (const auto& r : sc.raas) {
    if (r.uid == sc.autoscale->instance_template) {
      RaasInstanceSpec spec = r;
      spec.uid = uid;
      spec.gpus = gpus;
      return spec;
    }
  }
  throw Error(ErrorCode::kUnknownRaas, sc.autoscale->instance_template);
}

AutoscaleConfig Deployment::controller() const {
  if (sc.autoscale) return sc.autoscale->controller;
  // Report-only windows: no pool bounds.
  AutoscaleConfig cfg;
  cfg.g_min = 1;
  cfg.g_max = INT_MAX / 2;
  return cfg;
}

bool Deployment::acts_on(const PolicyId& trainer) const {
  return sc.autoscale && sc.autoscale->enabled && sc.autoscale->reference_trainer == trainer;
}

void Deployment::fill_result(RunResult& result) const {
  result.ledger = dataflow->ledger();
  for (const auto& [policy, t] : trainers) {
    auto& s = result.trainers[policy];
    s.final_version = t->version();
    result.step_logs[policy] = t->step_log();
    s.busy_seconds = 0.0;
    s.wait_seconds = 0.0;
    for (const auto& r : t->step_log()) {
      s.busy_seconds += r.step_seconds;
      s.wait_seconds += r.wait_seconds;
    }
  }
  for (const auto& uid : raas_order) {
    auto& s = result.raas[uid];
    const auto counts = dataflow->raas_counts(uid);
    s.gpus = raas.at(uid)->spec().gpus;
    s.retired = raas.at(uid)->retired();
    s.produced = counts.produced;
    s.accepted = counts.accepted;
  }
}

void record_step(MetricsStore& m, const PolicyId& policy, const StepRecord& rec) {
  const auto lbl = labels({{"policy", policy.str()}});
  m.add(family::kTrainerDowntime, {rec.end_time, rec.version, "wait_seconds", lbl, rec.wait_seconds});
  m.add(family::kTrainerDowntime, {rec.end_time, rec.version, "step_seconds", lbl, rec.step_seconds});
  m.add(family::kDeltaSparsity, {rec.end_time, rec.version, "delta_sparsity", lbl, rec.delta_sparsity});
}

void record_service(MetricsStore& m, RaasSummary& summary, const std::string& uid, const ServiceEvents& ev,
                    SimTime now) {
  Version newest = 0;
  for (const auto& r : ev.refreshes) {
    const char* kind = r.kind == PullResult::Kind::kFull ? "full" : "delta";
    const auto lbl = labels({{"policy", r.policy.str()}, {"raas", uid}, {"kind", kind}});
    m.add(family::kTransferSeconds, {now, r.to_version, "transfer_seconds", lbl, r.transfer_seconds});
    m.add(family::kTransferSeconds, {now, r.to_version, "transfer_bytes", lbl, static_cast<double>(r.wire_bytes)});
    summary.transfer_seconds += r.transfer_seconds;
    ++summary.refreshes;
    newest = std::max(newest, r.to_version);
  }
  if (!ev.refreshes.empty()) {
    m.add(family::kRolloutDowntime, {now, newest, "rollout_downtime", labels({{"raas", uid}}), ev.downtime_seconds});
    summary.downtime_seconds += ev.downtime_seconds;
  }
  if (ev.started_generation && ev.next_wake) summary.busy_seconds += *ev.next_wake - now;
}

void record_pool(MetricsStore& m, SimTime now, Version version, int gpus) {
  m.add(family::kPoolSize, {now, version, "pool_size", "", static_cast<double>(gpus)});
}

void record_window(MetricsStore& m, const DataflowLayer& dataflow, const PolicyId& trainer, std::size_t k,
                   const BalanceWindow& window, const ScalingDecision& decision, SimTime now, Version version) {
  const auto lbl = labels({{"policy", trainer.str()}});
  m.add(family::kWaitFraction, {now, version, "wait_fraction", lbl, window.wait_fraction});
  m.add(family::kWaitFraction, {now, version, "g_target", lbl, static_cast<double>(decision.g_target)});
  for (const auto& [uid, counts] : dataflow.window_production(trainer, k)) {
    const auto row_lbl = labels({{"policy", trainer.str()}, {"raas", uid}});
    m.add(family::kProduced, {now, version, "produced", row_lbl, static_cast<double>(counts.produced)});
    m.add(family::kProduced, {now, version, "accepted", row_lbl, static_cast<double>(counts.accepted)});
  }
}

}  // namespace flowrl::detail
