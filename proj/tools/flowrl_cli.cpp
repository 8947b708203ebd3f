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

// flowrl command line: run a scenario, print its last balance report, or
// validate a scenario file.

#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "flowrl/error.hpp"
#include "flowrl/harness.hpp"
#include "flowrl/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"flowrl: dataflow-coordinated RL deployment simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string mode = "sim";
  double time_scale = 1e-3;
  auto* run = app.add_subcommand("run", "run a scenario and write metrics, reports and summary.json");
  run->add_option("scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "seed overriding the scenario's");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--mode", mode, "sim (deterministic) or live (threaded)")->check(CLI::IsMember({"sim", "live"}));
  run->add_option("--time-scale", time_scale, "live mode: wall seconds per simulated second");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "print the last balance report of a run directory");
  report->add_option("dir", report_dir, "run output directory")->required();

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "parse and validate a scenario file");
  validate->add_option("scenario", validate_path, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto scenario = flowrl::load_scenario(scenario_path);
      flowrl::RunOptions options;
      if (*seed_opt) options.seed = seed;
      options.mode = mode == "live" ? flowrl::RunMode::kLive : flowrl::RunMode::kSim;
      options.live_time_scale = time_scale;
      const auto result = flowrl::run_scenario(scenario, options);
      flowrl::write_run(result, out_dir);
      std::cout << fmt::format("{}: {} trainer(s), {:.2f} simulated s, {:.4f} rollout GPU-hours, ledger {}\n",
                               result.scenario, result.trainers.size(), result.wall_seconds,
                               result.rollout_gpu_seconds / 3600.0,
                               result.ledger.balanced() ? "balanced" : "UNBALANCED");
      return result.ledger.balanced() ? 0 : 3;
    }
    if (*report) {
      const auto text = flowrl::last_report(report_dir);
      if (text.empty()) {
        std::cerr << "no balance report in " << report_dir << "\n";
        return 1;
      }
      std::cout << text;
      return 0;
    }
    if (*validate) {
      const auto scenario = flowrl::load_scenario(validate_path);
      std::cout << fmt::format("{}: ok ({} polic{}, {} workflow(s), {} rollout instance(s))\n", scenario.name,
                               scenario.trainers.size(), scenario.trainers.size() == 1 ? "y" : "ies",
                               scenario.workflows.size(), scenario.raas.size());
      return 0;
    }
  } catch (const flowrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
