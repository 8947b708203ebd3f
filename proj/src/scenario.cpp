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

#include "flowrl/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "flowrl/error.hpp"
#include "flowrl/rng.hpp"

namespace flowrl {

std::set<PolicyId> Scenario::policies() const {
  std::set<PolicyId> out;
  for (const auto& t : trainers) out.insert(t.policy);
  return out;
}

const TrainerSpec& Scenario::trainer(const PolicyId& policy) const {
  for (const auto& t : trainers)
    if (t.policy == policy) return t;
  throw Error(ErrorCode::kUnknownPolicy, policy.str());
}

std::shared_ptr<const WorkflowSpec> Scenario::workflow(const std::string& wf_name) const {
  for (const auto& w : workflows)
    if (w->name == wf_name) return w;
  return nullptr;
}

std::uint64_t Scenario::component_seed(std::string_view tag, std::uint64_t salt) const {
  return mix_seed(seed, tag, salt);
}

namespace {

[[noreturn]] void invalid(std::string_view rule, const std::string& detail) {
  throw Error(ErrorCode::kValidationError, fmt::format("{}: {}", rule, detail));
}

}  // namespace

void Scenario::validate() const {
  if (trainers.empty()) invalid("no-policies", "at least one [policy] section is required");
  if (versions < 1) invalid("bad-run-length", "versions must be >= 1");
  if (!(max_sim_seconds > 0.0)) invalid("bad-run-length", "max_sim_seconds must be positive");
  if (!(idle_poll_seconds > 0.0)) invalid("bad-idle-poll", "idle_poll_seconds must be positive");
  if (dataflow.group_size < 1) invalid("bad-group-size", "group_size must be >= 1");
  if (dataflow.prompt_count < 1) invalid("bad-prompt-count", "prompt_count must be >= 1");

  const auto declared = policies();
  if (declared.size() != trainers.size()) invalid("duplicate-policy", "a policy is declared twice");

  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kValidationError) throw;
      throw Error(ErrorCode::kValidationError, e.what());
    }
  };

  for (const auto& t : trainers) wrap([&] { t.validate(); });
  std::set<std::string> wf_names;
  for (const auto& w : workflows) {
    if (!wf_names.insert(w->name).second) invalid("duplicate-workflow", w->name);
    wrap([&] { validate_workflow(*w, declared); });
  }
  wrap([&] { model.validate(); });

  for (const auto& [producer, entry] : dataflow.routing.routes) {
    if (!declared.contains(producer)) invalid("unknown-policy", fmt::format("route producer {}", producer.str()));
    for (const auto& c : entry.consumers)
      if (!declared.contains(c)) invalid("unknown-policy", fmt::format("route consumer {}", c.str()));
  }
  std::set<PolicyId> active;
  for (const auto& p : declared)
    if (!stalled.contains(p)) active.insert(p);
  for (const auto& p : stalled)
    if (!declared.contains(p)) invalid("unknown-policy", fmt::format("stalled trainer {}", p.str()));
  if (active.empty()) invalid("no-active-trainer", "every trainer is stalled");
  wrap([&] { dataflow.routing.validate(declared); });

  if (raas.empty() && !(autoscale && autoscale->enabled)) invalid("empty-fleet", "no [raas] sections");
  std::set<std::string> uids;
  for (const auto& r : raas) {
    if (!uids.insert(r.uid).second) invalid("duplicate-uid", r.uid);
    wrap([&] { r.validate(); });
    if (!workflow(r.workflow)) invalid("unregistered-workflow", fmt::format("raas {} uses {}", r.uid, r.workflow));
  }

  if (hooks.curator != "keep_all" && hooks.curator != "greso" && hooks.curator != "fixed")
    invalid("unknown-hook", fmt::format("curator {}", hooks.curator));
  if (hooks.filter != "keep_all" && hooks.filter != "zero_adv")
    invalid("unknown-hook", fmt::format("filter {}", hooks.filter));
  if (hooks.composer != "fresh_only" && hooks.composer != "replay")
    invalid("unknown-hook", fmt::format("composer {}", hooks.composer));
  if (!(hooks.fixed_probability >= 0.0 && hooks.fixed_probability <= 1.0))
    invalid("bad-probability", "fixed_probability outside [0, 1]");
  wrap([&] { hooks.greso.validate(); });
  wrap([&] { hooks.replay.validate(); });

  if (sync.full_sync_interval < 1) invalid("bad-sync", "full_sync_interval must be >= 1");
  if (!(bytes_scale > 0.0)) invalid("bad-sync", "bytes_scale must be positive");

  if (autoscale) {
    wrap([&] { autoscale->controller.validate(); });
    if (!declared.contains(autoscale->reference_trainer))
      invalid("unknown-policy", fmt::format("autoscale reference {}", autoscale->reference_trainer.str()));
    if (stalled.contains(autoscale->reference_trainer))
      invalid("stalled-reference", autoscale->reference_trainer.str());
    if (autoscale->enabled) {
      bool found = false;
      for (const auto& r : raas) found = found || r.uid == autoscale->instance_template;
      if (!found) invalid("unknown-raas", fmt::format("autoscale template {}", autoscale->instance_template));
    }
  }
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Section {
  std::string kind;
  std::string name;
  int line = 0;
  std::vector<std::pair<std::string, Entry>> entries;
};

[[noreturn]] void parse_fail(int line, std::string_view field, const std::string& detail) {
  if (field.empty()) throw Error(ErrorCode::kParseError, fmt::format("line {}: {}", line, detail));
  throw Error(ErrorCode::kParseError, fmt::format("line {}, field '{}': {}", line, field, detail));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<Section> tokenize(const std::string& text) {
  std::vector<Section> sections;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (auto hash = s.find(" #"); hash != std::string::npos) s = trim(s.substr(0, hash));
    if (s.front() == '[') {
      if (s.back() != ']') parse_fail(line, "", "unterminated section header");
      auto words = split(s.substr(1, s.size() - 2), ' ');
      if (words.empty() || words.size() > 2) parse_fail(line, "", "section header must be [kind] or [kind name]");
      sections.push_back({words[0], words.size() == 2 ? words[1] : std::string(), line, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) parse_fail(line, "", fmt::format("expected 'key = value', got '{}'", s));
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) parse_fail(line, "", "empty key");
    if (sections.empty()) parse_fail(line, key, "key outside of any section");
    for (const auto& [k, e] : sections.back().entries)
      if (k == key) parse_fail(line, key, fmt::format("duplicate key (first set on line {})", e.line));
    sections.back().entries.push_back({key, {value, line, false}});
  }
  return sections;
}

class Reader {
 public:
  explicit Reader(Section& s) : s_(s) {}

  const Entry* find(std::string_view key) {
    for (auto& [k, e] : s_.entries) {
      if (k == key) {
        e.used = true;
        return &e;
      }
    }
    return nullptr;
  }

  /// Keys of the form `<prefix><suffix>`, marked used.
  std::vector<std::pair<std::string, const Entry*>> with_prefix(std::string_view prefix) {
    std::vector<std::pair<std::string, const Entry*>> out;
    for (auto& [k, e] : s_.entries) {
      if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) {
        e.used = true;
        out.emplace_back(k.substr(prefix.size()), &e);
      }
    }
    return out;
  }

  template <typename T>
  void num(std::string_view key, T& out) {
    if (const Entry* e = find(key)) out = parse_num<T>(*e, key);
  }

  void flag(std::string_view key, bool& out) {
    if (const Entry* e = find(key)) out = parse_bool(*e, key);
  }

  void str(std::string_view key, std::string& out) {
    if (const Entry* e = find(key)) out = e->value;
  }

  template <typename T>
  static T parse_num(const Entry& e, std::string_view key) {
    const std::string& v = e.value;
    if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos == v.size()) return static_cast<T>(d);
      } catch (const std::exception&) {
      }
      parse_fail(e.line, key, fmt::format("expected a number, got '{}'", v));
    } else {
      T out{};
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size())
        parse_fail(e.line, key, fmt::format("expected an integer, got '{}'", v));
      return out;
    }
  }

  static bool parse_bool(const Entry& e, std::string_view key) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    parse_fail(e.line, key, fmt::format("expected true or false, got '{}'", e.value));
  }

  void finish() const {
    for (const auto& [k, e] : s_.entries)
      if (!e.used) parse_fail(e.line, k, fmt::format("unknown key in [{}]", s_.kind));
  }

  const Section& section() const { return s_; }

 private:
  Section& s_;
};

TokenDistribution parse_tokens(const Entry& e, std::string_view key) {
  auto words = split(e.value, ' ');
  auto arg = [&](std::size_t i) {
    Entry tmp{words[i], e.line, true};
    return Reader::parse_num<double>(tmp, key);
  };
  if (words.size() == 2 && words[0] == "constant") return TokenDistribution::constant(arg(1));
  if (words.size() == 3 && words[0] == "uniform") return TokenDistribution::uniform(arg(1), arg(2));
  if (words.size() == 3 && words[0] == "lognormal") return TokenDistribution::lognormal(arg(1), arg(2));
  parse_fail(e.line, key, fmt::format("expected 'constant V', 'uniform LO HI' or 'lognormal MU SIGMA', got '{}'", e.value));
}

void need_name(const Section& s, bool named) {
  if (named && s.name.empty()) parse_fail(s.line, "", fmt::format("[{}] needs a name", s.kind));
  if (!named && !s.name.empty()) parse_fail(s.line, "", fmt::format("[{}] takes no name", s.kind));
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& name) {
  Scenario sc;
  sc.name = name;
  auto sections = tokenize(text);

  std::set<std::string> singletons_seen;
  std::set<std::pair<std::string, std::string>> named_seen;
  std::vector<std::pair<Section*, std::string>> raas_sections;  // resolved after links/workflows
  bool routes_given = false;
  std::optional<ScaleOutConfig> scale;
  const Entry* scale_reference = nullptr;

  for (auto& s : sections) {
    static const std::set<std::string> kSingletons = {"run", "staleness", "buffer", "hooks", "model", "sync", "autoscale"};
    static const std::set<std::string> kNamed = {"policy", "workflow", "route", "link", "raas"};
    if (kSingletons.contains(s.kind)) {
      need_name(s, false);
      if (!singletons_seen.insert(s.kind).second) parse_fail(s.line, "", fmt::format("duplicate [{}] section", s.kind));
    } else if (kNamed.contains(s.kind)) {
      need_name(s, true);
      if (!named_seen.insert({s.kind, s.name}).second)
        parse_fail(s.line, "", fmt::format("duplicate [{} {}] section", s.kind, s.name));
    } else {
      parse_fail(s.line, "", fmt::format("unknown section kind '{}'", s.kind));
    }

    Reader r(s);
    if (s.kind == "run") {
      r.num("seed", sc.seed);
      r.num("versions", sc.versions);
      r.num("max_sim_seconds", sc.max_sim_seconds);
      r.num("idle_poll_seconds", sc.idle_poll_seconds);
      r.num("prompt_count", sc.dataflow.prompt_count);
      r.num("group_size", sc.dataflow.group_size);
      r.flag("fresher_first", sc.dataflow.fresher_first);
      if (const Entry* e = r.find("stalled"))
        for (const auto& p : split(e->value, ',')) sc.stalled.insert(PolicyId(p));
    } else if (s.kind == "policy") {
      TrainerSpec t;
      t.policy = PolicyId(s.name);
      r.num("batch_size", t.batch_size);
      r.num("step_seconds_per_token", t.step_seconds_per_token);
      r.num("target_sparsity", t.target_sparsity);
      r.num("element_count", t.element_count);
      r.num("seed", t.seed);
      sc.trainers.push_back(t);
    } else if (s.kind == "workflow") {
      auto wf = std::make_shared<WorkflowSpec>();
      wf->name = s.name;
      const Entry* roles = r.find("roles");
      if (!roles) parse_fail(s.line, "roles", fmt::format("[workflow {}] requires roles", s.name));
      for (const auto& item : split(roles->value, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
          wf->roles.push_back({item, PolicyId(item)});
        } else {
          wf->roles.push_back({trim(item.substr(0, colon)), PolicyId(trim(item.substr(colon + 1)))});
        }
      }
      r.num("max_retries", wf->max_retries);
      for (const auto& [role, e] : r.with_prefix("reward.")) {
        if (e->value == "terminal") wf->reward_assignment[role] = RewardMode::kTerminal;
        else if (e->value == "per_role") wf->reward_assignment[role] = RewardMode::kPerRole;
        else parse_fail(e->line, "reward." + role, fmt::format("expected terminal or per_role, got '{}'", e->value));
      }
      sc.workflows.push_back(std::move(wf));
    } else if (s.kind == "route") {
      routes_given = true;
      const Entry* c = r.find("consumers");
      if (!c) parse_fail(s.line, "consumers", fmt::format("[route {}] requires consumers", s.name));
      std::set<PolicyId> consumers;
      for (const auto& p : split(c->value, ',')) consumers.insert(PolicyId(p));
      RouteMode mode = RouteMode::kExclusive;
      if (const Entry* m = r.find("mode")) {
        if (m->value == "exclusive") mode = RouteMode::kExclusive;
        else if (m->value == "shared") mode = RouteMode::kShared;
        else if (m->value == "mixed") mode = RouteMode::kMixed;
        else parse_fail(m->line, "mode", fmt::format("expected exclusive, shared or mixed, got '{}'", m->value));
      }
      sc.dataflow.routing.add(PolicyId(s.name), std::move(consumers), mode);
    } else if (s.kind == "staleness") {
      r.num("max_version_gap", sc.dataflow.staleness.max_version_gap);
    } else if (s.kind == "buffer") {
      r.num("capacity", sc.dataflow.buffer.capacity);
      r.num("high_watermark", sc.dataflow.buffer.backpressure_high_watermark);
    } else if (s.kind == "hooks") {
      r.str("curator", sc.hooks.curator);
      r.str("filter", sc.hooks.filter);
      r.str("composer", sc.hooks.composer);
      r.num("fixed_probability", sc.hooks.fixed_probability);
      r.num("replay_ratio", sc.hooks.replay.replay_ratio);
      r.num("replay_pool_capacity", sc.hooks.replay.pool_capacity);
      r.num("replay_max_staleness", sc.hooks.replay.max_staleness);
      auto& g = sc.hooks.greso;
      r.num("greso.p_init_easy", g.p_init_easy);
      r.num("greso.p_init_hard", g.p_init_hard);
      r.num("greso.alpha_easy", g.alpha_easy);
      r.num("greso.alpha_hard", g.alpha_hard);
      r.num("greso.delta_p", g.delta_p);
      r.num("greso.floor_easy", g.floor_easy);
      r.num("greso.floor_hard", g.floor_hard);
      r.num("greso.correctness_threshold", g.correctness_threshold);
    } else if (s.kind == "model") {
      if (const Entry* e = r.find("tokens")) sc.model.tokens = parse_tokens(*e, "tokens");
      for (const auto& [role, e] : r.with_prefix("tokens."))
        sc.model.role_tokens[role] = parse_tokens(*e, "tokens." + role);
      r.num("token_growth_per_version", sc.model.token_growth_per_version);
      r.num("success_lo", sc.model.success_lo);
      r.num("success_hi", sc.model.success_hi);
      r.num("verifier_noise", sc.model.verifier_noise);
      r.num("seed", sc.model.seed);
    } else if (s.kind == "sync") {
      r.num("full_sync_interval", sc.sync.full_sync_interval);
      r.num("max_delta_chain", sc.sync.max_delta_chain);
      r.num("bytes_scale", sc.bytes_scale);
    } else if (s.kind == "link") {
      LinkModel link;
      double gbps = link.bandwidth_bits_per_sec / 1e9;
      double rtt_ms = link.rtt_seconds * 1e3;
      r.num("bandwidth_gbps", gbps);
      r.num("rtt_ms", rtt_ms);
      link.bandwidth_bits_per_sec = gbps * 1e9;
      link.rtt_seconds = rtt_ms / 1e3;
      if (!(link.bandwidth_bits_per_sec > 0.0) || !(link.rtt_seconds >= 0.0))
        parse_fail(s.line, "bandwidth_gbps", fmt::format("[link {}] needs bandwidth > 0 and rtt >= 0", s.name));
      sc.links[s.name] = link;
    } else if (s.kind == "raas") {
      raas_sections.emplace_back(&s, s.name);
      continue;  // read below, once every link is known
    } else if (s.kind == "autoscale") {
      ScaleOutConfig a;
      auto& c = a.controller;
      r.flag("enabled", a.enabled);
      r.num("k", c.report_every_k);
      r.num("tau_low", c.tau_low);
      r.num("tau_high", c.tau_high);
      r.num("rho", c.rho);
      r.num("g_min", c.g_min);
      r.num("g_max", c.g_max);
      if (const Entry* e = r.find("instance_sizes")) {
        c.instance_sizes.clear();
        for (const auto& w : split(e->value, ',')) c.instance_sizes.push_back(Reader::parse_num<int>({w, e->line, true}, "instance_sizes"));
      }
      r.str("template", a.instance_template);
      scale_reference = r.find("reference_trainer");
      r.str("launch_command", a.launch_command);
      r.str("retire_command", a.retire_command);
      scale = a;
    }
    r.finish();
  }

  if (sc.workflows.empty() && sc.trainers.size() == 1) {
    auto wf = std::make_shared<WorkflowSpec>();
    wf->name = sc.trainers[0].policy.str();
    wf->roles.push_back({wf->name, sc.trainers[0].policy});
    sc.workflows.push_back(std::move(wf));
  }
  if (!routes_given)
    for (const auto& t : sc.trainers) sc.dataflow.routing.add(t.policy, {t.policy});

  for (auto& [sec, uid] : raas_sections) {
    Reader r(*sec);
    RaasInstanceSpec spec;
    spec.uid = uid;
    r.num("gpus", spec.gpus);
    r.num("share", spec.throughput_share);
    r.num("base_tokens_per_sec_per_gpu", spec.base_tokens_per_sec_per_gpu);
    r.num("reload_seconds", spec.reload_seconds);
    r.num("refresh_every", spec.refresh_every);
    if (const Entry* e = r.find("link")) {
      auto it = sc.links.find(e->value);
      if (it == sc.links.end()) parse_fail(e->line, "link", fmt::format("undeclared link '{}'", e->value));
      spec.link = it->second;
    }
    if (const Entry* e = r.find("workflow")) {
      spec.workflow = e->value;
    } else if (sc.workflows.size() == 1) {
      spec.workflow = sc.workflows[0]->name;
    } else {
      parse_fail(sec->line, "workflow", fmt::format("[raas {}] must name its workflow", uid));
    }
    r.finish();
    sc.raas.push_back(spec);
  }

  if (scale) {
    if (scale_reference) {
      scale->reference_trainer = PolicyId(scale_reference->value);
    } else if (!sc.trainers.empty()) {
      scale->reference_trainer = sc.trainers[0].policy;
    }
    if (scale->instance_template.empty() && !sc.raas.empty()) scale->instance_template = sc.raas[0].uid;
    sc.autoscale = scale;
  }

  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.stem().string());
}

}  // namespace flowrl
