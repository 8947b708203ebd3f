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

// Append-only metric rows, grouped into one CSV-like file per family:
//   time,version,metric,labels,value
// Labels are `key=value` pairs joined with ';'.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowrl/core.hpp"

namespace flowrl {

struct MetricsRow {
  SimTime time = 0.0;
  Version version = 0;
  std::string metric;
  std::string labels;
  double value = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

namespace family {
inline constexpr const char* kPoolSize = "pool_size";
inline constexpr const char* kWaitFraction = "wait_fraction";
inline constexpr const char* kProduced = "produced";
inline constexpr const char* kTransferSeconds = "transfer_seconds";
inline constexpr const char* kTrainerDowntime = "trainer_downtime";
inline constexpr const char* kRolloutDowntime = "rollout_downtime";
inline constexpr const char* kDeltaSparsity = "delta_sparsity";
}  // namespace family

/// Every family a run emits, so an empty run still writes header-only files.
const std::vector<std::string>& metric_families();

std::string labels(std::initializer_list<std::pair<std::string_view, std::string_view>> kv);
/// Value of `key` inside a label string, or "" when absent.
std::string label_value(const std::string& labels, std::string_view key);

class MetricsStore {
 public:
  void add(const std::string& family, MetricsRow row);
  const std::vector<MetricsRow>& rows(const std::string& family) const;
  /// Rows of `family` whose metric is `metric` and whose labels contain every
  /// pair of `match` (a label string, possibly empty).
  std::vector<MetricsRow> select(const std::string& family, std::string_view metric,
                                 const std::string& match = "") const;

  std::string render(const std::string& family) const;
  /// Writes <dir>/<family>.csv for every known family. Throws kIoError.
  void write(const std::filesystem::path& dir) const;

 private:
  std::map<std::string, std::vector<MetricsRow>> rows_;
};

inline constexpr const char* kMetricsHeader = "time,version,metric,labels,value";

std::string format_metrics_row(const MetricsRow& row);
/// Parses one metrics file; throws kParseError or kIoError.
std::vector<MetricsRow> read_metrics_file(const std::filesystem::path& path);

}  // namespace flowrl
