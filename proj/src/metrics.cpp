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

#include "flowrl/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {

const std::vector<std::string>& metric_families() {
  static const std::vector<std::string> kAll = {family::kPoolSize,        family::kWaitFraction,
                                                family::kProduced,        family::kTransferSeconds,
                                                family::kTrainerDowntime, family::kRolloutDowntime,
                                                family::kDeltaSparsity};
  return kAll;
}

std::string labels(std::initializer_list<std::pair<std::string_view, std::string_view>> kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (!out.empty()) out += ';';
    out += fmt::format("{}={}", k, v);
  }
  return out;
}

std::string label_value(const std::string& labels, std::string_view key) {
  std::size_t pos = 0;
  while (pos <= labels.size()) {
    std::size_t end = labels.find(';', pos);
    if (end == std::string::npos) end = labels.size();
    std::string_view item(labels.data() + pos, end - pos);
    if (auto eq = item.find('='); eq != std::string_view::npos && item.substr(0, eq) == key)
      return std::string(item.substr(eq + 1));
    pos = end + 1;
  }
  return {};
}

void MetricsStore::add(const std::string& family, MetricsRow row) { rows_[family].push_back(std::move(row)); }

const std::vector<MetricsRow>& MetricsStore::rows(const std::string& family) const {
  static const std::vector<MetricsRow> kEmpty;
  auto it = rows_.find(family);
  return it == rows_.end() ? kEmpty : it->second;
}

std::vector<MetricsRow> MetricsStore::select(const std::string& family, std::string_view metric,
                                             const std::string& match) const {
  std::vector<std::pair<std::string, std::string>> wanted;
  std::size_t pos = 0;
  while (pos < match.size()) {
    std::size_t end = match.find(';', pos);
    if (end == std::string::npos) end = match.size();
    auto item = match.substr(pos, end - pos);
    auto eq = item.find('=');
    if (eq != std::string::npos) wanted.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    pos = end + 1;
  }
  std::vector<MetricsRow> out;
  for (const auto& row : rows(family)) {
    if (row.metric != metric) continue;
    bool ok = true;
    for (const auto& [k, v] : wanted) ok = ok && label_value(row.labels, k) == v;
    if (ok) out.push_back(row);
  }
  return out;
}

std::string format_metrics_row(const MetricsRow& row) {
  return fmt::format("{},{},{},{},{}", row.time, row.version, row.metric, row.labels, row.value);
}

std::string MetricsStore::render(const std::string& family) const {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& row : rows(family)) {
    out += format_metrics_row(row);
    out += '\n';
  }
  return out;
}

void MetricsStore::write(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  for (const auto& fam : metric_families()) {
    const auto path = dir / (fam + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
    out << render(fam);
    if (!out) throw Error(ErrorCode::kIoError, fmt::format("write failed for {}", path.string()));
  }
}

std::vector<MetricsRow> read_metrics_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw Error(ErrorCode::kParseError, fmt::format("{}: missing header", path.string()));
  std::vector<MetricsRow> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (cols.size() != 5) throw Error(ErrorCode::kParseError, fmt::format("{}:{}: expected 5 columns", path.string(), lineno));
    MetricsRow row;
    try {
      row.time = std::stod(cols[0]);
      row.version = std::stoull(cols[1]);
      row.value = std::stod(cols[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParseError, fmt::format("{}:{}: bad number", path.string(), lineno));
    }
    row.metric = cols[2];
    row.labels = cols[3];
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace flowrl
