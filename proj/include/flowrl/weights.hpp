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

// Versioned weight store, bit-exact sparse deltas and the AWT1 wire codec.
//
// Elements are opaque 16-bit words (bf16 bit patterns). Two versions differ
// at an index iff the words differ; nothing here interprets them numerically.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <variant>
#include <vector>

#include "flowrl/core.hpp"

namespace flowrl {

using Word = std::uint16_t;

struct WeightSnapshot {
  PolicyId policy;
  Version version = 0;
  std::vector<Word> words;

  std::size_t element_count() const { return words.size(); }
  friend bool operator==(const WeightSnapshot&, const WeightSnapshot&) = default;
};

struct WeightChange {
  std::uint32_t index = 0;
  Word word = 0;

  friend bool operator==(const WeightChange&, const WeightChange&) = default;
};

struct WeightDelta {
  PolicyId policy;
  Version from_version = 0;
  Version to_version = 0;
  std::uint64_t element_count = 0;
  std::vector<WeightChange> changes;  // strictly ascending by index

  /// Fraction of elements left unchanged: 1 - |changes| / N.
  double sparsity() const;
  friend bool operator==(const WeightDelta&, const WeightDelta&) = default;
};

using WeightUpdate = std::variant<WeightSnapshot, WeightDelta>;

struct SyncPolicy {
  Version full_sync_interval = 20;
  Version max_delta_chain = 4;
};

struct LinkModel {
  double bandwidth_bits_per_sec = 100e9;
  double rtt_seconds = 0.0;
};

/// Single-stream model: rtt + 8 * bytes / bandwidth.
double transfer_time(std::uint64_t bytes, const LinkModel& link);

WeightDelta compute_delta(const WeightSnapshot& prev, const WeightSnapshot& next);
WeightSnapshot apply_delta(const WeightSnapshot& base, const WeightDelta& delta);

// Wire format, all integers little-endian:
//   "AWT1" | mode u8 (0 full, 1 delta) | policy_len u16 | policy bytes
//   | from_version u64 | to_version u64 | element_count u64
//   full:  element_count x u16 word
//   delta: change_count u64 | change_count x (u32 index, u16 word)
// A full snapshot is written with from_version == to_version.
inline constexpr std::uint8_t kModeFull = 0;
inline constexpr std::uint8_t kModeDelta = 1;

std::vector<std::uint8_t> encode_update(const WeightUpdate& update);
WeightUpdate decode_update(std::span<const std::uint8_t> bytes);
std::uint64_t encoded_size(const WeightUpdate& update);

/// Stream framing for live transports: u32 little-endian length prefix.
void append_frame(std::vector<std::uint8_t>& stream, std::span<const std::uint8_t> message);
/// Pops one complete frame from the front of `stream`; nullopt if incomplete.
std::optional<std::vector<std::uint8_t>> pop_frame(std::vector<std::uint8_t>& stream);

struct PublishRecord {
  PolicyId policy;
  Version version = 0;
  bool full_sync = false;
  std::shared_ptr<const WeightDelta> delta;  // null on the first publish or after a gap
  std::uint64_t full_bytes = 0;
  std::uint64_t delta_bytes = 0;
};

struct PullResult {
  enum class Kind { kUpToDate, kDeltaChain, kFull };

  Kind kind = Kind::kUpToDate;
  Version from_version = 0;
  Version to_version = 0;
  std::vector<std::shared_ptr<const WeightDelta>> chain;
  std::shared_ptr<const WeightSnapshot> full;

  /// Encoded bytes the client has to receive for this result.
  std::uint64_t wire_bytes() const;
};

/// Trainer-side store. One publisher per policy, any number of pullers;
/// a puller observes either the previous or the new latest, never a mix.
class WeightStore {
 public:
  PublishRecord publish(const WeightSnapshot& snapshot, const SyncPolicy& sync);
  PullResult pull_update(const PolicyId& policy, Version client_version, const SyncPolicy& sync) const;

  Version latest_version(const PolicyId& policy) const;
  bool has_policy(const PolicyId& policy) const;
  std::shared_ptr<const WeightSnapshot> latest_snapshot(const PolicyId& policy) const;
  std::size_t retained_deltas(const PolicyId& policy) const;

 private:
  struct PolicyState {
    std::shared_ptr<const WeightSnapshot> latest;
    std::shared_ptr<const WeightSnapshot> previous;
    bool latest_full_sync = false;
    std::map<Version, std::shared_ptr<const WeightDelta>> deltas;  // keyed by to_version
  };

  const PolicyState& state_for(const PolicyId& policy) const;

  mutable std::shared_mutex mutex_;
  std::map<PolicyId, PolicyState> policies_;
};

/// Applies a pull result on top of `held`; returns the refreshed snapshot.
WeightSnapshot apply_pull(const WeightSnapshot& held, const PullResult& pull);

}  // namespace flowrl
