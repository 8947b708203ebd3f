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

#include "flowrl/weights.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <mutex>

#include <fmt/format.h>

#include "flowrl/error.hpp"

namespace flowrl {
namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'W', 'T', '1'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
    }
  }
  void put_bytes(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) out_.push_back(b);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T get(const char* field) {
    need(sizeof(T), field);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* field) {
    need(n, field);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (remaining() < n) throw Error(ErrorCode::kTruncated, fmt::format("while reading {}", field));
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint64_t header_size(const PolicyId& policy) { return 4 + 1 + 2 + policy.value.size() + 8 + 8 + 8; }

void check_policy_name(const PolicyId& policy) {
  if (policy.empty()) throw Error(ErrorCode::kInvalidArgument, "empty policy id");
  if (policy.value.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::kInvalidArgument, "policy id longer than 65535 bytes");
  }
}

void check_changes(const WeightDelta& delta) {
  for (std::size_t i = 0; i < delta.changes.size(); ++i) {
    if (i > 0 && delta.changes[i].index <= delta.changes[i - 1].index) {
      throw Error(ErrorCode::kUnsortedIndices, fmt::format("at change {}", i));
    }
    if (delta.changes[i].index >= delta.element_count) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  fmt::format("index {} >= element count {}", delta.changes[i].index, delta.element_count));
    }
  }
}

}  // namespace

double WeightDelta::sparsity() const {
  if (element_count == 0) return 1.0;
  return 1.0 - static_cast<double>(changes.size()) / static_cast<double>(element_count);
}

double transfer_time(std::uint64_t bytes, const LinkModel& link) {
  if (!(link.bandwidth_bits_per_sec > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bandwidth must be > 0");
  return link.rtt_seconds + 8.0 * static_cast<double>(bytes) / link.bandwidth_bits_per_sec;
}

WeightDelta compute_delta(const WeightSnapshot& prev, const WeightSnapshot& next) {
  if (prev.policy != next.policy) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("policy {} vs {}", prev.policy.str(), next.policy.str()));
  }
  if (prev.words.size() != next.words.size()) {
    throw Error(ErrorCode::kLengthMismatch, fmt::format("{} vs {}", prev.words.size(), next.words.size()));
  }
  if (next.version != prev.version + 1) {
    throw Error(ErrorCode::kVersionMismatch, fmt::format("{} -> {}", prev.version, next.version));
  }
  if (prev.words.size() > kMaxElements) throw Error(ErrorCode::kInvalidArgument, "more than 2^32 elements");

  WeightDelta delta{prev.policy, prev.version, next.version, prev.words.size(), {}};
  for (std::size_t i = 0; i < next.words.size(); ++i) {
    if (prev.words[i] != next.words[i]) {
      delta.changes.push_back({static_cast<std::uint32_t>(i), next.words[i]});
    }
  }
  return delta;
}

WeightSnapshot apply_delta(const WeightSnapshot& base, const WeightDelta& delta) {
  if (base.policy != delta.policy) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("policy {} vs {}", base.policy.str(), delta.policy.str()));
  }
  if (base.version != delta.from_version) {
    throw Error(ErrorCode::kVersionMismatch,
                fmt::format("base {} but delta from {}", base.version, delta.from_version));
  }
  if (base.words.size() != delta.element_count) {
    throw Error(ErrorCode::kLengthMismatch, fmt::format("{} vs {}", base.words.size(), delta.element_count));
  }
  WeightSnapshot out{base.policy, delta.to_version, base.words};
  for (const auto& c : delta.changes) {
    if (c.index >= out.words.size()) {
      throw Error(ErrorCode::kIndexOutOfRange, fmt::format("index {}", c.index));
    }
    out.words[c.index] = c.word;
  }
  return out;
}

std::uint64_t encoded_size(const WeightUpdate& update) {
  if (const auto* full = std::get_if<WeightSnapshot>(&update)) {
    return header_size(full->policy) + 2 * full->words.size();
  }
  const auto& delta = std::get<WeightDelta>(update);
  return header_size(delta.policy) + 8 + 6 * delta.changes.size();
}

std::vector<std::uint8_t> encode_update(const WeightUpdate& update) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(update));
  Writer w(out);
  w.put_bytes(kMagic);

  if (const auto* full = std::get_if<WeightSnapshot>(&update)) {
    check_policy_name(full->policy);
    w.put<std::uint8_t>(kModeFull);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(full->policy.value.size()));
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(full->policy.value.data()), full->policy.value.size()});
    w.put<std::uint64_t>(full->version);
    w.put<std::uint64_t>(full->version);
    w.put<std::uint64_t>(full->words.size());
    for (Word word : full->words) w.put<std::uint16_t>(word);
    return out;
  }

  const auto& delta = std::get<WeightDelta>(update);
  check_policy_name(delta.policy);
  if (delta.to_version <= delta.from_version) {
    throw Error(ErrorCode::kVersionMismatch, fmt::format("{} -> {}", delta.from_version, delta.to_version));
  }
  check_changes(delta);
  w.put<std::uint8_t>(kModeDelta);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(delta.policy.value.size()));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(delta.policy.value.data()), delta.policy.value.size()});
  w.put<std::uint64_t>(delta.from_version);
  w.put<std::uint64_t>(delta.to_version);
  w.put<std::uint64_t>(delta.element_count);
  w.put<std::uint64_t>(delta.changes.size());
  for (const auto& c : delta.changes) {
    w.put<std::uint32_t>(c.index);
    w.put<std::uint16_t>(c.word);
  }
  return out;
}

WeightUpdate decode_update(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw Error(ErrorCode::kBadMagic, "expected AWT1");

  const auto mode = r.get<std::uint8_t>("mode");
  if (mode != kModeFull && mode != kModeDelta) throw Error(ErrorCode::kBadMode, fmt::format("mode {}", mode));

  const auto name_len = r.get<std::uint16_t>("policy length");
  auto name = r.take(name_len, "policy id");
  PolicyId policy(std::string(name.begin(), name.end()));
  if (policy.empty()) throw Error(ErrorCode::kInvalidArgument, "empty policy id");

  const auto from = r.get<std::uint64_t>("from_version");
  const auto to = r.get<std::uint64_t>("to_version");
  const auto count = r.get<std::uint64_t>("element_count");

  if (mode == kModeFull) {
    if (from != to) throw Error(ErrorCode::kVersionMismatch, "full snapshot with from_version != to_version");
    if (count > r.remaining() / 2) throw Error(ErrorCode::kTruncated, "full payload");
    if (r.remaining() != 2 * count) throw Error(ErrorCode::kTrailingBytes, fmt::format("{} extra", r.remaining() - 2 * count));
    WeightSnapshot snap{std::move(policy), to, {}};
    snap.words.resize(count);
    for (auto& word : snap.words) word = r.get<std::uint16_t>("word");
    return snap;
  }

  if (to <= from) throw Error(ErrorCode::kVersionMismatch, fmt::format("{} -> {}", from, to));
  if (count > kMaxElements) throw Error(ErrorCode::kIndexOutOfRange, "element count exceeds 32-bit index space");
  const auto change_count = r.get<std::uint64_t>("change_count");
  if (change_count > r.remaining() / 6) throw Error(ErrorCode::kTruncated, "change list");
  if (r.remaining() != 6 * change_count) {
    throw Error(ErrorCode::kTrailingBytes, fmt::format("{} extra", r.remaining() - 6 * change_count));
  }
  WeightDelta delta{std::move(policy), from, to, count, {}};
  delta.changes.resize(change_count);
  for (auto& c : delta.changes) {
    c.index = r.get<std::uint32_t>("index");
    c.word = r.get<std::uint16_t>("word");
  }
  check_changes(delta);
  return delta;
}

void append_frame(std::vector<std::uint8_t>& stream, std::span<const std::uint8_t> message) {
  if (message.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kInvalidArgument, "message larger than 4 GiB");
  }
  Writer w(stream);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(message.size()));
  w.put_bytes(message);
}

std::optional<std::vector<std::uint8_t>> pop_frame(std::vector<std::uint8_t>& stream) {
  if (stream.size() < 4) return std::nullopt;
  Reader r(stream);
  const auto len = r.get<std::uint32_t>("frame length");
  if (r.remaining() < len) return std::nullopt;
  std::vector<std::uint8_t> message(stream.begin() + 4, stream.begin() + 4 + len);
  stream.erase(stream.begin(), stream.begin() + 4 + len);
  return message;
}

std::uint64_t PullResult::wire_bytes() const {
  switch (kind) {
    case Kind::kUpToDate:
      return 0;
    case Kind::kFull:
      return encoded_size(*full);
    case Kind::kDeltaChain: {
      std::uint64_t total = 0;
      for (const auto& d : chain) total += encoded_size(*d);
      return total;
    }
  }
  return 0;
}

PublishRecord WeightStore::publish(const WeightSnapshot& snapshot, const SyncPolicy& sync) {
  if (sync.full_sync_interval < 1) throw Error(ErrorCode::kInvalidArgument, "full_sync_interval must be >= 1");
  check_policy_name(snapshot.policy);

  std::shared_ptr<const WeightSnapshot> prev;
  {
    std::shared_lock lock(mutex_);
    auto it = policies_.find(snapshot.policy);
    if (it != policies_.end()) prev = it->second.latest;
  }
  if (prev) {
    if (snapshot.version <= prev->version) {
      throw Error(ErrorCode::kNonMonotoneVersion, fmt::format("{} after {}", snapshot.version, prev->version));
    }
    if (snapshot.words.size() != prev->words.size()) {
      throw Error(ErrorCode::kLengthMismatch, fmt::format("{} vs {}", snapshot.words.size(), prev->words.size()));
    }
  }

  auto stored = std::make_shared<const WeightSnapshot>(snapshot);
  std::shared_ptr<const WeightDelta> delta;
  if (prev && prev->version + 1 == snapshot.version) {
    delta = std::make_shared<const WeightDelta>(compute_delta(*prev, snapshot));
  }

  PublishRecord record;
  record.policy = snapshot.policy;
  record.version = snapshot.version;
  record.full_sync = snapshot.version % sync.full_sync_interval == 0;
  record.delta = delta;
  record.full_bytes = encoded_size(snapshot);
  record.delta_bytes = delta ? encoded_size(*delta) : 0;

  const std::size_t keep = std::max<std::uint64_t>(sync.full_sync_interval, sync.max_delta_chain);
  std::unique_lock lock(mutex_);
  auto& state = policies_[snapshot.policy];
  state.previous = state.latest;
  state.latest = std::move(stored);
  state.latest_full_sync = record.full_sync;
  if (!delta) state.deltas.clear();  // a gap breaks every chain through it
  else state.deltas.emplace(snapshot.version, delta);
  while (state.deltas.size() > keep) state.deltas.erase(state.deltas.begin());
  return record;
}

const WeightStore::PolicyState& WeightStore::state_for(const PolicyId& policy) const {
  auto it = policies_.find(policy);
  if (it == policies_.end()) throw Error(ErrorCode::kUnknownPolicy, policy.str());
  return it->second;
}

PullResult WeightStore::pull_update(const PolicyId& policy, Version client_version, const SyncPolicy& sync) const {
  std::shared_lock lock(mutex_);
  const auto& state = state_for(policy);
  const Version latest = state.latest->version;

  PullResult result;
  result.from_version = client_version;
  result.to_version = latest;
  if (client_version == latest) return result;
  if (client_version > latest) {
    throw Error(ErrorCode::kVersionMismatch, fmt::format("client {} ahead of latest {}", client_version, latest));
  }

  const Version gap = latest - client_version;
  bool chain_ok = gap <= sync.max_delta_chain && !state.latest_full_sync;
  if (chain_ok) {
    for (Version v = client_version + 1; v <= latest; ++v) {
      auto it = state.deltas.find(v);
      if (it == state.deltas.end()) {
        chain_ok = false;
        break;
      }
      result.chain.push_back(it->second);
    }
  }
  if (chain_ok) {
    result.kind = PullResult::Kind::kDeltaChain;
  } else {
    result.kind = PullResult::Kind::kFull;
    result.chain.clear();
    result.full = state.latest;
  }
  return result;
}

Version WeightStore::latest_version(const PolicyId& policy) const {
  std::shared_lock lock(mutex_);
  return state_for(policy).latest->version;
}

bool WeightStore::has_policy(const PolicyId& policy) const {
  std::shared_lock lock(mutex_);
  return policies_.contains(policy);
}

std::shared_ptr<const WeightSnapshot> WeightStore::latest_snapshot(const PolicyId& policy) const {
  std::shared_lock lock(mutex_);
  return state_for(policy).latest;
}

std::size_t WeightStore::retained_deltas(const PolicyId& policy) const {
  std::shared_lock lock(mutex_);
  return state_for(policy).deltas.size();
}

WeightSnapshot apply_pull(const WeightSnapshot& held, const PullResult& pull) {
  switch (pull.kind) {
    case PullResult::Kind::kUpToDate:
      return held;
    case PullResult::Kind::kFull:
      return *pull.full;
    case PullResult::Kind::kDeltaChain: {
      WeightSnapshot out = held;
      for (const auto& d : pull.chain) out = apply_delta(out, *d);
      return out;
    }
  }
  return held;
}

}  // namespace flowrl
