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

#include <gtest/gtest.h>

#include <random>

#include "flowrl/error.hpp"
#include "flowrl/trainer.hpp"
#include "flowrl/weights.hpp"

namespace flowrl {
namespace {

WeightSnapshot snap(const std::string& policy, Version v, std::vector<Word> words) {
  return {PolicyId(policy), v, std::move(words)};
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(Codec, EmptyDeltaIsFortyBytes) {
  WeightDelta d{PolicyId("A"), 3, 4, 8, {}};
  auto bytes = encode_update(d);
  EXPECT_EQ(bytes.size(), 4u + 1 + 2 + 1 + 8 + 8 + 8 + 8);
  EXPECT_EQ(encoded_size(d), bytes.size());
  EXPECT_EQ(std::get<WeightDelta>(decode_update(bytes)), d);
}

TEST(Codec, FullSnapshotIsHeaderPlusWords) {
  auto s = snap("A", 5, {1, 2, 3, 0xFFFF});
  auto bytes = encode_update(s);
  EXPECT_EQ(bytes.size(), 4u + 1 + 2 + 1 + 8 + 8 + 8 + 8);
  EXPECT_EQ(bytes[4], kModeFull);
  EXPECT_EQ(bytes[bytes.size() - 2], 0xFF);
  EXPECT_EQ(std::get<WeightSnapshot>(decode_update(bytes)), s);
}

TEST(Codec, LittleEndianLayout) {
  WeightDelta d{PolicyId("pi"), 0x0102, 0x0103, 0x0B000000, {{0x0A0B0C0D, 0xBEEF}}};
  auto b = encode_update(d);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "AWT1");
  EXPECT_EQ(b[4], kModeDelta);
  EXPECT_EQ(b[5], 2);
  EXPECT_EQ(b[6], 0);
  EXPECT_EQ(b[7], 'p');
  EXPECT_EQ(b[9], 0x02);
  EXPECT_EQ(b[10], 0x01);
  const std::size_t change = b.size() - 6;
  EXPECT_EQ(b[change], 0x0D);
  EXPECT_EQ(b[change + 3], 0x0A);
  EXPECT_EQ(b[change + 4], 0xEF);
  EXPECT_EQ(b[change + 5], 0xBE);
}

TEST(Codec, CorruptMagicTruncationTrailing) {
  auto bytes = encode_update(snap("A", 1, {7, 8}));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_update(bad); }), ErrorCode::kBadMagic);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_EQ(code_of([&] { decode_update(cut); }), ErrorCode::kTruncated);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_EQ(code_of([&] { decode_update(extra); }), ErrorCode::kTrailingBytes);
  bad = bytes;
  bad[4] = 7;
  EXPECT_EQ(code_of([&] { decode_update(bad); }), ErrorCode::kBadMode);
}

TEST(Codec, UnsortedIndicesRejected) {
  WeightDelta d{PolicyId("A"), 1, 2, 8, {{5, 1}, {3, 1}}};
  EXPECT_EQ(code_of([&] { encode_update(d); }), ErrorCode::kUnsortedIndices);
  WeightDelta sorted{PolicyId("A"), 1, 2, 8, {{3, 1}, {5, 1}}};
  auto bytes = encode_update(sorted);
  // swap the two change entries in place
  std::swap_ranges(bytes.end() - 12, bytes.end() - 6, bytes.end() - 6);
  EXPECT_EQ(code_of([&] { decode_update(bytes); }), ErrorCode::kUnsortedIndices);
}

TEST(Codec, EveryMutationOfMagicModeOrCountIsRejected) {
  const WeightSnapshot full = snap("A", 9, {1, 2, 3, 4});
  const WeightDelta delta{PolicyId("A"), 3, 4, 8, {{1, 5}, {6, 9}}};
  struct Case {
    std::vector<std::uint8_t> bytes;
    std::vector<std::size_t> positions;
  };
  const std::size_t header = 4 + 1 + 2 + 1 + 8 + 8;
  std::vector<Case> cases;
  Case f{encode_update(full), {0, 1, 2, 3, 4}};
  for (std::size_t i = 0; i < 8; ++i) f.positions.push_back(header + i);  // element_count
  Case d{encode_update(delta), {0, 1, 2, 3, 4}};
  for (std::size_t i = 0; i < 8; ++i) d.positions.push_back(header + 8 + i);  // change_count
  cases.push_back(f);
  cases.push_back(d);
  for (const auto& c : cases) {
    for (std::size_t pos : c.positions) {
      for (int v = 0; v < 256; ++v) {
        if (v == c.bytes[pos]) continue;
        auto m = c.bytes;
        m[pos] = static_cast<std::uint8_t>(v);
        EXPECT_THROW(decode_update(m), Error) << "pos " << pos << " value " << v;
      }
    }
  }
}

TEST(Codec, RandomRoundTrip) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    std::vector<Word> words(n);
    for (auto& w : words) w = static_cast<Word>(rng());
    WeightSnapshot s = snap("policy-" + std::to_string(trial % 3), rng() % 100, words);
    ASSERT_EQ(std::get<WeightSnapshot>(decode_update(encode_update(s))), s);
    WeightSnapshot next = s;
    ++next.version;
    for (auto& w : next.words)
      if (rng() % 4 == 0) w = static_cast<Word>(w + 1);
    WeightDelta d = compute_delta(s, next);
    ASSERT_EQ(std::get<WeightDelta>(decode_update(encode_update(d))), d);
    ASSERT_EQ(apply_delta(s, d), next);
  }
}

TEST(Framing, LengthPrefixedMessages) {
  std::vector<std::uint8_t> stream;
  auto a = encode_update(snap("A", 1, {1}));
  auto b = encode_update(WeightDelta{PolicyId("A"), 1, 2, 1, {}});
  append_frame(stream, a);
  append_frame(stream, b);
  auto first = pop_frame(stream);
  ASSERT_TRUE(first);
  EXPECT_EQ(*first, a);
  auto partial = stream;
  partial.pop_back();
  EXPECT_FALSE(pop_frame(partial));
  EXPECT_EQ(*pop_frame(stream), b);
  EXPECT_TRUE(stream.empty());
}

TEST(Delta, ComputeApplyErrors) {
  auto a = snap("A", 1, {1, 2, 3});
  EXPECT_EQ(code_of([&] { compute_delta(a, snap("A", 2, {1, 2})); }), ErrorCode::kLengthMismatch);
  EXPECT_EQ(code_of([&] { compute_delta(a, snap("A", 3, {1, 2, 3})); }), ErrorCode::kVersionMismatch);
  WeightDelta oob{PolicyId("A"), 1, 2, 3, {{3, 1}}};
  EXPECT_EQ(code_of([&] { apply_delta(a, oob); }), ErrorCode::kIndexOutOfRange);
  auto d = compute_delta(a, snap("A", 2, {1, 9, 3}));
  ASSERT_EQ(d.changes.size(), 1u);
  EXPECT_EQ(d.changes[0], (WeightChange{1, 9}));
  EXPECT_DOUBLE_EQ(d.sparsity(), 1.0 - 1.0 / 3.0);
}

TEST(TransferTime, SingleStreamModel) {
  LinkModel wan{4e9, 0.3};
  EXPECT_NEAR(transfer_time(1'500'000'000ULL, wan), 3.3, 1e-9);
  EXPECT_NEAR(transfer_time(28'000'000'000ULL, wan), 56.3, 1e-9);
  EXPECT_EQ(transfer_time(0, wan), 0.3);
  EXPECT_THROW(transfer_time(1, LinkModel{0.0, 0.0}), Error);
}

TEST(Store, PublishMarksFullSyncVersions) {
  WeightStore store;
  SyncPolicy every20{20, 4};
  auto first = store.publish(snap("A", 1, {0, 0}), every20);
  EXPECT_EQ(first.delta, nullptr);
  EXPECT_FALSE(first.full_sync);

  WeightStore s2;
  s2.publish(snap("A", 39, {0, 0}), every20);
  auto r40 = s2.publish(snap("A", 40, {0, 1}), every20);
  EXPECT_TRUE(r40.full_sync);
  ASSERT_NE(r40.delta, nullptr);

  WeightStore s3;
  SyncPolicy every10{10, 4};
  s3.publish(snap("A", 12, {0}), every10);
  EXPECT_FALSE(s3.publish(snap("A", 13, {1}), every10).full_sync);

  EXPECT_EQ(code_of([&] { s3.publish(snap("A", 13, {2}), every10); }), ErrorCode::kNonMonotoneVersion);
}

TEST(Store, PullRules) {
  WeightStore store;
  SyncPolicy sync{20, 4};
  for (Version v = 1; v <= 12; ++v) store.publish(snap("A", v, {static_cast<Word>(v), 0}), sync);

  EXPECT_EQ(store.pull_update(PolicyId("A"), 12, sync).kind, PullResult::Kind::kUpToDate);

  auto chain = store.pull_update(PolicyId("A"), 10, sync);
  ASSERT_EQ(chain.kind, PullResult::Kind::kDeltaChain);
  ASSERT_EQ(chain.chain.size(), 2u);
  EXPECT_EQ(chain.chain[0]->from_version, 10u);
  EXPECT_EQ(chain.chain[0]->to_version, 11u);
  EXPECT_EQ(chain.chain[1]->to_version, 12u);

  auto fresh = store.pull_update(PolicyId("A"), 0, sync);
  EXPECT_EQ(fresh.kind, PullResult::Kind::kFull);
  EXPECT_EQ(fresh.full->version, 12u);

  EXPECT_EQ(store.pull_update(PolicyId("A"), 7, sync).kind, PullResult::Kind::kFull);  // gap 5 > 4
  EXPECT_EQ(code_of([&] { store.pull_update(PolicyId("B"), 0, sync); }), ErrorCode::kUnknownPolicy);
}

TEST(Store, FullSyncVersionForcesFullPull) {
  WeightStore store;
  SyncPolicy sync{20, 4};
  for (Version v = 18; v <= 20; ++v) store.publish(snap("A", v, {static_cast<Word>(v)}), sync);
  EXPECT_EQ(store.pull_update(PolicyId("A"), 19, sync).kind, PullResult::Kind::kFull);
  store.publish(snap("A", 21, {21}), sync);
  EXPECT_EQ(store.pull_update(PolicyId("A"), 20, sync).kind, PullResult::Kind::kDeltaChain);
}

TEST(Store, RetentionIsBounded) {
  WeightStore store;
  SyncPolicy sync{5, 3};
  for (Version v = 1; v <= 40; ++v) store.publish(snap("A", v, {static_cast<Word>(v)}), sync);
  EXPECT_EQ(store.retained_deltas(PolicyId("A")), 5u);
}

TEST(Store, RandomSchedulesConvergeBitExactly) {
  std::mt19937_64 rng(99);
  for (int schedule = 0; schedule < 300; ++schedule) {
    SyncPolicy sync{1 + rng() % 6, 1 + rng() % 5};
    const std::size_t n = 1 + rng() % 40;
    WeightStore store;
    WeightSnapshot trainer = snap("A", 0, std::vector<Word>(n));
    for (auto& w : trainer.words) w = static_cast<Word>(rng());
    store.publish(trainer, sync);
    WeightSnapshot client = trainer;
    for (int step = 0; step < 30; ++step) {
      trainer = perturb_snapshot(trainer, rng() % (n + 1), rng());
      store.publish(trainer, sync);
      if (rng() % 3 == 0) {
        client = apply_pull(client, store.pull_update(PolicyId("A"), client.version, sync));
        ASSERT_EQ(client, trainer);
      }
    }
    client = apply_pull(client, store.pull_update(PolicyId("A"), client.version, sync));
    ASSERT_EQ(client, *store.latest_snapshot(PolicyId("A")));
  }
}

TEST(Store, DeltaPayloadBound) {
  const std::size_t n = 100000;
  auto base = initial_snapshot(PolicyId("A"), n, 1);
  auto next = perturb_snapshot(base, 1100, 2);
  auto d = compute_delta(base, next);
  const double header = static_cast<double>(encoded_size(WeightDelta{PolicyId("A"), 0, 1, n, {}}));
  EXPECT_LE(static_cast<double>(encoded_size(d)), header + 6.0 * (1.0 - d.sparsity()) * n + 1e-6);
  EXPECT_LE(static_cast<double>(encoded_size(d)) - header, 0.035 * 2.0 * n);
}

}  // namespace
}  // namespace flowrl
