/*
 * Copyright 2026 The dsidx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "dsidx/builder.hpp"
#include "dsidx/errors.hpp"
#include "dsidx/query.hpp"
#include "dsidx/split_engine.hpp"
#include "dsidx/updates.hpp"
#include "test_support.hpp"

namespace dsidx {
namespace {

using testing::TempDir;
using Ledger = std::map<std::uint64_t, std::vector<float>>;

constexpr std::size_t kN = 64;

BuildConfig update_config(std::size_t w) {
  BuildConfig cfg;
  cfg.series_length = kN;
  cfg.segments = w;
  cfg.leaf_capacity = 100;
  return cfg;
}

std::span<const float> row(const std::vector<float>& v, std::size_t i) {
  return {v.data() + i * kN, kN};
}

Ledger ledger_of(const std::vector<float>& values) {
  Ledger out;
  for (std::size_t i = 0; i < values.size() / kN; ++i) {
    const auto s = row(values, i);
    out[i] = std::vector<float>(s.begin(), s.end());
  }
  return out;
}

// Full check of tree shape, leaf files and the live multiset against the ledger.
void check_index(const Index& index, const Ledger& ledger) {
  const Tree& t = index.tree();
  const auto& cfg = index.config();
  std::map<std::uint64_t, int> live;
  for (NodeId id : t.preorder()) {
    const Node& n = t[id];
    if (!n.leaf) {
      ASSERT_EQ(n.routing.size(), std::size_t{1} << n.csl.size());
      std::uint64_t leaves = 0;
      for (NodeId c : t.children(id)) {
        EXPECT_EQ(t[c].parent, id);
        EXPECT_TRUE(n.isax.covers(t[c].isax));
        leaves += t[c].leaf ? 1 : t[c].leaf_count;
      }
      EXPECT_EQ(n.leaf_count, leaves);
      continue;
    }
    EXPECT_EQ(n.deleted.size(), n.records);
    if (n.live() > cfg.leaf_capacity) {
      EXPECT_TRUE(promotable_segments(n.isax, cfg.bits).empty());
    }
    const auto block = index.read_leaf(id);
    ASSERT_EQ(block.size(), n.records);
    const Node& parent = t[n.parent];
    for (std::size_t i = 0; i < block.size(); ++i) {
      // Deleted slots may hold records moved out of a narrowed pack.
      if (n.deleted.test(i)) continue;
      EXPECT_TRUE(n.isax.covers(block.sax_of(i), cfg.bits));
      const auto sid = t.sid_in(n.parent, block.sax_of(i));
      const bool original =
          parent.csl.empty() ||
          std::binary_search(n.member_sids.begin(), n.member_sids.end(), sid);
      if (!original) continue;
      ++live[block.ordinals[i]];
      auto it = ledger.find(block.ordinals[i]);
      ASSERT_NE(it, ledger.end()) << "deleted ordinal " << block.ordinals[i] << " is live";
      const auto s = block.series(i);
      EXPECT_TRUE(std::equal(s.begin(), s.end(), it->second.begin()));
    }
  }
  EXPECT_EQ(live.size(), ledger.size());
  for (const auto& [ord, count] : live) EXPECT_EQ(count, 1) << "ordinal " << ord;
  const auto stats = index_stats(t, cfg.leaf_capacity, ledger.size());
  EXPECT_EQ(stats.leaf_count, t[t.root()].leaf_count);
}

// Exact kNN over the live ledger.
void check_exact(const Index& index, const Ledger& ledger, std::span<const float> q,
                 std::size_t k) {
  std::vector<testing::RefNeighbor> all;
  for (const auto& [ord, s] : ledger) all.push_back({ord, testing::naive_ed(q, s)});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::tie(a.distance, a.ordinal) < std::tie(b.distance, b.ordinal);
  });
  all.resize(std::min(k, all.size()));
  QueryOptions opts;
  opts.k = k;
  const auto r = exact_search(index, q, opts);
  ASSERT_EQ(r.neighbors.size(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_NEAR(r.neighbors[i].distance, all[i].distance, 1e-6);
    if (r.neighbors[i].ordinal != all[i].ordinal) {
      EXPECT_NEAR(r.neighbors[i].distance, all[i].distance, 1e-9);
    }
  }
}

struct Fixture {
  TempDir tmp;
  std::vector<float> values;
  Index index;
  Fixture(std::size_t count, std::size_t w, std::uint64_t seed)
      : values(testing::ref_walks(count, kN, seed)),
        index((write_dataset(tmp / "d.bin", values),
               build_index(tmp / "d.bin", tmp / "idx", update_config(w)))) {}
};

NodeId home_leaf(const Index& index, std::span<const float> s) {
  return route_to_leaf(index.tree(),
                       paa_to_sax(compute_paa(s, index.config().segments), Breakpoints::for_bits(8)));
}

TEST(Insert, IntoRoomyLeafKeepsShape) {
  Fixture fx(3000, 8, 1);
  IndexUpdater up(fx.index);
  const auto extra = testing::ref_walks(50, kN, 99);
  std::size_t tried = 0;
  for (std::size_t i = 0; i < 50 && tried < 5; ++i) {
    const NodeId leaf = home_leaf(fx.index, row(extra, i));
    if (fx.index.tree()[leaf].is_pack() || fx.index.tree()[leaf].live() >= 90) continue;
    ++tried;
    const auto before = fx.index.tree().preorder().size();
    const auto records = fx.index.tree()[leaf].records;
    const auto ord = up.insert_series(row(extra, i));
    EXPECT_EQ(ord, fx.index.meta().next_ordinal - 1);
    EXPECT_EQ(fx.index.tree()[leaf].records, records + 1);
    EXPECT_EQ(fx.index.tree().preorder().size(), before);
    QueryOptions opts;
    const auto r = exact_search(fx.index, row(extra, i), opts);
    EXPECT_EQ(r.neighbors[0], (Neighbor{ord, 0.0}));
  }
  EXPECT_GT(tried, 0u);
  EXPECT_EQ(up.stats().splits, 0u);
}

TEST(Insert, OverflowSplitsLeaf) {
  TempDir tmp;
  const auto values = testing::ref_walks(100, kN, 2);
  write_dataset(tmp / "d.bin", values);
  Index index = build_index(tmp / "d.bin", tmp / "idx", update_config(8));
  ASSERT_EQ(index.meta().stats.leaf_count, 1u);
  IndexUpdater up(index);
  const auto extra = testing::ref_walks(1, kN, 3);
  up.insert_series(extra);
  EXPECT_EQ(up.stats().splits, 1u);
  Ledger ledger = ledger_of(values);
  ledger[100] = extra;
  check_index(index, ledger);
  EXPECT_GT(index.tree()[index.tree().root()].leaf_count, 1u);
  for (std::size_t i = 0; i <= 100; ++i) {
    const auto& s = ledger.at(i);
    QueryOptions opts;
    EXPECT_EQ(exact_search(index, s, opts).neighbors[0].ordinal, i);
  }
}

TEST(Insert, ManyRandomInsertsKeepIndexExact) {
  Fixture fx(5000, 8, 4);
  IndexUpdater up(fx.index);
  Ledger ledger = ledger_of(fx.values);
  const auto extra = testing::ref_walks(10000, kN, 5);
  for (std::size_t i = 0; i < 10000; ++i) {
    const auto s = row(extra, i);
    ledger[up.insert_series(s)] = std::vector<float>(s.begin(), s.end());
  }
  EXPECT_EQ(up.live_series(), 15000u);
  EXPECT_GT(up.stats().splits, 0u);
  check_index(fx.index, ledger);
  const auto queries = testing::ref_walks(10, kN, 6);
  for (std::size_t q = 0; q < 10; ++q) check_exact(fx.index, ledger, row(queries, q), 20);
}

TEST(Insert, RejectsBadSeries) {
  Fixture fx(200, 8, 7);
  IndexUpdater up(fx.index);
  EXPECT_THROW(up.insert_series(std::vector<float>(kN - 1, 0.0f)), ConfigError);
  std::vector<float> nan(kN, 0.0f);
  nan[3] = std::nanf("");
  EXPECT_THROW(up.insert_series(nan), ConfigError);
}

TEST(Delete, DeletedSeriesNeverReturned) {
  Fixture fx(3000, 8, 8);
  IndexUpdater up(fx.index);
  QueryOptions opts;
  opts.k = 5;
  up.delete_ordinal(17);
  EXPECT_FALSE(up.contains(17));
  const auto r = exact_search(fx.index, row(fx.values, 17), opts);
  for (const auto& nb : r.neighbors) EXPECT_NE(nb.ordinal, 17u);
  EXPECT_GT(r.neighbors[0].distance, 0.0);
  EXPECT_THROW(up.delete_ordinal(17), NotFoundError);
  EXPECT_EQ(up.delete_series(row(fx.values, 18)), 18u);
  EXPECT_THROW(up.delete_series(row(fx.values, 18)), NotFoundError);
  EXPECT_THROW(up.delete_ordinal(999999), NotFoundError);
}

TEST(Delete, EmptiedLeafIsRemoved) {
  Fixture fx(3000, 8, 9);
  IndexUpdater up(fx.index);
  const Tree& t = fx.index.tree();
  NodeId target = kNoNode;
  for (NodeId leaf : t.leaves_under(t.root())) {
    if (!t[leaf].is_pack() && t[t[leaf].parent].csl.size() > 0) {
      target = leaf;
      break;
    }
  }
  ASSERT_NE(target, kNoNode);
  const NodeId parent = t[target].parent;
  const auto sid = t[target].member_sids[0];
  const auto leaves_before = t[t.root()].leaf_count;
  Ledger ledger = ledger_of(fx.values);
  for (auto ord : fx.index.read_leaf(target).ordinals) {
    up.delete_ordinal(ord);
    ledger.erase(ord);
  }
  EXPECT_FALSE(t[target].alive);
  if (t[parent].alive) EXPECT_EQ(t[parent].routing[sid], kNoNode);
  EXPECT_LT(t[t.root()].leaf_count, leaves_before);
  EXPECT_GE(up.stats().leaves_removed, 1u);
  check_index(fx.index, ledger);
}

TEST(Delete, InsertReusesDeletedSlot) {
  Fixture fx(3000, 8, 10);
  IndexUpdater up(fx.index);
  const auto s = row(fx.values, 5);
  const NodeId leaf = home_leaf(fx.index, s);
  const auto records = fx.index.tree()[leaf].records;
  up.delete_ordinal(5);
  const auto ord = up.insert_series(s);
  EXPECT_EQ(home_leaf(fx.index, s), leaf);
  EXPECT_EQ(fx.index.tree()[leaf].records, records);
  EXPECT_EQ(fx.index.tree()[leaf].deleted.count(), 0u);
  QueryOptions opts;
  EXPECT_EQ(exact_search(fx.index, s, opts).neighbors[0], (Neighbor{ord, 0.0}));
}

TEST(Updates, RandomInterleavingMatchesLedger) {
  Fixture fx(4000, 8, 11);
  IndexUpdater up(fx.index);
  Ledger ledger = ledger_of(fx.values);
  std::mt19937_64 gen(12);
  const auto extra = testing::ref_walks(3000, kN, 13);
  std::size_t next_extra = 0;
  for (int step = 0; step < 6000; ++step) {
    if (gen() % 2 == 0 && next_extra < 3000) {
      const auto s = row(extra, next_extra++);
      ledger[up.insert_series(s)] = std::vector<float>(s.begin(), s.end());
    } else if (!ledger.empty()) {
      auto it = ledger.begin();
      std::advance(it, static_cast<long>(gen() % ledger.size()));
      if (gen() % 2) {
        up.delete_ordinal(it->first);
      } else {
        EXPECT_EQ(up.delete_series(it->second), it->first);
      }
      ledger.erase(it);
    }
  }
  EXPECT_EQ(up.live_series(), ledger.size());
  check_index(fx.index, ledger);
  const auto queries = testing::ref_walks(8, kN, 14);
  for (std::size_t q = 0; q < 8; ++q) check_exact(fx.index, ledger, row(queries, q), 10);

  // Persisted state reopens to the same answers.
  up.save();
  const Index reopened = Index::open(fx.index.dir());
  EXPECT_TRUE(structurally_equal(reopened.tree(), fx.index.tree()));
  EXPECT_EQ(reopened.meta().live_series, ledger.size());
  check_index(reopened, ledger);
}

TEST(Updates, FullPackExtractsTargetLeaf) {
  Fixture fx(20000, 8, 15);
  IndexUpdater up(fx.index);
  Ledger ledger = ledger_of(fx.values);
  const Tree& t = fx.index.tree();
  // Packs right under the root: its extraction budget is far from exhausted.
  std::vector<NodeId> packs;
  for (NodeId leaf : t.children(t.root())) {
    if (t[leaf].leaf && t[leaf].is_pack()) packs.push_back(leaf);
  }
  ASSERT_FALSE(packs.empty());
  const NodeId pack = packs.front();
  const auto block = fx.index.read_leaf(pack);
  const auto seed = block.series(0);
  const auto sid = t.sid_in(t[pack].parent, block.sax_of(0));
  const NodeId parent = t[pack].parent;
  while (t[pack].alive && t[pack].is_pack() && t[pack].live() < 100) {
    ledger[up.insert_series(seed)] = std::vector<float>(seed.begin(), seed.end());
  }
  EXPECT_EQ(up.stats().extractions, 0u);
  ledger[up.insert_series(seed)] = std::vector<float>(seed.begin(), seed.end());
  EXPECT_EQ(up.stats().extractions, 1u);
  const NodeId now = t[parent].routing[sid];
  EXPECT_NE(now, pack);
  EXPECT_EQ(t[now].member_sids, (std::vector<std::uint32_t>{sid}));
  check_index(fx.index, ledger);
}

TEST(Updates, RepackAfterManyExtractions) {
  Fixture fx(20000, 8, 16);
  IndexUpdater up(fx.index);
  Ledger ledger = ledger_of(fx.values);
  const Tree& t = fx.index.tree();
  // Fill packs of one parent until its extraction budget triggers a repack.
  const NodeId root = t.root();
  const std::uint64_t budget = std::max<std::uint64_t>(1, (1u << t[root].csl.size()) / 4);
  while (up.stats().repacks == 0) {
    NodeId pack = kNoNode;
    for (NodeId c : t.children(root)) {
      if (t[c].leaf && t[c].is_pack()) {
        pack = c;
        break;
      }
    }
    ASSERT_NE(pack, kNoNode);
    const auto block = fx.index.read_leaf(pack);
    std::size_t i = 0;
    while (t[pack].deleted.test(i)) ++i;
    const std::vector<float> seed(block.series(i).begin(), block.series(i).end());
    const auto before = up.stats().extractions;
    while (up.stats().extractions == before) ledger[up.insert_series(seed)] = seed;
    ASSERT_LE(up.stats().extractions, budget);
  }
  EXPECT_EQ(up.stats().extractions, budget);
  EXPECT_EQ(t[root].extractions, 0u);
  check_index(fx.index, ledger);
  for (NodeId c : t.children(root)) {
    if (t[c].leaf) EXPECT_LE(t[c].live(), 100u);
  }
}

TEST(Resplit, BalancedSubtreeUntouched) {
  Fixture fx(20000, 4, 17);
  IndexUpdater up(fx.index);
  const Tree& t = fx.index.tree();
  std::size_t internal = 0;
  for (NodeId id : t.preorder()) {
    if (t[id].leaf || id == t.root()) continue;
    ++internal;
    EXPECT_FALSE(up.maybe_resplit(id));
  }
  EXPECT_GT(internal, 0u);
  EXPECT_FALSE(up.maybe_resplit(t.root()));
  EXPECT_EQ(up.stats().resplits, 0u);
}

TEST(Resplit, GrownSubtreeIsRebuiltWithinBand) {
  Fixture fx(3000, 8, 18);
  IndexUpdater up(fx.index);
  Ledger ledger = ledger_of(fx.values);
  const auto base = testing::ref_walks(1, kN, 19);
  std::mt19937_64 gen(20);
  std::normal_distribution<float> nd(0.0f, 0.05f);
  for (int i = 0; i < 2500; ++i) {
    std::vector<float> s = base;
    for (auto& v : s) v += nd(gen);
    ledger[up.insert_series(s)] = s;
  }
  EXPECT_GT(up.stats().resplits, 0u);
  const auto& cfg = fx.index.config();
  const SplitParams params{cfg.bits, cfg.leaf_capacity, cfg.fill_low, cfg.fill_high, cfg.alpha};
  const Tree& t = fx.index.tree();
  for (NodeId id : t.preorder()) {
    const Node& n = t[id];
    if (n.leaf || n.split_kind != SplitKind::kAdaptive) continue;
    const auto range = effective_fanout_range(n.split_size, params, cfg.segments, n.split_promotable);
    EXPECT_GE(static_cast<int>(n.csl.size()), range.min);
    EXPECT_LE(static_cast<int>(n.csl.size()), range.max);
  }
  check_index(fx.index, ledger);
  check_exact(fx.index, ledger, base, 30);
}

TEST(Resplit, RebuildKeepsExactResults) {
  Fixture fx(20000, 4, 21);
  // Narrowing the band makes every untouched subtree eligible for a rebuild.
  fx.index.meta().config.fill_low = 0.001;
  fx.index.meta().config.fill_high = 0.002;
  IndexUpdater up(fx.index);
  const auto queries = testing::ref_walks(10, kN, 22);
  std::vector<KnnResult> before;
  QueryOptions opts;
  opts.k = 30;
  for (std::size_t q = 0; q < 10; ++q) before.push_back(exact_search(fx.index, row(queries, q), opts));
  const Tree& t = fx.index.tree();
  std::vector<NodeId> targets;
  for (NodeId c : t.children(t.root())) {
    if (!t[c].leaf) targets.push_back(c);
  }
  ASSERT_FALSE(targets.empty());
  std::size_t rebuilt = 0;
  for (NodeId c : targets) rebuilt += up.maybe_resplit(c) ? 1 : 0;
  EXPECT_GT(rebuilt, 0u);
  for (std::size_t q = 0; q < 10; ++q) {
    EXPECT_EQ(exact_search(fx.index, row(queries, q), opts).neighbors, before[q].neighbors);
  }
  check_index(fx.index, ledger_of(fx.values));
}

}  // namespace
}  // namespace dsidx
