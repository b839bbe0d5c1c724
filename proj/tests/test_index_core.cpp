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

#include <boost/crc.hpp>

#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "dsidx/builder.hpp"
#include "dsidx/errors.hpp"
#include "dsidx/serialize.hpp"
#include "dsidx/split_engine.hpp"
#include "test_support.hpp"

namespace dsidx {
namespace {

using testing::TempDir;

BuildConfig small_config() {
  BuildConfig cfg;
  cfg.series_length = 64;
  cfg.segments = 16;
  cfg.bits = 8;
  cfg.leaf_capacity = 100;
  cfg.buffer_series = 4096;
  return cfg;
}

// Direct per-series SAX word from the oracle PAA.
std::vector<std::uint8_t> oracle_sax(std::span<const float> s, std::size_t w, int bits) {
  const auto paa = testing::naive_paa(s, w);
  return paa_to_sax(paa, Breakpoints::for_bits(bits));
}

struct Traversal {
  std::uint64_t nodes = 0, leaves = 0, packs = 0;
  std::uint32_t height = 0;
};

// Walks routing tables recursively, visiting each distinct child once.
void traverse(const Tree& t, NodeId id, std::uint32_t depth, Traversal& out) {
  ++out.nodes;
  const Node& n = t[id];
  if (n.leaf) {
    ++out.leaves;
    if (n.member_sids.size() > 1) ++out.packs;
    out.height = std::max(out.height, depth);
    return;
  }
  std::set<NodeId> seen;
  for (NodeId c : n.routing) {
    if (c != kNoNode && seen.insert(c).second) traverse(t, c, depth + 1, out);
  }
}

std::vector<NodeId> all_leaves(const Tree& t) {
  std::vector<NodeId> out;
  for (NodeId id : t.preorder()) {
    if (t[id].leaf) out.push_back(id);
  }
  return out;
}

class BuiltIndex : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new TempDir();
    values_ = testing::ref_walks(kCount, 64, 2024);
    write_dataset(*tmp_ / "data.bin", values_);
    index_ = new Index(build_index(*tmp_ / "data.bin", *tmp_ / "idx", small_config(), &report_));
  }
  static void TearDownTestSuite() {
    delete index_;
    delete tmp_;
  }

  static constexpr std::size_t kCount = 100000;
  static inline TempDir* tmp_ = nullptr;
  static inline std::vector<float> values_;
  static inline Index* index_ = nullptr;
  static inline BuildReport report_;
};

TEST_F(BuiltIndex, EverySeriesStoredExactlyOnce) {
  const Tree& t = index_->tree();
  std::vector<int> seen(kCount, 0);
  for (NodeId leaf : all_leaves(t)) {
    const auto block = index_->read_leaf(leaf);
    EXPECT_EQ(block.size(), t[leaf].records);
    for (std::size_t i = 0; i < block.size(); ++i) {
      const auto ord = block.ordinals[i];
      ASSERT_LT(ord, kCount);
      ++seen[ord];
      const auto s = block.series(i);
      ASSERT_TRUE(std::equal(s.begin(), s.end(), values_.begin() + static_cast<long>(ord * 64)));
      EXPECT_TRUE(t[leaf].isax.covers(block.sax_of(i), 8));
    }
  }
  for (std::size_t i = 0; i < kCount; ++i) ASSERT_EQ(seen[i], 1) << "ordinal " << i;
  EXPECT_EQ(report_.duplicates, 0u);
}

TEST_F(BuiltIndex, RoutingReachesHomeLeaf) {
  const Tree& t = index_->tree();
  std::map<std::uint64_t, NodeId> home;
  for (NodeId leaf : all_leaves(t)) {
    for (auto ord : index_->read_leaf(leaf).ordinals) home[ord] = leaf;
  }
  for (std::size_t i = 0; i < kCount; i += 7) {
    const auto sax = oracle_sax({values_.data() + i * 64, 64}, 16, 8);
    EXPECT_EQ(route_to_leaf(t, sax), home.at(i));
  }
}

TEST_F(BuiltIndex, UnseenWordsLandInCoveringNodes) {
  const Tree& t = index_->tree();
  std::mt19937_64 gen(9);
  for (int rep = 0; rep < 5000; ++rep) {
    std::vector<std::uint8_t> sax(16);
    for (auto& s : sax) s = static_cast<std::uint8_t>(gen());
    const auto r = try_route(t, sax);
    EXPECT_TRUE(t[r.node].isax.covers(sax, 8));
    if (r.complete) {
      EXPECT_TRUE(t[r.node].leaf);
      EXPECT_EQ(route_to_leaf(t, sax), r.node);
    } else {
      EXPECT_THROW(route_to_leaf(t, sax), CorruptionError);
    }
  }
}

TEST_F(BuiltIndex, StructuralInvariants) {
  const Tree& t = index_->tree();
  const auto& cfg = index_->config();
  for (NodeId id : t.preorder()) {
    const Node& n = t[id];
    if (n.leaf) {
      EXPECT_LE(n.records, cfg.leaf_capacity);
      EXPECT_TRUE(std::is_sorted(n.member_sids.begin(), n.member_sids.end()));
      if (n.is_pack()) {
        const Node& p = t[n.parent];
        EXPECT_LE(t.mask_of(id).demotions(),
                  static_cast<int>(std::floor(cfg.rho * static_cast<double>(p.csl.size()))));
        EXPECT_EQ(n.isax, pack_isax(t.mask_of(id), p.isax, p.csl));
      }
      continue;
    }
    ASSERT_EQ(n.routing.size(), std::size_t{1} << n.csl.size());
    std::uint64_t leaves = 0;
    for (NodeId c : t.children(id)) {
      EXPECT_EQ(t[c].parent, id);
      EXPECT_TRUE(n.isax.covers(t[c].isax));
      leaves += t[c].leaf ? 1 : t[c].leaf_count;
    }
    EXPECT_EQ(n.leaf_count, leaves);
    for (std::uint32_t sid = 0; sid < n.routing.size(); ++sid) {
      const NodeId c = n.routing[sid];
      if (c == kNoNode) continue;
      EXPECT_TRUE(t[c].isax.covers(child_isax(n.isax, sid, n.csl)));
    }
    if (n.split_kind == SplitKind::kAdaptive) {
      // Fanout band at split time.
      const SplitParams params{cfg.bits, cfg.leaf_capacity, cfg.fill_low, cfg.fill_high,
                               cfg.alpha};
      const auto range =
          effective_fanout_range(n.split_size, params, cfg.segments, n.split_promotable);
      EXPECT_GE(static_cast<int>(n.csl.size()), range.min);
      EXPECT_LE(static_cast<int>(n.csl.size()), range.max);
    }
  }
  EXPECT_EQ(t[t.root()].csl.size(), 16u);
  EXPECT_EQ(t[t.root()].split_kind, SplitKind::kRoot);
}

TEST_F(BuiltIndex, StatsMatchTraversal) {
  Traversal tr;
  traverse(index_->tree(), index_->tree().root(), 0, tr);
  const auto& s = index_->meta().stats;
  EXPECT_EQ(s.node_count, tr.nodes);
  EXPECT_EQ(s.leaf_count, tr.leaves);
  EXPECT_EQ(s.pack_count, tr.packs);
  EXPECT_EQ(s.height, tr.height);
  EXPECT_DOUBLE_EQ(s.fill_factor, static_cast<double>(kCount) / (tr.leaves * 100.0));
  EXPECT_EQ(index_->meta().dataset_size, kCount);
  EXPECT_EQ(index_->meta().live_series, kCount);
}

TEST_F(BuiltIndex, OpenRoundTrip) {
  const Index reopened = Index::open(index_->dir());
  EXPECT_TRUE(structurally_equal(reopened.tree(), index_->tree()));
  EXPECT_EQ(reopened.meta(), index_->meta());
  EXPECT_EQ(read_sax_table(index_->sax_path(), 16).size(), kCount);
}

TEST_F(BuiltIndex, SerializeRoundTripIsDeepEqual) {
  const auto bytes = serialize_index(index_->tree(), index_->meta());
  EXPECT_EQ(std::string(bytes.data(), 8), "DMPYIDX1");
  const auto [tree, meta] = deserialize_index(bytes);
  EXPECT_TRUE(structurally_equal(tree, index_->tree()));
  EXPECT_EQ(meta, index_->meta());
  // Re-serializing gives the same image.
  EXPECT_EQ(serialize_index(tree, meta), bytes);
}

TEST_F(BuiltIndex, TruncationAndCorruptionRejected) {
  auto bytes = serialize_index(index_->tree(), index_->meta());
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_index(std::span<const char>(bytes.data(), cut)), FormatError);
  }
  bytes[bytes.size() / 3] ^= 0x10;
  try {
    deserialize_index(bytes);
    FAIL() << "corrupted image accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(Serialize, VersionAndMagicChecked) {
  Tree tree(4, 8);
  IndexMeta meta;
  meta.config.series_length = 16;
  meta.config.segments = 4;
  auto bytes = serialize_index(tree, meta);
  auto reseal = [](std::vector<char>& b) {
    boost::crc_optimal<64, 0x42F0E1EBA9EA3693ull, ~0ull, ~0ull, true, true> crc;
    crc.process_bytes(b.data(), b.size() - 8);
    const std::uint64_t sum = crc.checksum();
    std::memcpy(b.data() + b.size() - 8, &sum, 8);
  };
  auto bad_version = bytes;
  bad_version[8] = 9;
  reseal(bad_version);
  EXPECT_THROW(deserialize_index(bad_version), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  reseal(bad_magic);
  EXPECT_THROW(deserialize_index(bad_magic), FormatError);
  const auto [t, m] = deserialize_index(bytes);
  EXPECT_TRUE(structurally_equal(t, tree));
  EXPECT_EQ(m, meta);
}

TEST(Serialize, OpenRejectsStaleStats) {
  TempDir tmp;
  const auto values = testing::ref_walks(500, 64, 1);
  write_dataset(tmp / "d.bin", values);
  Index index = build_index(tmp / "d.bin", tmp / "idx", small_config());
  IndexMeta meta = index.meta();
  meta.stats.leaf_count += 1;
  serialize_index(index.tree(), meta, index.index_path());
  EXPECT_THROW(Index::open(tmp / "idx"), FormatError);
}

TEST(SaxTableBuild, MatchesDirectComputation) {
  TempDir tmp;
  const auto values = testing::ref_walks(10000, 64, 77);
  write_dataset(tmp / "d.bin", values);
  BuildConfig cfg = small_config();
  cfg.buffer_series = 1;
  const auto one = build_sax_table(tmp / "d.bin", cfg, true);
  cfg.buffer_series = 10000;
  const auto all = build_sax_table(tmp / "d.bin", cfg, true);
  EXPECT_EQ(one.symbols, all.symbols);
  EXPECT_EQ(one.paa, all.paa);
  ASSERT_EQ(all.size(), 10000u);
  for (std::size_t i = 0; i < 10000; ++i) {
    const auto expect = oracle_sax({values.data() + i * 64, 64}, 16, 8);
    const auto row = all.row(i);
    ASSERT_TRUE(std::equal(row.begin(), row.end(), expect.begin())) << "row " << i;
  }
  const auto single = build_sax_table(std::span<const float>(values.data(), 64), cfg);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_TRUE(std::equal(single.symbols.begin(), single.symbols.end(), all.symbols.begin()));
}

TEST(SaxTableBuild, RejectsBadInput) {
  TempDir tmp;
  std::vector<float> values(64, 0.0f);
  values[10] = std::nanf("");
  write_dataset(tmp / "nan.bin", values);
  EXPECT_THROW(build_sax_table(tmp / "nan.bin", small_config()), FormatError);
  values.resize(65, 0.0f);
  values[10] = 0.0f;
  write_dataset(tmp / "odd.bin", values);
  EXPECT_THROW(build_sax_table(tmp / "odd.bin", small_config()), FormatError);
}

TEST(Build, CapacitySizedDatasetIsOneLeaf) {
  TempDir tmp;
  write_dataset(tmp / "d.bin", testing::ref_walks(100, 64, 3));
  const Index index = build_index(tmp / "d.bin", tmp / "idx", small_config());
  const auto& s = index.meta().stats;
  EXPECT_EQ(s.leaf_count, 1u);
  EXPECT_EQ(s.height, 1u);
  EXPECT_DOUBLE_EQ(s.fill_factor, 1.0);
  EXPECT_TRUE(index.tree()[index.tree().root()].csl.empty());
}

TEST(Build, EmptyDataset) {
  TempDir tmp;
  write_dataset(tmp / "d.bin", std::vector<float>{});
  const Index index = build_index(tmp / "d.bin", tmp / "idx", small_config());
  EXPECT_EQ(index.meta().stats.leaf_count, 0u);
  const std::vector<std::uint8_t> sax(16, 0);
  EXPECT_FALSE(try_route(index.tree(), sax).complete);
}

TEST(Build, IdenticalSeriesGiveOversizedLeaf) {
  TempDir tmp;
  std::vector<float> values;
  const auto one = testing::ref_walks(1, 64, 4);
  for (int i = 0; i < 300; ++i) values.insert(values.end(), one.begin(), one.end());
  write_dataset(tmp / "d.bin", values);
  BuildReport report;
  const Index index = build_index(tmp / "d.bin", tmp / "idx", small_config(), &report);
  EXPECT_EQ(report.oversized_leaves, 1u);
  EXPECT_FALSE(report.warnings.empty());
  const auto sax = oracle_sax(one, 16, 8);
  EXPECT_EQ(index.tree()[route_to_leaf(index.tree(), sax)].records, 300u);
}

TEST(Build, TwoHalfLeavesGiveHalfFill) {
  Tree t(2, 8);
  Node root;
  root.leaf = false;
  root.isax = IsaxWord(2);
  root.csl = {0};
  root.routing = {kNoNode, kNoNode};
  const NodeId r = t.add(root);
  t.set_root(r);
  for (std::uint32_t sid = 0; sid < 2; ++sid) {
    Node leaf;
    leaf.parent = r;
    leaf.isax = child_isax(root.isax, sid, root.csl);
    leaf.member_sids = {sid};
    leaf.records = 50;
    t[r].routing[sid] = t.add(leaf);
  }
  const auto s = index_stats(t, 100, 100);
  EXPECT_DOUBLE_EQ(s.fill_factor, 0.5);
  EXPECT_EQ(s.height, 1u);
  EXPECT_EQ(s.leaf_count, 2u);
  EXPECT_EQ(s.node_count, 3u);
}

std::map<std::string, std::vector<char>> leaf_files(const fs::path& dir) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::directory_iterator(dir / "leaves")) {
    out[e.path().filename().string()] = read_file(e.path());
  }
  return out;
}

TEST(Build, DeterministicAndFlushIndependent) {
  TempDir tmp;
  write_dataset(tmp / "d.bin", testing::ref_walks(5000, 64, 5));
  BuildConfig cfg = small_config();
  cfg.buffer_series = 1;
  BuildReport per_series;
  const Index a = build_index(tmp / "d.bin", tmp / "a", cfg, &per_series);
  cfg.buffer_series = 5000;
  BuildReport whole;
  const Index b = build_index(tmp / "d.bin", tmp / "b", cfg, &whole);
  EXPECT_TRUE(structurally_equal(a.tree(), b.tree()));
  EXPECT_EQ(leaf_files(tmp / "a"), leaf_files(tmp / "b"));
  EXPECT_EQ(whole.flushes, 1u);
  EXPECT_EQ(per_series.flushes, 5000u);
}

TEST(Materialize, OneAppendPerLeafWhenBufferHoldsAll) {
  TempDir tmp;
  const auto values = testing::ref_walks(3000, 64, 6);
  write_dataset(tmp / "d.bin", values);
  const BuildConfig cfg = small_config();
  const auto table = build_sax_table(tmp / "d.bin", cfg);
  Tree tree(16, 8);
  StructureBuilder builder(cfg, tree, table.symbols);
  std::vector<std::uint32_t> rows(3000);
  std::iota(rows.begin(), rows.end(), 0u);
  builder.build_root(rows);
  std::uint64_t next = 0;
  for (NodeId leaf : all_leaves(tree)) tree[leaf].file_id = next++;
  fs::create_directories(tmp / "leaves");
  auto path_of = [&](NodeId id) { return tmp / "leaves" / (std::to_string(tree[id].file_id) + ".leaf"); };
  const auto stats = materialize_leaves(tmp / "d.bin", 64, tree, table, {}, 1u << 20, path_of);
  EXPECT_EQ(stats.flushes, 1u);
  EXPECT_EQ(stats.appends, all_leaves(tree).size());
  EXPECT_EQ(stats.records, 3000u);
  std::uint64_t total = 0;
  for (NodeId leaf : all_leaves(tree)) {
    EXPECT_EQ(fs::file_size(path_of(leaf)), tree[leaf].records * record_bytes(64, 16));
    EXPECT_EQ(tree[leaf].records, builder.rows_of(leaf).size());
    total += tree[leaf].records;
  }
  EXPECT_EQ(total, 3000u);
}

// Audit of boundary duplication against the fuzzy-range definition.
struct FuzzyAudit {
  std::uint64_t duplicates = 0;
  std::uint64_t outside_range = 0;
  std::uint32_t max_copies = 0;
};

FuzzyAudit audit_fuzzy(const Index& index, const std::vector<float>& values, double f) {
  const Tree& t = index.tree();
  const auto& cfg = index.config();
  const std::size_t w = cfg.segments;
  const std::size_t n = cfg.series_length;
  FuzzyAudit out;
  std::map<std::uint64_t, std::uint32_t> copies;
  for (NodeId leaf : all_leaves(t)) {
    const Node& node = t[leaf];
    const Node& parent = t[node.parent];
    const auto block = index.read_leaf(leaf);
    for (std::size_t i = 0; i < block.size(); ++i) {
      const auto sax = block.sax_of(i);
      const auto sid = t.sid_in(node.parent, sax);
      if (std::binary_search(node.member_sids.begin(), node.member_sids.end(), sid)) continue;
      ++out.duplicates;
      out.max_copies = std::max(out.max_copies, ++copies[block.ordinals[i]]);
      const auto paa = testing::naive_paa({values.data() + block.ordinals[i] * n, n}, w);
      const int lambda = static_cast<int>(parent.csl.size());
      bool within = false;
      for (int j = 0; j < lambda && !within; ++j) {
        const std::uint32_t bit = 1u << (lambda - 1 - j);
        for (auto m : node.member_sids) {
          if ((m ^ bit) != sid) continue;
          const auto region = child_isax(parent.isax, sid, parent.csl).region(parent.csl[j]);
          const double boundary = (sid & bit) ? region.lo : region.hi;
          within |= std::fabs(paa[parent.csl[j]] - boundary) <=
                    f * region_width(region, cfg.bits) * (1 + 1e-9);
        }
      }
      if (!within) ++out.outside_range;
    }
  }
  return out;
}

TEST(Fuzzy, DuplicatesLieInRangeAndRespectCap) {
  TempDir tmp;
  const auto values = testing::ref_walks(20000, 64, 8);
  write_dataset(tmp / "d.bin", values);
  BuildConfig cfg = small_config();
  cfg.fuzzy = 0.1;
  BuildReport report;
  const Index fuzzy = build_index(tmp / "d.bin", tmp / "fz", cfg, &report);
  const auto audit = audit_fuzzy(fuzzy, values, 0.1);
  EXPECT_GT(audit.duplicates, 0u);
  EXPECT_EQ(audit.duplicates, report.duplicates);
  EXPECT_EQ(audit.outside_range, 0u);
  EXPECT_LE(audit.max_copies, cfg.max_duplications);
  for (NodeId leaf : all_leaves(fuzzy.tree())) {
    EXPECT_LE(fuzzy.tree()[leaf].records, cfg.leaf_capacity);
  }

  // Duplicates never change the tree or its words.
  cfg.fuzzy.reset();
  const Index plain = build_index(tmp / "d.bin", tmp / "pl", cfg);
  const auto pa = fuzzy.tree().preorder();
  const auto pb = plain.tree().preorder();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(fuzzy.tree()[pa[i]].isax, plain.tree()[pb[i]].isax);
    EXPECT_EQ(fuzzy.tree()[pa[i]].csl, plain.tree()[pb[i]].csl);
    EXPECT_EQ(fuzzy.tree()[pa[i]].member_sids, plain.tree()[pb[i]].member_sids);
  }
}

TEST(Fuzzy, VanishingRangeDuplicatesNothing) {
  TempDir tmp;
  write_dataset(tmp / "d.bin", testing::ref_walks(5000, 64, 10));
  BuildConfig cfg = small_config();
  cfg.fuzzy = 1e-12;
  BuildReport report;
  const Index fuzzy = build_index(tmp / "d.bin", tmp / "fz", cfg, &report);
  EXPECT_EQ(report.duplicates, 0u);
  cfg.fuzzy.reset();
  const Index plain = build_index(tmp / "d.bin", tmp / "pl", cfg);
  EXPECT_TRUE(structurally_equal(fuzzy.tree(), plain.tree()));
  EXPECT_EQ(leaf_files(tmp / "fz"), leaf_files(tmp / "pl"));
}

TEST(Fuzzy, SeriesOnBoundaryIsDuplicated) {
  // Two segments of one point each; the first segment's top-level boundary is 0.
  BuildConfig cfg;
  cfg.series_length = 2;
  cfg.segments = 2;
  cfg.leaf_capacity = 3;
  cfg.fuzzy = 1e-9;
  const std::vector<float> values{0.0f, -1.0f, 1.0f, -1.0f, 2.0f, -1.0f, -0.5f, -1.0f};
  const auto table = build_sax_table(values, cfg, true);
  Tree tree(2, 8);
  StructureBuilder builder(cfg, tree, table.symbols, table.paa);
  builder.build_root({0, 1, 2, 3});
  builder.duplicate_boundaries();
  const auto dups = builder.duplicates();
  ASSERT_EQ(dups.size(), 1u);
  EXPECT_EQ(dups[0].first, 0u);
  EXPECT_EQ(builder.rows_of(dups[0].second), (std::vector<std::uint32_t>{3}));
}

}  // namespace
}  // namespace dsidx
