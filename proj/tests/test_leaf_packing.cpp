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

#include <algorithm>
#include <bit>
#include <numeric>
#include <random>
#include <set>

#include "dsidx/leaf_packing.hpp"
#include "dsidx/split_engine.hpp"

namespace dsidx {
namespace {

LeafPack single(std::uint32_t sid, int width, std::uint64_t size) {
  LeafPack p;
  p.member_sids = {sid};
  p.mask = PackMask::of(p.member_sids, width);
  p.size = size;
  return p;
}

TEST(DemotionCost, AdjacentSidExamples) {
  const PackLimits limits{4, 1.0, 100};
  const auto pack = single(0b0010, 4, 10);
  const auto near = demotion_cost(pack, 0b0100, 10, limits);
  ASSERT_TRUE(near);
  EXPECT_EQ(near->cost, 2);
  EXPECT_EQ(near->mask.star, 0b0110u);
  EXPECT_EQ(near->mask.value & ~near->mask.star, 0b0000u);
  const auto far = demotion_cost(pack, 0b0101, 10, limits);
  ASSERT_TRUE(far);
  EXPECT_EQ(far->cost, 3);
  EXPECT_EQ(far->mask.star, 0b0111u);
}

TEST(DemotionCost, Rejections) {
  const auto pack = single(0b0000, 4, 60);
  // Budget floor(0.5 * 4) = 2.
  EXPECT_FALSE(demotion_cost(pack, 0b0111, 1, PackLimits{4, 0.5, 100}));
  EXPECT_TRUE(demotion_cost(pack, 0b0011, 1, PackLimits{4, 0.5, 100}));
  // Overflow.
  EXPECT_FALSE(demotion_cost(pack, 0b0001, 41, PackLimits{4, 1.0, 100}));
  EXPECT_TRUE(demotion_cost(pack, 0b0001, 40, PackLimits{4, 1.0, 100}));
  // Already covered sid costs nothing.
  auto two = single(0b0000, 4, 10);
  two.mask = two.mask.with(0b0011);
  EXPECT_EQ(demotion_cost(two, 0b0001, 1, PackLimits{4, 1.0, 100})->cost, 0);
}

TEST(PackMask, MatchesBitwiseDefinition) {
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 500; ++rep) {
    const int width = 1 + static_cast<int>(gen() % 12);
    std::vector<std::uint32_t> sids(1 + gen() % 6);
    for (auto& s : sids) s = static_cast<std::uint32_t>(gen() % (1u << width));
    const auto mask = PackMask::of(sids, width);
    std::uint32_t diff = 0;
    for (auto s : sids) diff |= s ^ sids[0];
    EXPECT_EQ(mask.star, diff);
    EXPECT_EQ(mask.demotions(), std::popcount(diff));
    for (std::uint32_t s = 0; s < (1u << width); ++s) {
      EXPECT_EQ(mask.covers(s), ((s ^ sids[0]) & ~diff) == 0);
    }
  }
}

TEST(PackNodes, AllFitInOnePack) {
  const std::vector<SmallNode> nodes{{0b000, 5}, {0b001, 6}, {0b011, 7}};
  const auto packs = pack_nodes(nodes, PackLimits{3, 1.0, 100}, 1);
  ASSERT_EQ(packs.size(), 1u);
  EXPECT_EQ(packs[0].size, 18u);
  EXPECT_EQ(packs[0].member_sids, (std::vector<std::uint32_t>{0b000, 0b001, 0b011}));
}

TEST(PackNodes, ComplementarySidsSeparate) {
  const std::vector<SmallNode> nodes{{0b0000, 5}, {0b1111, 5}};
  const auto packs = pack_nodes(nodes, PackLimits{4, 0.5, 100}, 1);
  EXPECT_EQ(packs.size(), 2u);
}

TEST(PackNodes, PrefersLeastDemotion) {
  // One seed pack (sum / th = 1); later nodes pick the cheapest qualified pack.
  const std::vector<SmallNode> nodes{{0b0010, 50}, {0b0100, 10}, {0b0101, 10}};
  const auto packs = pack_nodes(nodes, PackLimits{4, 0.75, 60}, 3);
  for (const auto& p : packs) {
    EXPECT_LE(p.size, 60u);
    EXPECT_LE(p.mask.demotions(), 3);
  }
  std::uint64_t total = 0;
  for (const auto& p : packs) total += p.size;
  EXPECT_EQ(total, 70u);
}

struct PackCase {
  std::vector<SmallNode> nodes;
  PackLimits limits;
};

PackCase random_case(std::mt19937_64& gen) {
  PackCase c;
  c.limits.lambda = 1 + static_cast<int>(gen() % 10);
  c.limits.rho = 0.1 * static_cast<double>(gen() % 11);
  c.limits.capacity = 50 + gen() % 500;
  std::vector<std::uint32_t> sids(1u << c.limits.lambda);
  std::iota(sids.begin(), sids.end(), 0u);
  std::shuffle(sids.begin(), sids.end(), gen);
  sids.resize(1 + gen() % sids.size());
  for (auto s : sids) c.nodes.push_back({s, 1 + gen() % (c.limits.capacity / 2)});
  return c;
}

TEST(PackNodes, StructuralInvariants) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 400; ++rep) {
    const auto c = random_case(gen);
    const auto packs = pack_nodes(c.nodes, c.limits, gen());
    std::multiset<std::uint32_t> seen;
    std::uint64_t sum = 0;
    for (const auto& n : c.nodes) sum += n.size;
    std::uint64_t packed = 0;
    for (const auto& p : packs) {
      ASSERT_FALSE(p.member_sids.empty());
      EXPECT_LE(p.size, c.limits.capacity);
      EXPECT_LE(p.mask.demotions(), c.limits.max_demotions());
      EXPECT_EQ(p.mask, PackMask::of(p.member_sids, c.limits.lambda));
      std::uint64_t size = 0;
      for (auto s : p.member_sids) {
        seen.insert(s);
        for (const auto& n : c.nodes) {
          if (n.sid == s) size += n.size;
        }
      }
      EXPECT_EQ(size, p.size);
      packed += p.size;
    }
    EXPECT_EQ(packed, sum);
    EXPECT_EQ(seen.size(), c.nodes.size());
    for (const auto& n : c.nodes) EXPECT_EQ(seen.count(n.sid), 1u);
    EXPECT_GE(packs.size(), sum / c.limits.capacity);
  }
}

TEST(PackNodes, DeterministicForSeed) {
  std::mt19937_64 gen(12);
  for (int rep = 0; rep < 50; ++rep) {
    const auto c = random_case(gen);
    const auto seed = gen();
    const auto a = pack_nodes(c.nodes, c.limits, seed);
    const auto b = pack_nodes(c.nodes, c.limits, seed);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].member_sids, b[i].member_sids);
      EXPECT_EQ(a[i].mask, b[i].mask);
    }
  }
}

TEST(PackIsax, AllWildcardMaskGivesParent) {
  const IsaxWord parent(std::vector<IsaxSymbol>{{1, 1}, {0, 0}, {2, 2}});
  const std::vector<std::uint8_t> csl{0, 1};
  const std::vector<std::uint32_t> sids{0b00, 0b11};
  EXPECT_EQ(pack_isax(PackMask::of(sids, 2), parent, csl), parent);
}

TEST(PackIsax, CoversMembersAndKeepsPruningSound) {
  std::mt19937_64 gen(13);
  constexpr int kBits = 8;
  constexpr std::size_t w = 6;
  constexpr std::size_t n = 48;
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 300; ++rep) {
    const IsaxWord parent(w);
    std::vector<std::uint8_t> csl;
    for (std::uint8_t s = 0; s < w; ++s) {
      if (gen() % 2) csl.push_back(s);
    }
    if (csl.empty()) csl.push_back(0);
    const int lambda = static_cast<int>(csl.size());
    std::vector<std::uint32_t> sids(1 + gen() % 4);
    for (auto& s : sids) s = static_cast<std::uint32_t>(gen() % (1u << lambda));
    const auto mask = PackMask::of(sids, lambda);
    const auto word = pack_isax(mask, parent, csl);
    std::vector<double> query(w);
    for (auto& v : query) v = 2.0 * nd(gen);
    const double pack_lb = lower_bound_ed(word, query, n);
    for (auto sid : sids) {
      const auto member = child_isax(parent, sid, csl);
      EXPECT_TRUE(word.covers(member));
      EXPECT_LE(pack_lb, lower_bound_ed(member, query, n) + 1e-12);
      // Any SAX word under a member is under the pack.
      std::vector<std::uint8_t> sax(w);
      for (std::size_t i = 0; i < w; ++i) {
        const auto& sym = member[i];
        const std::uint32_t low = sym.bits >= kBits ? 0 : gen() % (1u << (kBits - sym.bits));
        sax[i] = static_cast<std::uint8_t>(
            sym.bits == 0 ? gen() % 256 : (std::uint32_t{sym.prefix} << (kBits - sym.bits)) | low);
      }
      EXPECT_TRUE(word.covers(sax, kBits));
    }
  }
}

}  // namespace
}  // namespace dsidx
