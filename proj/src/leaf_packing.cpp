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

#include "dsidx/leaf_packing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

namespace dsidx {

namespace {

std::uint32_t width_mask(int width) {
  return width >= 32 ? ~0u : ((1u << width) - 1u);
}

}  // namespace

int PackMask::demotions() const { return std::popcount(star); }

bool PackMask::covers(std::uint32_t sid) const {
  if (empty) return false;
  return ((sid ^ value) & ~star & width_mask(width)) == 0;
}

int PackMask::cost_of(std::uint32_t sid) const {
  if (empty) return 0;
  return std::popcount((sid ^ value) & ~star & width_mask(width));
}

PackMask PackMask::with(std::uint32_t sid) const {
  PackMask out = *this;
  if (empty) {
    out.value = sid;
    out.star = 0;
    out.empty = false;
    return out;
  }
  out.star |= (sid ^ value) & width_mask(width);
  out.value &= ~out.star;
  return out;
}

PackMask PackMask::of(std::span<const std::uint32_t> sids, int width) {
  PackMask m;
  m.width = width;
  for (auto sid : sids) m = m.with(sid);
  return m;
}

int PackLimits::max_demotions() const {
  return static_cast<int>(std::floor(rho * static_cast<double>(lambda) + 1e-12));
}

std::optional<DemotionCost> demotion_cost(const LeafPack& pack, std::uint32_t sid,
                                          std::uint64_t node_size, const PackLimits& limits) {
  if (pack.size + node_size > limits.capacity) return std::nullopt;
  const PackMask next = pack.mask.with(sid);
  if (next.demotions() > limits.max_demotions()) return std::nullopt;
  return DemotionCost{pack.mask.cost_of(sid), next};
}

std::vector<LeafPack> pack_nodes(std::span<const SmallNode> nodes, const PackLimits& limits,
                                 std::uint64_t seed) {
  std::vector<LeafPack> packs;
  if (nodes.empty()) return packs;

  std::uint64_t sum = 0;
  for (const auto& n : nodes) sum += n.size;
  const std::size_t seeds = std::min<std::size_t>(nodes.size(), sum / limits.capacity);

  auto make_pack = [&](const SmallNode& n) {
    LeafPack p;
    p.mask.width = limits.lambda;
    p.mask = p.mask.with(n.sid);
    p.member_sids.push_back(n.sid);
    p.size = n.size;
    return p;
  };

  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<bool> seeded(nodes.size(), false);
  if (seeds == 0) {
    LeafPack empty;
    empty.mask.width = limits.lambda;
    packs.push_back(empty);
  } else {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pick = order;
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(seeds);
    std::sort(pick.begin(), pick.end());
    for (auto i : pick) {
      packs.push_back(make_pack(nodes[i]));
      seeded[i] = true;
    }
  }

  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (nodes[a].size != nodes[b].size) return nodes[a].size > nodes[b].size;
    return nodes[a].sid < nodes[b].sid;
  });

  for (auto i : order) {
    if (seeded[i]) continue;
    const SmallNode& n = nodes[i];
    LeafPack* best = nullptr;
    DemotionCost best_cost;
    for (auto& p : packs) {
      const auto c = demotion_cost(p, n.sid, n.size, limits);
      if (!c) continue;
      if (best == nullptr || c->cost < best_cost.cost) {
        best = &p;
        best_cost = *c;
      }
    }
    if (best == nullptr) {
      packs.push_back(make_pack(n));
    } else {
      best->mask = best_cost.mask;
      best->member_sids.push_back(n.sid);
      best->size += n.size;
    }
  }

  std::erase_if(packs, [](const LeafPack& p) { return p.member_sids.empty(); });
  for (auto& p : packs) std::sort(p.member_sids.begin(), p.member_sids.end());
  return packs;
}

IsaxWord pack_isax(const PackMask& mask, const IsaxWord& parent,
                   std::span<const std::uint8_t> csl) {
  IsaxWord out = parent;
  const std::size_t len = csl.size();
  for (std::size_t k = 0; k < len; ++k) {
    const std::uint32_t bit = 1u << (len - 1 - k);
    if (mask.star & bit) continue;
    auto& sym = out[csl[k]];
    sym.prefix = static_cast<std::uint8_t>((sym.prefix << 1) | ((mask.value & bit) ? 1 : 0));
    sym.bits = static_cast<std::uint8_t>(sym.bits + 1);
  }
  return out;
}

}  // namespace dsidx
