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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsidx/summarization.hpp"

namespace dsidx {

/// Merged sid pattern of a pack: bits set in `star` are demoted wildcards,
/// the remaining `width` bits must equal `value`.
struct PackMask {
  std::uint32_t value = 0;
  std::uint32_t star = 0;
  int width = 0;
  bool empty = true;  ///< no member yet

  int demotions() const;
  bool covers(std::uint32_t sid) const;
  /// Mask after admitting `sid`.
  PackMask with(std::uint32_t sid) const;
  /// Positions that turn into wildcards when `sid` joins.
  int cost_of(std::uint32_t sid) const;

  /// Mask of a non-empty set of sids.
  static PackMask of(std::span<const std::uint32_t> sids, int width);

  bool operator==(const PackMask&) const = default;
};

/// A group of sibling leaves stored together.
struct LeafPack {
  std::vector<std::uint32_t> member_sids;
  PackMask mask;
  std::uint64_t size = 0;
};

/// Sibling leaf eligible for packing.
struct SmallNode {
  std::uint32_t sid = 0;
  std::uint64_t size = 0;
};

struct PackLimits {
  int lambda = 0;              ///< sid width of the parent
  double rho = 0.5;
  std::uint64_t capacity = 0;  ///< th

  int max_demotions() const;
};

/// Outcome of offering a node to a pack.
struct DemotionCost {
  int cost = 0;
  PackMask mask;
};

/// Increase in demotion bits if the node joins the pack; nullopt when the
/// pack would overflow or exceed the demotion budget.
std::optional<DemotionCost> demotion_cost(const LeafPack& pack, std::uint32_t sid,
                                          std::uint64_t node_size, const PackLimits& limits);

/// Greedy least-demotion packing of one parent's small children. Seed packs
/// are drawn with a generator seeded by `seed`; the remaining nodes are placed
/// in descending size order.
std::vector<LeafPack> pack_nodes(std::span<const SmallNode> nodes, const PackLimits& limits,
                                 std::uint64_t seed);

/// Tightest word of a pack: the parent word refined on every chosen segment
/// whose mask bit is fixed.
IsaxWord pack_isax(const PackMask& mask, const IsaxWord& parent,
                   std::span<const std::uint8_t> csl);

}  // namespace dsidx
