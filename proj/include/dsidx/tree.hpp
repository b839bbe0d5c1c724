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
#include <span>
#include <vector>

#include "dsidx/leaf_packing.hpp"
#include "dsidx/series_io.hpp"
#include "dsidx/summarization.hpp"

namespace dsidx {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

/// How an internal node obtained its chosen-segment list.
enum class SplitKind : std::uint8_t {
  kNone = 0,
  kRoot = 1,      ///< root: all segments, or none when the data fits one leaf
  kAdaptive = 2,
  kBinary = 3,
};

/// Internal node (routing table over chosen segments) or leaf/pack (one leaf
/// file holding the series of one or more sibling sids).
struct Node {
  bool alive = true;
  bool leaf = true;
  NodeId parent = kNoNode;
  IsaxWord isax;

  // Internal nodes.
  std::vector<std::uint8_t> csl;
  std::vector<NodeId> routing;  ///< 2^|csl| entries, kNoNode where empty
  std::uint64_t split_size = 0;
  std::uint8_t split_promotable = 0;
  SplitKind split_kind = SplitKind::kNone;
  std::uint32_t extractions = 0;

  // Leaves and packs.
  std::vector<std::uint32_t> member_sids;
  std::uint64_t file_id = 0;
  std::uint64_t records = 0;
  DeletionBitVector deleted;

  std::uint64_t leaf_count = 0;

  bool is_pack() const { return member_sids.size() > 1; }
  std::uint64_t live() const { return records - deleted.count(); }
};

/// Arena of nodes addressed by stable ids.
class Tree {
 public:
  Tree() = default;
  Tree(std::size_t segments, int bits) : segments_(segments), bits_(bits) {}

  std::size_t segments() const { return segments_; }
  int bits() const { return bits_; }

  NodeId root() const { return root_; }
  void set_root(NodeId id) { root_ = id; }

  NodeId add(Node node);
  /// Marks a node dead; its id is never reused.
  void release(NodeId id);

  Node& operator[](NodeId id) { return nodes_[id]; }
  const Node& operator[](NodeId id) const { return nodes_[id]; }
  std::size_t capacity() const { return nodes_.size(); }

  /// Distinct children ordered by their smallest sid.
  std::vector<NodeId> children(NodeId id) const;
  /// Live nodes of the subtree in pre-order (children by smallest sid).
  std::vector<NodeId> preorder(NodeId from) const;
  std::vector<NodeId> preorder() const { return preorder(root_); }
  std::vector<NodeId> leaves_under(NodeId from) const;

  /// Recomputes every cached subtree leaf count.
  void refresh_leaf_counts();
  std::uint64_t subtree_live(NodeId id) const;

  /// sid of `sax` in `parent`'s routing table.
  std::uint32_t sid_in(NodeId parent, std::span<const std::uint8_t> sax) const;
  /// Mask over the parent's sid space covering the leaf's member sids.
  PackMask mask_of(NodeId leaf) const;

 private:
  std::size_t segments_ = 0;
  int bits_ = 0;
  NodeId root_ = kNoNode;
  std::vector<Node> nodes_;
};

/// Deepest node reached by following routing tables. When `complete` is false,
/// `node` is the internal node lacking an entry for `missing_sid`.
struct RouteResult {
  NodeId node = kNoNode;
  bool complete = false;
  std::uint32_t missing_sid = 0;
};

RouteResult try_route(const Tree& tree, std::span<const std::uint8_t> sax);

/// Leaf or pack holding `sax`. Throws CorruptionError on a missing entry.
NodeId route_to_leaf(const Tree& tree, std::span<const std::uint8_t> sax);

struct IndexStats {
  std::uint64_t node_count = 0;
  std::uint64_t leaf_count = 0;
  std::uint64_t pack_count = 0;
  std::uint32_t height = 0;
  double fill_factor = 0.0;

  bool operator==(const IndexStats&) const = default;
};

/// Counts by traversal; fill factor = series / (leaves * capacity).
IndexStats index_stats(const Tree& tree, std::uint64_t leaf_capacity, std::uint64_t series_count);

/// Same shape, words, routing, and leaf metadata, ignoring arena numbering.
bool structurally_equal(const Tree& a, const Tree& b);

}  // namespace dsidx
