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

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsidx/index.hpp"

namespace dsidx {

struct UpdateStats {
  std::uint64_t inserts = 0;
  std::uint64_t deletes = 0;
  std::uint64_t splits = 0;
  std::uint64_t extractions = 0;
  std::uint64_t repacks = 0;
  std::uint64_t resplits = 0;
  std::uint64_t leaves_removed = 0;
};

/// Insertion and deletion on a built index. Every call holds the index mutex
/// exclusively. Changes reach disk immediately for leaf files; call save()
/// to persist the tree.
class IndexUpdater {
 public:
  /// Scans every leaf file to locate the live copies of each ordinal.
  explicit IndexUpdater(Index& index);

  /// Inserts a series and returns its new ordinal.
  std::uint64_t insert_series(std::span<const float> series);

  /// Marks every copy of `ordinal` deleted. Throws NotFoundError.
  void delete_ordinal(std::uint64_t ordinal);
  /// Deletes the live series equal to `series` with the smallest ordinal and
  /// returns that ordinal. Throws NotFoundError.
  std::uint64_t delete_series(std::span<const float> series);

  /// Rebuilds the subtree rooted at internal node `node` when its live size
  /// left the fanout band by the hysteresis factor. The root is never rebuilt.
  bool maybe_resplit(NodeId node);

  bool contains(std::uint64_t ordinal) const { return locator_.count(ordinal) != 0; }
  std::uint64_t live_series() const { return locator_.size(); }
  const UpdateStats& stats() const { return stats_; }

  void save();

 private:
  struct Slot {
    NodeId leaf;
    std::uint64_t slot;
  };
  struct Record {
    std::vector<float> values;
    std::vector<std::uint8_t> sax;
    std::uint64_t ordinal;
  };

  NodeId create_leaf(NodeId parent, std::uint32_t sid);
  std::uint64_t store(NodeId leaf, std::span<const float> values,
                      std::span<const std::uint8_t> sax, std::uint64_t ordinal);
  NodeId extract_from_pack(NodeId pack, std::uint32_t sid);
  void repack(NodeId parent);
  void split_leaf(NodeId leaf);
  void remove_leaf(NodeId leaf);
  bool is_original(NodeId leaf, std::span<const std::uint8_t> sax) const;
  /// Live originals homed in the leaves of a subtree; duplicates are dropped
  /// from the locator.
  std::vector<Record> collect_originals(NodeId subtree);
  /// Builds a subtree for `records` under (parent, sid), writes its leaves and
  /// returns its root.
  NodeId rebuild(const IsaxWord& isax, std::vector<Record> records, NodeId parent,
                 std::uint32_t sid);
  void drop_subtree(NodeId subtree);
  void adjust_leaf_counts(NodeId from, std::int64_t delta);
  std::uint64_t recount(NodeId id);
  void forget(std::uint64_t ordinal, NodeId leaf, std::uint64_t slot);

  Index& index_;
  Tree& tree_;
  const BuildConfig cfg_;
  std::unordered_map<std::uint64_t, std::vector<Slot>> locator_;
  UpdateStats stats_;
};

}  // namespace dsidx
