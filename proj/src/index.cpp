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

#include "dsidx/index.hpp"

#include "dsidx/errors.hpp"
#include "dsidx/serialize.hpp"

namespace dsidx {

Index::Index(fs::path dir, IndexMeta meta, Tree tree)
    : dir_(std::move(dir)), meta_(std::move(meta)), tree_(std::move(tree)) {}

fs::path Index::leaf_path(std::uint64_t file_id) const {
  return dir_ / "leaves" / (std::to_string(file_id) + ".leaf");
}

fs::path Index::deletion_path(std::uint64_t file_id) const {
  return dir_ / "leaves" / (std::to_string(file_id) + ".del");
}

Index Index::open(const fs::path& dir) {
  auto [tree, meta] = deserialize_index(dir / "index.bin");
  Index index(dir, std::move(meta), std::move(tree));
  Tree& t = index.tree_;
  for (NodeId leaf : t.leaves_under(t.root())) {
    Node& node = t[leaf];
    const fs::path del = index.deletion_path(node.file_id);
    if (fs::exists(del)) {
      node.deleted = read_bitvector(del);
      if (node.deleted.size() != node.records) {
        throw FormatError("deletion vector " + del.string() + " covers " +
                          std::to_string(node.deleted.size()) + " slots, leaf holds " +
                          std::to_string(node.records));
      }
    }
  }
  const IndexStats recomputed =
      index_stats(t, index.meta_.config.leaf_capacity, index.meta_.live_series);
  if (!(recomputed == index.meta_.stats)) {
    throw FormatError("stored index statistics disagree with the tree in " + dir.string());
  }
  return index;
}

void Index::refresh_stats() {
  tree_.refresh_leaf_counts();
  meta_.stats = index_stats(tree_, meta_.config.leaf_capacity, meta_.live_series);
}

void Index::save() {
  refresh_stats();
  for (NodeId leaf : tree_.leaves_under(tree_.root())) {
    const Node& node = tree_[leaf];
    const fs::path del = deletion_path(node.file_id);
    if (node.deleted.count() > 0) {
      write_bitvector(del, node.deleted);
    } else {
      std::error_code ec;
      fs::remove(del, ec);
    }
  }
  serialize_index(tree_, meta_, index_path());
}

LeafBlock Index::read_leaf(NodeId leaf) const {
  return read_leaf_file(leaf_path(tree_[leaf].file_id), meta_.config.series_length,
                        meta_.config.segments);
}

}  // namespace dsidx
