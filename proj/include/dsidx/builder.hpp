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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsidx/config.hpp"
#include "dsidx/index.hpp"
#include "dsidx/series_io.hpp"
#include "dsidx/tree.hpp"

namespace dsidx {

/// SAX words of a dataset, row i belonging to series ordinal i.
struct SaxTable {
  std::size_t segments = 0;
  std::vector<std::uint8_t> symbols;  ///< rows * segments
  std::vector<float> paa;             ///< rows * segments when kept, else empty

  std::size_t size() const { return segments ? symbols.size() / segments : 0; }
  std::span<const std::uint8_t> row(std::size_t i) const {
    return {symbols.data() + i * segments, segments};
  }
  bool has_paa() const { return !paa.empty() || symbols.empty(); }
};

/// Streams the dataset in batches of `cfg.buffer_series`. Throws FormatError
/// on non-finite values or a malformed file size.
SaxTable build_sax_table(const fs::path& dataset, const BuildConfig& cfg, bool keep_paa = false);
/// Same for an in-memory series-major array.
SaxTable build_sax_table(std::span<const float> values, const BuildConfig& cfg,
                         bool keep_paa = false);

void write_sax_table(const fs::path& path, const SaxTable& table);
SaxTable read_sax_table(const fs::path& path, std::size_t segments);

/// Stages 2 to 4 of a build (root, recursive splits, packing) plus the
/// optional boundary duplication, over an in-memory SAX table.
class StructureBuilder {
 public:
  StructureBuilder(const BuildConfig& cfg, Tree& tree, std::span<const std::uint8_t> sax,
                   std::span<const float> paa = {});

  /// Builds the whole tree over `rows` and sets it as the tree root.
  NodeId build_root(std::vector<std::uint32_t> rows);

  /// Builds a detached subtree for `rows` below `parent` (used by updates).
  /// Packs its internal nodes when packing is enabled. Never duplicates.
  NodeId build_subtree(const IsaxWord& isax, std::vector<std::uint32_t> rows, NodeId parent,
                       std::uint32_t sid);

  /// Copies rows lying within f * width of a split boundary into the leaf on
  /// the other side. Requires PAA values and `cfg.fuzzy`.
  void duplicate_boundaries();

  /// Rows homed in a leaf (originals only).
  const std::vector<std::uint32_t>& rows_of(NodeId leaf) const;
  /// (row, leaf) pairs for every duplicate, sorted by row then leaf.
  std::vector<std::pair<std::uint32_t, NodeId>> duplicates() const;
  std::uint64_t duplicate_count() const { return duplicate_total_; }

  std::uint64_t oversized_leaves() const { return oversized_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  NodeId split(const IsaxWord& isax, std::vector<std::uint32_t> rows, NodeId parent,
               std::uint32_t sid, int depth);
  NodeId make_leaf(const IsaxWord& isax, std::vector<std::uint32_t> rows, NodeId parent,
                   std::uint32_t sid);
  void route_children(NodeId id, const std::vector<std::uint32_t>& rows, int depth);
  void pack_children(NodeId parent);
  std::uint64_t leaf_size(NodeId leaf) const;

  const BuildConfig& cfg_;
  Tree& tree_;
  std::span<const std::uint8_t> sax_;
  std::span<const float> paa_;
  std::unordered_map<NodeId, std::vector<std::uint32_t>> rows_;
  std::unordered_map<NodeId, std::vector<std::uint32_t>> dup_rows_;
  std::uint64_t duplicate_total_ = 0;
  std::uint64_t pack_rounds_ = 0;
  std::uint64_t oversized_ = 0;
  std::vector<std::string> warnings_;
};

/// Buffers leaf records and appends them to leaf files. A flush writes every
/// buffered leaf; it happens when `capacity` records are held and on finish.
class LeafWriter {
 public:
  LeafWriter(std::function<fs::path(NodeId)> path_of, std::uint64_t capacity);

  void add(NodeId leaf, std::span<const float> values, std::span<const std::uint8_t> sax,
           std::uint64_t ordinal);
  void flush();

  /// Number of per-leaf append operations issued so far.
  std::uint64_t appends() const { return appends_; }
  std::uint64_t flushes() const { return flushes_; }
  const std::unordered_map<NodeId, std::uint64_t>& written() const { return written_; }

 private:
  std::function<fs::path(NodeId)> path_of_;
  std::uint64_t capacity_;
  std::uint64_t buffered_ = 0;
  std::uint64_t appends_ = 0;
  std::uint64_t flushes_ = 0;
  std::map<NodeId, std::vector<char>> buffers_;
  std::unordered_map<NodeId, std::uint64_t> written_;
};

struct MaterializeStats {
  std::uint64_t records = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t flushes = 0;
  std::uint64_t appends = 0;
};

/// Stage 5: second pass over the dataset routing each series (and its
/// duplicates) into leaf files. Sets `records` and the deletion vectors of
/// every leaf. `duplicates` must be sorted by row.
MaterializeStats materialize_leaves(const fs::path& dataset, std::size_t series_length,
                                    Tree& tree, const SaxTable& table,
                                    std::span<const std::pair<std::uint32_t, NodeId>> duplicates,
                                    std::uint64_t buffer_series,
                                    const std::function<fs::path(NodeId)>& path_of);

struct BuildReport {
  std::uint64_t series = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t oversized_leaves = 0;
  std::uint64_t flushes = 0;
  double sax_seconds = 0.0;
  double structure_seconds = 0.0;
  double materialize_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<std::string> warnings;
};

/// Full build of `dataset` into directory `dir` (created; previous leaf
/// files removed). The index is saved before returning.
Index build_index(const fs::path& dataset, const fs::path& dir, const BuildConfig& cfg,
                  BuildReport* report = nullptr);

}  // namespace dsidx
