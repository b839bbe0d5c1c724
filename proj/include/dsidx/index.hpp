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
#include <memory>
#include <shared_mutex>
#include <string>

#include "dsidx/config.hpp"
#include "dsidx/series_io.hpp"
#include "dsidx/tree.hpp"

namespace dsidx {

inline constexpr std::uint16_t kFormatVersion = 1;

/// Build parameters and bookkeeping persisted with the tree.
struct IndexMeta {
  BuildConfig config;
  std::string dataset_path;
  std::uint64_t dataset_size = 0;   ///< |db| at build time
  std::uint64_t live_series = 0;    ///< distinct live series after updates
  std::uint64_t next_ordinal = 0;
  std::uint64_t next_file_id = 0;
  IndexStats stats;
  std::uint16_t format_version = kFormatVersion;

  bool operator==(const IndexMeta&) const = default;
};

/// A built index: the tree, its metadata and the directory of leaf files.
///
/// Directory layout: `index.bin` (tree), `sax.bin` (SAX table of the build
/// dataset), `leaves/<id>.leaf` (records), `leaves/<id>.del` (deletions).
///
/// Readers hold `mutex()` shared; structural writers hold it exclusively.
class Index {
 public:
  Index(fs::path dir, IndexMeta meta, Tree tree);

  /// Loads `dir/index.bin` and every deletion bit-vector. Throws FormatError
  /// when the stored statistics disagree with the tree.
  static Index open(const fs::path& dir);

  /// Refreshes statistics and persists the tree and deletion bit-vectors.
  void save();

  const fs::path& dir() const { return dir_; }
  fs::path index_path() const { return dir_ / "index.bin"; }
  fs::path sax_path() const { return dir_ / "sax.bin"; }
  fs::path leaf_path(std::uint64_t file_id) const;
  fs::path deletion_path(std::uint64_t file_id) const;

  const Tree& tree() const { return tree_; }
  Tree& tree() { return tree_; }
  const IndexMeta& meta() const { return meta_; }
  IndexMeta& meta() { return meta_; }
  const BuildConfig& config() const { return meta_.config; }

  LeafBlock read_leaf(NodeId leaf) const;

  /// Recomputes `meta().stats` from the tree.
  void refresh_stats();

  std::shared_mutex& mutex() const { return *mutex_; }

 private:
  fs::path dir_;
  IndexMeta meta_;
  Tree tree_;
  std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();
};

}  // namespace dsidx
