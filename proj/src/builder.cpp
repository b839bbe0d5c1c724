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

#include "dsidx/builder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "dsidx/errors.hpp"
#include "dsidx/leaf_packing.hpp"
#include "dsidx/split_engine.hpp"

namespace dsidx {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void append_sax_rows(SaxTable& table, std::span<const float> values, std::size_t first_row,
                     const BuildConfig& cfg, bool keep_paa) {
  const std::size_t n = cfg.series_length;
  const std::size_t w = cfg.segments;
  const auto& bp = Breakpoints::for_bits(cfg.bits);
  const std::size_t count = values.size() / n;
  for (std::size_t i = 0; i < count; ++i) {
    const auto series = values.subspan(i * n, n);
    for (float v : series) {
      if (!std::isfinite(v)) {
        throw FormatError("series " + std::to_string(first_row + i) + " has a non-finite value");
      }
    }
    const PaaVector paa = compute_paa(series, w);
    const SaxWord sax = paa_to_sax(paa, bp);
    table.symbols.insert(table.symbols.end(), sax.begin(), sax.end());
    if (keep_paa) {
      for (double p : paa) table.paa.push_back(static_cast<float>(p));
    }
  }
}

}  // namespace

SaxTable build_sax_table(const fs::path& dataset, const BuildConfig& cfg, bool keep_paa) {
  cfg.validate();
  DatasetReader reader(dataset, cfg.series_length);
  SaxTable table;
  table.segments = cfg.segments;
  table.symbols.reserve(reader.count() * cfg.segments);
  if (keep_paa) table.paa.reserve(reader.count() * cfg.segments);
  std::vector<float> batch;
  std::size_t row = 0;
  while (const std::size_t got = reader.read_batch(batch, cfg.buffer_series)) {
    append_sax_rows(table, batch, row, cfg, keep_paa);
    row += got;
  }
  return table;
}

SaxTable build_sax_table(std::span<const float> values, const BuildConfig& cfg, bool keep_paa) {
  cfg.validate();
  if (values.size() % cfg.series_length != 0) {
    throw FormatError("value count is not a multiple of the series length");
  }
  SaxTable table;
  table.segments = cfg.segments;
  append_sax_rows(table, values, 0, cfg, keep_paa);
  return table;
}

void write_sax_table(const fs::path& path, const SaxTable& table) {
  write_file_atomic(path, {reinterpret_cast<const char*>(table.symbols.data()),
                           table.symbols.size()});
}

SaxTable read_sax_table(const fs::path& path, std::size_t segments) {
  const auto bytes = read_file(path);
  if (segments == 0 || bytes.size() % segments != 0) {
    throw FormatError("SAX table " + path.string() + " has a malformed size");
  }
  SaxTable table;
  table.segments = segments;
  table.symbols.assign(bytes.begin(), bytes.end());
  return table;
}

// ---------------------------------------------------------------------------

StructureBuilder::StructureBuilder(const BuildConfig& cfg, Tree& tree,
                                   std::span<const std::uint8_t> sax, std::span<const float> paa)
    : cfg_(cfg), tree_(tree), sax_(sax), paa_(paa) {}

NodeId StructureBuilder::make_leaf(const IsaxWord& isax, std::vector<std::uint32_t> rows,
                                   NodeId parent, std::uint32_t sid) {
  Node node;
  node.leaf = true;
  node.parent = parent;
  node.isax = isax;
  node.member_sids = {sid};
  const NodeId id = tree_.add(std::move(node));
  rows_[id] = std::move(rows);
  return id;
}

void StructureBuilder::route_children(NodeId id, const std::vector<std::uint32_t>& rows,
                                      int depth) {
  const int bits = cfg_.bits;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> keyed;  // (sid, row)
  keyed.reserve(rows.size());
  {
    const Node& n = tree_[id];
    for (std::uint32_t r : rows) {
      keyed.emplace_back(child_sid(n.isax, sax_.subspan(std::size_t{r} * cfg_.segments,
                                                        cfg_.segments),
                                   n.csl, bits),
                         r);
    }
  }
  std::sort(keyed.begin(), keyed.end());
  std::size_t i = 0;
  while (i < keyed.size()) {
    const std::uint32_t sid = keyed[i].first;
    std::vector<std::uint32_t> group;
    for (; i < keyed.size() && keyed[i].first == sid; ++i) group.push_back(keyed[i].second);
    const IsaxWord isax = child_isax(tree_[id].isax, sid, tree_[id].csl);
    const NodeId child = split(isax, std::move(group), id, sid, depth + 1);
    tree_[id].routing[sid] = child;
  }
}

NodeId StructureBuilder::split(const IsaxWord& isax, std::vector<std::uint32_t> rows,
                               NodeId parent, std::uint32_t sid, int depth) {
  if (rows.size() <= cfg_.leaf_capacity) return make_leaf(isax, std::move(rows), parent, sid);

  const SaxSet set(sax_, cfg_.segments, rows);
  SplitPlan plan;
  try {
    if (cfg_.strategy == SplitStrategy::kAdaptive) {
      SplitParams params{cfg_.bits, cfg_.leaf_capacity, cfg_.fill_low, cfg_.fill_high,
                         cfg_.alpha};
      plan = find_optimal_plan(set, isax, params);
    } else {
      plan = binary_baseline_plan(set, isax, cfg_.bits);
    }
  } catch (const UnsplittableNode&) {
    ++oversized_;
    warnings_.push_back("oversized leaf of " + std::to_string(rows.size()) +
                        " series: every segment is at full cardinality");
    return make_leaf(isax, std::move(rows), parent, sid);
  }

  Node node;
  node.leaf = false;
  node.parent = parent;
  node.isax = isax;
  node.csl = plan.segments;
  node.routing.assign(std::size_t{1} << plan.segments.size(), kNoNode);
  node.split_size = rows.size();
  node.split_promotable =
      static_cast<std::uint8_t>(promotable_segments(isax, cfg_.bits).size());
  node.split_kind =
      cfg_.strategy == SplitStrategy::kAdaptive ? SplitKind::kAdaptive : SplitKind::kBinary;
  const NodeId id = tree_.add(std::move(node));
  route_children(id, rows, depth);
  if (cfg_.packing) pack_children(id);
  return id;
}

NodeId StructureBuilder::build_root(std::vector<std::uint32_t> rows) {
  Node root;
  root.leaf = false;
  root.isax = IsaxWord(cfg_.segments);
  root.split_kind = SplitKind::kRoot;
  root.split_size = rows.size();
  root.split_promotable = static_cast<std::uint8_t>(cfg_.segments);
  if (rows.size() > cfg_.leaf_capacity) {
    for (std::size_t s = 0; s < cfg_.segments; ++s) root.csl.push_back(static_cast<std::uint8_t>(s));
  }
  root.routing.assign(std::size_t{1} << root.csl.size(), kNoNode);
  const NodeId id = tree_.add(std::move(root));
  tree_.set_root(id);
  if (rows.empty()) return id;
  if (tree_[id].csl.empty()) {
    tree_[id].routing[0] = make_leaf(tree_[id].isax, std::move(rows), id, 0);
    return id;
  }
  route_children(id, rows, 0);
  if (cfg_.packing) pack_children(id);
  tree_.refresh_leaf_counts();
  return id;
}

NodeId StructureBuilder::build_subtree(const IsaxWord& isax, std::vector<std::uint32_t> rows,
                                       NodeId parent, std::uint32_t sid) {
  return split(isax, std::move(rows), parent, sid, 0);
}

void StructureBuilder::pack_children(NodeId parent) {
  const int lambda = static_cast<int>(tree_[parent].csl.size());
  if (lambda == 0) return;
  const double small_limit = cfg_.small_node * static_cast<double>(cfg_.leaf_capacity);
  std::vector<SmallNode> small;
  {
    const Node& p = tree_[parent];
    for (std::uint32_t sid = 0; sid < p.routing.size(); ++sid) {
      const NodeId c = p.routing[sid];
      if (c == kNoNode) continue;
      const Node& cn = tree_[c];
      if (!cn.leaf || cn.member_sids.size() != 1) continue;
      const std::uint64_t size = rows_.at(c).size();
      if (static_cast<double>(size) < small_limit) small.push_back({sid, size});
    }
  }
  if (small.size() < 2) return;
  const PackLimits limits{lambda, cfg_.rho, cfg_.leaf_capacity};
  const std::uint64_t seed = cfg_.rng_seed + pack_rounds_++ * 0x9E3779B97F4A7C15ull;
  const auto packs = pack_nodes(small, limits, seed);
  for (const LeafPack& pack : packs) {
    if (pack.member_sids.size() < 2) continue;
    std::vector<std::uint32_t> merged;
    for (std::uint32_t sid : pack.member_sids) {
      const NodeId old = tree_[parent].routing[sid];
      auto& r = rows_.at(old);
      merged.insert(merged.end(), r.begin(), r.end());
    }
    std::sort(merged.begin(), merged.end());
    Node node;
    node.leaf = true;
    node.parent = parent;
    node.isax = pack_isax(pack.mask, tree_[parent].isax, tree_[parent].csl);
    node.member_sids = pack.member_sids;
    std::sort(node.member_sids.begin(), node.member_sids.end());
    const NodeId id = tree_.add(std::move(node));
    rows_[id] = std::move(merged);
    for (std::uint32_t sid : pack.member_sids) {
      const NodeId old = tree_[parent].routing[sid];
      rows_.erase(old);
      tree_.release(old);
      tree_[parent].routing[sid] = id;
    }
  }
}

std::uint64_t StructureBuilder::leaf_size(NodeId leaf) const {
  std::uint64_t size = rows_.at(leaf).size();
  if (auto it = dup_rows_.find(leaf); it != dup_rows_.end()) size += it->second.size();
  return size;
}

void StructureBuilder::duplicate_boundaries() {
  if (!cfg_.fuzzy || tree_.root() == kNoNode) return;
  const std::size_t w = cfg_.segments;
  if (paa_.size() != sax_.size()) throw ConfigError("boundary duplication needs PAA values");
  const double f = *cfg_.fuzzy;
  const std::size_t rows = sax_.size() / w;
  std::vector<std::uint8_t> copies(rows, 0);
  std::unordered_map<NodeId, std::unordered_set<std::uint32_t>> present;

  for (NodeId pid : tree_.preorder()) {
    const Node& p = tree_[pid];
    if (p.leaf || p.csl.empty()) continue;
    const int lambda = static_cast<int>(p.csl.size());
    std::vector<NodeId> leaves;
    for (NodeId c : tree_.children(pid)) {
      if (tree_[c].leaf) leaves.push_back(c);
    }
    if (leaves.empty()) continue;
    for (int j = 0; j < lambda; ++j) {
      const std::size_t seg = p.csl[j];
      const unsigned shift = static_cast<unsigned>(lambda - 1 - j);
      for (NodeId leaf : leaves) {
        const auto& members = tree_[leaf].member_sids;
        for (std::uint32_t sid : members) {
          if (leaf_size(leaf) >= cfg_.leaf_capacity) break;
          const std::uint32_t nb = sid ^ (1u << shift);
          if (std::binary_search(members.begin(), members.end(), nb)) continue;
          const NodeId other = p.routing[nb];
          if (other == kNoNode) continue;
          const Interval region = child_isax(p.isax, nb, p.csl).region(seg);
          const bool upper = (nb >> shift) & 1u;
          const double boundary = upper ? region.lo : region.hi;
          const double limit = f * region_width(region, cfg_.bits);
          const bool filter = tree_[other].leaf && tree_[other].is_pack();
          std::vector<std::uint32_t> source;
          if (tree_[other].leaf) {
            source = rows_.at(other);
          } else {
            for (NodeId l : tree_.leaves_under(other)) {
              const auto& r = rows_.at(l);
              source.insert(source.end(), r.begin(), r.end());
            }
            std::sort(source.begin(), source.end());
          }
          auto& seen = present[leaf];
          for (std::uint32_t row : source) {
            if (leaf_size(leaf) >= cfg_.leaf_capacity) break;
            if (copies[row] >= cfg_.max_duplications) continue;
            const auto sax = sax_.subspan(std::size_t{row} * w, w);
            if (filter && tree_.sid_in(pid, sax) != nb) continue;
            const double v = paa_[std::size_t{row} * w + seg];
            if (std::fabs(v - boundary) > limit) continue;
            if (!seen.insert(row).second) continue;
            dup_rows_[leaf].push_back(row);
            ++copies[row];
            ++duplicate_total_;
          }
        }
      }
    }
  }
}

const std::vector<std::uint32_t>& StructureBuilder::rows_of(NodeId leaf) const {
  return rows_.at(leaf);
}

std::vector<std::pair<std::uint32_t, NodeId>> StructureBuilder::duplicates() const {
  std::vector<std::pair<std::uint32_t, NodeId>> out;
  out.reserve(duplicate_total_);
  for (const auto& [leaf, rows] : dup_rows_) {
    for (std::uint32_t r : rows) out.emplace_back(r, leaf);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

LeafWriter::LeafWriter(std::function<fs::path(NodeId)> path_of, std::uint64_t capacity)
    : path_of_(std::move(path_of)), capacity_(std::max<std::uint64_t>(capacity, 1)) {}

void LeafWriter::add(NodeId leaf, std::span<const float> values,
                     std::span<const std::uint8_t> sax, std::uint64_t ordinal) {
  encode_record(buffers_[leaf], values, sax, ordinal);
  ++written_[leaf];
  if (++buffered_ >= capacity_) flush();
}

void LeafWriter::flush() {
  if (buffered_ == 0) return;
  for (auto& [leaf, bytes] : buffers_) {
    if (bytes.empty()) continue;
    append_to_file(path_of_(leaf), bytes);
    ++appends_;
  }
  buffers_.clear();
  buffered_ = 0;
  ++flushes_;
}

MaterializeStats materialize_leaves(const fs::path& dataset, std::size_t series_length,
                                    Tree& tree, const SaxTable& table,
                                    std::span<const std::pair<std::uint32_t, NodeId>> duplicates,
                                    std::uint64_t buffer_series,
                                    const std::function<fs::path(NodeId)>& path_of) {
  const std::size_t n = series_length;
  DatasetReader reader(dataset, n);
  if (reader.count() != table.size()) {
    throw FormatError("dataset and SAX table disagree on the series count");
  }
  LeafWriter writer(path_of, buffer_series);
  MaterializeStats stats;
  std::vector<float> batch;
  std::size_t row = 0;
  std::size_t dup = 0;
  while (const std::size_t got = reader.read_batch(batch, buffer_series)) {
    for (std::size_t i = 0; i < got; ++i, ++row) {
      const auto values = std::span<const float>(batch).subspan(i * n, n);
      const auto sax = table.row(row);
      writer.add(route_to_leaf(tree, sax), values, sax, row);
      ++stats.records;
      for (; dup < duplicates.size() && duplicates[dup].first == row; ++dup) {
        writer.add(duplicates[dup].second, values, sax, row);
        ++stats.duplicates;
      }
    }
  }
  writer.flush();
  for (NodeId leaf : tree.leaves_under(tree.root())) {
    Node& node = tree[leaf];
    const auto it = writer.written().find(leaf);
    node.records = it == writer.written().end() ? 0 : it->second;
    node.deleted = DeletionBitVector(node.records);
  }
  stats.flushes = writer.flushes();
  stats.appends = writer.appends();
  return stats;
}

// ---------------------------------------------------------------------------

Index build_index(const fs::path& dataset, const fs::path& dir, const BuildConfig& cfg,
                  BuildReport* report) {
  cfg.validate();
  const auto t0 = Clock::now();
  BuildReport local;
  BuildReport& rep = report ? *report : local;
  rep = BuildReport{};

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  fs::remove_all(dir / "leaves", ec);
  fs::create_directories(dir / "leaves", ec);
  if (ec) throw IoError("cannot create " + (dir / "leaves").string() + ": " + ec.message());

  // Stage 1.
  SaxTable table = build_sax_table(dataset, cfg, cfg.fuzzy.has_value());
  if (table.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("datasets above 2^32 series are not supported");
  }
  rep.series = table.size();
  rep.sax_seconds = seconds_since(t0);

  IndexMeta meta;
  meta.config = cfg;
  meta.dataset_path = fs::absolute(dataset).string();
  meta.dataset_size = table.size();
  meta.live_series = table.size();
  meta.next_ordinal = table.size();
  Index index(dir, meta, Tree(cfg.segments, cfg.bits));
  write_sax_table(index.sax_path(), table);

  // Stages 2 to 4, then boundary duplication.
  const auto t1 = Clock::now();
  std::vector<std::pair<std::uint32_t, NodeId>> dups;
  {
    StructureBuilder builder(cfg, index.tree(), table.symbols, table.paa);
    std::vector<std::uint32_t> rows(table.size());
    for (std::uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;
    builder.build_root(std::move(rows));
    builder.duplicate_boundaries();
    dups = builder.duplicates();
    rep.oversized_leaves = builder.oversized_leaves();
    rep.warnings = builder.warnings();
  }
  Tree& tree = index.tree();
  tree.refresh_leaf_counts();
  for (NodeId leaf : tree.leaves_under(tree.root())) {
    tree[leaf].file_id = index.meta().next_file_id++;
  }
  rep.structure_seconds = seconds_since(t1);

  // Stage 5.
  const auto t2 = Clock::now();
  table.paa.clear();
  table.paa.shrink_to_fit();
  const auto stats = materialize_leaves(
      dataset, cfg.series_length, tree, table, dups, cfg.buffer_series,
      [&](NodeId leaf) { return index.leaf_path(tree[leaf].file_id); });
  rep.duplicates = stats.duplicates;
  rep.flushes = stats.flushes;
  table = SaxTable{};
  rep.materialize_seconds = seconds_since(t2);

  index.save();
  rep.total_seconds = seconds_since(t0);
  return index;
}

}  // namespace dsidx
