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

#include "dsidx/updates.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "dsidx/builder.hpp"
#include "dsidx/errors.hpp"
#include "dsidx/leaf_packing.hpp"
#include "dsidx/split_engine.hpp"

namespace dsidx {

namespace {

std::uint32_t sid_of(const Tree& tree, NodeId id) {
  const Node& n = tree[id];
  if (n.leaf) return n.member_sids.front();
  const Node& p = tree[n.parent];
  std::uint32_t sid = 0;
  for (auto seg : p.csl) sid = (sid << 1) | (n.isax[seg].prefix & 1u);
  return sid;
}

void remove_files(const Index& index, std::uint64_t file_id) {
  std::error_code ec;
  fs::remove(index.leaf_path(file_id), ec);
  fs::remove(index.deletion_path(file_id), ec);
}

}  // namespace

IndexUpdater::IndexUpdater(Index& index)
    : index_(index), tree_(index.tree()), cfg_(index.config()) {
  std::unique_lock lock(index_.mutex());
  if (tree_.root() == kNoNode) {
    // An index with no tree at all: give it an empty root.
    Node root;
    root.leaf = false;
    root.isax = IsaxWord(cfg_.segments);
    root.split_kind = SplitKind::kRoot;
    root.routing.assign(1, kNoNode);
    tree_.set_root(tree_.add(std::move(root)));
  }
  for (NodeId leaf : tree_.leaves_under(tree_.root())) {
    const LeafBlock block = index_.read_leaf(leaf);
    const Node& node = tree_[leaf];
    if (block.size() != node.records) {
      throw FormatError("leaf file " + index_.leaf_path(node.file_id).string() + " holds " +
                        std::to_string(block.size()) + " records, tree expects " +
                        std::to_string(node.records));
    }
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (!node.deleted.test(i)) locator_[block.ordinals[i]].push_back({leaf, i});
    }
  }
  tree_.refresh_leaf_counts();
}

void IndexUpdater::save() {
  std::unique_lock lock(index_.mutex());
  index_.meta().live_series = locator_.size();
  index_.save();
}

void IndexUpdater::adjust_leaf_counts(NodeId from, std::int64_t delta) {
  for (NodeId id = from; id != kNoNode; id = tree_[id].parent) {
    tree_[id].leaf_count = static_cast<std::uint64_t>(
        static_cast<std::int64_t>(tree_[id].leaf_count) + delta);
  }
}

std::uint64_t IndexUpdater::recount(NodeId id) {
  Node& n = tree_[id];
  if (n.leaf) return n.leaf_count = 1;
  std::uint64_t sum = 0;
  for (NodeId c : tree_.children(id)) sum += recount(c);
  return tree_[id].leaf_count = sum;
}

void IndexUpdater::forget(std::uint64_t ordinal, NodeId leaf, std::uint64_t slot) {
  auto it = locator_.find(ordinal);
  if (it == locator_.end()) return;
  auto& slots = it->second;
  slots.erase(std::remove_if(slots.begin(), slots.end(),
                             [&](const Slot& s) { return s.leaf == leaf && s.slot == slot; }),
              slots.end());
  if (slots.empty()) locator_.erase(it);
}

bool IndexUpdater::is_original(NodeId leaf, std::span<const std::uint8_t> sax) const {
  const Node& n = tree_[leaf];
  if (n.parent == kNoNode) return true;
  const std::uint32_t sid = tree_.sid_in(n.parent, sax);
  return std::binary_search(n.member_sids.begin(), n.member_sids.end(), sid);
}

NodeId IndexUpdater::create_leaf(NodeId parent, std::uint32_t sid) {
  Node node;
  node.leaf = true;
  node.parent = parent;
  node.isax = child_isax(tree_[parent].isax, sid, tree_[parent].csl);
  node.member_sids = {sid};
  node.file_id = index_.meta().next_file_id++;
  const NodeId id = tree_.add(std::move(node));
  tree_[parent].routing[sid] = id;
  tree_[id].leaf_count = 1;
  adjust_leaf_counts(parent, 1);
  return id;
}

std::uint64_t IndexUpdater::store(NodeId leaf, std::span<const float> values,
                                  std::span<const std::uint8_t> sax, std::uint64_t ordinal) {
  Node& node = tree_[leaf];
  std::vector<char> bytes;
  encode_record(bytes, values, sax, ordinal);
  const fs::path path = index_.leaf_path(node.file_id);
  std::uint64_t slot = node.deleted.first_set();
  if (slot < node.records) {
    write_record_at(path, slot, bytes);
    node.deleted.reset(slot);
  } else {
    append_to_file(path, bytes);
    slot = node.records++;
    node.deleted.resize(node.records);
  }
  locator_[ordinal].push_back({leaf, slot});
  return slot;
}

std::uint64_t IndexUpdater::insert_series(std::span<const float> series) {
  if (series.size() != cfg_.series_length) {
    throw ConfigError("series length " + std::to_string(series.size()) + " differs from n = " +
                      std::to_string(cfg_.series_length));
  }
  for (float v : series) {
    if (!std::isfinite(v)) throw ConfigError("series has a non-finite value");
  }
  std::unique_lock lock(index_.mutex());
  const SaxWord sax =
      paa_to_sax(compute_paa(series, cfg_.segments), Breakpoints::for_bits(cfg_.bits));
  const std::uint64_t ordinal = index_.meta().next_ordinal++;

  RouteResult route = try_route(tree_, sax);
  NodeId leaf = route.complete ? route.node : create_leaf(route.node, route.missing_sid);

  if (tree_[leaf].is_pack() && tree_[leaf].live() >= cfg_.leaf_capacity) {
    const NodeId parent = tree_[leaf].parent;
    leaf = extract_from_pack(leaf, tree_.sid_in(parent, sax));
    const std::uint64_t limit =
        std::max<std::uint64_t>(1, (std::uint64_t{1} << tree_[parent].csl.size()) / 4);
    if (++tree_[parent].extractions >= limit) {
      repack(parent);
      route = try_route(tree_, sax);
      leaf = route.complete ? route.node : create_leaf(route.node, route.missing_sid);
      // The fresh packs may put the target back into a full pack.
      if (tree_[leaf].is_pack() && tree_[leaf].live() >= cfg_.leaf_capacity) {
        leaf = extract_from_pack(leaf, tree_.sid_in(parent, sax));
        ++tree_[parent].extractions;
      }
    }
  }

  store(leaf, series, sax, ordinal);
  ++stats_.inserts;
  index_.meta().live_series = locator_.size();

  if (tree_[leaf].live() > cfg_.leaf_capacity && !tree_[leaf].is_pack() &&
      !promotable_segments(tree_[leaf].isax, cfg_.bits).empty()) {
    std::vector<NodeId> ancestors;
    for (NodeId a = tree_[leaf].parent; a != tree_.root(); a = tree_[a].parent) {
      ancestors.push_back(a);
    }
    split_leaf(leaf);
    lock.unlock();
    for (auto it = ancestors.rbegin(); it != ancestors.rend(); ++it) {
      if (maybe_resplit(*it)) break;
    }
  }
  return ordinal;
}

NodeId IndexUpdater::extract_from_pack(NodeId pack, std::uint32_t sid) {
  const NodeId parent = tree_[pack].parent;
  const LeafBlock block = index_.read_leaf(pack);
  const NodeId fresh = create_leaf(parent, sid);
  LeafBlock moved;
  moved.n = block.n;
  moved.w = block.w;
  for (std::size_t i = 0; i < block.size(); ++i) {
    if (tree_[pack].deleted.test(i)) continue;
    if (tree_.sid_in(parent, block.sax_of(i)) != sid) continue;
    moved.push_back(block.series(i), block.sax_of(i), block.ordinals[i]);
    tree_[pack].deleted.set(i);
    forget(block.ordinals[i], pack, i);
    locator_[block.ordinals[i]].push_back({fresh, moved.size() - 1});
  }
  write_leaf_file(index_.leaf_path(tree_[fresh].file_id), moved);
  tree_[fresh].records = moved.size();
  tree_[fresh].deleted = DeletionBitVector(moved.size());

  Node& p = tree_[pack];
  p.member_sids.erase(std::find(p.member_sids.begin(), p.member_sids.end(), sid));
  const Node& par = tree_[parent];
  p.isax = p.member_sids.size() == 1
               ? child_isax(par.isax, p.member_sids.front(), par.csl)
               : pack_isax(PackMask::of(p.member_sids, static_cast<int>(par.csl.size())),
                           par.isax, par.csl);
  ++stats_.extractions;
  if (tree_[pack].live() == 0) remove_leaf(pack);
  return fresh;
}

std::vector<IndexUpdater::Record> IndexUpdater::collect_originals(NodeId subtree) {
  std::vector<Record> out;
  const std::vector<NodeId> leaves =
      tree_[subtree].leaf ? std::vector<NodeId>{subtree} : tree_.leaves_under(subtree);
  for (NodeId leaf : leaves) {
    const LeafBlock block = index_.read_leaf(leaf);
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (tree_[leaf].deleted.test(i)) continue;
      forget(block.ordinals[i], leaf, i);
      if (!is_original(leaf, block.sax_of(i))) continue;
      const auto v = block.series(i);
      const auto s = block.sax_of(i);
      out.push_back({{v.begin(), v.end()}, {s.begin(), s.end()}, block.ordinals[i]});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Record& a, const Record& b) { return a.ordinal < b.ordinal; });
  return out;
}

NodeId IndexUpdater::rebuild(const IsaxWord& isax, std::vector<Record> records, NodeId parent,
                             std::uint32_t sid) {
  std::vector<std::uint8_t> sax;
  sax.reserve(records.size() * cfg_.segments);
  for (const auto& r : records) sax.insert(sax.end(), r.sax.begin(), r.sax.end());
  std::vector<std::uint32_t> rows(records.size());
  for (std::uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;

  BuildConfig cfg = cfg_;
  cfg.fuzzy.reset();
  StructureBuilder builder(cfg, tree_, sax);
  const NodeId top = builder.build_subtree(isax, std::move(rows), parent, sid);
  const std::vector<NodeId> leaves =
      tree_[top].leaf ? std::vector<NodeId>{top} : tree_.leaves_under(top);
  for (NodeId leaf : leaves) {
    LeafBlock block;
    block.n = cfg_.series_length;
    block.w = cfg_.segments;
    for (std::uint32_t row : builder.rows_of(leaf)) {
      const Record& r = records[row];
      locator_[r.ordinal].push_back({leaf, block.size()});
      block.push_back(r.values, r.sax, r.ordinal);
    }
    Node& node = tree_[leaf];
    node.file_id = index_.meta().next_file_id++;
    node.records = block.size();
    node.deleted = DeletionBitVector(block.size());
    write_leaf_file(index_.leaf_path(node.file_id), block);
  }
  recount(top);
  return top;
}

void IndexUpdater::drop_subtree(NodeId subtree) {
  for (NodeId id : tree_.preorder(subtree)) {
    if (tree_[id].leaf) remove_files(index_, tree_[id].file_id);
  }
  for (NodeId id : tree_.preorder(subtree)) tree_.release(id);
}

void IndexUpdater::split_leaf(NodeId leaf) {
  const NodeId parent = tree_[leaf].parent;
  const std::uint32_t sid = tree_[leaf].member_sids.front();
  const IsaxWord isax = tree_[leaf].isax;
  auto records = collect_originals(leaf);
  drop_subtree(leaf);
  const NodeId top = rebuild(isax, std::move(records), parent, sid);
  tree_[parent].routing[sid] = top;
  adjust_leaf_counts(parent, static_cast<std::int64_t>(tree_[top].leaf_count) - 1);
  ++stats_.splits;
}

void IndexUpdater::repack(NodeId parent) {
  Node& p = tree_[parent];
  p.extractions = 0;
  const double small_limit = cfg_.small_node * static_cast<double>(cfg_.leaf_capacity);
  std::vector<NodeId> old;
  for (NodeId c : tree_.children(parent)) {
    if (tree_[c].leaf && static_cast<double>(tree_[c].live()) < small_limit) old.push_back(c);
  }
  if (old.size() < 2) return;

  // Dissolve the small leaves into per-sid groups of originals.
  std::vector<std::pair<std::uint32_t, Record>> keyed;
  for (NodeId leaf : old) {
    for (auto& r : collect_originals(leaf)) {
      const std::uint32_t sid = tree_.sid_in(parent, r.sax);
      keyed.emplace_back(sid, std::move(r));
    }
  }
  std::int64_t delta = 0;
  for (NodeId leaf : old) {
    for (std::uint32_t sid : tree_[leaf].member_sids) tree_[parent].routing[sid] = kNoNode;
    drop_subtree(leaf);
    --delta;
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SmallNode> small;
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    while (j < keyed.size() && keyed[j].first == keyed[i].first) ++j;
    small.push_back({keyed[i].first, j - i});
    i = j;
  }
  const int lambda = static_cast<int>(tree_[parent].csl.size());
  const PackLimits limits{lambda, cfg_.rho, cfg_.leaf_capacity};
  const auto packs =
      pack_nodes(small, limits, cfg_.rng_seed + stats_.repacks * 0x9E3779B97F4A7C15ull);
  for (const LeafPack& pack : packs) {
    Node node;
    node.leaf = true;
    node.parent = parent;
    node.member_sids = pack.member_sids;
    std::sort(node.member_sids.begin(), node.member_sids.end());
    const Node& par = tree_[parent];
    node.isax = node.member_sids.size() == 1
                    ? child_isax(par.isax, node.member_sids.front(), par.csl)
                    : pack_isax(pack.mask, par.isax, par.csl);
    node.file_id = index_.meta().next_file_id++;
    node.leaf_count = 1;
    const NodeId id = tree_.add(std::move(node));
    LeafBlock block;
    block.n = cfg_.series_length;
    block.w = cfg_.segments;
    for (auto& [sid, r] : keyed) {
      if (!std::binary_search(tree_[id].member_sids.begin(), tree_[id].member_sids.end(), sid)) {
        continue;
      }
      locator_[r.ordinal].push_back({id, block.size()});
      block.push_back(r.values, r.sax, r.ordinal);
    }
    tree_[id].records = block.size();
    tree_[id].deleted = DeletionBitVector(block.size());
    write_leaf_file(index_.leaf_path(tree_[id].file_id), block);
    for (std::uint32_t sid : tree_[id].member_sids) tree_[parent].routing[sid] = id;
    ++delta;
  }
  adjust_leaf_counts(parent, delta);
  ++stats_.repacks;
}

void IndexUpdater::remove_leaf(NodeId leaf) {
  NodeId parent = tree_[leaf].parent;
  for (std::uint32_t sid : tree_[leaf].member_sids) tree_[parent].routing[sid] = kNoNode;
  drop_subtree(leaf);
  adjust_leaf_counts(parent, -1);
  ++stats_.leaves_removed;
  // Internal nodes left without children disappear too, except the root.
  while (parent != tree_.root()) {
    const Node& p = tree_[parent];
    if (std::any_of(p.routing.begin(), p.routing.end(), [](NodeId c) { return c != kNoNode; })) {
      break;
    }
    const NodeId up = p.parent;
    tree_[up].routing[sid_of(tree_, parent)] = kNoNode;
    tree_.release(parent);
    parent = up;
  }
}

void IndexUpdater::delete_ordinal(std::uint64_t ordinal) {
  std::unique_lock lock(index_.mutex());
  const auto it = locator_.find(ordinal);
  if (it == locator_.end()) throw NotFoundError("no live series with ordinal " + std::to_string(ordinal));
  const std::vector<Slot> slots = it->second;
  locator_.erase(it);
  std::vector<NodeId> touched;
  for (const Slot& s : slots) {
    tree_[s.leaf].deleted.set(s.slot);
    touched.push_back(s.leaf);
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  NodeId home_parent = kNoNode;
  for (NodeId leaf : touched) {
    if (!tree_[leaf].alive) continue;
    home_parent = tree_[leaf].parent;
    if (tree_[leaf].live() == 0) remove_leaf(leaf);
  }
  ++stats_.deletes;
  index_.meta().live_series = locator_.size();
  lock.unlock();
  if (home_parent != kNoNode && home_parent != tree_.root() && tree_[home_parent].alive &&
      !tree_[home_parent].leaf) {
    maybe_resplit(home_parent);
  }
}

std::uint64_t IndexUpdater::delete_series(std::span<const float> series) {
  if (series.size() != cfg_.series_length) throw ConfigError("series length mismatch");
  std::uint64_t found = 0;
  bool any = false;
  {
    std::shared_lock lock(index_.mutex());
    const SaxWord sax =
        paa_to_sax(compute_paa(series, cfg_.segments), Breakpoints::for_bits(cfg_.bits));
    const RouteResult route = try_route(tree_, sax);
    if (route.complete) {
      const LeafBlock block = index_.read_leaf(route.node);
      for (std::size_t i = 0; i < block.size(); ++i) {
        if (tree_[route.node].deleted.test(i)) continue;
        const auto v = block.series(i);
        if (!std::equal(v.begin(), v.end(), series.begin())) continue;
        if (!any || block.ordinals[i] < found) found = block.ordinals[i];
        any = true;
      }
    }
  }
  if (!any) throw NotFoundError("series is not in the index");
  delete_ordinal(found);
  return found;
}

bool IndexUpdater::maybe_resplit(NodeId node) {
  std::unique_lock lock(index_.mutex());
  if (node == tree_.root() || !tree_[node].alive || tree_[node].leaf) return false;
  const Node& n = tree_[node];
  const double size = static_cast<double>(tree_.subtree_live(node));
  const double th = static_cast<double>(cfg_.leaf_capacity);
  const double fan = std::ldexp(1.0, static_cast<int>(n.csl.size()));
  const bool grown = size > 2.0 * cfg_.fill_high * th * fan;
  const bool shrunk = size < 0.5 * cfg_.fill_low * th * fan;
  if (!grown && !shrunk) return false;
  if (size > th) {
    // Only rebuild when the current fanout is outside what a fresh split
    // would choose; otherwise the rebuild reproduces the same shape.
    const SplitParams params{cfg_.bits, cfg_.leaf_capacity, cfg_.fill_low, cfg_.fill_high,
                             cfg_.alpha};
    const auto promotable = promotable_segments(n.isax, cfg_.bits).size();
    const FanoutRange range = effective_fanout_range(static_cast<std::uint64_t>(size), params,
                                                     cfg_.segments, promotable);
    const int lambda = static_cast<int>(n.csl.size());
    if (lambda >= range.min && lambda <= range.max) return false;
  }

  const NodeId parent = n.parent;
  const std::uint32_t sid = sid_of(tree_, node);
  const IsaxWord isax = n.isax;
  const std::int64_t old_leaves = static_cast<std::int64_t>(n.leaf_count);
  auto records = collect_originals(node);
  if (records.empty()) {
    drop_subtree(node);
    tree_[parent].routing[sid] = kNoNode;
    adjust_leaf_counts(parent, -old_leaves);
    ++stats_.resplits;
    return true;
  }
  // Build the replacement first; the swap below is the only point readers
  // could observe, and they are excluded by the lock.
  const NodeId top = rebuild(isax, std::move(records), parent, sid);
  drop_subtree(node);
  tree_[parent].routing[sid] = top;
  adjust_leaf_counts(parent, static_cast<std::int64_t>(tree_[top].leaf_count) - old_leaves);
  ++stats_.resplits;
  index_.meta().live_series = locator_.size();
  return true;
}

}  // namespace dsidx
