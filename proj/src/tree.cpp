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

#include "dsidx/tree.hpp"

#include <algorithm>
#include <functional>

#include "dsidx/errors.hpp"
#include "dsidx/split_engine.hpp"

namespace dsidx {

NodeId Tree::add(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tree::release(NodeId id) {
  Node& n = nodes_[id];
  n = Node{};
  n.alive = false;
}

std::vector<NodeId> Tree::children(NodeId id) const {
  std::vector<NodeId> out;
  const Node& n = nodes_[id];
  if (n.leaf) return out;
  for (std::uint32_t sid = 0; sid < n.routing.size(); ++sid) {
    const NodeId c = n.routing[sid];
    if (c == kNoNode) continue;
    // A pack appears under each of its (ascending) member sids; keep the first.
    const Node& cn = nodes_[c];
    if (cn.leaf && !cn.member_sids.empty() && cn.member_sids.front() != sid) continue;
    out.push_back(c);
  }
  return out;
}

std::vector<NodeId> Tree::preorder(NodeId from) const {
  std::vector<NodeId> out;
  if (from == kNoNode) return out;
  std::vector<NodeId> stack{from};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    out.push_back(id);
    auto kids = children(id);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<NodeId> Tree::leaves_under(NodeId from) const {
  std::vector<NodeId> out;
  for (NodeId id : preorder(from)) {
    if (nodes_[id].leaf) out.push_back(id);
  }
  return out;
}

void Tree::refresh_leaf_counts() {
  if (root_ == kNoNode) return;
  std::function<std::uint64_t(NodeId)> walk = [&](NodeId id) -> std::uint64_t {
    Node& n = nodes_[id];
    if (n.leaf) return n.leaf_count = 1;
    std::uint64_t sum = 0;
    for (NodeId c : children(id)) sum += walk(c);
    return n.leaf_count = sum;
  };
  walk(root_);
}

std::uint64_t Tree::subtree_live(NodeId id) const {
  std::uint64_t sum = 0;
  for (NodeId leaf : leaves_under(id)) sum += nodes_[leaf].live();
  return sum;
}

std::uint32_t Tree::sid_in(NodeId parent, std::span<const std::uint8_t> sax) const {
  const Node& p = nodes_[parent];
  return child_sid(p.isax, sax, p.csl, bits_);
}

PackMask Tree::mask_of(NodeId leaf) const {
  const Node& n = nodes_[leaf];
  const int width = n.parent == kNoNode ? 0 : static_cast<int>(nodes_[n.parent].csl.size());
  return PackMask::of(n.member_sids, width);
}

RouteResult try_route(const Tree& tree, std::span<const std::uint8_t> sax) {
  NodeId id = tree.root();
  while (!tree[id].leaf) {
    const Node& n = tree[id];
    const std::uint32_t sid = child_sid(n.isax, sax, n.csl, tree.bits());
    const NodeId next = n.routing[sid];
    if (next == kNoNode) return {id, false, sid};
    id = next;
  }
  return {id, true, 0};
}

NodeId route_to_leaf(const Tree& tree, std::span<const std::uint8_t> sax) {
  const RouteResult r = try_route(tree, sax);
  if (!r.complete) {
    throw CorruptionError("routing table of node " + std::to_string(r.node) +
                          " has no entry for sid " + std::to_string(r.missing_sid));
  }
  return r.node;
}

IndexStats index_stats(const Tree& tree, std::uint64_t leaf_capacity,
                       std::uint64_t series_count) {
  IndexStats s;
  if (tree.root() == kNoNode) return s;
  std::vector<std::pair<NodeId, std::uint32_t>> stack{{tree.root(), 0}};
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    ++s.node_count;
    const Node& n = tree[id];
    if (n.leaf) {
      ++s.leaf_count;
      if (n.is_pack()) ++s.pack_count;
      s.height = std::max(s.height, depth);
      continue;
    }
    for (NodeId c : tree.children(id)) stack.emplace_back(c, depth + 1);
  }
  if (s.leaf_count > 0) {
    s.fill_factor = static_cast<double>(series_count) /
                    (static_cast<double>(s.leaf_count) * static_cast<double>(leaf_capacity));
  }
  return s;
}

bool structurally_equal(const Tree& a, const Tree& b) {
  if (a.segments() != b.segments() || a.bits() != b.bits()) return false;
  if ((a.root() == kNoNode) != (b.root() == kNoNode)) return false;
  if (a.root() == kNoNode) return true;
  const auto pa = a.preorder();
  const auto pb = b.preorder();
  if (pa.size() != pb.size()) return false;
  // Preorder position of each node, to compare routing targets.
  std::vector<std::size_t> pos_a(a.capacity()), pos_b(b.capacity());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    pos_a[pa[i]] = i;
    pos_b[pb[i]] = i;
  }
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const Node& x = a[pa[i]];
    const Node& y = b[pb[i]];
    if (x.leaf != y.leaf || !(x.isax == y.isax)) return false;
    if (x.leaf) {
      if (x.member_sids != y.member_sids || x.file_id != y.file_id || x.records != y.records ||
          !(x.deleted == y.deleted)) {
        return false;
      }
      continue;
    }
    if (x.csl != y.csl || x.split_size != y.split_size ||
        x.split_promotable != y.split_promotable || x.split_kind != y.split_kind ||
        x.extractions != y.extractions || x.routing.size() != y.routing.size()) {
      return false;
    }
    for (std::size_t s = 0; s < x.routing.size(); ++s) {
      const bool ea = x.routing[s] == kNoNode;
      const bool eb = y.routing[s] == kNoNode;
      if (ea != eb) return false;
      if (!ea && pos_a[x.routing[s]] != pos_b[y.routing[s]]) return false;
    }
  }
  return true;
}

}  // namespace dsidx
