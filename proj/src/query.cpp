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

#include "dsidx/query.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <queue>
#include <shared_mutex>
#include <tuple>

#include "dsidx/errors.hpp"
#include "dsidx/split_engine.hpp"

namespace dsidx {

namespace {

// Relative slack applied before discarding a candidate or a leaf, so that
// candidates tied with the k-th distance are never lost to rounding.
constexpr double kSlack = 1e-9;

double inflate_sq(double d) {
  return std::isinf(d) ? kInf : d * d * (1.0 + kSlack) + 1e-300;
}

bool beyond(double bound, double kth) {
  return bound > kth * (1.0 + kSlack) + 1e-12;
}

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return std::tie(a.distance, a.ordinal) < std::tie(b.distance, b.ordinal);
}

void check_query(const Index& index, std::span<const float> query, const QueryOptions& opts) {
  if (query.size() != index.config().series_length) {
    throw ConfigError("query length " + std::to_string(query.size()) + " differs from n = " +
                      std::to_string(index.config().series_length));
  }
  if (opts.k == 0) throw ConfigError("k must be at least 1");
}

struct Visit {
  double bound;
  NodeId id;
  bool operator>(const Visit& o) const { return std::tie(bound, id) > std::tie(o.bound, o.id); }
};

std::vector<Visit> ranked(const Tree& tree, const QueryContext& ctx,
                          const std::vector<NodeId>& nodes) {
  std::vector<Visit> out;
  out.reserve(nodes.size());
  for (NodeId id : nodes) out.push_back({ctx.node_bound(tree[id].isax), id});
  std::sort(out.begin(), out.end(), [](const Visit& a, const Visit& b) { return b > a; });
  return out;
}

struct Scanner {
  const Index& index;
  const QueryContext& ctx;
  KnnHeap& heap;
  KnnResult& result;
  std::unordered_set<NodeId> visited;

  // Scans `leaf` unless it is empty or already seen; true when scanned.
  bool scan(NodeId leaf) {
    const Node& node = index.tree()[leaf];
    if (node.live() == 0 || !visited.insert(leaf).second) return false;
    result.series_scanned += leaf_scan(index, leaf, ctx, heap);
    ++result.leaves_visited;
    return true;
  }
};

void approx_into(Scanner& scanner, std::size_t nbr) {
  const Tree& tree = scanner.index.tree();
  const QueryContext& ctx = scanner.ctx;
  const NodeId root = tree.root();
  if (root == kNoNode) return;
  const auto& bp_bits = tree.bits();
  const SaxWord qsax =
      paa_to_sax(compute_paa(ctx.query(), tree.segments()), Breakpoints::for_bits(bp_bits));

  NodeId node = root;
  while (!tree[node].leaf && tree[node].leaf_count > nbr) {
    const Node& n = tree[node];
    NodeId next = n.routing[child_sid(n.isax, qsax, n.csl, tree.bits())];
    if (next == kNoNode) {
      const auto kids = ranked(tree, ctx, tree.children(node));
      if (kids.empty()) break;
      next = kids.front().id;
    }
    node = next;
  }

  std::vector<NodeId> order;
  if (node == root) {
    for (const auto& v : ranked(tree, ctx, tree.children(root))) order.push_back(v.id);
  } else {
    order.push_back(node);
    std::vector<NodeId> siblings;
    for (NodeId c : tree.children(tree[node].parent)) {
      if (c != node) siblings.push_back(c);
    }
    for (const auto& v : ranked(tree, ctx, siblings)) order.push_back(v.id);
  }

  std::size_t budget = nbr;
  for (NodeId sub : order) {
    if (budget == 0) break;
    if (tree[sub].leaf) {
      if (scanner.scan(sub)) --budget;
      continue;
    }
    for (const auto& v : ranked(tree, ctx, tree.leaves_under(sub))) {
      if (budget == 0) break;
      if (scanner.scan(v.id)) --budget;
    }
  }
}

}  // namespace

std::string to_string(DistanceKind kind) { return kind == DistanceKind::kEd ? "ed" : "dtw"; }

DistanceKind parse_distance_kind(const std::string& s) {
  if (s == "ed") return DistanceKind::kEd;
  if (s == "dtw") return DistanceKind::kDtw;
  throw ConfigError("unknown distance '" + s + "' (expected ed or dtw)");
}

KnnHeap::KnnHeap(std::size_t k) : k_(k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  heap_.reserve(k);
}

bool KnnHeap::offer(std::uint64_t ordinal, double distance) {
  if (members_.count(ordinal)) return false;
  const Neighbor cand{ordinal, distance};
  if (full()) {
    if (!neighbor_less(cand, heap_.front())) return false;
    std::pop_heap(heap_.begin(), heap_.end(), neighbor_less);
    members_.erase(heap_.back().ordinal);
    heap_.pop_back();
  }
  heap_.push_back(cand);
  std::push_heap(heap_.begin(), heap_.end(), neighbor_less);
  members_.insert(ordinal);
  return true;
}

std::vector<Neighbor> KnnHeap::sorted() const {
  std::vector<Neighbor> out = heap_;
  std::sort(out.begin(), out.end(), neighbor_less);
  return out;
}

QueryContext::QueryContext(std::span<const float> query, const BuildConfig& cfg,
                           const QueryOptions& opts)
    : query_(query), kind_(opts.kind), n_(cfg.series_length) {
  paa_ = compute_paa(query, cfg.segments);
  if (kind_ == DistanceKind::kDtw) {
    window_ = opts.window.value_or(default_dtw_window(n_));
    envelope_ = make_envelope(query, window_, cfg.segments);
  }
}

double QueryContext::node_bound(const IsaxWord& isax) const {
  return kind_ == DistanceKind::kEd ? lower_bound_ed(isax, paa_, n_)
                                    : lower_bound_dtw(isax, *envelope_);
}

double QueryContext::distance(std::span<const float> candidate, double abandon) const {
  const double abandon_sq = inflate_sq(abandon);
  if (kind_ == DistanceKind::kEd) {
    const double sq = squared_euclidean(query_, candidate, abandon_sq);
    return std::isinf(sq) ? kInf : std::sqrt(sq);
  }
  if (lb_keogh_sq(*envelope_, candidate, abandon_sq) > abandon_sq) return kInf;
  return dtw_distance(query_, candidate, window_, abandon_sq);
}

std::uint64_t leaf_scan(const LeafBlock& block, const DeletionBitVector& deleted,
                        const QueryContext& ctx, KnnHeap& heap) {
  std::uint64_t scanned = 0;
  for (std::size_t i = 0; i < block.size(); ++i) {
    if (i < deleted.size() && deleted.test(i)) continue;
    const std::uint64_t ordinal = block.ordinals[i];
    ++scanned;
    if (heap.contains(ordinal)) continue;
    const double d = ctx.distance(block.series(i), heap.kth());
    if (!std::isinf(d)) heap.offer(ordinal, d);
  }
  return scanned;
}

std::uint64_t leaf_scan(const Index& index, NodeId leaf, const QueryContext& ctx, KnnHeap& heap) {
  return leaf_scan(index.read_leaf(leaf), index.tree()[leaf].deleted, ctx, heap);
}

KnnResult extended_approx_search(const Index& index, std::span<const float> query,
                                 const QueryOptions& opts, std::size_t nbr) {
  check_query(index, query, opts);
  if (nbr == 0) throw ConfigError("node budget must be at least 1");
  std::shared_lock lock(index.mutex());
  const QueryContext ctx(query, index.config(), opts);
  KnnHeap heap(opts.k);
  KnnResult result;
  Scanner scanner{index, ctx, heap, result, {}};
  approx_into(scanner, nbr);
  result.neighbors = heap.sorted();
  result.total_leaves = index.tree().root() == kNoNode ? 0 : index.tree()[index.tree().root()].leaf_count;
  return result;
}

KnnResult approx_search(const Index& index, std::span<const float> query,
                        const QueryOptions& opts) {
  return extended_approx_search(index, query, opts, 1);
}

KnnResult exact_search(const Index& index, std::span<const float> query,
                       const QueryOptions& opts) {
  check_query(index, query, opts);
  std::shared_lock lock(index.mutex());
  const Tree& tree = index.tree();
  const QueryContext ctx(query, index.config(), opts);
  KnnHeap heap(opts.k);
  KnnResult result;
  if (tree.root() == kNoNode) return result;
  Scanner scanner{index, ctx, heap, result, {}};
  approx_into(scanner, 1);

  std::vector<NodeId> pruned;
  std::priority_queue<Visit, std::vector<Visit>, std::greater<>> queue;
  queue.push({ctx.node_bound(tree[tree.root()].isax), tree.root()});
  while (!queue.empty()) {
    const Visit v = queue.top();
    queue.pop();
    if (beyond(v.bound, heap.kth())) {
      if (!opts.audit_pruning) break;
      for (NodeId l : tree.leaves_under(v.id)) pruned.push_back(l);
      continue;
    }
    const Node& node = tree[v.id];
    if (node.leaf) {
      scanner.scan(v.id);
      continue;
    }
    for (NodeId c : tree.children(v.id)) queue.push({ctx.node_bound(tree[c].isax), c});
  }

  result.total_leaves = tree[tree.root()].leaf_count;
  result.leaves_pruned = result.total_leaves - std::min(result.total_leaves,
                                                        scanner.visited.size());
  result.neighbors = heap.sorted();

  if (opts.audit_pruning && !result.neighbors.empty()) {
    const Neighbor last = result.neighbors.back();
    for (NodeId leaf : pruned) {
      if (scanner.visited.count(leaf)) continue;
      const LeafBlock block = index.read_leaf(leaf);
      const auto& deleted = tree[leaf].deleted;
      for (std::size_t i = 0; i < block.size(); ++i) {
        if (deleted.test(i) || heap.contains(block.ordinals[i])) continue;
        const Neighbor cand{block.ordinals[i], ctx.distance(block.series(i))};
        if (heap.size() < opts.k || neighbor_less(cand, last)) ++result.audit_violations;
      }
    }
  }
  return result;
}

BoundHistogram leaf_bound_histogram(const Tree& tree, std::size_t series_length,
                                    std::size_t bucket_count) {
  BoundHistogram h;
  h.buckets.assign(std::max<std::size_t>(bucket_count, 1), 0);
  if (tree.root() == kNoNode) return h;
  std::vector<double> bounds;
  for (NodeId leaf : tree.leaves_under(tree.root())) {
    const auto ub = leaf_upper_bound(tree[leaf].isax, series_length);
    if (ub) {
      bounds.push_back(*ub);
    } else {
      ++h.unbounded;
    }
  }
  h.finite = bounds.size();
  if (bounds.empty()) return h;
  double sum = 0.0;
  for (double b : bounds) {
    sum += b;
    h.max_finite = std::max(h.max_finite, b);
  }
  h.mean_finite = sum / static_cast<double>(bounds.size());
  h.bucket_width = h.max_finite > 0 ? h.max_finite / static_cast<double>(h.buckets.size()) : 1.0;
  for (double b : bounds) {
    auto i = static_cast<std::size_t>(b / h.bucket_width);
    h.buckets[std::min(i, h.buckets.size() - 1)]++;
  }
  return h;
}

}  // namespace dsidx
