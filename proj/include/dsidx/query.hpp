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
#include <string>
#include <unordered_set>
#include <vector>

#include "dsidx/index.hpp"
#include "dsidx/summarization.hpp"

namespace dsidx {

enum class DistanceKind : std::uint8_t { kEd = 0, kDtw = 1 };

std::string to_string(DistanceKind kind);
/// Accepts "ed" or "dtw".
DistanceKind parse_distance_kind(const std::string& s);

struct QueryOptions {
  std::size_t k = 1;
  DistanceKind kind = DistanceKind::kEd;
  std::optional<std::size_t> window;  ///< DTW band; n/10 when absent
  /// Exact search only: scan every pruned leaf and count members that would
  /// have entered the result.
  bool audit_pruning = false;
};

struct Neighbor {
  std::uint64_t ordinal = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

struct KnnResult {
  std::vector<Neighbor> neighbors;  ///< ascending (distance, ordinal)
  std::uint64_t leaves_visited = 0;
  std::uint64_t series_scanned = 0;
  std::uint64_t leaves_pruned = 0;
  std::uint64_t total_leaves = 0;
  std::uint64_t audit_violations = 0;

  double pruning_ratio() const {
    return total_leaves ? static_cast<double>(leaves_pruned) / static_cast<double>(total_leaves)
                        : 0.0;
  }
  double kth_distance() const { return neighbors.empty() ? kInf : neighbors.back().distance; }
};

/// Bounded max-heap on (distance, ordinal) that admits each ordinal once.
class KnnHeap {
 public:
  explicit KnnHeap(std::size_t k);

  /// Returns true when the candidate entered the heap.
  bool offer(std::uint64_t ordinal, double distance);
  bool full() const { return heap_.size() >= k_; }
  /// Current k-th distance, infinity until k candidates are held.
  double kth() const { return full() ? heap_.front().distance : kInf; }
  bool contains(std::uint64_t ordinal) const { return members_.count(ordinal) != 0; }
  std::size_t size() const { return heap_.size(); }
  std::vector<Neighbor> sorted() const;

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
  std::unordered_set<std::uint64_t> members_;
};

/// Per-query precomputation: PAA, DTW envelope, distance dispatch.
class QueryContext {
 public:
  QueryContext(std::span<const float> query, const BuildConfig& cfg, const QueryOptions& opts);

  std::span<const float> query() const { return query_; }
  DistanceKind kind() const { return kind_; }
  std::size_t window() const { return window_; }

  /// Lower bound from the query to every series under `isax`.
  double node_bound(const IsaxWord& isax) const;
  /// Distance to a candidate; infinity once it provably exceeds `abandon`.
  double distance(std::span<const float> candidate, double abandon = kInf) const;

 private:
  std::span<const float> query_;
  DistanceKind kind_;
  std::size_t window_ = 0;
  std::size_t n_;
  PaaVector paa_;
  std::optional<DtwEnvelope> envelope_;
};

/// Scans the live records of one leaf into `heap`; returns records examined.
std::uint64_t leaf_scan(const LeafBlock& block, const DeletionBitVector& deleted,
                        const QueryContext& ctx, KnnHeap& heap);
std::uint64_t leaf_scan(const Index& index, NodeId leaf, const QueryContext& ctx, KnnHeap& heap);

/// Scans the query's target leaf only.
KnnResult approx_search(const Index& index, std::span<const float> query,
                        const QueryOptions& opts);

/// Descends while the subtree holds more than `nbr` leaves, then scans the
/// ending node and its siblings in ascending lower-bound order until `nbr`
/// non-empty leaves were scanned.
KnnResult extended_approx_search(const Index& index, std::span<const float> query,
                                 const QueryOptions& opts, std::size_t nbr);

/// Exact kNN: approximate seed, then best-first traversal with pruning.
KnnResult exact_search(const Index& index, std::span<const float> query,
                       const QueryOptions& opts);

struct BoundHistogram {
  double bucket_width = 0.0;
  std::vector<std::uint64_t> buckets;  ///< [i*width, (i+1)*width), last closed
  std::uint64_t unbounded = 0;         ///< leaves with an infinite region edge
  std::uint64_t finite = 0;
  double mean_finite = 0.0;
  double max_finite = 0.0;
};

/// Distribution of per-leaf distance upper bounds over `bucket_count` equal
/// buckets spanning [0, largest finite bound].
BoundHistogram leaf_bound_histogram(const Tree& tree, std::size_t series_length,
                                    std::size_t bucket_count = 20);

}  // namespace dsidx
