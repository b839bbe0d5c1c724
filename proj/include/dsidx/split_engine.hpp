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
#include <stdexcept>
#include <utility>
#include <vector>

#include "dsidx/summarization.hpp"

namespace dsidx {

/// Non-owning view over rows of a flat, series-major SAX table.
class SaxSet {
 public:
  /// Every row of `table`.
  SaxSet(std::span<const std::uint8_t> table, std::size_t segments)
      : table_(table), segments_(segments), count_(segments ? table.size() / segments : 0) {}
  /// The listed rows of `table`.
  SaxSet(std::span<const std::uint8_t> table, std::size_t segments,
         std::span<const std::uint32_t> rows)
      : table_(table), segments_(segments), rows_(rows), use_rows_(true), count_(rows.size()) {}

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t segments() const { return segments_; }

  std::span<const std::uint8_t> operator[](std::size_t i) const {
    const std::size_t row = use_rows_ ? rows_[i] : i;
    return table_.subspan(row * segments_, segments_);
  }

 private:
  std::span<const std::uint8_t> table_;
  std::size_t segments_ = 0;
  std::span<const std::uint32_t> rows_;
  bool use_rows_ = false;
  std::size_t count_ = 0;
};

/// Segment ids chosen for a split (0-based, ascending) and the objective value.
struct SplitPlan {
  std::vector<std::uint8_t> segments;
  double score = 0.0;

  bool operator==(const SplitPlan&) const = default;
};

/// Per-segment variance of next-bit region midpoints over a node's series.
struct SegmentStats {
  std::vector<double> variance;
};

/// Child sizes of a plan, keyed by sid. Only non-empty sids are stored,
/// ascending; every other sid of the 2^|plan| space has size zero.
struct SizeDistribution {
  std::vector<std::uint8_t> plan;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> entries;

  std::uint64_t total() const;
  std::uint64_t count(std::uint32_t sid) const;
  bool operator==(const SizeDistribution&) const = default;
};

struct FanoutRange {
  int min = 1;
  int max = 1;
};

/// Knobs of the split search.
struct SplitParams {
  int bits = 8;
  std::uint64_t leaf_capacity = 10000;
  double fill_low = 0.5;
  double fill_high = 3.0;
  double alpha = 0.2;
};

/// Thrown when every segment already sits at full cardinality.
class UnsplittableNode : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Segments whose bit length in `node` is still below `bits`.
std::vector<std::uint8_t> promotable_segments(const IsaxWord& node, int bits);

/// Midpoint of a region, substituting the pseudo-bound for an infinite edge.
double region_midpoint(const Interval& region, int bits);
/// Width of a region, substituting the pseudo-bound for an infinite edge.
double region_width(const Interval& region, int bits);

/// Throws ConfigError when `sax_words` is empty.
SegmentStats segment_variances(const SaxSet& sax_words, const IsaxWord& node, int bits);

/// Sum of the per-segment variances over the plan.
double projected_variance(std::span<const std::uint8_t> plan, const SegmentStats& stats);

/// Admissible number of split segments for a node of `node_size` series.
/// Throws ConfigError when the node does not exceed the capacity.
FanoutRange fanout_range(std::uint64_t node_size, std::uint64_t leaf_capacity, double fill_low,
                         double fill_high, std::size_t segments);

/// fanout_range further clamped to the number of promotable segments.
FanoutRange effective_fanout_range(std::uint64_t node_size, const SplitParams& params,
                                   std::size_t segments, std::size_t promotable);

/// Child sizes when splitting on every promotable segment.
SizeDistribution base_distribution(const SaxSet& sax_words, const IsaxWord& node, int bits);

/// Sizes for a sub-plan by merging the sids of a superset plan.
/// Throws ConfigError when `sub_plan` is not a subset of `base.plan`.
SizeDistribution project_distribution(const SizeDistribution& base,
                                      std::span<const std::uint8_t> sub_plan);

/// Proximity/compactness objective of the plan behind `dist`.
double score_plan(const SizeDistribution& dist, const SegmentStats& stats,
                  std::uint64_t leaf_capacity, double alpha);

/// Arg-max of score_plan over admissible plans; ties go to the
/// lexicographically smallest segment list. Throws UnsplittableNode.
SplitPlan find_optimal_plan(const SaxSet& sax_words, const IsaxWord& node,
                            const SplitParams& params);

/// Routing key of `sax` under a node split on `plan`.
std::uint32_t child_sid(const IsaxWord& node, std::span<const std::uint8_t> sax,
                        std::span<const std::uint8_t> plan, int bits);

/// sid plus the child's iSAX word. Throws ConfigError when a plan segment is
/// already at full cardinality.
std::pair<std::uint32_t, IsaxWord> promote_isax(const IsaxWord& node,
                                                std::span<const std::uint8_t> sax,
                                                std::span<const std::uint8_t> plan, int bits);

/// Child word for a given sid.
IsaxWord child_isax(const IsaxWord& node, std::uint32_t sid, std::span<const std::uint8_t> plan);

/// Single promotable segment with the most even next-bit split; ties to the
/// lowest id. Throws UnsplittableNode.
SplitPlan binary_baseline_plan(const SaxSet& sax_words, const IsaxWord& node, int bits);

}  // namespace dsidx
