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

#include "dsidx/split_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>
#include <unordered_set>

#include "dsidx/errors.hpp"

namespace dsidx {

std::uint64_t SizeDistribution::total() const {
  std::uint64_t sum = 0;
  for (const auto& [sid, c] : entries) sum += c;
  return sum;
}

std::uint64_t SizeDistribution::count(std::uint32_t sid) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(sid, std::uint64_t{0}));
  return (it != entries.end() && it->first == sid) ? it->second : 0;
}

std::vector<std::uint8_t> promotable_segments(const IsaxWord& node, int bits) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    if (node[i].bits < bits) out.push_back(static_cast<std::uint8_t>(i));
  }
  return out;
}

double region_midpoint(const Interval& region, int bits) {
  const double beta = Breakpoints::pseudo_bound(bits);
  const double lo = std::isinf(region.lo) ? -beta : region.lo;
  const double hi = std::isinf(region.hi) ? beta : region.hi;
  return 0.5 * (lo + hi);
}

double region_width(const Interval& region, int bits) {
  const double beta = Breakpoints::pseudo_bound(bits);
  const double lo = std::isinf(region.lo) ? -beta : region.lo;
  const double hi = std::isinf(region.hi) ? beta : region.hi;
  return hi - lo;
}

SegmentStats segment_variances(const SaxSet& sax_words, const IsaxWord& node, int bits) {
  if (sax_words.empty()) throw ConfigError("segment variances of an empty node");
  const std::size_t w = node.size();
  SegmentStats stats;
  stats.variance.assign(w, 0.0);
  std::vector<std::uint64_t> ones(w, 0);
  for (std::size_t r = 0; r < sax_words.size(); ++r) {
    const auto sax = sax_words[r];
    for (std::size_t i = 0; i < w; ++i) {
      const int nb = node[i].bits;
      if (nb < bits) ones[i] += (sax[i] >> (bits - nb - 1)) & 1u;
    }
  }
  const double c = static_cast<double>(sax_words.size());
  for (std::size_t i = 0; i < w; ++i) {
    // Full-cardinality segments cannot be refined: zero-width refinement.
    if (node[i].bits >= bits) continue;
    const double m0 = region_midpoint(node.promoted(i, 0).region(i), bits);
    const double m1 = region_midpoint(node.promoted(i, 1).region(i), bits);
    const double p1 = static_cast<double>(ones[i]) / c;
    const double p0 = 1.0 - p1;
    stats.variance[i] = p0 * p1 * (m1 - m0) * (m1 - m0);
  }
  return stats;
}

double projected_variance(std::span<const std::uint8_t> plan, const SegmentStats& stats) {
  double sum = 0.0;
  for (auto seg : plan) sum += stats.variance[seg];
  return sum;
}

FanoutRange fanout_range(std::uint64_t node_size, std::uint64_t leaf_capacity, double fill_low,
                         double fill_high, std::size_t segments) {
  if (node_size <= leaf_capacity) {
    throw ConfigError("node of size " + std::to_string(node_size) +
                      " does not exceed the leaf capacity; no split needed");
  }
  const double c = static_cast<double>(node_size);
  const double th = static_cast<double>(leaf_capacity);
  const double lo = std::ceil(std::log2(c / (fill_high * th)));
  const double hi = std::floor(std::log2(c / (fill_low * th)));
  const int w = static_cast<int>(segments);
  FanoutRange r;
  r.min = std::min(w, std::max(1, static_cast<int>(std::max(lo, -1.0))));
  r.max = std::min(w, static_cast<int>(std::max(hi, 0.0)));
  if (r.min > r.max) r.max = r.min;
  return r;
}

FanoutRange effective_fanout_range(std::uint64_t node_size, const SplitParams& params,
                                   std::size_t segments, std::size_t promotable) {
  if (promotable == 0) throw UnsplittableNode("every segment is at full cardinality");
  FanoutRange r = fanout_range(node_size, params.leaf_capacity, params.fill_low,
                               params.fill_high, segments);
  const int p = static_cast<int>(promotable);
  r.min = std::min(r.min, p);
  r.max = std::min(r.max, p);
  return r;
}

std::uint32_t child_sid(const IsaxWord& node, std::span<const std::uint8_t> sax,
                        std::span<const std::uint8_t> plan, int bits) {
  std::uint32_t sid = 0;
  for (auto seg : plan) {
    const int nb = node[seg].bits;
    sid = (sid << 1) | ((sax[seg] >> (bits - nb - 1)) & 1u);
  }
  return sid;
}

std::pair<std::uint32_t, IsaxWord> promote_isax(const IsaxWord& node,
                                                std::span<const std::uint8_t> sax,
                                                std::span<const std::uint8_t> plan, int bits) {
  std::uint32_t sid = 0;
  IsaxWord out = node;
  for (auto seg : plan) {
    auto& sym = out[seg];
    if (sym.bits >= bits) {
      throw ConfigError("segment " + std::to_string(seg) + " is already at full cardinality");
    }
    const unsigned bit = (sax[seg] >> (bits - sym.bits - 1)) & 1u;
    sid = (sid << 1) | bit;
    sym.prefix = static_cast<std::uint8_t>((sym.prefix << 1) | bit);
    sym.bits = static_cast<std::uint8_t>(sym.bits + 1);
  }
  return {sid, std::move(out)};
}

IsaxWord child_isax(const IsaxWord& node, std::uint32_t sid, std::span<const std::uint8_t> plan) {
  IsaxWord out = node;
  const std::size_t len = plan.size();
  for (std::size_t k = 0; k < len; ++k) {
    auto& sym = out[plan[k]];
    const unsigned bit = (sid >> (len - 1 - k)) & 1u;
    sym.prefix = static_cast<std::uint8_t>((sym.prefix << 1) | bit);
    sym.bits = static_cast<std::uint8_t>(sym.bits + 1);
  }
  return out;
}

namespace {

SizeDistribution compact(std::vector<std::uint8_t> plan, const std::vector<std::uint64_t>& dense) {
  SizeDistribution out;
  out.plan = std::move(plan);
  for (std::uint32_t sid = 0; sid < dense.size(); ++sid) {
    if (dense[sid] != 0) out.entries.emplace_back(sid, dense[sid]);
  }
  return out;
}

std::uint32_t plan_mask(std::span<const std::uint8_t> plan) {
  std::uint32_t m = 0;
  for (auto s : plan) m |= 1u << s;
  return m;
}

}  // namespace

SizeDistribution base_distribution(const SaxSet& sax_words, const IsaxWord& node, int bits) {
  auto plan = promotable_segments(node, bits);
  std::vector<std::uint64_t> dense(std::size_t{1} << plan.size(), 0);
  for (std::size_t r = 0; r < sax_words.size(); ++r) {
    ++dense[child_sid(node, sax_words[r], plan, bits)];
  }
  return compact(std::move(plan), dense);
}

SizeDistribution project_distribution(const SizeDistribution& base,
                                      std::span<const std::uint8_t> sub_plan) {
  const std::size_t base_len = base.plan.size();
  std::vector<unsigned> shifts;
  shifts.reserve(sub_plan.size());
  for (auto seg : sub_plan) {
    const auto it = std::find(base.plan.begin(), base.plan.end(), seg);
    if (it == base.plan.end()) {
      throw ConfigError("sub-plan segment " + std::to_string(seg) + " is not in the base plan");
    }
    shifts.push_back(static_cast<unsigned>(base_len - 1 - (it - base.plan.begin())));
  }
  std::vector<std::uint64_t> dense(std::size_t{1} << sub_plan.size(), 0);
  for (const auto& [sid, c] : base.entries) {
    std::uint32_t out = 0;
    for (unsigned s : shifts) out = (out << 1) | ((sid >> s) & 1u);
    dense[out] += c;
  }
  return compact(std::vector<std::uint8_t>(sub_plan.begin(), sub_plan.end()), dense);
}

double score_plan(const SizeDistribution& dist, const SegmentStats& stats,
                  std::uint64_t leaf_capacity, double alpha) {
  const std::size_t lambda = dist.plan.size();
  const double children = std::ldexp(1.0, static_cast<int>(lambda));
  const double th = static_cast<double>(leaf_capacity);
  const double proximity =
      std::exp(std::sqrt(projected_variance(dist.plan, stats) / static_cast<double>(lambda)));

  const double mean = static_cast<double>(dist.total()) / th / children;
  double sq = 0.0;
  std::uint64_t overflowed = 0;
  for (const auto& [sid, c] : dist.entries) {
    const double d = static_cast<double>(c) / th - mean;
    sq += d * d;
    if (c > leaf_capacity) ++overflowed;
  }
  const double empty = children - static_cast<double>(dist.entries.size());
  sq += empty * mean * mean;
  const double sigma = std::sqrt(sq / children);
  const double o = static_cast<double>(overflowed) / children;
  return proximity + alpha * std::exp(-(1.0 + o) * sigma);
}

namespace {

struct PlanSearch {
  const SegmentStats& stats;
  const SplitParams& params;
  FanoutRange range;
  std::unordered_set<std::uint32_t> visited;
  SplitPlan best{{}, -kInf};

  void consider(const SizeDistribution& dist) {
    const double s = score_plan(dist, stats, params.leaf_capacity, params.alpha);
    if (s > best.score || (s == best.score && dist.plan < best.segments)) {
      best.segments = dist.plan;
      best.score = s;
    }
  }

  // Depth-first over the subset lattice: every `lambda`-subset of the parent
  // plan, then each of its subsets one size smaller.
  void descend(const SizeDistribution& parent, int lambda) {
    if (lambda < range.min) return;
    const std::size_t len = parent.plan.size();
    const auto k = static_cast<std::size_t>(lambda);
    if (k > len) return;
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    std::vector<std::uint8_t> combo(k);
    while (true) {
      for (std::size_t i = 0; i < k; ++i) combo[i] = parent.plan[idx[i]];
      if (visited.insert(plan_mask(combo)).second) {
        const SizeDistribution dist = project_distribution(parent, combo);
        consider(dist);
        descend(dist, lambda - 1);
      }
      // Next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == len - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
};

}  // namespace

SplitPlan find_optimal_plan(const SaxSet& sax_words, const IsaxWord& node,
                            const SplitParams& params) {
  const auto promotable = promotable_segments(node, params.bits);
  const FanoutRange range =
      effective_fanout_range(sax_words.size(), params, node.size(), promotable.size());
  const SegmentStats stats = segment_variances(sax_words, node, params.bits);
  const SizeDistribution base = base_distribution(sax_words, node, params.bits);
  PlanSearch search{stats, params, range, {}, {}};
  search.best.score = -kInf;
  search.descend(base, range.max);
  return search.best;
}

SplitPlan binary_baseline_plan(const SaxSet& sax_words, const IsaxWord& node, int bits) {
  const auto promotable = promotable_segments(node, bits);
  if (promotable.empty()) throw UnsplittableNode("every segment is at full cardinality");
  std::vector<std::uint64_t> ones(node.size(), 0);
  for (std::size_t r = 0; r < sax_words.size(); ++r) {
    const auto sax = sax_words[r];
    for (auto seg : promotable) ones[seg] += (sax[seg] >> (bits - node[seg].bits - 1)) & 1u;
  }
  const auto total = static_cast<std::int64_t>(sax_words.size());
  std::uint8_t best_seg = promotable.front();
  std::int64_t best_gap = -1;
  for (auto seg : promotable) {
    const auto one = static_cast<std::int64_t>(ones[seg]);
    const std::int64_t gap = std::abs(total - 2 * one);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best_seg = seg;
    }
  }
  return SplitPlan{{best_seg}, -static_cast<double>(best_gap)};
}

}  // namespace dsidx
