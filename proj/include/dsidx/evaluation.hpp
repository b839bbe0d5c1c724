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
#include <string>
#include <vector>

#include "dsidx/config.hpp"
#include "dsidx/query.hpp"
#include "dsidx/series_io.hpp"

namespace dsidx {

/// `count` z-normalized random walks of length n (cumulative N(0,1) steps),
/// series-major. Deterministic per seed.
std::vector<float> generate_random_walk(std::size_t count, std::size_t n, std::uint64_t seed);
void generate_random_walk_file(const fs::path& path, std::size_t count, std::size_t n,
                               std::uint64_t seed);
/// Query walks from a stream disjoint from generate_random_walk's for any seed.
std::vector<float> generate_queries(std::size_t count, std::size_t n, std::uint64_t seed);

/// Exhaustive kNN, ties broken by ascending ordinal.
std::vector<Neighbor> brute_force_knn(const Dataset& data, std::span<const float> query,
                                      std::size_t k, DistanceKind kind, std::size_t window);

using ResultLists = std::vector<std::vector<Neighbor>>;

/// Mean average precision. A returned item is relevant when its ordinal is in
/// the true list or its distance ties the true k-th distance (1e-6 relative).
double map_score(const ResultLists& results, const ResultLists& truth, std::size_t k);
/// Mean fraction of the k true neighbors returned (same relevance rule).
double average_recall(const ResultLists& results, const ResultLists& truth, std::size_t k);

struct ErrorRatio {
  double value = 1.0;
  std::size_t used = 0;      ///< queries averaged
  std::size_t excluded = 0;  ///< zero true distance against a positive answer, or short lists
};

/// Mean over queries of (1/k) * sum_i returned_i / true_i.
ErrorRatio avg_error_ratio(const ResultLists& results, const ResultLists& truth, std::size_t k);

struct BenchConfig {
  BuildConfig build;
  fs::path dataset;
  fs::path workdir;
  std::vector<float> queries;  ///< series-major
  std::size_t k = 50;
  DistanceKind kind = DistanceKind::kEd;
  std::size_t window = 0;      ///< DTW band, 0 means n/10
  double fuzzy = 0.1;
  std::vector<std::size_t> budgets{1, 2, 3, 5, 10, 15, 20, 25};
  bool run_exact = true;
};

struct BudgetPoint {
  std::size_t nbr = 0;
  double map = 0.0;
  double error_ratio = 1.0;
  double mean_query_ms = 0.0;
  double mean_leaves = 0.0;
};

struct VariantReport {
  std::string name;
  double build_seconds = 0.0;
  IndexStats stats;
  double recomputed_fill_factor = 0.0;
  std::uint64_t duplicates = 0;
  double mean_finite_upper_bound = 0.0;
  std::uint64_t unbounded_leaves = 0;
  std::vector<BudgetPoint> sweep;
  double exact_pruning_ratio = 0.0;
  double exact_query_ms = 0.0;
  bool exact_matches_truth = true;
};

struct BenchReport {
  std::size_t series = 0;
  std::size_t queries = 0;
  std::size_t k = 0;
  DistanceKind kind = DistanceKind::kEd;
  std::vector<VariantReport> variants;
  std::vector<std::string> notes;
};

/// Builds the adaptive, adaptive+fuzzy and binary-split variants of the same
/// dataset and measures each against brute-force ground truth.
BenchReport run_benchmark(const BenchConfig& cfg);

/// One JSON object per line: a header, then one per (variant, budget).
std::string report_json_lines(const BenchReport& report);
std::string report_table(const BenchReport& report);

}  // namespace dsidx
