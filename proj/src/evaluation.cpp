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

#include "dsidx/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "dsidx/builder.hpp"
#include "dsidx/errors.hpp"

namespace dsidx {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<float> walks(std::mt19937_64& gen, std::size_t count, std::size_t n) {
  if (count == 0 || n == 0) throw ConfigError("count and series length must be positive");
  std::normal_distribution<double> step(0.0, 1.0);
  std::vector<float> out;
  out.reserve(count * n);
  std::vector<double> walk(n);
  for (std::size_t s = 0; s < count; ++s) {
    double x = 0.0;
    for (auto& v : walk) v = x += step(gen);
    const Series z = z_normalize(std::span<const double>(walk));
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

bool by_distance(const Neighbor& a, const Neighbor& b) {
  return std::tie(a.distance, a.ordinal) < std::tie(b.distance, b.ordinal);
}

void check_aligned(const ResultLists& results, const ResultLists& truth, std::size_t k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (results.size() != truth.size()) {
    throw ConfigError("result and ground-truth query counts differ");
  }
  for (std::size_t q = 0; q < truth.size(); ++q) {
    if (truth[q].size() > k || results[q].size() > k) {
      throw ConfigError("result list longer than k = " + std::to_string(k));
    }
  }
}

// Relevance of each returned item against one true list.
std::vector<bool> relevance(const std::vector<Neighbor>& result,
                            const std::vector<Neighbor>& truth) {
  std::vector<bool> rel(result.size(), false);
  if (truth.empty()) return rel;
  const double kth = truth.back().distance;
  for (std::size_t i = 0; i < result.size(); ++i) {
    const bool member = std::any_of(truth.begin(), truth.end(), [&](const Neighbor& t) {
      return t.ordinal == result[i].ordinal;
    });
    rel[i] = member || result[i].distance <= kth * (1.0 + 1e-6);
  }
  return rel;
}

}  // namespace

std::vector<float> generate_random_walk(std::size_t count, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return walks(gen, count, n);
}

void generate_random_walk_file(const fs::path& path, std::size_t count, std::size_t n,
                               std::uint64_t seed) {
  write_dataset(path, generate_random_walk(count, n, seed));
}

std::vector<float> generate_queries(std::size_t count, std::size_t n, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x51ED270Bu};
  std::mt19937_64 gen(seq);
  return walks(gen, count, n);
}

std::vector<Neighbor> brute_force_knn(const Dataset& data, std::span<const float> query,
                                      std::size_t k, DistanceKind kind, std::size_t window) {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (query.size() != data.series_length()) throw ConfigError("query length mismatch");
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double kth = best.size() == k ? best.front().distance : kInf;
    const double abandon = std::isinf(kth) ? kInf : kth * kth * (1.0 + 1e-9) + 1e-300;
    double d;
    if (kind == DistanceKind::kEd) {
      const double sq = squared_euclidean(query, data[i], abandon);
      d = std::isinf(sq) ? kInf : std::sqrt(sq);
    } else {
      d = dtw_distance(query, data[i], window, abandon);
    }
    if (std::isinf(d)) continue;
    const Neighbor cand{i, d};
    if (best.size() == k) {
      if (!by_distance(cand, best.front())) continue;
      std::pop_heap(best.begin(), best.end(), by_distance);
      best.pop_back();
    }
    best.push_back(cand);
    std::push_heap(best.begin(), best.end(), by_distance);
  }
  std::sort(best.begin(), best.end(), by_distance);
  return best;
}

double map_score(const ResultLists& results, const ResultLists& truth, std::size_t k) {
  check_aligned(results, truth, k);
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const auto rel = relevance(results[q], truth[q]);
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rel.size(); ++i) {
      if (!rel[i]) continue;
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    total += ap / static_cast<double>(k);
  }
  return total / static_cast<double>(truth.size());
}

double average_recall(const ResultLists& results, const ResultLists& truth, std::size_t k) {
  check_aligned(results, truth, k);
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const auto rel = relevance(results[q], truth[q]);
    total += static_cast<double>(std::count(rel.begin(), rel.end(), true)) /
             static_cast<double>(k);
  }
  return total / static_cast<double>(truth.size());
}

ErrorRatio avg_error_ratio(const ResultLists& results, const ResultLists& truth, std::size_t k) {
  check_aligned(results, truth, k);
  ErrorRatio out;
  double total = 0.0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    if (results[q].size() < k || truth[q].size() < k) {
      ++out.excluded;
      continue;
    }
    double sum = 0.0;
    bool excluded = false;
    for (std::size_t i = 0; i < k; ++i) {
      const double a = results[q][i].distance;
      const double r = truth[q][i].distance;
      if (r == 0.0) {
        if (a != 0.0) {
          excluded = true;
          break;
        }
        sum += 1.0;
      } else {
        sum += a / r;
      }
    }
    if (excluded) {
      ++out.excluded;
      continue;
    }
    total += sum / static_cast<double>(k);
    ++out.used;
  }
  out.value = out.used ? total / static_cast<double>(out.used) : 1.0;
  return out;
}

BenchReport run_benchmark(const BenchConfig& cfg) {
  const std::size_t n = cfg.build.series_length;
  const Dataset data = Dataset::load(cfg.dataset, n);
  if (cfg.queries.empty() || cfg.queries.size() % n != 0) {
    throw ConfigError("benchmark needs at least one query of length n");
  }
  const std::size_t nq = cfg.queries.size() / n;
  const std::size_t window = cfg.window ? cfg.window : default_dtw_window(n);
  auto query = [&](std::size_t q) { return std::span<const float>(cfg.queries).subspan(q * n, n); };

  BenchReport report;
  report.series = data.size();
  report.queries = nq;
  report.k = cfg.k;
  report.kind = cfg.kind;

  ResultLists truth(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    truth[q] = brute_force_knn(data, query(q), cfg.k, cfg.kind, window);
  }

  struct Variant {
    std::string name;
    BuildConfig build;
  };
  std::vector<Variant> variants;
  {
    BuildConfig plain = cfg.build;
    plain.strategy = SplitStrategy::kAdaptive;
    plain.fuzzy.reset();
    variants.push_back({"adaptive", plain});
    BuildConfig fuzzy = plain;
    fuzzy.fuzzy = cfg.fuzzy;
    variants.push_back({"adaptive+fuzzy", fuzzy});
    BuildConfig binary = plain;
    binary.strategy = SplitStrategy::kBinary;
    binary.packing = false;
    variants.push_back({"binary", binary});
  }

  QueryOptions opts;
  opts.k = cfg.k;
  opts.kind = cfg.kind;
  opts.window = window;

  for (const auto& v : variants) {
    VariantReport vr;
    vr.name = v.name;
    BuildReport br;
    const Index index = build_index(cfg.dataset, cfg.workdir / v.name, v.build, &br);
    vr.build_seconds = br.total_seconds;
    vr.duplicates = br.duplicates;
    vr.stats = index.meta().stats;
    vr.recomputed_fill_factor =
        index_stats(index.tree(), v.build.leaf_capacity, data.size()).fill_factor;
    const auto hist = leaf_bound_histogram(index.tree(), n);
    vr.mean_finite_upper_bound = hist.mean_finite;
    vr.unbounded_leaves = hist.unbounded;

    for (std::size_t nbr : cfg.budgets) {
      ResultLists res(nq);
      double leaves = 0.0;
      const auto t0 = Clock::now();
      for (std::size_t q = 0; q < nq; ++q) {
        const KnnResult r = extended_approx_search(index, query(q), opts, nbr);
        res[q] = r.neighbors;
        leaves += static_cast<double>(r.leaves_visited);
      }
      BudgetPoint p;
      p.nbr = nbr;
      p.mean_query_ms = ms_since(t0) / static_cast<double>(nq);
      p.mean_leaves = leaves / static_cast<double>(nq);
      p.map = map_score(res, truth, cfg.k);
      p.error_ratio = avg_error_ratio(res, truth, cfg.k).value;
      vr.sweep.push_back(p);
    }

    if (cfg.run_exact) {
      double pruning = 0.0;
      const auto t0 = Clock::now();
      for (std::size_t q = 0; q < nq; ++q) {
        const KnnResult r = exact_search(index, query(q), opts);
        pruning += r.pruning_ratio();
        if (r.neighbors.size() != truth[q].size()) {
          vr.exact_matches_truth = false;
          continue;
        }
        for (std::size_t i = 0; i < r.neighbors.size(); ++i) {
          if (r.neighbors[i].ordinal != truth[q][i].ordinal) vr.exact_matches_truth = false;
        }
      }
      vr.exact_query_ms = ms_since(t0) / static_cast<double>(nq);
      vr.exact_pruning_ratio = pruning / static_cast<double>(nq);
      if (!vr.exact_matches_truth) {
        report.notes.push_back(v.name + ": exact search disagrees with brute force");
      }
    }
    report.variants.push_back(std::move(vr));
  }

  const auto ed = avg_error_ratio(truth, truth, cfg.k);
  if (ed.excluded) {
    report.notes.push_back(std::to_string(ed.excluded) +
                           " queries excluded from error ratios (zero true distance)");
  }
  return report;
}

std::string report_json_lines(const BenchReport& report) {
  using nlohmann::json;
  std::ostringstream out;
  out << json{{"record", "header"},
              {"series", report.series},
              {"queries", report.queries},
              {"k", report.k},
              {"distance", to_string(report.kind)},
              {"notes", report.notes}}
             .dump()
      << '\n';
  for (const auto& v : report.variants) {
    out << json{{"record", "variant"},
                {"variant", v.name},
                {"build_seconds", v.build_seconds},
                {"nodes", v.stats.node_count},
                {"leaves", v.stats.leaf_count},
                {"packs", v.stats.pack_count},
                {"height", v.stats.height},
                {"fill_factor", v.stats.fill_factor},
                {"fill_factor_recomputed", v.recomputed_fill_factor},
                {"duplicates", v.duplicates},
                {"mean_finite_upper_bound", v.mean_finite_upper_bound},
                {"unbounded_leaves", v.unbounded_leaves},
                {"exact_pruning_ratio", v.exact_pruning_ratio},
                {"exact_query_ms", v.exact_query_ms},
                {"exact_matches_truth", v.exact_matches_truth}}
               .dump()
        << '\n';
    for (const auto& p : v.sweep) {
      out << json{{"record", "budget"},       {"variant", v.name},
                  {"nbr", p.nbr},             {"map", p.map},
                  {"error_ratio", p.error_ratio}, {"mean_query_ms", p.mean_query_ms},
                  {"mean_leaves", p.mean_leaves}}
                 .dump()
          << '\n';
    }
  }
  return out.str();
}

std::string report_table(const BenchReport& report) {
  std::ostringstream out;
  out << std::fixed;
  out << report.series << " series, " << report.queries << " queries, k = " << report.k
      << ", distance " << to_string(report.kind) << "\n\n";
  out << std::left << std::setw(16) << "variant" << std::right << std::setw(10) << "build s"
      << std::setw(8) << "leaves" << std::setw(7) << "packs" << std::setw(7) << "height"
      << std::setw(8) << "fill" << std::setw(8) << "dups" << std::setw(10) << "mean UB"
      << std::setw(9) << "pruning" << std::setw(10) << "exact ms" << '\n';
  for (const auto& v : report.variants) {
    out << std::left << std::setw(16) << v.name << std::right << std::setprecision(2)
        << std::setw(10) << v.build_seconds << std::setw(8) << v.stats.leaf_count << std::setw(7)
        << v.stats.pack_count << std::setw(7) << v.stats.height << std::setprecision(3)
        << std::setw(8) << v.stats.fill_factor << std::setw(8) << v.duplicates
        << std::setw(10) << v.mean_finite_upper_bound << std::setw(9) << v.exact_pruning_ratio
        << std::setprecision(2) << std::setw(10) << v.exact_query_ms << '\n';
  }
  out << "\nMAP by node budget\n" << std::left << std::setw(16) << "variant" << std::right;
  if (!report.variants.empty()) {
    for (const auto& p : report.variants.front().sweep) out << std::setw(8) << p.nbr;
  }
  out << '\n';
  for (const auto& v : report.variants) {
    out << std::left << std::setw(16) << v.name << std::right << std::setprecision(3);
    for (const auto& p : v.sweep) out << std::setw(8) << p.map;
    out << '\n';
  }
  out << "\nerror ratio by node budget\n";
  for (const auto& v : report.variants) {
    out << std::left << std::setw(16) << v.name << std::right << std::setprecision(3);
    for (const auto& p : v.sweep) out << std::setw(8) << p.error_ratio;
    out << '\n';
  }
  for (const auto& note : report.notes) out << "note: " << note << '\n';
  return out.str();
}

}  // namespace dsidx
