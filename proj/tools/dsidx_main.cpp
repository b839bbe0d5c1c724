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

// dsidx command-line entry point.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dsidx/builder.hpp"
#include "dsidx/errors.hpp"
#include "dsidx/evaluation.hpp"
#include "dsidx/query.hpp"
#include "dsidx/updates.hpp"

namespace {

using namespace dsidx;

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kFormat = 4,
  kNotFound = 5,
  kInternal = 6,
};

struct BuildFlags {
  BuildConfig cfg;
  std::optional<double> fuzzy;
  std::string strategy = "adaptive";
  bool no_packing = false;

  void attach(CLI::App* app) {
    app->add_option("--length", cfg.series_length, "series length n");
    app->add_option("--width", cfg.segments, "PAA segments w");
    app->add_option("--bits", cfg.bits, "bits per SAX symbol b");
    app->add_option("--threshold", cfg.leaf_capacity, "leaf capacity th");
    app->add_option("--fill-low", cfg.fill_low, "lower fill factor F_l");
    app->add_option("--fill-high", cfg.fill_high, "upper fill factor F_r");
    app->add_option("--alpha", cfg.alpha, "weight of the compactness term");
    app->add_option("--rho", cfg.rho, "demotion ratio of leaf packs");
    app->add_option("--small-node", cfg.small_node, "children below this times th are packed");
    app->add_option("--fuzzy", fuzzy, "boundary duplication fraction f in (0,1)");
    app->add_option("--max-dup", cfg.max_duplications, "duplicates per series");
    app->add_option("--buffer", cfg.buffer_series, "series buffered before a flush");
    app->add_option("--seed", cfg.rng_seed, "seed of every randomized step");
    app->add_option("--strategy", strategy, "adaptive or binary");
    app->add_flag("--no-packing", no_packing, "keep small leaves unpacked");
  }

  BuildConfig resolve() const {
    BuildConfig out = cfg;
    out.fuzzy = fuzzy;
    out.strategy = parse_split_strategy(strategy);
    out.packing = !no_packing;
    out.validate();
    return out;
  }
};

struct SearchFlags {
  std::size_t k = 1;
  std::string distance = "ed";
  std::optional<std::size_t> window;

  void attach(CLI::App* app) {
    app->add_option("-k", k, "neighbors per query");
    app->add_option("--distance", distance, "ed or dtw");
    app->add_option("--window", window, "DTW band half-width (default n/10)");
  }

  QueryOptions resolve() const {
    QueryOptions opts;
    opts.k = k;
    opts.kind = parse_distance_kind(distance);
    opts.window = window;
    if (k == 0) throw ConfigError("-k must be at least 1");
    return opts;
  }
};

void print_results(std::size_t q, const std::vector<Neighbor>& result) {
  for (std::size_t r = 0; r < result.size(); ++r) {
    std::printf("%zu %zu %llu %.6f\n", q, r + 1,
                static_cast<unsigned long long>(result[r].ordinal), result[r].distance);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"dsidx: disk-resident data series similarity index"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write z-normalized random walks");
  std::size_t gen_count = 0;
  std::size_t gen_length = 256;
  std::uint64_t gen_seed = 42;
  std::string gen_out;
  bool gen_queries = false;
  gen->add_option("--count", gen_count, "number of series")->required();
  gen->add_option("--length", gen_length, "series length");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output file")->required();
  gen->add_flag("--queries", gen_queries, "draw from the query stream of the seed");

  // build
  auto* build = app.add_subcommand("build", "build an index over a dataset file");
  BuildFlags build_flags;
  std::string build_data, build_index_dir;
  build->add_option("--data", build_data, "dataset file")->required()->check(CLI::ExistingFile);
  build->add_option("--index", build_index_dir, "index directory")->required();
  build_flags.attach(build);

  // query / exact
  auto* query = app.add_subcommand("query", "approximate kNN over a node budget");
  auto* exact = app.add_subcommand("exact", "exact kNN");
  std::string q_index, q_file;
  std::size_t q_nodes = 1;
  SearchFlags q_flags;
  for (auto* sub : {query, exact}) {
    sub->add_option("--index", q_index, "index directory")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--queries", q_file, "query file")->required()->check(CLI::ExistingFile);
    q_flags.attach(sub);
  }
  query->add_option("--nodes", q_nodes, "leaves to visit");

  // brute
  auto* brute = app.add_subcommand("brute", "exhaustive kNN over a dataset file");
  std::string b_data;
  std::size_t b_length = 256;
  brute->add_option("--data", b_data, "dataset file")->required()->check(CLI::ExistingFile);
  brute->add_option("--queries", q_file, "query file")->required()->check(CLI::ExistingFile);
  brute->add_option("--length", b_length, "series length");
  q_flags.attach(brute);

  // stats
  auto* stats = app.add_subcommand("stats", "index statistics and leaf bound histogram");
  std::string s_index;
  std::size_t s_buckets = 20;
  stats->add_option("--index", s_index, "index directory")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--buckets", s_buckets, "histogram buckets");

  // bench
  auto* bench = app.add_subcommand("bench", "compare index variants against brute force");
  BuildFlags bench_flags;
  std::string bench_data, bench_queries, bench_work, bench_json;
  std::size_t bench_k = 50;
  std::string bench_distance = "ed";
  std::size_t bench_window = 0;
  bench->add_option("--data", bench_data, "dataset file")->required()->check(CLI::ExistingFile);
  bench->add_option("--queries", bench_queries, "query file")->required()->check(CLI::ExistingFile);
  bench->add_option("--workdir", bench_work, "scratch directory for the indexes")->required();
  bench->add_option("--json", bench_json, "write line-delimited JSON records here");
  bench->add_option("-k", bench_k, "neighbors per query");
  bench->add_option("--distance", bench_distance, "ed or dtw");
  bench->add_option("--window", bench_window, "DTW band half-width (default n/10)");
  bench_flags.attach(bench);

  // insert / delete
  auto* insert = app.add_subcommand("insert", "insert every series of a file");
  std::string u_index, u_file;
  insert->add_option("--index", u_index, "index directory")->required()->check(CLI::ExistingDirectory);
  insert->add_option("--series", u_file, "dataset-format file")->required()->check(CLI::ExistingFile);
  auto* del = app.add_subcommand("delete", "delete by ordinal or by exact series");
  std::optional<std::uint64_t> d_ordinal;
  del->add_option("--index", u_index, "index directory")->required()->check(CLI::ExistingDirectory);
  auto* d_ord_opt = del->add_option("--ordinal", d_ordinal, "dataset ordinal");
  auto* d_ser_opt = del->add_option("--series", u_file, "dataset-format file of series to delete")
                        ->check(CLI::ExistingFile);
  d_ord_opt->excludes(d_ser_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*gen) {
    const auto values = gen_queries ? generate_queries(gen_count, gen_length, gen_seed)
                                    : generate_random_walk(gen_count, gen_length, gen_seed);
    write_dataset(gen_out, values);
    std::printf("wrote %zu series of length %zu to %s\n", gen_count, gen_length, gen_out.c_str());
  } else if (*build) {
    const BuildConfig cfg = build_flags.resolve();
    BuildReport report;
    const Index index = build_index(build_data, build_index_dir, cfg, &report);
    for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const auto& s = index.meta().stats;
    std::printf("series %llu\nduplicates %llu\nnodes %llu\nleaves %llu\npacks %llu\n"
                "height %u\nfill_factor %.3f\nbuild_seconds %.3f\n",
                static_cast<unsigned long long>(report.series),
                static_cast<unsigned long long>(report.duplicates),
                static_cast<unsigned long long>(s.node_count),
                static_cast<unsigned long long>(s.leaf_count),
                static_cast<unsigned long long>(s.pack_count), s.height, s.fill_factor,
                report.total_seconds);
  } else if (*query || *exact) {
    const Index index = Index::open(q_index);
    const QueryOptions opts = q_flags.resolve();
    const Dataset queries = Dataset::load(q_file, index.config().series_length);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const KnnResult r = *query ? extended_approx_search(index, queries[q], opts, q_nodes)
                                 : exact_search(index, queries[q], opts);
      print_results(q, r.neighbors);
    }
  } else if (*brute) {
    const QueryOptions opts = q_flags.resolve();
    const Dataset data = Dataset::load(b_data, b_length);
    const Dataset queries = Dataset::load(q_file, b_length);
    const std::size_t window = opts.window.value_or(default_dtw_window(b_length));
    for (std::size_t q = 0; q < queries.size(); ++q) {
      print_results(q, brute_force_knn(data, queries[q], opts.k, opts.kind, window));
    }
  } else if (*stats) {
    const Index index = Index::open(s_index);
    const auto& s = index.meta().stats;
    std::printf("series %llu\nnodes %llu\nleaves %llu\npacks %llu\nheight %u\nfill_factor %.3f\n",
                static_cast<unsigned long long>(index.meta().live_series),
                static_cast<unsigned long long>(s.node_count),
                static_cast<unsigned long long>(s.leaf_count),
                static_cast<unsigned long long>(s.pack_count), s.height, s.fill_factor);
    const auto h = leaf_bound_histogram(index.tree(), index.config().series_length, s_buckets);
    std::printf("upper_bound_finite %llu\nupper_bound_unbounded %llu\nupper_bound_mean %.6f\n",
                static_cast<unsigned long long>(h.finite),
                static_cast<unsigned long long>(h.unbounded), h.mean_finite);
    for (std::size_t i = 0; i < h.buckets.size() && h.finite > 0; ++i) {
      std::printf("bucket [%.4f, %.4f) %llu\n", static_cast<double>(i) * h.bucket_width,
                  static_cast<double>(i + 1) * h.bucket_width,
                  static_cast<unsigned long long>(h.buckets[i]));
    }
  } else if (*bench) {
    BenchConfig cfg;
    cfg.build = bench_flags.resolve();
    cfg.dataset = bench_data;
    cfg.workdir = bench_work;
    const Dataset queries = Dataset::load(bench_queries, cfg.build.series_length);
    cfg.queries.assign(queries.values().begin(), queries.values().end());
    cfg.k = bench_k;
    cfg.kind = parse_distance_kind(bench_distance);
    cfg.window = bench_window;
    if (bench_flags.fuzzy) cfg.fuzzy = *bench_flags.fuzzy;
    const BenchReport report = run_benchmark(cfg);
    if (!bench_json.empty()) {
      std::ofstream out(bench_json, std::ios::trunc);
      if (!out) throw IoError("cannot write " + bench_json);
      out << report_json_lines(report);
    }
    std::fputs(report_table(report).c_str(), stdout);
  } else if (*insert) {
    Index index = Index::open(u_index);
    IndexUpdater updater(index);
    const Dataset series = Dataset::load(u_file, index.config().series_length);
    for (std::size_t i = 0; i < series.size(); ++i) {
      std::printf("inserted %llu\n",
                  static_cast<unsigned long long>(updater.insert_series(series[i])));
    }
    updater.save();
  } else if (*del) {
    Index index = Index::open(u_index);
    IndexUpdater updater(index);
    if (d_ordinal) {
      updater.delete_ordinal(*d_ordinal);
      std::printf("deleted %llu\n", static_cast<unsigned long long>(*d_ordinal));
    } else if (!u_file.empty()) {
      const Dataset series = Dataset::load(u_file, index.config().series_length);
      for (std::size_t i = 0; i < series.size(); ++i) {
        std::printf("deleted %llu\n",
                    static_cast<unsigned long long>(updater.delete_series(series[i])));
      }
    } else {
      throw ConfigError("delete needs --ordinal or --series");
    }
    updater.save();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dsidx::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const dsidx::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const dsidx::NotFoundError& e) {
    std::fprintf(stderr, "not found: %s\n", e.what());
    return kNotFound;
  } catch (const dsidx::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kFormat;
  } catch (const dsidx::CorruptionError& e) {
    std::fprintf(stderr, "corrupt index: %s\n", e.what());
    return kFormat;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
}
