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
#include <string>

namespace dsidx {

/// How a full non-root node picks its split segments.
enum class SplitStrategy : std::uint8_t {
  kAdaptive = 0,  ///< proximity/compactness objective over segment subsets
  kBinary = 1,    ///< one segment, most balanced next-bit split
};

std::string to_string(SplitStrategy s);
SplitStrategy parse_split_strategy(const std::string& s);

/// Every tunable of an index build.
struct BuildConfig {
  std::size_t series_length = 256;   ///< n
  std::size_t segments = 16;         ///< w
  int bits = 8;                      ///< b, cardinality 2^b
  std::uint64_t leaf_capacity = 10000;  ///< th
  double fill_low = 0.5;             ///< F_l
  double fill_high = 3.0;            ///< F_r
  double alpha = 0.2;
  double rho = 0.5;                  ///< demotion ratio of leaf packs
  double small_node = 1.0;           ///< r: children below r*th are packed
  std::optional<double> fuzzy;       ///< f, enables boundary duplication
  std::uint32_t max_duplications = 3;
  std::uint64_t buffer_series = 1u << 20;  ///< B
  std::uint64_t rng_seed = 42;
  SplitStrategy strategy = SplitStrategy::kAdaptive;
  bool packing = true;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;

  bool operator==(const BuildConfig&) const = default;
};

}  // namespace dsidx
