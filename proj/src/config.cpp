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

#include "dsidx/config.hpp"

#include <cmath>

#include "dsidx/errors.hpp"
#include "dsidx/summarization.hpp"

namespace dsidx {

std::string to_string(SplitStrategy s) {
  return s == SplitStrategy::kBinary ? "binary" : "adaptive";
}

SplitStrategy parse_split_strategy(const std::string& s) {
  if (s == "adaptive") return SplitStrategy::kAdaptive;
  if (s == "binary") return SplitStrategy::kBinary;
  throw ConfigError("unknown split strategy '" + s + "' (expected adaptive|binary)");
}

void BuildConfig::validate() const {
  if (segments == 0 || segments > kMaxSegments) {
    throw ConfigError("segment count w must lie in [1, 16]");
  }
  if (series_length == 0 || series_length % segments != 0) {
    throw ConfigError("series length n=" + std::to_string(series_length) +
                      " must be a positive multiple of w=" + std::to_string(segments));
  }
  if (bits < 1 || bits > kMaxBits) throw ConfigError("bits per symbol b must lie in [1, 8]");
  if (leaf_capacity < 1) throw ConfigError("leaf capacity th must be at least 1");
  if (!(fill_low > 0.0) || !(fill_low < fill_high) || !std::isfinite(fill_high)) {
    throw ConfigError("fill-factor band requires 0 < F_l < F_r");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("demotion ratio rho must lie in [0, 1]");
  if (!(small_node > 0.0) || !std::isfinite(small_node)) {
    throw ConfigError("small-node threshold r must be positive");
  }
  if (fuzzy && !(*fuzzy > 0.0 && *fuzzy < 1.0)) {
    throw ConfigError("fuzzy boundary fraction f must lie in (0, 1)");
  }
  if (buffer_series < 1) throw ConfigError("buffer must hold at least one series");
}

}  // namespace dsidx
