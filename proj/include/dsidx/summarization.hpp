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
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace dsidx {

/// Stored representation of a data series (z-normalized, float32 on disk).
using Series = std::vector<float>;
/// Segment means of a series.
using PaaVector = std::vector<double>;
/// One full-cardinality symbol per segment.
using SaxWord = std::vector<std::uint8_t>;

inline constexpr int kMaxBits = 8;
inline constexpr std::size_t kMaxSegments = 16;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Closed value interval; either end may be infinite.
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool finite() const { return lo > -kInf && hi < kInf; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Standard-normal quantile thresholds splitting the real line into 2^bits
/// equiprobable regions. Instances are built once per bit width and cached.
class Breakpoints {
 public:
  /// Cached table for `bits` in [0, kMaxBits]. Zero bits has no thresholds.
  static const Breakpoints& for_bits(int bits);

  int bits() const { return bits_; }
  std::uint32_t cardinality() const { return 1u << bits_; }
  std::span<const double> thresholds() const { return thresholds_; }

  /// Region index of `v`. A value equal to a threshold belongs to the upper region.
  std::uint8_t symbol_of(double v) const;

  /// Value range of region `symbol`; the outermost regions are unbounded.
  Interval region(std::uint32_t symbol) const;

  /// Stand-in for +/-infinity when a finite edge is needed for an outer
  /// region: the outermost finite threshold plus the mean finite-region width,
  /// measured at cardinality 2^max(bits, 2).
  static double pseudo_bound(int bits);

 private:
  explicit Breakpoints(int bits);

  int bits_ = 0;
  std::vector<double> thresholds_;
};

/// One iSAX segment: the leading `bits` bits of a full symbol. `bits == 0` is
/// the wildcard covering the whole real line.
struct IsaxSymbol {
  std::uint8_t prefix = 0;
  std::uint8_t bits = 0;

  bool operator==(const IsaxSymbol&) const = default;
};

/// Variable-cardinality summary of a region of SAX space.
class IsaxWord {
 public:
  IsaxWord() = default;
  /// All-wildcard word over `segments` segments.
  explicit IsaxWord(std::size_t segments) : symbols_(segments) {}
  explicit IsaxWord(std::vector<IsaxSymbol> symbols) : symbols_(std::move(symbols)) {}

  /// The exact word of a full-cardinality SAX word.
  static IsaxWord from_sax(std::span<const std::uint8_t> sax, int bits);

  std::size_t size() const { return symbols_.size(); }
  const IsaxSymbol& operator[](std::size_t i) const { return symbols_[i]; }
  IsaxSymbol& operator[](std::size_t i) { return symbols_[i]; }
  const std::vector<IsaxSymbol>& symbols() const { return symbols_; }

  /// True when every segment prefix matches the leading bits of `sax`.
  bool covers(std::span<const std::uint8_t> sax, int bits) const;
  /// True when this word's region contains `other`'s region.
  bool covers(const IsaxWord& other) const;

  Interval region(std::size_t segment) const;

  /// Copy with `segment` refined by one bit.
  IsaxWord promoted(std::size_t segment, unsigned bit) const;

  bool operator==(const IsaxWord&) const = default;

 private:
  std::vector<IsaxSymbol> symbols_;
};

/// Z-normalizes with the population standard deviation. Constant input maps
/// to all zeros. Throws ConfigError on empty input.
Series z_normalize(std::span<const float> raw);
Series z_normalize(std::span<const double> raw);

/// Segment means. Throws ConfigError when `segments` is zero, exceeds the
/// series length, or does not divide it.
PaaVector compute_paa(std::span<const float> series, std::size_t segments);
PaaVector compute_paa(std::span<const double> series, std::size_t segments);

SaxWord paa_to_sax(std::span<const double> paa, const Breakpoints& breakpoints);

/// iSAX mindist between a region and a query PAA, in raw Euclidean units.
double lower_bound_ed(const IsaxWord& node, std::span<const double> query_paa,
                      std::size_t series_length);

/// Sakoe-Chiba envelope of a query together with the PAA of both bounds.
struct DtwEnvelope {
  std::vector<double> upper;
  std::vector<double> lower;
  PaaVector upper_paa;
  PaaVector lower_paa;
  std::size_t window = 0;
};

/// Throws ConfigError when `window >= series.size()`.
DtwEnvelope make_envelope(std::span<const float> query, std::size_t window,
                          std::size_t segments);

/// Lower bound of DTW between the query and any series inside `node`.
double lower_bound_dtw(const IsaxWord& node, std::span<const float> query,
                       std::size_t window);
double lower_bound_dtw(const IsaxWord& node, const DtwEnvelope& envelope);

/// LB_Keogh of one candidate against a query envelope (raw distance units).
/// Stops accumulating once the squared sum exceeds `abandon_sq`.
double lb_keogh_sq(const DtwEnvelope& envelope, std::span<const float> candidate,
                   double abandon_sq = kInf);

/// Squared Euclidean distance with early abandoning above `abandon_sq`.
double squared_euclidean(std::span<const float> a, std::span<const float> b,
                         double abandon_sq = kInf);
double euclidean(std::span<const float> a, std::span<const float> b);

/// Banded DTW with squared point cost, returned as the square root of the
/// optimal path cost. `window` is clamped to n-1; zero gives ED. When every
/// cell of a row exceeds `abandon_sq` the computation stops and returns kInf.
double dtw_distance(std::span<const float> a, std::span<const float> b,
                    std::size_t window, double abandon_sq = kInf);

/// Distance at which query and neighbour sit on opposite region edges of every
/// segment; nullopt when any segment region is unbounded.
std::optional<double> leaf_upper_bound(const IsaxWord& node, std::size_t series_length);

/// Default warping band: 10% of the series length.
inline std::size_t default_dtw_window(std::size_t series_length) {
  return series_length / 10;
}

}  // namespace dsidx
