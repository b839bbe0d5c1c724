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

#include "dsidx/summarization.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "dsidx/errors.hpp"

namespace dsidx {

Breakpoints::Breakpoints(int bits) : bits_(bits) {
  const boost::math::normal standard;
  const std::uint32_t c = cardinality();
  thresholds_.resize(c - 1);
  // Lower half from the quantile function, upper half mirrored so the table
  // is exactly symmetric about zero.
  for (std::uint32_t j = 1; j < c; ++j) {
    const double p = static_cast<double>(j) / c;
    if (2 * j < c) {
      thresholds_[j - 1] = boost::math::quantile(standard, p);
    } else if (2 * j == c) {
      thresholds_[j - 1] = 0.0;
    } else {
      thresholds_[j - 1] = -boost::math::quantile(standard, static_cast<double>(c - j) / c);
    }
  }
}

const Breakpoints& Breakpoints::for_bits(int bits) {
  static const std::array<Breakpoints, kMaxBits + 1> cache = [] {
    return std::array<Breakpoints, kMaxBits + 1>{
        Breakpoints(0), Breakpoints(1), Breakpoints(2), Breakpoints(3), Breakpoints(4),
        Breakpoints(5), Breakpoints(6), Breakpoints(7), Breakpoints(8)};
  }();
  if (bits < 0 || bits > kMaxBits) {
    throw ConfigError("bits per symbol must lie in [0, 8], got " + std::to_string(bits));
  }
  return cache[static_cast<std::size_t>(bits)];
}

std::uint8_t Breakpoints::symbol_of(double v) const {
  const auto it = std::upper_bound(thresholds_.begin(), thresholds_.end(), v);
  return static_cast<std::uint8_t>(it - thresholds_.begin());
}

Interval Breakpoints::region(std::uint32_t symbol) const {
  Interval out;
  if (symbol > 0) out.lo = thresholds_[symbol - 1];
  if (symbol + 1 < cardinality()) out.hi = thresholds_[symbol];
  return out;
}

double Breakpoints::pseudo_bound(int bits) {
  const auto& bp = for_bits(std::max(bits, 2));
  const auto t = bp.thresholds();
  const double mean_width = (t.back() - t.front()) / static_cast<double>(bp.cardinality() - 2);
  return t.back() + mean_width;
}

IsaxWord IsaxWord::from_sax(std::span<const std::uint8_t> sax, int bits) {
  std::vector<IsaxSymbol> symbols(sax.size());
  for (std::size_t i = 0; i < sax.size(); ++i) {
    symbols[i] = {sax[i], static_cast<std::uint8_t>(bits)};
  }
  return IsaxWord(std::move(symbols));
}

bool IsaxWord::covers(std::span<const std::uint8_t> sax, int bits) const {
  if (sax.size() != symbols_.size()) return false;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto& s = symbols_[i];
    if (s.bits == 0) continue;
    if ((sax[i] >> (bits - s.bits)) != s.prefix) return false;
  }
  return true;
}

bool IsaxWord::covers(const IsaxWord& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto& mine = symbols_[i];
    const auto& theirs = other.symbols_[i];
    if (mine.bits > theirs.bits) return false;
    if ((theirs.prefix >> (theirs.bits - mine.bits)) != mine.prefix) return false;
  }
  return true;
}

Interval IsaxWord::region(std::size_t segment) const {
  const auto& s = symbols_[segment];
  return Breakpoints::for_bits(s.bits).region(s.prefix);
}

IsaxWord IsaxWord::promoted(std::size_t segment, unsigned bit) const {
  IsaxWord out = *this;
  auto& s = out.symbols_[segment];
  s.prefix = static_cast<std::uint8_t>((s.prefix << 1) | (bit & 1u));
  s.bits = static_cast<std::uint8_t>(s.bits + 1);
  return out;
}

namespace {

template <typename T>
Series z_normalize_impl(std::span<const T> raw) {
  if (raw.empty()) throw ConfigError("cannot z-normalize an empty series");
  double mean = 0.0;
  for (T v : raw) mean += static_cast<double>(v);
  mean /= static_cast<double>(raw.size());
  double var = 0.0;
  for (T v : raw) {
    const double d = static_cast<double>(v) - mean;
    var += d * d;
  }
  var /= static_cast<double>(raw.size());
  const double sd = std::sqrt(var);
  Series out(raw.size(), 0.0f);
  // Constant series: zeros.
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(raw[i]) - mean) / sd);
  }
  return out;
}

template <typename T>
PaaVector compute_paa_impl(std::span<const T> series, std::size_t segments) {
  if (segments == 0 || segments > series.size() || series.size() % segments != 0) {
    throw ConfigError("series length " + std::to_string(series.size()) +
                      " is not divisible into " + std::to_string(segments) + " segments");
  }
  const std::size_t len = series.size() / segments;
  PaaVector paa(segments);
  for (std::size_t s = 0; s < segments; ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += static_cast<double>(series[s * len + i]);
    paa[s] = sum / static_cast<double>(len);
  }
  return paa;
}

inline double gap_to(const Interval& r, double v) {
  if (v < r.lo) return r.lo - v;
  if (v > r.hi) return v - r.hi;
  return 0.0;
}

}  // namespace

Series z_normalize(std::span<const float> raw) { return z_normalize_impl(raw); }
Series z_normalize(std::span<const double> raw) { return z_normalize_impl(raw); }

PaaVector compute_paa(std::span<const float> series, std::size_t segments) {
  return compute_paa_impl(series, segments);
}
PaaVector compute_paa(std::span<const double> series, std::size_t segments) {
  return compute_paa_impl(series, segments);
}

SaxWord paa_to_sax(std::span<const double> paa, const Breakpoints& breakpoints) {
  SaxWord sax(paa.size());
  for (std::size_t i = 0; i < paa.size(); ++i) sax[i] = breakpoints.symbol_of(paa[i]);
  return sax;
}

double lower_bound_ed(const IsaxWord& node, std::span<const double> query_paa,
                      std::size_t series_length) {
  if (node.size() != query_paa.size()) {
    throw ConfigError("iSAX word and query PAA disagree on segment count");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const double g = gap_to(node.region(i), query_paa[i]);
    sum += g * g;
  }
  return std::sqrt(static_cast<double>(series_length) / static_cast<double>(node.size()) * sum);
}

DtwEnvelope make_envelope(std::span<const float> query, std::size_t window,
                          std::size_t segments) {
  const std::size_t n = query.size();
  if (window >= n) {
    throw ConfigError("warping window " + std::to_string(window) +
                      " must be smaller than the series length " + std::to_string(n));
  }
  DtwEnvelope env;
  env.window = window;
  env.upper.resize(n);
  env.lower.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(n - 1, i + window);
    double u = -kInf;
    double l = kInf;
    for (std::size_t j = lo; j <= hi; ++j) {
      u = std::max(u, static_cast<double>(query[j]));
      l = std::min(l, static_cast<double>(query[j]));
    }
    env.upper[i] = u;
    env.lower[i] = l;
  }
  env.upper_paa = compute_paa(std::span<const double>(env.upper), segments);
  env.lower_paa = compute_paa(std::span<const double>(env.lower), segments);
  return env;
}

double lower_bound_dtw(const IsaxWord& node, const DtwEnvelope& envelope) {
  if (node.size() != envelope.upper_paa.size()) {
    throw ConfigError("iSAX word and envelope disagree on segment count");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const Interval r = node.region(i);
    double g = 0.0;
    if (envelope.upper_paa[i] < r.lo) {
      g = r.lo - envelope.upper_paa[i];
    } else if (envelope.lower_paa[i] > r.hi) {
      g = envelope.lower_paa[i] - r.hi;
    }
    sum += g * g;
  }
  const double n = static_cast<double>(envelope.upper.size());
  return std::sqrt(n / static_cast<double>(node.size()) * sum);
}

double lower_bound_dtw(const IsaxWord& node, std::span<const float> query, std::size_t window) {
  return lower_bound_dtw(node, make_envelope(query, window, node.size()));
}

double lb_keogh_sq(const DtwEnvelope& envelope, std::span<const float> candidate,
                   double abandon_sq) {
  double sum = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const double v = candidate[i];
    if (v > envelope.upper[i]) {
      const double d = v - envelope.upper[i];
      sum += d * d;
    } else if (v < envelope.lower[i]) {
      const double d = envelope.lower[i] - v;
      sum += d * d;
    }
    if (sum > abandon_sq) return sum;
  }
  return sum;
}

double squared_euclidean(std::span<const float> a, std::span<const float> b, double abandon_sq) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
    if (sum > abandon_sq) return kInf;
  }
  return sum;
}

double euclidean(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ConfigError("series length mismatch");
  return std::sqrt(squared_euclidean(a, b));
}

double dtw_distance(std::span<const float> a, std::span<const float> b, std::size_t window,
                    double abandon_sq) {
  if (a.size() != b.size()) throw ConfigError("series length mismatch");
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  const std::size_t r = std::min(window, n - 1);
  std::vector<double> prev(n, kInf);
  std::vector<double> curr(n, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    // Cells left over from row i-2 that fall outside row i's band.
    for (std::size_t j = i >= r + 2 ? i - r - 2 : 0; j + r < i; ++j) curr[j] = kInf;
    const std::size_t jlo = i >= r ? i - r : 0;
    const std::size_t jhi = std::min(n - 1, i + r);
    const double ai = a[i];
    double row_min = kInf;
    for (std::size_t j = jlo; j <= jhi; ++j) {
      const double d = ai - static_cast<double>(b[j]);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0) {
          best = std::min(best, prev[j]);
          if (j > 0) best = std::min(best, prev[j - 1]);
        }
        if (j > 0) best = std::min(best, curr[j - 1]);
      }
      curr[j] = d * d + best;
      row_min = std::min(row_min, curr[j]);
    }
    if (row_min > abandon_sq) return kInf;
    std::swap(prev, curr);
  }
  return std::sqrt(prev[n - 1]);
}

std::optional<double> leaf_upper_bound(const IsaxWord& node, std::size_t series_length) {
  double sum = 0.0;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const Interval r = node.region(i);
    if (!r.finite()) return std::nullopt;
    sum += (r.hi - r.lo) * (r.hi - r.lo);
  }
  return std::sqrt(static_cast<double>(series_length) / static_cast<double>(node.size()) * sum);
}

}  // namespace dsidx
