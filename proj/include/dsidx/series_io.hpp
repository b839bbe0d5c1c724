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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace dsidx {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written with native layout");

namespace fs = std::filesystem;

/// Series-major float32 collection held in memory.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t series_length, std::vector<float> values);

  /// Loads a headerless float32 file. Throws FormatError on a size that is
  /// not a whole number of series, IoError when unreadable.
  static Dataset load(const fs::path& path, std::size_t series_length);

  std::size_t size() const { return count_; }
  std::size_t series_length() const { return n_; }
  std::span<const float> operator[](std::size_t i) const {
    return {values_.data() + i * n_, n_};
  }
  std::span<const float> values() const { return values_; }

 private:
  std::size_t n_ = 0;
  std::size_t count_ = 0;
  std::vector<float> values_;
};

/// Streams a dataset file in batches.
class DatasetReader {
 public:
  DatasetReader(const fs::path& path, std::size_t series_length);

  std::uint64_t count() const { return count_; }
  /// Reads up to `max_series` series into `out` (resized); returns how many.
  std::size_t read_batch(std::vector<float>& out, std::size_t max_series);

 private:
  std::ifstream in_;
  std::size_t n_;
  std::uint64_t count_ = 0;
  std::uint64_t consumed_ = 0;
};

/// Overwrites `path` with the given series-major values.
void write_dataset(const fs::path& path, std::span<const float> values);

/// Records of one leaf file: values, SAX word and dataset ordinal per record.
struct LeafBlock {
  std::size_t n = 0;
  std::size_t w = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> sax;
  std::vector<std::uint64_t> ordinals;

  std::size_t size() const { return ordinals.size(); }
  std::span<const float> series(std::size_t i) const { return {values.data() + i * n, n}; }
  std::span<const std::uint8_t> sax_of(std::size_t i) const { return {sax.data() + i * w, w}; }
  void push_back(std::span<const float> v, std::span<const std::uint8_t> s, std::uint64_t ordinal);
};

inline std::size_t record_bytes(std::size_t n, std::size_t w) { return 4 * n + w + 8; }

/// Appends the wire form of one record to `out`.
void encode_record(std::vector<char>& out, std::span<const float> values,
                   std::span<const std::uint8_t> sax, std::uint64_t ordinal);

LeafBlock read_leaf_file(const fs::path& path, std::size_t n, std::size_t w);
void append_to_file(const fs::path& path, std::span<const char> bytes);
/// Overwrites the record at `slot` of an existing leaf file.
void write_record_at(const fs::path& path, std::uint64_t slot, std::span<const char> bytes);
/// Replaces the whole leaf file with `block`.
void write_leaf_file(const fs::path& path, const LeafBlock& block);

/// One bit per record slot of a leaf file; set bits are deleted records.
class DeletionBitVector {
 public:
  DeletionBitVector() = default;
  explicit DeletionBitVector(std::uint64_t size) { resize(size); }

  std::uint64_t size() const { return size_; }
  void resize(std::uint64_t size);
  bool test(std::uint64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::uint64_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::uint64_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  std::uint64_t count() const;
  /// Lowest set position, or size() when none.
  std::uint64_t first_set() const;

  /// Wire form: record count u64, then ceil(size/8) bytes, LSB first.
  std::vector<char> encode() const;
  static DeletionBitVector decode(std::span<const char> bytes);

  bool operator==(const DeletionBitVector&) const = default;

 private:
  std::uint64_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

void write_bitvector(const fs::path& path, const DeletionBitVector& bits);
DeletionBitVector read_bitvector(const fs::path& path);

/// Reads a whole file. Throws IoError.
std::vector<char> read_file(const fs::path& path);
/// Writes via a temporary sibling and rename so readers never see a partial file.
void write_file_atomic(const fs::path& path, std::span<const char> bytes);

}  // namespace dsidx
