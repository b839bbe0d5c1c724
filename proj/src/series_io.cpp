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

#include "dsidx/series_io.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "dsidx/errors.hpp"

namespace dsidx {

Dataset::Dataset(std::size_t series_length, std::vector<float> values)
    : n_(series_length), values_(std::move(values)) {
  if (n_ == 0 || values_.size() % n_ != 0) {
    throw FormatError("dataset holds a partial series");
  }
  count_ = values_.size() / n_;
}

Dataset Dataset::load(const fs::path& path, std::size_t series_length) {
  DatasetReader reader(path, series_length);
  std::vector<float> values;
  reader.read_batch(values, reader.count());
  return Dataset(series_length, std::move(values));
}

DatasetReader::DatasetReader(const fs::path& path, std::size_t series_length)
    : in_(path, std::ios::binary), n_(series_length) {
  if (!in_) throw IoError("cannot open dataset " + path.string());
  if (n_ == 0) throw ConfigError("series length must be positive");
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat dataset " + path.string() + ": " + ec.message());
  const std::uint64_t per_series = 4ull * n_;
  if (bytes % per_series != 0) {
    throw FormatError("dataset " + path.string() + " has " + std::to_string(bytes) +
                      " bytes, not a multiple of " + std::to_string(per_series));
  }
  count_ = bytes / per_series;
}

std::size_t DatasetReader::read_batch(std::vector<float>& out, std::size_t max_series) {
  const std::uint64_t take = std::min<std::uint64_t>(max_series, count_ - consumed_);
  out.resize(take * n_);
  if (take == 0) return 0;
  in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(take * n_ * 4));
  if (!in_) throw IoError("short read from dataset");
  consumed_ += take;
  return static_cast<std::size_t>(take);
}

void write_dataset(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

void LeafBlock::push_back(std::span<const float> v, std::span<const std::uint8_t> s,
                          std::uint64_t ordinal) {
  values.insert(values.end(), v.begin(), v.end());
  sax.insert(sax.end(), s.begin(), s.end());
  ordinals.push_back(ordinal);
}

void encode_record(std::vector<char>& out, std::span<const float> values,
                   std::span<const std::uint8_t> sax, std::uint64_t ordinal) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * 4 + sax.size() + 8);
  char* p = out.data() + at;
  std::memcpy(p, values.data(), values.size() * 4);
  p += values.size() * 4;
  std::memcpy(p, sax.data(), sax.size());
  p += sax.size();
  std::memcpy(p, &ordinal, 8);
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> buf(size);
  if (size > 0) in.read(buf.data(), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from " + path.string());
  return buf;
}

LeafBlock read_leaf_file(const fs::path& path, std::size_t n, std::size_t w) {
  LeafBlock block;
  block.n = n;
  block.w = w;
  if (!fs::exists(path)) return block;
  const auto buf = read_file(path);
  const std::size_t rb = record_bytes(n, w);
  if (buf.size() % rb != 0) {
    throw FormatError("leaf file " + path.string() + " holds a partial record");
  }
  const std::size_t count = buf.size() / rb;
  block.values.resize(count * n);
  block.sax.resize(count * w);
  block.ordinals.resize(count);
  const char* p = buf.data();
  for (std::size_t i = 0; i < count; ++i) {
    std::memcpy(block.values.data() + i * n, p, n * 4);
    p += n * 4;
    std::memcpy(block.sax.data() + i * w, p, w);
    p += w;
    std::memcpy(&block.ordinals[i], p, 8);
    p += 8;
  }
  return block;
}

void append_to_file(const fs::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open " + path.string() + " for append");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_record_at(const fs::path& path, std::uint64_t slot, std::span<const char> bytes) {
  std::fstream out(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!out) throw IoError("cannot open " + path.string() + " for update");
  out.seekp(static_cast<std::streamoff>(slot * bytes.size()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_leaf_file(const fs::path& path, const LeafBlock& block) {
  std::vector<char> buf;
  buf.reserve(block.size() * record_bytes(block.n, block.w));
  for (std::size_t i = 0; i < block.size(); ++i) {
    encode_record(buf, block.series(i), block.sax_of(i), block.ordinals[i]);
  }
  write_file_atomic(path, buf);
}

void DeletionBitVector::resize(std::uint64_t size) {
  size_ = size;
  words_.resize((size + 63) / 64, 0);
  // Clear bits beyond the logical end so equality and counts stay exact.
  if (size % 64 != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << (size % 64)) - 1;
  }
}

std::uint64_t DeletionBitVector::count() const {
  std::uint64_t c = 0;
  for (auto w : words_) c += static_cast<std::uint64_t>(std::popcount(w));
  return c;
}

std::uint64_t DeletionBitVector::first_set() const {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] != 0) return i * 64 + static_cast<std::uint64_t>(std::countr_zero(words_[i]));
  }
  return size_;
}

std::vector<char> DeletionBitVector::encode() const {
  std::vector<char> out(8 + (size_ + 7) / 8, 0);
  std::memcpy(out.data(), &size_, 8);
  for (std::uint64_t i = 0; i < size_; ++i) {
    if (test(i)) out[8 + i / 8] = static_cast<char>(out[8 + i / 8] | (1 << (i % 8)));
  }
  return out;
}

DeletionBitVector DeletionBitVector::decode(std::span<const char> bytes) {
  if (bytes.size() < 8) throw FormatError("truncated deletion bit-vector");
  std::uint64_t size = 0;
  std::memcpy(&size, bytes.data(), 8);
  if (bytes.size() != 8 + (size + 7) / 8) throw FormatError("deletion bit-vector size mismatch");
  DeletionBitVector bv(size);
  for (std::uint64_t i = 0; i < size; ++i) {
    if ((static_cast<unsigned char>(bytes[8 + i / 8]) >> (i % 8)) & 1u) bv.set(i);
  }
  return bv;
}

void write_bitvector(const fs::path& path, const DeletionBitVector& bits) {
  write_file_atomic(path, bits.encode());
}

DeletionBitVector read_bitvector(const fs::path& path) {
  return DeletionBitVector::decode(read_file(path));
}

void write_file_atomic(const fs::path& path, std::span<const char> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace dsidx
