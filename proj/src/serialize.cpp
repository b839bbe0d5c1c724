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

#include "dsidx/serialize.hpp"

#include <array>
#include <cstring>

#include <boost/crc.hpp>

#include "dsidx/errors.hpp"

namespace dsidx {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'M', 'P', 'Y', 'I', 'D', 'X', '1'};

using Crc64 = boost::crc_optimal<64, 0x42F0E1EBA9EA3693ull, ~0ull, ~0ull, true, true>;

std::uint64_t checksum(std::span<const char> bytes) {
  Crc64 crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<char>& bytes() { return out_; }

 private:
  std::vector<char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : in_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(in_.data() + pos_, len);
    pos_ += len;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t k) const {
    if (in_.size() - pos_ < k) throw FormatError("index file ends inside a record");
  }
  std::span<const char> in_;
  std::size_t pos_ = 0;
};

void put_config(Writer& w, const BuildConfig& c) {
  w.put<std::uint64_t>(c.series_length);
  w.put<std::uint64_t>(c.segments);
  w.put<std::int32_t>(c.bits);
  w.put<std::uint64_t>(c.leaf_capacity);
  w.put<double>(c.fill_low);
  w.put<double>(c.fill_high);
  w.put<double>(c.alpha);
  w.put<double>(c.rho);
  w.put<double>(c.small_node);
  w.put<std::uint8_t>(c.fuzzy.has_value());
  w.put<double>(c.fuzzy.value_or(0.0));
  w.put<std::uint32_t>(c.max_duplications);
  w.put<std::uint64_t>(c.buffer_series);
  w.put<std::uint64_t>(c.rng_seed);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.strategy));
  w.put<std::uint8_t>(c.packing);
}

BuildConfig get_config(Reader& r) {
  BuildConfig c;
  c.series_length = r.get<std::uint64_t>();
  c.segments = r.get<std::uint64_t>();
  c.bits = r.get<std::int32_t>();
  c.leaf_capacity = r.get<std::uint64_t>();
  c.fill_low = r.get<double>();
  c.fill_high = r.get<double>();
  c.alpha = r.get<double>();
  c.rho = r.get<double>();
  c.small_node = r.get<double>();
  const bool has_fuzzy = r.get<std::uint8_t>() != 0;
  const double fuzzy = r.get<double>();
  if (has_fuzzy) c.fuzzy = fuzzy;
  c.max_duplications = r.get<std::uint32_t>();
  c.buffer_series = r.get<std::uint64_t>();
  c.rng_seed = r.get<std::uint64_t>();
  const auto strategy = r.get<std::uint8_t>();
  if (strategy > 1) throw FormatError("unknown split strategy in index file");
  c.strategy = static_cast<SplitStrategy>(strategy);
  c.packing = r.get<std::uint8_t>() != 0;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("stored configuration is invalid: ") + e.what());
  }
  return c;
}

void put_isax(Writer& w, const IsaxWord& isax) {
  for (const auto& s : isax.symbols()) {
    w.put<std::uint8_t>(s.prefix);
    w.put<std::uint8_t>(s.bits);
  }
}

IsaxWord get_isax(Reader& r, std::size_t segments, int bits) {
  std::vector<IsaxSymbol> symbols(segments);
  for (auto& s : symbols) {
    s.prefix = r.get<std::uint8_t>();
    s.bits = r.get<std::uint8_t>();
    if (s.bits > bits || (s.bits < 8 && s.prefix >> s.bits) != 0) {
      throw FormatError("malformed iSAX symbol in index file");
    }
  }
  return IsaxWord(std::move(symbols));
}

}  // namespace

std::vector<char> serialize_index(const Tree& tree, const IndexMeta& meta) {
  Writer w;
  for (char c : kMagic) w.put<char>(c);
  w.put<std::uint16_t>(kFormatVersion);
  put_config(w, meta.config);
  w.put_string(meta.dataset_path);
  w.put<std::uint64_t>(meta.dataset_size);
  w.put<std::uint64_t>(meta.live_series);
  w.put<std::uint64_t>(meta.next_ordinal);
  w.put<std::uint64_t>(meta.next_file_id);
  w.put<std::uint64_t>(meta.stats.node_count);
  w.put<std::uint64_t>(meta.stats.leaf_count);
  w.put<std::uint64_t>(meta.stats.pack_count);
  w.put<std::uint32_t>(meta.stats.height);
  w.put<double>(meta.stats.fill_factor);

  w.put<std::uint16_t>(static_cast<std::uint16_t>(tree.segments()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(tree.bits()));
  const auto order = tree.preorder();
  std::vector<std::uint32_t> pos(tree.capacity(), kNoNode);
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<std::uint32_t>(i);
  w.put<std::uint64_t>(order.size());
  for (NodeId id : order) {
    const Node& n = tree[id];
    w.put<std::uint8_t>(n.leaf);
    put_isax(w, n.isax);
    if (n.leaf) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(n.member_sids.size()));
      for (auto sid : n.member_sids) w.put<std::uint32_t>(sid);
      w.put<std::uint64_t>(n.file_id);
      w.put<std::uint64_t>(n.records);
      continue;
    }
    w.put<std::uint8_t>(static_cast<std::uint8_t>(n.csl.size()));
    for (auto seg : n.csl) w.put<std::uint8_t>(seg);
    w.put<std::uint64_t>(n.split_size);
    w.put<std::uint8_t>(n.split_promotable);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(n.split_kind));
    w.put<std::uint32_t>(n.extractions);
    for (NodeId c : n.routing) w.put<std::uint32_t>(c == kNoNode ? kNoNode : pos[c]);
  }
  auto& bytes = w.bytes();
  const std::uint64_t crc = checksum(bytes);
  const auto* p = reinterpret_cast<const char*>(&crc);
  bytes.insert(bytes.end(), p, p + sizeof crc);
  return std::move(bytes);
}

void serialize_index(const Tree& tree, const IndexMeta& meta, const fs::path& path) {
  write_file_atomic(path, serialize_index(tree, meta));
}

std::pair<Tree, IndexMeta> deserialize_index(std::span<const char> bytes) {
  if (bytes.size() < kMagic.size() + 2 + 8) throw FormatError("index file is truncated");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);
  if (checksum(body) != stored) throw FormatError("index file checksum mismatch");

  Reader r(body);
  for (char c : kMagic) {
    if (r.get<char>() != c) throw FormatError("bad magic: not an index file");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion) {
    throw FormatError("index format version " + std::to_string(version) + " is not supported (" +
                      std::to_string(kFormatVersion) + " expected)");
  }
  IndexMeta meta;
  meta.format_version = version;
  meta.config = get_config(r);
  meta.dataset_path = r.get_string();
  meta.dataset_size = r.get<std::uint64_t>();
  meta.live_series = r.get<std::uint64_t>();
  meta.next_ordinal = r.get<std::uint64_t>();
  meta.next_file_id = r.get<std::uint64_t>();
  meta.stats.node_count = r.get<std::uint64_t>();
  meta.stats.leaf_count = r.get<std::uint64_t>();
  meta.stats.pack_count = r.get<std::uint64_t>();
  meta.stats.height = r.get<std::uint32_t>();
  meta.stats.fill_factor = r.get<double>();

  const std::size_t segments = r.get<std::uint16_t>();
  const int bits = r.get<std::uint8_t>();
  if (segments != meta.config.segments || bits != meta.config.bits) {
    throw FormatError("tree shape disagrees with the stored configuration");
  }
  Tree tree(segments, bits);
  const auto count = r.get<std::uint64_t>();
  if (count >= kNoNode) throw FormatError("node count out of range");
  std::vector<Node> nodes;
  nodes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Node n;
    n.leaf = r.get<std::uint8_t>() != 0;
    n.isax = get_isax(r, segments, bits);
    if (n.leaf) {
      const auto members = r.get<std::uint32_t>();
      if (members == 0 || members > (1u << 16)) throw FormatError("bad pack member count");
      n.member_sids.resize(members);
      for (auto& sid : n.member_sids) sid = r.get<std::uint32_t>();
      n.file_id = r.get<std::uint64_t>();
      n.records = r.get<std::uint64_t>();
      n.deleted = DeletionBitVector(n.records);
    } else {
      const auto lambda = r.get<std::uint8_t>();
      if (lambda > segments) throw FormatError("chosen-segment list longer than the word");
      n.csl.resize(lambda);
      for (auto& seg : n.csl) {
        seg = r.get<std::uint8_t>();
        if (seg >= segments) throw FormatError("chosen segment out of range");
      }
      n.split_size = r.get<std::uint64_t>();
      n.split_promotable = r.get<std::uint8_t>();
      const auto kind = r.get<std::uint8_t>();
      if (kind > 3) throw FormatError("unknown split kind");
      n.split_kind = static_cast<SplitKind>(kind);
      n.extractions = r.get<std::uint32_t>();
      n.routing.resize(std::size_t{1} << lambda);
      for (auto& c : n.routing) {
        c = r.get<std::uint32_t>();
        if (c != kNoNode && (c <= i || c >= count)) throw FormatError("bad routing target");
      }
    }
    nodes.push_back(std::move(n));
  }
  if (!r.done()) throw FormatError("trailing bytes in index file");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (NodeId c : nodes[i].routing) {
      if (c != kNoNode) nodes[c].parent = static_cast<NodeId>(i);
    }
  }
  for (auto& n : nodes) tree.add(std::move(n));
  if (count > 0) tree.set_root(0);
  tree.refresh_leaf_counts();
  return {std::move(tree), std::move(meta)};
}

std::pair<Tree, IndexMeta> deserialize_index(const fs::path& path) {
  const auto bytes = read_file(path);
  return deserialize_index(bytes);
}

}  // namespace dsidx
