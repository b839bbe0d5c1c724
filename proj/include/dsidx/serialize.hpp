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

#include <span>
#include <utility>
#include <vector>

#include "dsidx/index.hpp"

namespace dsidx {

/// Binary image of a tree: magic "DMPYIDX1", u16 version, config, metadata,
/// pre-order node records, CRC-64 trailer.
std::vector<char> serialize_index(const Tree& tree, const IndexMeta& meta);
void serialize_index(const Tree& tree, const IndexMeta& meta, const fs::path& path);

/// Inverse of serialize_index. The checksum is verified before anything is
/// decoded; throws FormatError on bad magic, version or checksum.
std::pair<Tree, IndexMeta> deserialize_index(std::span<const char> bytes);
std::pair<Tree, IndexMeta> deserialize_index(const fs::path& path);

}  // namespace dsidx
