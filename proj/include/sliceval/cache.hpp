/*
 * Copyright 2026 The sliceval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "sliceval/value.hpp"

namespace sliceval {

// SHA-256 of `data` as 64 lowercase hex characters.
std::string sha256_hex(std::string_view data);

// Incremental hash over length-prefixed fields, so ("ab","c") and ("a","bc")
// never collide. Encoding per field: tag byte (0 absent, 1 present), then for
// present fields the byte length as 8-byte little-endian followed by the bytes.
class FieldHasher {
 public:
  FieldHasher();
  ~FieldHasher();
  FieldHasher(const FieldHasher&) = delete;
  FieldHasher& operator=(const FieldHasher&) = delete;

  FieldHasher& add(std::string_view field);
  FieldHasher& add(const std::optional<std::string>& field);
  std::string hex();

 private:
  struct State;
  State* state_;
};

// Inputs that identify one cached function output.
struct CacheKeyInputs {
  std::string function_id;
  std::string function_version;
  std::string kind;
  std::optional<std::string> model_id;
  std::optional<std::string> transform_id;
  // Instance fingerprint (instance id plus its input row) or slice fingerprint.
  std::string subject;
  std::string options_fingerprint;
};

// Deterministic across runs and platforms.
std::string cache_key(const CacheKeyInputs& inputs);

struct CacheValue {
  Value value;
  bool file_reference = false;  // value is a path relative to the data root

  friend bool operator==(const CacheValue&, const CacheValue&) = default;
};

struct CacheEntry {
  CacheValue value;
  Timestamp created_at;
};

// Content-addressed on-disk cache.
//
// Layout under the root directory:
//   <function>/index.tsv               one line per put: key, created_at, type
//   <function>/<key[0:2]>/<key>.rec    binary record
//
// Record (little-endian):
//   magic "SVC1" | type u8 | 3 zero bytes | created_at i64 ms | payload_len u32 |
//   payload | checksum: first 8 bytes of SHA-256(type byte + payload)
// Types: 0 missing, 1 number (f64), 2 boolean (u8), 3 text, 4 datetime (i64 ms),
// 5 file reference (text).
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  // A corrupted record counts as a miss; it is deleted and a warning logged.
  std::optional<CacheEntry> get(std::string_view function_id, std::string_view key) const;
  // Atomic: readers never observe a partial record.
  void put(std::string_view function_id, std::string_view key, const CacheValue& value);
  bool contains(std::string_view function_id, std::string_view key) const;

  std::filesystem::path record_path(std::string_view function_id, std::string_view key) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex index_mutex_;
};

std::string encode_record(const CacheValue& value, Timestamp created_at);
// std::nullopt when the bytes are not a valid record.
std::optional<CacheEntry> decode_record(std::string_view bytes);

}  // namespace sliceval
