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

#include "sliceval/cache.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "sliceval/errors.hpp"

namespace sliceval {
namespace {

constexpr std::string_view kMagic = "SVC1";
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 4;
constexpr std::size_t kChecksumSize = 8;

enum class RecordType : std::uint8_t {
  missing = 0,
  number = 1,
  boolean = 2,
  text = 3,
  datetime = 4,
  file = 5,
};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xff));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i));
  }
  return static_cast<T>(u);
}

std::string sha256_raw(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  return std::string(reinterpret_cast<const char*>(digest), len);
}

std::string to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (const char c : bytes) {
    const auto b = static_cast<unsigned char>(c);
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::string sanitize(std::string_view name) {
  std::string out;
  for (const char c : name) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::string checksum(std::uint8_t type, std::string_view payload) {
  std::string buf(1, static_cast<char>(type));
  buf.append(payload);
  return sha256_raw(buf).substr(0, kChecksumSize);
}

}  // namespace

std::string sha256_hex(std::string_view data) { return to_hex(sha256_raw(data)); }

struct FieldHasher::State {
  EVP_MD_CTX* ctx;
};

FieldHasher::FieldHasher() : state_(new State{EVP_MD_CTX_new()}) {
  EVP_DigestInit_ex(state_->ctx, EVP_sha256(), nullptr);
}

FieldHasher::~FieldHasher() {
  EVP_MD_CTX_free(state_->ctx);
  delete state_;
}

FieldHasher& FieldHasher::add(std::string_view field) {
  std::string prefix(1, '\x01');
  put_le<std::uint64_t>(prefix, field.size());
  EVP_DigestUpdate(state_->ctx, prefix.data(), prefix.size());
  EVP_DigestUpdate(state_->ctx, field.data(), field.size());
  return *this;
}

FieldHasher& FieldHasher::add(const std::optional<std::string>& field) {
  if (field) return add(std::string_view(*field));
  const char tag = '\x00';
  EVP_DigestUpdate(state_->ctx, &tag, 1);
  return *this;
}

std::string FieldHasher::hex() {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(state_->ctx, digest, &len);
  EVP_DigestInit_ex(state_->ctx, EVP_sha256(), nullptr);
  return to_hex(std::string_view(reinterpret_cast<const char*>(digest), len));
}

std::string cache_key(const CacheKeyInputs& in) {
  FieldHasher h;
  h.add(std::string_view("sliceval-cache-v1"))
      .add(std::string_view(in.function_id))
      .add(std::string_view(in.function_version))
      .add(std::string_view(in.kind))
      .add(in.model_id)
      .add(in.transform_id)
      .add(std::string_view(in.subject))
      .add(std::string_view(in.options_fingerprint));
  return h.hex();
}

std::string encode_record(const CacheValue& cv, Timestamp created_at) {
  RecordType type = RecordType::missing;
  std::string payload;
  const Value& v = cv.value;
  if (cv.file_reference) {
    if (!std::holds_alternative<std::string>(v)) {
      throw Error("file reference cache values must be text");
    }
    type = RecordType::file;
    payload = std::get<std::string>(v);
  } else if (const auto* d = std::get_if<double>(&v)) {
    type = RecordType::number;
    put_le<std::uint64_t>(payload, std::bit_cast<std::uint64_t>(*d));
  } else if (const auto* b = std::get_if<bool>(&v)) {
    type = RecordType::boolean;
    payload.push_back(*b ? '\x01' : '\x00');
  } else if (const auto* s = std::get_if<std::string>(&v)) {
    type = RecordType::text;
    payload = *s;
  } else if (const auto* t = std::get_if<Timestamp>(&v)) {
    type = RecordType::datetime;
    put_le<std::int64_t>(payload, t->millis);
  }
  std::string out(kMagic);
  out.push_back(static_cast<char>(type));
  out.append(3, '\0');
  put_le<std::int64_t>(out, created_at.millis);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  out += payload;
  out += checksum(static_cast<std::uint8_t>(type), payload);
  return out;
}

std::optional<CacheEntry> decode_record(std::string_view bytes) {
  if (bytes.size() < kHeaderSize + kChecksumSize) return std::nullopt;
  if (bytes.substr(0, 4) != kMagic) return std::nullopt;
  const auto type_byte = static_cast<std::uint8_t>(bytes[4]);
  if (type_byte > static_cast<std::uint8_t>(RecordType::file)) return std::nullopt;
  const auto created = get_le<std::int64_t>(bytes, 8);
  const auto len = get_le<std::uint32_t>(bytes, 16);
  if (bytes.size() != kHeaderSize + len + kChecksumSize) return std::nullopt;
  const auto payload = bytes.substr(kHeaderSize, len);
  if (bytes.substr(kHeaderSize + len) != checksum(type_byte, payload)) return std::nullopt;

  CacheEntry entry;
  entry.created_at = Timestamp{created};
  switch (static_cast<RecordType>(type_byte)) {
    case RecordType::missing:
      if (len != 0) return std::nullopt;
      break;
    case RecordType::number:
      if (len != 8) return std::nullopt;
      entry.value.value = std::bit_cast<double>(get_le<std::uint64_t>(payload, 0));
      break;
    case RecordType::boolean:
      if (len != 1) return std::nullopt;
      entry.value.value = payload[0] != 0;
      break;
    case RecordType::text:
      entry.value.value = std::string(payload);
      break;
    case RecordType::datetime:
      if (len != 8) return std::nullopt;
      entry.value.value = Timestamp{get_le<std::int64_t>(payload, 0)};
      break;
    case RecordType::file:
      entry.value.value = std::string(payload);
      entry.value.file_reference = true;
      break;
  }
  return entry;
}

DiskCache::DiskCache(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path DiskCache::record_path(std::string_view function_id,
                                             std::string_view key) const {
  if (key.size() < 2) throw Error("malformed cache key '" + std::string(key) + "'");
  return root_ / sanitize(function_id) / std::string(key.substr(0, 2)) /
         (std::string(key) + ".rec");
}

std::optional<CacheEntry> DiskCache::get(std::string_view function_id,
                                         std::string_view key) const {
  const auto path = record_path(function_id, key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  auto entry = decode_record(bytes);
  if (!entry) {
    spdlog::warn("evicting corrupted cache entry {}", path.string());
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  return entry;
}

bool DiskCache::contains(std::string_view function_id, std::string_view key) const {
  return get(function_id, key).has_value();
}

void DiskCache::put(std::string_view function_id, std::string_view key, const CacheValue& value) {
  static std::atomic<std::uint64_t> counter{0};
  const auto path = record_path(function_id, key);
  std::filesystem::create_directories(path.parent_path());
  const Timestamp created = now_timestamp();
  const std::string bytes = encode_record(value, created);
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id() << "."
           << counter.fetch_add(1);
  const auto tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, path);

  std::lock_guard lock(index_mutex_);
  std::ofstream index(root_ / sanitize(function_id) / "index.tsv", std::ios::app);
  index << key << '\t' << format_iso8601(created) << '\t'
        << static_cast<int>(static_cast<unsigned char>(bytes[4])) << '\n';
}

}  // namespace sliceval
