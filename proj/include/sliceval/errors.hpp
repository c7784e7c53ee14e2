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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sliceval {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Predicate text could not be turned into a valid tree.
class PredicateError : public Error {
 public:
  enum class Kind { syntax, unknown_column, ambiguous_column, type_mismatch, invalid };

  PredicateError(Kind kind, std::size_t position, const std::string& message)
      : Error(message), kind_(kind), position_(position) {}

  Kind kind() const { return kind_; }
  // Byte offset into the source text.
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

const char* to_string(PredicateError::Kind kind);

class SchemaError : public Error {
 public:
  using Error::Error;
};

class SerializationError : public Error {
 public:
  using Error::Error;
};

class UnknownVersionError : public SerializationError {
 public:
  explicit UnknownVersionError(int version)
      : SerializationError("unknown schema version " + std::to_string(version)),
        version_(version) {}
  int version() const { return version_; }

 private:
  int version_;
};

// Ingest failures carry the offending line (1-based, 0 when not line-specific)
// and, for duplicate ids, every duplicated value.
class IngestError : public Error {
 public:
  IngestError(const std::string& message, std::size_t line = 0,
              std::vector<std::string> duplicates = {})
      : Error(message), line_(line), duplicates_(std::move(duplicates)) {}
  std::size_t line() const { return line_; }
  const std::vector<std::string>& duplicates() const { return duplicates_; }

 private:
  std::size_t line_;
  std::vector<std::string> duplicates_;
};

class TableError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PluginError : public Error {
 public:
  PluginError(const std::string& message, std::string stderr_text = {})
      : Error(message), stderr_text_(std::move(stderr_text)) {}
  const std::string& stderr_text() const { return stderr_text_; }

 private:
  std::string stderr_text_;
};

// A frame did not follow the wire protocol.
class ProtocolError : public PluginError {
 public:
  using PluginError::PluginError;
};

class PlanError : public Error {
 public:
  using Error::Error;
};

// Model outputs for the requested (model, transform) do not exist yet.
class NotProcessedError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

// A request argument is out of range or inconsistent.
class InvalidRequestError : public Error {
 public:
  using Error::Error;
};

// The project is still processing; queries need the finished table.
class NotReadyError : public Error {
 public:
  using Error::Error;
};

}  // namespace sliceval
