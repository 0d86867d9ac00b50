/* Copyright 2026 The plainseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace plainseg {

// Broad failure classes. The CLI maps each to its own exit code.
enum class ErrorKind { kConfig, kData, kNumeric, kIo };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

// Non-finite loss or gradient. Carries the offending quantity's name.
class NumericError : public Error {
 public:
  NumericError(std::string quantity, const std::string& what)
      : Error(ErrorKind::kNumeric, what), quantity_(std::move(quantity)) {}
  const std::string& quantity() const noexcept { return quantity_; }

 private:
  std::string quantity_;
};

// Mask-specific data errors.
class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedRleError : public DataError {
 public:
  using DataError::DataError;
};

// COCO ingest errors, one type per failure mode.
class MissingFieldError : public DataError {
 public:
  using DataError::DataError;
};

class DanglingReferenceError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedSegmentationError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedDetectionError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace plainseg
