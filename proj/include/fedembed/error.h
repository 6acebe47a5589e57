// Copyright 2026 The fedembed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef FEDEMBED_ERROR_H_
#define FEDEMBED_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedembed {

// Base class for every error raised by the library. The CLI maps each
// subclass onto a distinct process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix or parameter shapes that do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where finiteness is promised.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `offset` is the byte offset (or line number for
// text formats) where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Well-formed input that violates a domain invariant (label >= K, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration. `field` names the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : Error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Noise calibration could not meet the target inside its search bracket.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// A client's accountant would exceed its epsilon target.
class PrivacyBudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedembed

#endif  // FEDEMBED_ERROR_H_
