/*
 * Copyright 2026 The Emblab Authors.
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace emblab {

// Configuration or validation failure. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data integrity failure (hash mismatch, truncated or corrupt files).
// The CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violation on an operation (bad index, degenerate input).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Calibration target unreachable within the search bracket.
class CalibrationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace emblab
