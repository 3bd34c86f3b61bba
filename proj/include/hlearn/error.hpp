// Copyright 2026 The hlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hlearn {

/// Operands of incompatible size (site count, matrix shape).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The integrator lost trace beyond the tolerated drift.
class IntegratorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested expectation value is not covered by any measurement setting.
class MissingDataError : public std::runtime_error {
 public:
  MissingDataError(const std::string& what, std::vector<std::string> uncovered)
      : std::runtime_error(what), uncovered_(std::move(uncovered)) {}

  const std::vector<std::string>& uncovered() const { return uncovered_; }

 private:
  std::vector<std::string> uncovered_;
};

/// Invalid model, ansatz, or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure inside a solver (non-finite input, projection failure).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hlearn
