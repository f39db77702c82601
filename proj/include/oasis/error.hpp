// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
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
#include <string_view>

namespace oasis {

enum class ErrorKind {
  kShape,
  kNumeric,
  kState,
  kConfig,
  kIo,
  kTamper,
};

constexpr std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape:
      return "ShapeError";
    case ErrorKind::kNumeric:
      return "NumericError";
    case ErrorKind::kState:
      return "StateError";
    case ErrorKind::kConfig:
      return "ConfigError";
    case ErrorKind::kIo:
      return "IoError";
    case ErrorKind::kTamper:
      return "TamperError";
  }
  return "Error";
}

// Single exception type for the engine; the kind is what the CLI reports.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace oasis
