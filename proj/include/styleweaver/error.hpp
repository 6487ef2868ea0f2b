// Copyright 2026 The StyleWeaver Authors
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

namespace styleweaver {

// Error categories map onto CLI exit codes: config 2, data 3, numerical 4.
enum class ErrorKind {
  kConfig,
  kFormat,
  kLookup,
  kMissingData,
  kValidation,
  kShape,
  kPrecondition,
  kNumerical,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::kConfig:
        return 2;
      case ErrorKind::kNumerical:
        return 4;
      default:
        return 3;
    }
  }

 private:
  ErrorKind kind_;
};

#define SW_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(Kind, what) {}    \
  };

SW_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
SW_DEFINE_ERROR(FormatError, ErrorKind::kFormat)
SW_DEFINE_ERROR(LookupError, ErrorKind::kLookup)
SW_DEFINE_ERROR(MissingDataError, ErrorKind::kMissingData)
SW_DEFINE_ERROR(ValidationError, ErrorKind::kValidation)
SW_DEFINE_ERROR(ShapeError, ErrorKind::kShape)
SW_DEFINE_ERROR(PreconditionError, ErrorKind::kPrecondition)
SW_DEFINE_ERROR(NumericalError, ErrorKind::kNumerical)
SW_DEFINE_ERROR(IoError, ErrorKind::kIo)

#undef SW_DEFINE_ERROR

}  // namespace styleweaver
