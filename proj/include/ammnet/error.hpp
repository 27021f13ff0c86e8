// Copyright (c) 2026 The ammnet Authors. All Rights Reserved.
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

#include <sstream>
#include <stdexcept>
#include <string>

namespace ammnet {

// Error categories carried by AmmError. Callers that need to distinguish
// failure modes (tests, the CLI exit-code mapping) switch on the code
// instead of parsing messages.
enum class ErrCode {
  kInvalidArgument,
  kShapeMismatch,
  kBadConfig,
  kBadMagic,
  kBadVersion,
  kBadDtype,
  kTruncatedFile,
  kIoFailure,
  kMissingParam,
  kBadLabel,
  kBadSimplex,
  kEmptyMask,
  kDiverged,
  kInternal,
};

const char* err_code_name(ErrCode code);

class AmmError : public std::runtime_error {
 public:
  AmmError(ErrCode code, const std::string& message)
      : std::runtime_error(std::string(err_code_name(code)) + ": " + message),
        code_(code) {}

  ErrCode code() const { return code_; }

 private:
  ErrCode code_;
};

namespace detail {

[[noreturn]] inline void raise(ErrCode code, const std::string& message) {
  throw AmmError(code, message);
}

}  // namespace detail

}  // namespace ammnet

// Validates a runtime condition and throws AmmError on failure. The message
// part accepts stream syntax: AMM_CHECK(x > 0, ErrCode::kInvalidArgument,
// "x must be positive, got " << x);
#define AMM_CHECK(cond, code, msg)                       \
  do {                                                   \
    if (!(cond)) {                                       \
      std::ostringstream amm_check_stream_;              \
      amm_check_stream_ << msg;                          \
      ::ammnet::detail::raise(code, amm_check_stream_.str()); \
    }                                                    \
  } while (0)
