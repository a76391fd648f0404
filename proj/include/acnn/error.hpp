// Copyright 2026 The ACNN Triage Authors.
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acnn {

enum class ErrorCode {
  kInvalidShape,
  kWindowTooLarge,
  kIndex,
  kNoTape,
  kSpec,
  kConfig,
  kChecksum,
  kDiverged,
  kEmptyRetained,
  kIo,
};

constexpr std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidShape: return "invalid-shape";
    case ErrorCode::kWindowTooLarge: return "window-too-large";
    case ErrorCode::kIndex: return "index";
    case ErrorCode::kNoTape: return "no-tape";
    case ErrorCode::kSpec: return "spec-validation";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kDiverged: return "training-diverged";
    case ErrorCode::kEmptyRetained: return "empty-retained";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + " error: " +
                           message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, ErrorCode code,
                    const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace acnn
