// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_ERROR_H_
#define NHANS_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace nhans {

enum class ErrorCode {
  kFileNotFound,
  kMalformedHeader,
  kUnsupportedCodec,
  kIoFailure,
  kInvalidArgument,
  kShapeMismatch,
  kEmptyInput,
  kZeroEnergy,
  kVersionMismatch,
  kTruncatedFile,
  kCorruptPayload,
  kTaskMismatch,
  kNonFiniteLoss,
  kCorpusMissing,
  kTooShort,
  kDegenerate,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; code() distinguishes them.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nhans

#endif  // NHANS_ERROR_H_
