#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hgr {

enum class ErrorCode {
  // imaging
  MalformedHeader,
  TruncatedBody,
  UnsupportedMaxval,
  WrongChannelCount,
  ZeroDimension,
  // tensor_nn
  ShapeMismatch,
  OddDimension,
  LabelOutOfRange,
  // gesture_net
  WrongSize,
  EmptyClass,
  NonContiguousLabels,
  BadMagic,
  VersionMismatch,
  ChecksumMismatch,
  // skin_segment
  EmptyInput,
  // haar_cascade
  XmlSyntax,
  SchemaViolation,
  RectOutOfWindow,
  WindowOutOfFrame,
  ImageTooSmall,
  // mil_tracker
  BoxOutOfFrame,
  DegenerateBox,
  PatchOutOfFrame,
  // pipeline
  EmptyHistory,
  ConfigLoadError,
  // cli_bench
  BadWeights,
  Io,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Domain error raised by every hgr module. `code()` identifies the failure
/// class; `what()` carries a one-line human readable diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace hgr
