#include "hgr/error.hpp"

namespace hgr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedBody: return "TruncatedBody";
    case ErrorCode::UnsupportedMaxval: return "UnsupportedMaxval";
    case ErrorCode::WrongChannelCount: return "WrongChannelCount";
    case ErrorCode::ZeroDimension: return "ZeroDimension";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::WrongSize: return "WrongSize";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NonContiguousLabels: return "NonContiguousLabels";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::XmlSyntax: return "XmlSyntax";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::RectOutOfWindow: return "RectOutOfWindow";
    case ErrorCode::WindowOutOfFrame: return "WindowOutOfFrame";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::BoxOutOfFrame: return "BoxOutOfFrame";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::PatchOutOfFrame: return "PatchOutOfFrame";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::ConfigLoadError: return "ConfigLoadError";
    case ErrorCode::BadWeights: return "BadWeights";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace hgr
