#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tirtm {

enum class ErrorCode {
  missing_file,
  unsupported_format,
  io_failure,
  invalid_config,
  non_positive_sigma,
  frame_too_small,
  invalid_percentiles,
  empty_reference,
  dimension_mismatch,
  sequence_mismatch,
  too_few_frames,
  empty_input,
  bad_manifest,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::missing_file: return "MissingFile";
    case ErrorCode::unsupported_format: return "UnsupportedFormat";
    case ErrorCode::io_failure: return "IoFailure";
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::non_positive_sigma: return "NonPositiveSigma";
    case ErrorCode::frame_too_small: return "FrameTooSmall";
    case ErrorCode::invalid_percentiles: return "InvalidPercentiles";
    case ErrorCode::empty_reference: return "EmptyReference";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::sequence_mismatch: return "SequenceMismatch";
    case ErrorCode::too_few_frames: return "TooFewFrames";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::bad_manifest: return "BadManifest";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Errors a user fixes by changing the configuration rather than the data.
  bool is_config_error() const noexcept {
    return code_ == ErrorCode::invalid_config || code_ == ErrorCode::non_positive_sigma ||
           code_ == ErrorCode::invalid_percentiles;
  }

 private:
  ErrorCode code_;
};

}  // namespace tirtm
