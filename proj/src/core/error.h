#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trapkit {

enum class ErrorCode {
    InvalidArgument,
    InvalidBox,
    DegenerateBox,
    ChecksumMismatch,
    UnsupportedTask,
    ArtifactNotFound,
    ImageDecodeError,
    ShapeMismatch,
    BackendError,
    EmptyBatch,
    VideoDecodeError,
    EmptyVote,
    MissingDimensions,
    IoError,
    NetworkError,
    MissingFieldError,
    SingleGroupError,
    UnlabeledImage,
    TooFewClasses,
    EmptyDataset,
    UnsupportedBackbone,
    UnknownTestSet,
    MalformedSubmission,
    UnknownModel,
    InvalidRating,
    ParseError,
    QueueFull,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the toolkit carries a stable, machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
            : std::runtime_error(message), m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

}  // namespace trapkit
