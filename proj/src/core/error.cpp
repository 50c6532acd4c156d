#include "core/error.h"

namespace trapkit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument:
        return "InvalidArgument";
    case ErrorCode::InvalidBox:
        return "InvalidBox";
    case ErrorCode::DegenerateBox:
        return "DegenerateBox";
    case ErrorCode::ChecksumMismatch:
        return "ChecksumMismatch";
    case ErrorCode::UnsupportedTask:
        return "UnsupportedTask";
    case ErrorCode::ArtifactNotFound:
        return "ArtifactNotFound";
    case ErrorCode::ImageDecodeError:
        return "ImageDecodeError";
    case ErrorCode::ShapeMismatch:
        return "ShapeMismatch";
    case ErrorCode::BackendError:
        return "BackendError";
    case ErrorCode::EmptyBatch:
        return "EmptyBatch";
    case ErrorCode::VideoDecodeError:
        return "VideoDecodeError";
    case ErrorCode::EmptyVote:
        return "EmptyVote";
    case ErrorCode::MissingDimensions:
        return "MissingDimensions";
    case ErrorCode::IoError:
        return "IoError";
    case ErrorCode::NetworkError:
        return "NetworkError";
    case ErrorCode::MissingFieldError:
        return "MissingFieldError";
    case ErrorCode::SingleGroupError:
        return "SingleGroupError";
    case ErrorCode::UnlabeledImage:
        return "UnlabeledImage";
    case ErrorCode::TooFewClasses:
        return "TooFewClasses";
    case ErrorCode::EmptyDataset:
        return "EmptyDataset";
    case ErrorCode::UnsupportedBackbone:
        return "UnsupportedBackbone";
    case ErrorCode::UnknownTestSet:
        return "UnknownTestSet";
    case ErrorCode::MalformedSubmission:
        return "MalformedSubmission";
    case ErrorCode::UnknownModel:
        return "UnknownModel";
    case ErrorCode::InvalidRating:
        return "InvalidRating";
    case ErrorCode::ParseError:
        return "ParseError";
    case ErrorCode::QueueFull:
        return "QueueFull";
    }
    return "Unknown";
}

}  // namespace trapkit
