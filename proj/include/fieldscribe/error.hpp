#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace fieldscribe {

enum class Errc {
    // session-model
    MissingManifest,
    SchemaViolation,
    UnsortedTrack,
    MissingFrame,
    EmptyClip,
    EmptyTrack,
    // inference-gateway
    GatewayUnreachable,
    GatewayError,
    EmptyCaption,
    DimMismatch,
    Precondition,
    // semantic-clustering
    SpaceMismatch,
    Empty,
    // cluster-metrics
    LengthMismatch,
    // prompt-extraction
    EmptyText,
    EmptyPromptSet,
    // tuning
    InsufficientData,
    MissingGroundTruth,
    // report-engine
    InconsistentInputs,
    DecodeError,
    NoGeoData,
    IoError,
    LatexEscapeError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code), detail_(detail) {}

    Errc code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

// HTTP-level gateway failure: carries the status code and response body.
class GatewayStatusError : public Error {
public:
    GatewayStatusError(int status, std::string body)
        : Error(Errc::GatewayError, "status " + std::to_string(status) + ": " + body),
          status_(status), body_(std::move(body)) {}

    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

}  // namespace fieldscribe
