#include "fieldscribe/error.hpp"

namespace fieldscribe {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::MissingManifest: return "MissingManifest";
        case Errc::SchemaViolation: return "SchemaViolation";
        case Errc::UnsortedTrack: return "UnsortedTrack";
        case Errc::MissingFrame: return "MissingFrame";
        case Errc::EmptyClip: return "EmptyClip";
        case Errc::EmptyTrack: return "EmptyTrack";
        case Errc::GatewayUnreachable: return "GatewayUnreachable";
        case Errc::GatewayError: return "GatewayError";
        case Errc::EmptyCaption: return "EmptyCaption";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::Precondition: return "Precondition";
        case Errc::SpaceMismatch: return "SpaceMismatch";
        case Errc::Empty: return "Empty";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::EmptyText: return "EmptyText";
        case Errc::EmptyPromptSet: return "EmptyPromptSet";
        case Errc::InsufficientData: return "InsufficientData";
        case Errc::MissingGroundTruth: return "MissingGroundTruth";
        case Errc::InconsistentInputs: return "InconsistentInputs";
        case Errc::DecodeError: return "DecodeError";
        case Errc::NoGeoData: return "NoGeoData";
        case Errc::IoError: return "IoError";
        case Errc::LatexEscapeError: return "LatexEscapeError";
    }
    return "Unknown";
}

}  // namespace fieldscribe
