#include "agdh/error.hpp"

namespace agdh {

const char* to_string(Errc code) noexcept {
    switch (code) {
        case Errc::ZeroScalar: return "ZeroScalar";
        case Errc::BadLength: return "BadLength";
        case Errc::NotInSubgroup: return "NotInSubgroup";
        case Errc::DuplicateParticipant: return "DuplicateParticipant";
        case Errc::DegenerateKey: return "DegenerateKey";
        case Errc::UnknownParticipant: return "UnknownParticipant";
        case Errc::ShapeViolation: return "ShapeViolation";
        case Errc::UnknownKind: return "UnknownKind";
        case Errc::ConfigError: return "ConfigError";
        case Errc::OverlapError: return "OverlapError";
        case Errc::UnknownNode: return "UnknownNode";
        case Errc::CountMismatch: return "CountMismatch";
        case Errc::ParseError: return "ParseError";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

}  // namespace agdh
