#pragma once

#include <stdexcept>
#include <string>

namespace agdh {

enum class Errc {
    ZeroScalar,
    BadLength,
    NotInSubgroup,
    DuplicateParticipant,
    DegenerateKey,
    UnknownParticipant,
    ShapeViolation,
    UnknownKind,
    ConfigError,
    OverlapError,
    UnknownNode,
    CountMismatch,
    ParseError,
};

const char* to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above; the
/// message is "<Code>: <detail>".
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail);

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace agdh
