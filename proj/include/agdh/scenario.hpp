#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "agdh/node_fsm.hpp"

namespace agdh::sim {

using fsm::Micros;
using gka::ParticipantId;

struct ScenarioEvent {
    enum class Verb { Join, Leave, Partition, Heal };

    Micros at = 0;
    Verb verb = Verb::Heal;
    ParticipantId node = 0;
    bool graceful = true;
    std::vector<std::vector<ParticipantId>> components;

    friend bool operator==(const ScenarioEvent&, const ScenarioEvent&) = default;
};

/// A timed script of membership and connectivity changes. Grammar in
/// docs/scenario-format.md.
struct Scenario {
    std::vector<ScenarioEvent> events;

    /// Throws Error(ParseError) naming the offending line.
    static Scenario parse(std::string_view text);
    /// Throws Error(ConfigError) when the file cannot be read.
    static Scenario load(const std::filesystem::path& path);

    Micros last_event_time() const;
};

/// "250ms", "30s", "2m", "1500us" or a bare integer (microseconds).
Micros parse_duration(std::string_view text);
std::string format_duration(Micros value);

}  // namespace agdh::sim
