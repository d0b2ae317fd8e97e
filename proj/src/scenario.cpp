#include "agdh/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "agdh/error.hpp"

namespace agdh::sim {

namespace {

std::uint64_t parse_uint(std::string_view text, std::string_view what) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(Errc::ParseError, "bad " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

ParticipantId parse_id(std::string_view text) {
    auto v = parse_uint(text, "node id");
    if (v == 0 || v > 0xffffffffULL) throw Error(Errc::ParseError, "node id out of range: " + std::string(text));
    return static_cast<ParticipantId>(v);
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

}  // namespace

Micros parse_duration(std::string_view text) {
    std::size_t digits = 0;
    while (digits < text.size() && text[digits] >= '0' && text[digits] <= '9') ++digits;
    auto number = parse_uint(text.substr(0, digits), "duration");
    auto unit = text.substr(digits);
    std::uint64_t scale = 0;
    if (unit.empty() || unit == "us") scale = 1;
    else if (unit == "ms") scale = 1'000;
    else if (unit == "s") scale = 1'000'000;
    else if (unit == "m") scale = 60'000'000;
    else throw Error(Errc::ParseError, "bad duration unit in '" + std::string(text) + "'");
    if (number > static_cast<std::uint64_t>(INT64_MAX) / scale) {
        throw Error(Errc::ParseError, "duration overflows: " + std::string(text));
    }
    return static_cast<Micros>(number * scale);
}

std::string format_duration(Micros value) {
    if (value % fsm::kMinute == 0 && value != 0) return std::to_string(value / fsm::kMinute) + "m";
    if (value % fsm::kSecond == 0) return std::to_string(value / fsm::kSecond) + "s";
    if (value % fsm::kMillisecond == 0) return std::to_string(value / fsm::kMillisecond) + "ms";
    return std::to_string(value) + "us";
}

Scenario Scenario::parse(std::string_view text) {
    Scenario scenario;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    Micros previous = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream words(line);
        std::vector<std::string> tok;
        for (std::string w; words >> w;) tok.push_back(w);
        if (tok.empty()) continue;
        try {
            ScenarioEvent ev;
            ev.at = parse_duration(tok[0]);
            if (ev.at < previous) throw Error(Errc::ParseError, "times must be non-decreasing");
            previous = ev.at;
            if (tok.size() < 2) throw Error(Errc::ParseError, "missing verb");
            const std::string& verb = tok[1];
            if (verb == "join") {
                if (tok.size() != 3) throw Error(Errc::ParseError, "usage: <time> join <id>");
                ev.verb = ScenarioEvent::Verb::Join;
                ev.node = parse_id(tok[2]);
            } else if (verb == "leave") {
                if (tok.size() != 4) throw Error(Errc::ParseError, "usage: <time> leave <id> graceful|crash");
                ev.verb = ScenarioEvent::Verb::Leave;
                ev.node = parse_id(tok[2]);
                if (tok[3] == "graceful") ev.graceful = true;
                else if (tok[3] == "crash") ev.graceful = false;
                else throw Error(Errc::ParseError, "leave mode must be graceful or crash");
            } else if (verb == "partition") {
                if (tok.size() != 3) throw Error(Errc::ParseError, "usage: <time> partition <ids>|<ids>");
                ev.verb = ScenarioEvent::Verb::Partition;
                std::set<ParticipantId> seen;
                for (auto group : split(tok[2], '|')) {
                    std::vector<ParticipantId> ids;
                    for (auto id_text : split(group, ',')) {
                        auto id = parse_id(id_text);
                        if (!seen.insert(id).second) {
                            throw Error(Errc::OverlapError, "node " + std::to_string(id) + " in two components");
                        }
                        ids.push_back(id);
                    }
                    ev.components.push_back(std::move(ids));
                }
            } else if (verb == "heal") {
                if (tok.size() != 2) throw Error(Errc::ParseError, "usage: <time> heal");
                ev.verb = ScenarioEvent::Verb::Heal;
            } else {
                throw Error(Errc::ParseError, "unknown verb '" + verb + "'");
            }
            scenario.events.push_back(std::move(ev));
        } catch (const Error& e) {
            std::string detail = e.what();
            detail.erase(0, detail.find(": ") + 2);
            throw Error(e.code(), "line " + std::to_string(lineno) + ": " + detail);
        }
    }
    return scenario;
}

Scenario Scenario::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigError, "cannot read scenario file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

Micros Scenario::last_event_time() const { return events.empty() ? 0 : events.back().at; }

}  // namespace agdh::sim
