#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agdh/simnet.hpp"

namespace agdh::oracle {

using fsm::Micros;
using gka::ParticipantId;

struct Finding {
    enum class Kind { KeyMismatch, KdfMismatch, MissingGroupMessage, UnknownSecret, UnverifiedAction, SecretLeak };
    Kind kind = Kind::KeyMismatch;
    Micros at = 0;
    ParticipantId node = 0;
    std::string detail;
};
const char* to_string(Finding::Kind kind) noexcept;

struct AuditReport {
    std::vector<Finding> findings;
    std::size_t keys_checked = 0;
    std::size_t deliveries_checked = 0;
    std::size_t messages_scanned = 0;
    /// The secret scan needs elements wide enough that a collision means
    /// something; it is skipped for very small groups.
    bool leak_scan = false;

    bool clean() const { return findings.empty(); }
    std::string render() const;
};

/// Recomputes every key in the transcript from the secrets the nodes drew,
/// through oracle_key, and checks that no node acted on an unverified
/// delivery and that no message field equals a secret.
AuditReport audit_transcript(const sim::Transcript& transcript, const group::GroupParams& params);

/// One initial key agreement among m nodes with a fixed leader (node 1),
/// lossless and without jitter, run until every node holds the first key.
struct IkaMeasurement {
    std::size_t group_size = 0;
    ParticipantId leader = 1;
    bool complete = false;
    std::uint64_t epoch = 0;
    Micros established_at = 0;
    std::map<ParticipantId, std::uint64_t> member_exps;
    std::uint64_t leader_exps = 0;
    std::uint64_t messages = 0;
    std::uint64_t broadcasts = 0;
    std::uint64_t unicasts = 0;
    std::uint64_t rounds = 0;
};

IkaMeasurement measure_ika(std::size_t group_size, std::uint64_t seed,
                           std::shared_ptr<const group::GroupParams> params);

struct CostRow {
    std::size_t group_size = 0;
    std::uint64_t member_exps_min = 0;
    std::uint64_t member_exps_max = 0;
    std::uint64_t leader_exps = 0;
    std::uint64_t messages = 0;
    std::uint64_t broadcasts = 0;
    std::uint64_t rounds = 0;

    std::string render() const;
};

CostRow cost_table(const IkaMeasurement& measurement);
/// Expected row for group size m: members 2, leader m, messages m,
/// broadcasts 1, rounds 2. Throws Error(CountMismatch) listing every field
/// that differs.
void check_cost_row(const CostRow& row, std::size_t group_size);

}  // namespace agdh::oracle
