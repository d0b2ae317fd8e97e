#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agdh/bytes.hpp"
#include "agdh/gka_core.hpp"

namespace agdh::msg {

using gka::Nonce;
using gka::ParticipantId;
using group::GroupElement;
using group::GroupParams;

enum class MessageKind : std::uint8_t {
    Init = 0x01,
    IReply = 0x02,
    IGroup = 0x03,
    Join = 0x04,
    JReply = 0x05,
    JGroup = 0x06,
    Del = 0x07,
    DGroup = 0x08,
};

const char* to_string(MessageKind kind) noexcept;
/// Throws Error(UnknownKind) for bytes outside 0x01..0x08.
MessageKind kind_from_byte(std::uint8_t byte);
/// IGROUP, JGROUP and DGROUP: leader broadcasts carrying responses.
bool is_group_kind(MessageKind kind) noexcept;

struct GroupEntry {
    ParticipantId participant_id = 0;
    Nonce nonce{};
    GroupElement blinded_secret;
    std::optional<GroupElement> blinded_response;

    friend bool operator==(const GroupEntry&, const GroupEntry&) = default;
};

struct Message {
    MessageKind kind = MessageKind::Init;
    ParticipantId sender_id = 0;
    Nonce sender_nonce{};
    std::uint64_t epoch = 0;
    std::vector<GroupEntry> entries;
    Bytes signature;

    friend bool operator==(const Message&, const Message&) = default;
};

/// Signed bytes:
///   [kind:1][sender_id:4][sender_nonce:16][epoch:8][entry_count:2][entries...]
/// entry:
///   [id:4][nonce:16][has_response:1][blinded_secret:W][blinded_response:W if has_response]
/// with W = params.element_width(), all integers big-endian.
Bytes encode_canonical(const Message& message, const GroupParams& params);

/// Wire form: canonical bytes followed by [signature_length:2][signature].
Bytes encode_wire(const Message& message, const GroupParams& params);
/// Strict inverse of encode_wire. Throws BadLength (truncation or trailing
/// bytes), UnknownKind, NotInSubgroup, or ShapeViolation for a has_response
/// byte other than 0/1.
Message decode_wire(ByteView bytes, const GroupParams& params);

/// Per-kind grammar:
///   INIT, DEL             no entries
///   IREPLY, JOIN          exactly one entry, the sender's own contribution, no response
///   JREPLY                entries without responses
///   IGROUP/JGROUP/DGROUP  entries with responses, none for the sender
/// plus pairwise-distinct participant ids. Throws ShapeViolation naming the field.
void validate_shape(const Message& message);

Message build_init(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch);
Message build_ireply(const gka::Contribution& own, std::uint64_t epoch);
Message build_igroup(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries);
Message build_join(const gka::Contribution& own, std::uint64_t epoch);
Message build_jreply(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries);
Message build_jgroup(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries);
Message build_del(ParticipantId sender, const Nonce& nonce, std::uint64_t epoch);
Message build_dgroup(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries);

/// Entries for a group broadcast: one per contribution, paired with the
/// matching response by participant id.
std::vector<GroupEntry> group_entries(std::span<const gka::Contribution> contributions,
                                      std::span<const gka::BlindedResponse> responses);

const GroupEntry* find_entry(const Message& message, ParticipantId id) noexcept;

/// One-line summary, e.g. "IGROUP from=3 epoch=7 entries=2".
std::string describe(const Message& message);

}  // namespace agdh::msg
