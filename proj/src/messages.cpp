#include "agdh/messages.hpp"

#include <set>
#include <sstream>

#include "agdh/error.hpp"

namespace agdh::msg {

const char* to_string(MessageKind kind) noexcept {
    switch (kind) {
        case MessageKind::Init: return "INIT";
        case MessageKind::IReply: return "IREPLY";
        case MessageKind::IGroup: return "IGROUP";
        case MessageKind::Join: return "JOIN";
        case MessageKind::JReply: return "JREPLY";
        case MessageKind::JGroup: return "JGROUP";
        case MessageKind::Del: return "DEL";
        case MessageKind::DGroup: return "DGROUP";
    }
    return "?";
}

MessageKind kind_from_byte(std::uint8_t byte) {
    if (byte < 0x01 || byte > 0x08) {
        std::ostringstream os;
        os << "kind byte 0x" << std::hex << static_cast<int>(byte);
        throw Error(Errc::UnknownKind, os.str());
    }
    return static_cast<MessageKind>(byte);
}

bool is_group_kind(MessageKind kind) noexcept {
    return kind == MessageKind::IGroup || kind == MessageKind::JGroup || kind == MessageKind::DGroup;
}

Bytes encode_canonical(const Message& message, const GroupParams& params) {
    if (message.entries.size() > 0xffff) throw Error(Errc::ShapeViolation, "entries: more than 65535");
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(message.kind));
    w.u32(message.sender_id);
    w.raw(message.sender_nonce);
    w.u64(message.epoch);
    w.u16(static_cast<std::uint16_t>(message.entries.size()));
    for (const auto& e : message.entries) {
        w.u32(e.participant_id);
        w.raw(e.nonce);
        w.u8(e.blinded_response ? 1 : 0);
        w.raw(group::encode_element(e.blinded_secret, params));
        if (e.blinded_response) w.raw(group::encode_element(*e.blinded_response, params));
    }
    return std::move(w).take();
}

Bytes encode_wire(const Message& message, const GroupParams& params) {
    if (message.signature.size() > 0xffff) throw Error(Errc::ShapeViolation, "signature: longer than 65535 bytes");
    Bytes out = encode_canonical(message, params);
    out.push_back(static_cast<std::uint8_t>(message.signature.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(message.signature.size()));
    out.insert(out.end(), message.signature.begin(), message.signature.end());
    return out;
}

namespace {

Nonce read_nonce(ByteReader& r) {
    Nonce n{};
    auto raw = r.raw(n.size());
    std::copy(raw.begin(), raw.end(), n.begin());
    return n;
}

}  // namespace

Message decode_wire(ByteView bytes, const GroupParams& params) {
    ByteReader r(bytes);
    Message m;
    m.kind = kind_from_byte(r.u8());
    m.sender_id = r.u32();
    m.sender_nonce = read_nonce(r);
    m.epoch = r.u64();
    const auto count = r.u16();
    const auto width = params.element_width();
    m.entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        GroupEntry e;
        e.participant_id = r.u32();
        e.nonce = read_nonce(r);
        const auto has_response = r.u8();
        if (has_response > 1) {
            throw Error(Errc::ShapeViolation, "entries[" + std::to_string(i) + "].has_response: not 0 or 1");
        }
        e.blinded_secret = group::decode_element(r.raw(width), params);
        if (has_response) e.blinded_response = group::decode_element(r.raw(width), params);
        m.entries.push_back(std::move(e));
    }
    const auto sig_len = r.u16();
    auto sig = r.raw(sig_len);
    m.signature.assign(sig.begin(), sig.end());
    if (r.remaining() != 0) {
        throw Error(Errc::BadLength, std::to_string(r.remaining()) + " trailing bytes after signature");
    }
    return m;
}

void validate_shape(const Message& message) {
    auto fail = [](const std::string& path, const std::string& what) {
        throw Error(Errc::ShapeViolation, path + ": " + what);
    };
    const auto n = message.entries.size();
    std::set<ParticipantId> ids;
    for (std::size_t i = 0; i < n; ++i) {
        if (!ids.insert(message.entries[i].participant_id).second) {
            fail("entries[" + std::to_string(i) + "].participant_id", "duplicate participant");
        }
    }
    switch (message.kind) {
        case MessageKind::Init:
        case MessageKind::Del:
            if (n != 0) fail("entries", std::string(to_string(message.kind)) + " carries no entries");
            break;
        case MessageKind::IReply:
        case MessageKind::Join: {
            if (n != 1) fail("entries", std::string(to_string(message.kind)) + " carries exactly one entry");
            const auto& e = message.entries[0];
            if (e.participant_id != message.sender_id) fail("entries[0].participant_id", "not the sender");
            if (e.nonce != message.sender_nonce) fail("entries[0].nonce", "differs from sender_nonce");
            if (e.blinded_response) fail("entries[0].blinded_response", "must be absent");
            break;
        }
        case MessageKind::JReply:
            for (std::size_t i = 0; i < n; ++i) {
                if (message.entries[i].blinded_response) {
                    fail("entries[" + std::to_string(i) + "].blinded_response", "must be absent");
                }
            }
            break;
        case MessageKind::IGroup:
        case MessageKind::JGroup:
        case MessageKind::DGroup:
            for (std::size_t i = 0; i < n; ++i) {
                const auto& e = message.entries[i];
                if (!e.blinded_response) fail("entries[" + std::to_string(i) + "].blinded_response", "missing");
                if (e.participant_id == message.sender_id) {
                    fail("entries[" + std::to_string(i) + "].participant_id", "leader lists itself");
                }
            }
            break;
    }
}

namespace {

Message make(MessageKind kind, ParticipantId sender, const Nonce& nonce, std::uint64_t epoch,
             std::vector<GroupEntry> entries) {
    Message m;
    m.kind = kind;
    m.sender_id = sender;
    m.sender_nonce = nonce;
    m.epoch = epoch;
    m.entries = std::move(entries);
    validate_shape(m);
    return m;
}

GroupEntry own_entry(const gka::Contribution& c) {
    return GroupEntry{c.participant_id, c.nonce, c.blinded_secret, std::nullopt};
}

}  // namespace

Message build_init(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch) {
    return make(MessageKind::Init, leader, nonce, epoch, {});
}

Message build_ireply(const gka::Contribution& own, std::uint64_t epoch) {
    return make(MessageKind::IReply, own.participant_id, own.nonce, epoch, {own_entry(own)});
}

Message build_igroup(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries) {
    return make(MessageKind::IGroup, leader, nonce, epoch, std::move(entries));
}

Message build_join(const gka::Contribution& own, std::uint64_t epoch) {
    return make(MessageKind::Join, own.participant_id, own.nonce, epoch, {own_entry(own)});
}

Message build_jreply(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries) {
    return make(MessageKind::JReply, leader, nonce, epoch, std::move(entries));
}

Message build_jgroup(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries) {
    return make(MessageKind::JGroup, leader, nonce, epoch, std::move(entries));
}

Message build_del(ParticipantId sender, const Nonce& nonce, std::uint64_t epoch) {
    return make(MessageKind::Del, sender, nonce, epoch, {});
}

Message build_dgroup(ParticipantId leader, const Nonce& nonce, std::uint64_t epoch, std::vector<GroupEntry> entries) {
    return make(MessageKind::DGroup, leader, nonce, epoch, std::move(entries));
}

std::vector<GroupEntry> group_entries(std::span<const gka::Contribution> contributions,
                                      std::span<const gka::BlindedResponse> responses) {
    std::vector<GroupEntry> entries;
    entries.reserve(contributions.size());
    for (const auto& c : contributions) {
        GroupEntry e{c.participant_id, c.nonce, c.blinded_secret, std::nullopt};
        for (const auto& r : responses) {
            if (r.participant_id == c.participant_id) {
                e.blinded_response = r.response;
                break;
            }
        }
        if (!e.blinded_response) {
            throw Error(Errc::ShapeViolation, "no response for participant " + std::to_string(c.participant_id));
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

const GroupEntry* find_entry(const Message& message, ParticipantId id) noexcept {
    for (const auto& e : message.entries) {
        if (e.participant_id == id) return &e;
    }
    return nullptr;
}

std::string describe(const Message& message) {
    std::ostringstream os;
    os << to_string(message.kind) << " from=" << message.sender_id << " epoch=" << message.epoch
       << " entries=" << message.entries.size();
    return os.str();
}

}  // namespace agdh::msg
