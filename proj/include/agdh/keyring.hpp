#pragma once

#include <cstdint>
#include <map>
#include <memory>

#include "agdh/bytes.hpp"
#include "agdh/gka_core.hpp"
#include "agdh/messages.hpp"

namespace agdh::msg {

/// Long-term signing keys for every participant, provisioned before a run.
/// Read-only once built.
class KeyRing {
public:
    virtual ~KeyRing() = default;

    virtual bool knows(ParticipantId id) const = 0;
    /// Throws Error(UnknownParticipant) when `signer` has no key.
    virtual Bytes sign_bytes(ParticipantId signer, ByteView data) const = 0;
    /// False for unknown signers.
    virtual bool verify_bytes(ParticipantId signer, ByteView data, ByteView signature) const = 0;
};

/// Keyed MAC (HMAC-SHA256) with one symmetric test key per participant.
/// Deterministic and fast; adequate for protocol-logic testing only.
class HmacKeyRing final : public KeyRing {
public:
    void add(ParticipantId id, Bytes key);
    /// Keys for ids 1..count, each SHA-256("agdh-hmac" || seed || id).
    static std::shared_ptr<HmacKeyRing> provision(ParticipantId count, std::uint64_t seed);

    bool knows(ParticipantId id) const override;
    Bytes sign_bytes(ParticipantId signer, ByteView data) const override;
    bool verify_bytes(ParticipantId signer, ByteView data, ByteView signature) const override;

private:
    std::map<ParticipantId, Bytes> keys_;
};

/// Ed25519 key pairs derived from a seed (OpenSSL backend).
class Ed25519KeyRing final : public KeyRing {
public:
    Ed25519KeyRing();
    ~Ed25519KeyRing() override;
    Ed25519KeyRing(const Ed25519KeyRing&) = delete;
    Ed25519KeyRing& operator=(const Ed25519KeyRing&) = delete;

    static std::shared_ptr<Ed25519KeyRing> provision(ParticipantId count, std::uint64_t seed);
    void add(ParticipantId id, const std::array<std::uint8_t, 32>& private_seed);

    bool knows(ParticipantId id) const override;
    Bytes sign_bytes(ParticipantId signer, ByteView data) const override;
    bool verify_bytes(ParticipantId signer, ByteView data, ByteView signature) const override;

private:
    struct Keys;
    std::map<ParticipantId, std::unique_ptr<Keys>> keys_;
};

/// Fills message.signature over the canonical bytes using the sender's key.
Message sign(Message message, const KeyRing& keyring, const group::GroupParams& params);
/// Verifies against the key of the claimed sender_id.
bool verify(const Message& message, const KeyRing& keyring, const group::GroupParams& params);

}  // namespace agdh::msg
