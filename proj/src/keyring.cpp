#include "agdh/keyring.hpp"

#include <openssl/evp.h>

#include <stdexcept>

#include "agdh/crypto.hpp"
#include "agdh/error.hpp"

namespace agdh::msg {

namespace {

std::array<std::uint8_t, 32> derive_seed(const char* label, std::uint64_t seed, ParticipantId id) {
    ByteWriter w;
    for (const char* c = label; *c != '\0'; ++c) w.u8(static_cast<std::uint8_t>(*c));
    w.u64(seed);
    w.u32(id);
    return crypto::sha256(w.bytes());
}

[[noreturn]] void unknown(ParticipantId id) {
    throw Error(Errc::UnknownParticipant, "no key for participant " + std::to_string(id));
}

}  // namespace

void HmacKeyRing::add(ParticipantId id, Bytes key) { keys_[id] = std::move(key); }

std::shared_ptr<HmacKeyRing> HmacKeyRing::provision(ParticipantId count, std::uint64_t seed) {
    auto ring = std::make_shared<HmacKeyRing>();
    for (ParticipantId id = 1; id <= count; ++id) {
        auto k = derive_seed("agdh-hmac", seed, id);
        ring->add(id, Bytes(k.begin(), k.end()));
    }
    return ring;
}

bool HmacKeyRing::knows(ParticipantId id) const { return keys_.contains(id); }

Bytes HmacKeyRing::sign_bytes(ParticipantId signer, ByteView data) const {
    auto it = keys_.find(signer);
    if (it == keys_.end()) unknown(signer);
    auto mac = crypto::hmac_sha256(it->second, data);
    return Bytes(mac.begin(), mac.end());
}

bool HmacKeyRing::verify_bytes(ParticipantId signer, ByteView data, ByteView signature) const {
    auto it = keys_.find(signer);
    if (it == keys_.end()) return false;
    auto mac = crypto::hmac_sha256(it->second, data);
    return crypto::equal(mac, signature);
}

struct Ed25519KeyRing::Keys {
    EVP_PKEY* pkey = nullptr;
    ~Keys() { EVP_PKEY_free(pkey); }
};

Ed25519KeyRing::Ed25519KeyRing() = default;
Ed25519KeyRing::~Ed25519KeyRing() = default;

std::shared_ptr<Ed25519KeyRing> Ed25519KeyRing::provision(ParticipantId count, std::uint64_t seed) {
    auto ring = std::make_shared<Ed25519KeyRing>();
    for (ParticipantId id = 1; id <= count; ++id) ring->add(id, derive_seed("agdh-ed25519", seed, id));
    return ring;
}

void Ed25519KeyRing::add(ParticipantId id, const std::array<std::uint8_t, 32>& private_seed) {
    auto keys = std::make_unique<Keys>();
    keys->pkey = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, private_seed.data(), private_seed.size());
    if (keys->pkey == nullptr) throw std::runtime_error("EVP_PKEY_new_raw_private_key(ED25519) failed");
    keys_[id] = std::move(keys);
}

bool Ed25519KeyRing::knows(ParticipantId id) const { return keys_.contains(id); }

Bytes Ed25519KeyRing::sign_bytes(ParticipantId signer, ByteView data) const {
    auto it = keys_.find(signer);
    if (it == keys_.end()) unknown(signer);
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    Bytes sig(64);
    std::size_t len = sig.size();
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, it->second->pkey) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &len, data.data(), data.size()) != 1) {
        throw std::runtime_error("Ed25519 signing failed");
    }
    sig.resize(len);
    return sig;
}

bool Ed25519KeyRing::verify_bytes(ParticipantId signer, ByteView data, ByteView signature) const {
    auto it = keys_.find(signer);
    if (it == keys_.end()) return false;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, it->second->pkey) != 1) return false;
    return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), data.data(), data.size()) == 1;
}

Message sign(Message message, const KeyRing& keyring, const group::GroupParams& params) {
    message.signature = keyring.sign_bytes(message.sender_id, encode_canonical(message, params));
    return message;
}

bool verify(const Message& message, const KeyRing& keyring, const group::GroupParams& params) {
    return keyring.verify_bytes(message.sender_id, encode_canonical(message, params), message.signature);
}

}  // namespace agdh::msg
