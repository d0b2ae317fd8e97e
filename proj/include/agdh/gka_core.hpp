#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "agdh/group_arith.hpp"

namespace agdh::gka {

using group::GroupElement;
using group::GroupOps;
using group::GroupParams;
using group::Scalar;

using ParticipantId = std::uint32_t;
using Nonce = std::array<std::uint8_t, 16>;
using DerivedKey = std::array<std::uint8_t, 32>;

/// A participant's public input to a key agreement: identity, nonce and g^r.
struct Contribution {
    ParticipantId participant_id = 0;
    Nonce nonce{};
    GroupElement blinded_secret;

    friend bool operator==(const Contribution&, const Contribution&) = default;
};

/// (g^r_i)^r_l, returned by the leader for one participant.
struct BlindedResponse {
    ParticipantId participant_id = 0;
    GroupElement response;

    friend bool operator==(const BlindedResponse&, const BlindedResponse&) = default;
};

struct SessionKey {
    GroupElement group_key;
    std::uint64_t epoch = 0;
    DerivedKey derived{};

    friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

struct LeaderResult {
    GroupElement key;
    std::vector<BlindedResponse> responses;
};

/// g^secret. One exponentiation.
GroupElement blind(const Scalar& secret, GroupOps& ops);

/// blinded_secret^leader_secret. One exponentiation.
GroupElement respond(const GroupElement& blinded_secret, const Scalar& leader_secret, GroupOps& ops);

/// response^(own_secret^-1) == g^r_l. One exponentiation plus a scalar inversion.
GroupElement recover_leader_blind(const GroupElement& response, const Scalar& own_secret, GroupOps& ops);

/// leader_blind * prod(responses). Multiplications only.
GroupElement compute_key_member(const GroupElement& leader_blind, std::span<const BlindedResponse> responses,
                                GroupOps& ops);

/// The leader's side of a key agreement over `contributions`: one response per
/// contribution plus g^r_l, i.e. |contributions| + 1 exponentiations. Throws
/// DegenerateKey when the key is the identity (1 + sum r_i == 0 mod q).
LeaderResult compute_key_leader(const Scalar& leader_secret, std::span<const Contribution> contributions,
                                GroupOps& ops);

/// g^(r_l * (1 + sum r_i)) computed in the exponent with a single
/// exponentiation. Shares nothing with the member/leader paths above beyond
/// the group primitives; used by tests and the transcript audit.
GroupElement oracle_key(const Scalar& leader_secret, std::span<const Scalar> member_secrets, GroupOps& ops);

/// SHA-256(encode_element(key) || epoch as 8 big-endian bytes).
DerivedKey derive_session_key(const GroupElement& key, std::uint64_t epoch, const GroupParams& params);

SessionKey make_session(const GroupElement& key, std::uint64_t epoch, const GroupParams& params);

/// Leader-side accumulator for computing blinded responses as contributions
/// arrive. Creating the batch draws g^r_l up front and each absorb performs
/// that contribution's exponentiation, so finalize() needs none.
class LeaderBatch {
public:
    LeaderBatch(Scalar leader_secret, GroupOps& ops);

    /// Throws DuplicateParticipant if the id was already absorbed.
    void absorb(const Contribution& contribution, GroupOps& ops);
    /// Drops an absorbed contribution; the product is rebuilt with multiplications.
    void remove(ParticipantId id, GroupOps& ops);
    bool contains(ParticipantId id) const;
    std::optional<Contribution> find(ParticipantId id) const;

    /// Key and responses ordered by absorption. Zero exponentiations; throws
    /// DegenerateKey when the key would be the identity.
    LeaderResult finalize(GroupOps& ops) const;

    const Scalar& leader_secret() const noexcept { return secret_; }
    const GroupElement& leader_blind() const noexcept { return leader_blind_; }
    const GroupElement& running_product() const noexcept { return product_; }
    std::span<const Contribution> contributions() const noexcept { return contributions_; }
    std::span<const BlindedResponse> responses() const noexcept { return responses_; }
    std::optional<ParticipantId> last_absorbed() const;
    std::size_t size() const noexcept { return responses_.size(); }

private:
    Scalar secret_;
    GroupElement leader_blind_;
    GroupElement product_;
    std::vector<Contribution> contributions_;
    std::vector<BlindedResponse> responses_;
};

}  // namespace agdh::gka
