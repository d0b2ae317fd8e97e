#include "agdh/gka_core.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "agdh/crypto.hpp"
#include "agdh/error.hpp"

namespace agdh::gka {

namespace {

void require_nonzero(const Scalar& s, const char* what) {
    if (s.is_zero()) throw Error(Errc::ZeroScalar, std::string(what) + " is zero");
}

void require_member(const GroupElement& e, const GroupParams& params, const char* what) {
    if (!params.contains(e.value())) throw Error(Errc::NotInSubgroup, std::string(what) + " is not in the subgroup");
}

}  // namespace

GroupElement blind(const Scalar& secret, GroupOps& ops) {
    require_nonzero(secret, "secret");
    return ops.exp(ops.params().generator(), secret);
}

GroupElement respond(const GroupElement& blinded_secret, const Scalar& leader_secret, GroupOps& ops) {
    require_member(blinded_secret, ops.params(), "blinded secret");
    return ops.exp(blinded_secret, leader_secret);
}

GroupElement recover_leader_blind(const GroupElement& response, const Scalar& own_secret, GroupOps& ops) {
    require_nonzero(own_secret, "own secret");
    return ops.exp(response, ops.scalar_inverse(own_secret));
}

GroupElement compute_key_member(const GroupElement& leader_blind, std::span<const BlindedResponse> responses,
                                GroupOps& ops) {
    std::set<ParticipantId> seen;
    GroupElement key = leader_blind;
    for (const auto& r : responses) {
        if (!seen.insert(r.participant_id).second) {
            throw Error(Errc::DuplicateParticipant, "participant " + std::to_string(r.participant_id));
        }
        key = ops.mul(key, r.response);
    }
    return key;
}

LeaderResult compute_key_leader(const Scalar& leader_secret, std::span<const Contribution> contributions,
                                GroupOps& ops) {
    require_nonzero(leader_secret, "leader secret");
    std::set<ParticipantId> seen;
    for (const auto& c : contributions) {
        if (!seen.insert(c.participant_id).second) {
            throw Error(Errc::DuplicateParticipant, "participant " + std::to_string(c.participant_id));
        }
    }
    LeaderResult result;
    result.responses.reserve(contributions.size());
    GroupElement key = ops.exp(ops.params().generator(), leader_secret);
    for (const auto& c : contributions) {
        auto response = respond(c.blinded_secret, leader_secret, ops);
        key = ops.mul(key, response);
        result.responses.push_back({c.participant_id, std::move(response)});
    }
    if (key.is_identity()) throw Error(Errc::DegenerateKey, "1 + sum of member secrets is 0 mod q");
    result.key = std::move(key);
    return result;
}

DerivedKey derive_session_key(const GroupElement& key, std::uint64_t epoch, const GroupParams& params) {
    if (key.is_identity()) throw Error(Errc::DegenerateKey, "refusing to derive from the identity element");
    Bytes input = group::encode_element(key, params);
    for (int shift = 56; shift >= 0; shift -= 8) input.push_back(static_cast<std::uint8_t>(epoch >> shift));
    return crypto::sha256(input);
}

SessionKey make_session(const GroupElement& key, std::uint64_t epoch, const GroupParams& params) {
    return SessionKey{key, epoch, derive_session_key(key, epoch, params)};
}

LeaderBatch::LeaderBatch(Scalar leader_secret, GroupOps& ops) : secret_(std::move(leader_secret)) {
    require_nonzero(secret_, "leader secret");
    leader_blind_ = ops.exp(ops.params().generator(), secret_);
}

void LeaderBatch::absorb(const Contribution& contribution, GroupOps& ops) {
    if (contains(contribution.participant_id)) {
        throw Error(Errc::DuplicateParticipant, "participant " + std::to_string(contribution.participant_id));
    }
    auto response = respond(contribution.blinded_secret, secret_, ops);
    product_ = ops.mul(product_, response);
    contributions_.push_back(contribution);
    responses_.push_back({contribution.participant_id, std::move(response)});
}

void LeaderBatch::remove(ParticipantId id, GroupOps& ops) {
    auto it = std::find_if(responses_.begin(), responses_.end(),
                           [id](const BlindedResponse& r) { return r.participant_id == id; });
    if (it == responses_.end()) return;
    auto index = it - responses_.begin();
    responses_.erase(it);
    contributions_.erase(contributions_.begin() + index);
    product_ = GroupElement{};
    for (const auto& r : responses_) product_ = ops.mul(product_, r.response);
}

bool LeaderBatch::contains(ParticipantId id) const {
    return std::any_of(responses_.begin(), responses_.end(),
                       [id](const BlindedResponse& r) { return r.participant_id == id; });
}

std::optional<Contribution> LeaderBatch::find(ParticipantId id) const {
    for (const auto& c : contributions_) {
        if (c.participant_id == id) return c;
    }
    return std::nullopt;
}

std::optional<ParticipantId> LeaderBatch::last_absorbed() const {
    if (responses_.empty()) return std::nullopt;
    return responses_.back().participant_id;
}

LeaderResult LeaderBatch::finalize(GroupOps& ops) const {
    GroupElement key = ops.mul(leader_blind_, product_);
    if (key.is_identity()) throw Error(Errc::DegenerateKey, "1 + sum of member secrets is 0 mod q");
    return LeaderResult{std::move(key), responses_};
}

}  // namespace agdh::gka
