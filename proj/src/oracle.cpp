#include "agdh/oracle.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "agdh/error.hpp"

namespace agdh::oracle {

namespace {

struct MemberKey {
    ParticipantId node;
    gka::Nonce nonce;
    mpz_class blinded;

    bool operator<(const MemberKey& o) const {
        if (node != o.node) return node < o.node;
        if (nonce != o.nonce) return nonce < o.nonce;
        return cmp(blinded, o.blinded) < 0;
    }
};

}  // namespace

const char* to_string(Finding::Kind kind) noexcept {
    switch (kind) {
        case Finding::Kind::KeyMismatch: return "key-mismatch";
        case Finding::Kind::KdfMismatch: return "kdf-mismatch";
        case Finding::Kind::MissingGroupMessage: return "missing-group-message";
        case Finding::Kind::UnknownSecret: return "unknown-secret";
        case Finding::Kind::UnverifiedAction: return "unverified-action";
        case Finding::Kind::SecretLeak: return "secret-leak";
    }
    return "?";
}

std::string AuditReport::render() const {
    std::ostringstream o;
    o << "keys_checked " << keys_checked << "\n";
    o << "deliveries_checked " << deliveries_checked << "\n";
    o << "messages_scanned " << messages_scanned << (leak_scan ? "" : " (secret scan skipped)") << "\n";
    o << "findings " << findings.size() << "\n";
    for (const auto& f : findings) {
        o << f.at << " " << to_string(f.kind) << " " << f.node << " " << f.detail << "\n";
    }
    o << (clean() ? "CLEAN" : "FINDINGS") << "\n";
    return o.str();
}

AuditReport audit_transcript(const sim::Transcript& transcript, const group::GroupParams& params) {
    AuditReport report;

    std::map<MemberKey, group::Scalar> member_secrets;
    std::map<std::pair<ParticipantId, std::uint64_t>, std::vector<const sim::SecretEvent*>> leader_secrets;
    for (const auto& s : transcript.secrets) {
        if (s.record.role == fsm::SecretRecord::Role::MemberContribution) {
            member_secrets.emplace(MemberKey{s.record.node, s.record.nonce, s.record.blinded.value()}, s.record.secret);
        } else {
            leader_secrets[{s.record.node, s.record.epoch}].push_back(&s);
        }
    }

    std::map<std::pair<ParticipantId, std::uint64_t>, const sim::SentMessage*> group_messages;
    for (const auto& m : transcript.messages) {
        if (m.from_node && msg::is_group_kind(m.kind)) group_messages.emplace(std::pair{m.sender, m.epoch}, &m);
    }

    group::ExpCounter scratch;
    group::GroupOps ops(params, scratch);
    for (const auto& k : transcript.keys) {
        ++report.keys_checked;
        const auto& c = k.change;
        auto add = [&](Finding::Kind kind, std::string detail) {
            report.findings.push_back(Finding{kind, k.at, c.node, std::move(detail)});
        };
        const std::string where = "leader=" + std::to_string(c.leader) + " epoch=" + std::to_string(c.new_epoch);

        if (!(gka::derive_session_key(c.group_key, c.new_epoch, params) == c.derived)) {
            add(Finding::Kind::KdfMismatch, where);
        }
        auto gm = group_messages.find({c.leader, c.new_epoch});
        if (gm == group_messages.end() || gm->second->send_seq > k.seq) {
            add(Finding::Kind::MissingGroupMessage, where);
            continue;
        }
        auto m = msg::decode_wire(gm->second->wire, params);

        const sim::SecretEvent* leader_secret = nullptr;
        if (auto it = leader_secrets.find({c.leader, c.new_epoch}); it != leader_secrets.end()) {
            for (const auto* s : it->second) {
                if (s->seq <= k.seq) leader_secret = s;
            }
        }
        if (leader_secret == nullptr) {
            add(Finding::Kind::UnknownSecret, where + " leader secret");
            continue;
        }
        std::vector<group::Scalar> secrets;
        bool missing = false;
        for (const auto& e : m.entries) {
            auto it = member_secrets.find(MemberKey{e.participant_id, e.nonce, e.blinded_secret.value()});
            if (it == member_secrets.end()) {
                add(Finding::Kind::UnknownSecret, where + " member=" + std::to_string(e.participant_id));
                missing = true;
                break;
            }
            secrets.push_back(it->second);
        }
        if (missing) continue;
        auto expected = gka::oracle_key(leader_secret->record.secret, secrets, ops);
        if (!(expected == c.group_key)) add(Finding::Kind::KeyMismatch, where);
    }

    for (const auto& d : transcript.deliveries) {
        ++report.deliveries_checked;
        if (!d.verified && (d.acted || d.disposition == fsm::Disposition::Accepted)) {
            report.findings.push_back(Finding{Finding::Kind::UnverifiedAction, d.at, d.receiver,
                                              "message=" + std::to_string(d.message)});
        }
    }

    const std::size_t width = params.element_width();
    report.leak_scan = width >= 8;
    if (report.leak_scan) {
        std::set<Bytes> encoded;
        for (const auto& s : transcript.secrets) encoded.insert(group::encode_scalar(s.record.secret, width));
        for (const auto& sent : transcript.messages) {
            if (!sent.from_node) continue;
            ++report.messages_scanned;
            auto m = msg::decode_wire(sent.wire, params);
            for (const auto& e : m.entries) {
                bool leak = encoded.contains(group::encode_element(e.blinded_secret, params));
                if (e.blinded_response) leak = leak || encoded.contains(group::encode_element(*e.blinded_response, params));
                if (leak) {
                    report.findings.push_back(Finding{Finding::Kind::SecretLeak, sent.at, sent.sender,
                                                      "message=" + std::to_string(sent.id)});
                }
            }
        }
    }
    return report;
}

IkaMeasurement measure_ika(std::size_t group_size, std::uint64_t seed,
                           std::shared_ptr<const group::GroupParams> params) {
    if (group_size < 2) throw Error(Errc::ConfigError, "an establishment needs at least two nodes");
    sim::SimConfig config;
    config.node_count = static_cast<std::uint32_t>(group_size);
    config.loss_prob = 0.0;
    config.seed = seed;
    config.duration = 60 * fsm::kSecond;
    config.initial_leader = 1;
    fsm::NodeConfig node_config;
    node_config.jitter_max = 0;

    sim::Simulator simulator(config, node_config, std::move(params));
    IkaMeasurement result;
    result.group_size = group_size;
    result.leader = 1;
    auto established = [&] {
        const auto& s = simulator.node(1).session();
        return s && simulator.converged() && simulator.live_nodes().size() == group_size;
    };
    while (!established() && simulator.step()) {
    }
    if (!established()) return result;

    result.complete = true;
    result.epoch = simulator.node(1).session()->epoch;
    result.established_at = simulator.now();
    result.leader_exps = simulator.exp_count(1);
    for (ParticipantId id = 2; id <= group_size; ++id) result.member_exps[id] = simulator.exp_count(id);

    const auto& t = simulator.transcript();
    std::uint64_t start_seq = 0;
    std::uint64_t end_seq = 0;
    for (const auto& m : t.messages) {
        if (m.sender != 1 || !m.from_node) continue;
        if (start_seq == 0) start_seq = m.send_seq;
        if (msg::is_group_kind(m.kind) && m.epoch == result.epoch) {
            end_seq = m.send_seq;
            break;
        }
    }

    // A message's round is one more than the deepest window message its
    // sender had received before sending it.
    std::map<ParticipantId, std::uint64_t> depth_at;
    std::map<std::uint64_t, std::uint64_t> depth_of;
    for (const auto& r : t.records) {
        if (r.seq <= start_seq) continue;
        if (r.seq > end_seq) break;
        if (r.kind == sim::RecordKind::Send) {
            const auto& m = t.message(r.message);
            auto depth = 1 + depth_at[m.sender];
            depth_of[m.id] = depth;
            result.rounds = std::max(result.rounds, depth);
            ++result.messages;
            if (m.to) ++result.unicasts;
            else ++result.broadcasts;
        } else if (r.kind == sim::RecordKind::Recv) {
            if (auto it = depth_of.find(r.message); it != depth_of.end()) {
                depth_at[r.node] = std::max(depth_at[r.node], it->second);
            }
        }
    }
    return result;
}

std::string CostRow::render() const {
    std::ostringstream o;
    o << "m=" << group_size << " exps/member=" << member_exps_min;
    if (member_exps_max != member_exps_min) o << ".." << member_exps_max;
    o << " exps/leader=" << leader_exps << " messages=" << messages << " broadcasts=" << broadcasts
      << " rounds=" << rounds;
    return o.str();
}

CostRow cost_table(const IkaMeasurement& m) {
    CostRow row;
    row.group_size = m.group_size;
    if (!m.member_exps.empty()) {
        auto [lo, hi] = std::minmax_element(m.member_exps.begin(), m.member_exps.end(),
                                            [](const auto& a, const auto& b) { return a.second < b.second; });
        row.member_exps_min = lo->second;
        row.member_exps_max = hi->second;
    }
    row.leader_exps = m.leader_exps;
    row.messages = m.messages;
    row.broadcasts = m.broadcasts;
    row.rounds = m.rounds;
    return row;
}

void check_cost_row(const CostRow& row, std::size_t group_size) {
    std::vector<std::string> bad;
    auto expect = [&](const char* field, std::uint64_t got, std::uint64_t want) {
        if (got != want) bad.push_back(std::string(field) + " " + std::to_string(got) + " != " + std::to_string(want));
    };
    expect("group_size", row.group_size, group_size);
    expect("member exps (min)", row.member_exps_min, 2);
    expect("member exps (max)", row.member_exps_max, 2);
    expect("leader exps", row.leader_exps, group_size);
    expect("messages", row.messages, group_size);
    expect("broadcasts", row.broadcasts, 1);
    expect("rounds", row.rounds, 2);
    if (!bad.empty()) {
        std::string detail;
        for (const auto& b : bad) detail += (detail.empty() ? "" : "; ") + b;
        throw Error(Errc::CountMismatch, detail);
    }
}

}  // namespace agdh::oracle
