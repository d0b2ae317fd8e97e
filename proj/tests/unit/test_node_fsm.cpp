#include <doctest.h>

#include <deque>
#include <map>
#include <set>

#include "agdh/error.hpp"
#include "agdh/node_fsm.hpp"
#include "support.hpp"

using namespace agdh;
using namespace agdh::fsm;
using msg::MessageKind;
using agdh::test::s;

namespace {

constexpr Micros T = 5 * kSecond;

NodeConfig quiet_config() {
    NodeConfig c;
    c.jitter_max = 0;
    return c;
}

struct Sent {
    ParticipantId from;
    Outgoing out;
    Micros at;
};

// Zero-latency lossless wiring between machines, driven by hand.
struct Bench {
    std::shared_ptr<const group::GroupParams> params;
    std::shared_ptr<const msg::HmacKeyRing> ring = msg::HmacKeyRing::provision(20, 1);
    NodeConfig config = quiet_config();
    std::map<ParticipantId, std::unique_ptr<NodeMachine>> nodes;
    std::set<ParticipantId> connected;
    std::deque<Sent> queue;
    std::vector<Sent> log;
    std::vector<SecretRecord> secrets;
    std::vector<KeyChange> keys;
    Micros now = 0;

    explicit Bench(std::shared_ptr<const group::GroupParams> p = agdh::test::prod_ptr()) : params(std::move(p)) {}

    NodeMachine& add(ParticipantId id, bool leader = false, bool wired = true) {
        auto& slot = nodes[id];
        slot = std::make_unique<NodeMachine>(id, config, *params, ring, 1000 + id);
        if (wired) connected.insert(id);
        fire(id, Start{leader});
        return *slot;
    }

    NodeMachine& at(ParticipantId id) { return *nodes.at(id); }

    FsmOutput fire(ParticipantId id, const Event& ev) {
        auto out = nodes.at(id)->on_event(ev, now);
        for (const auto& m : out.messages) {
            log.push_back({id, m, now});
            if (connected.count(id)) queue.push_back({id, m, now});
        }
        secrets.insert(secrets.end(), out.secrets.begin(), out.secrets.end());
        if (out.key_change) keys.push_back(*out.key_change);
        return out;
    }

    void flush() {
        while (!queue.empty()) {
            auto s = queue.front();
            queue.pop_front();
            for (auto to : connected) {
                if (to == s.from || (s.out.to && *s.out.to != to)) continue;
                if (nodes.at(to)->stopped()) continue;
                fire(to, MessageArrived{s.out.wire});
            }
        }
    }

    void advance_to(Micros t) {
        flush();
        for (;;) {
            std::optional<std::pair<Micros, ParticipantId>> next;
            for (const auto& [id, n] : nodes) {
                auto d = n->next_deadline();
                if (d && *d <= t && (!next || *d < next->first)) next = std::make_pair(*d, id);
            }
            if (!next) break;
            now = next->first;
            fire(next->second, TimerFired{});
            flush();
        }
        now = t;
    }

    std::vector<Sent> sent_by(ParticipantId id, MessageKind kind) const {
        std::vector<Sent> out;
        for (const auto& s : log) {
            if (s.from == id && s.out.kind == kind) out.push_back(s);
        }
        return out;
    }

    Bytes signed_wire(msg::Message m) const { return msg::encode_wire(msg::sign(std::move(m), *ring, *params), *params); }
};

msg::Message decode(const Bench& b, const Bytes& wire) { return msg::decode_wire(wire, *b.params); }

}  // namespace

TEST_SUITE("node_fsm") {

TEST_CASE("configuration checks") {
    NodeConfig ok;
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.silence_timeout() == 15 * kSecond);
    auto bad = [](auto mutate) {
        NodeConfig c;
        mutate(c);
        try {
            c.validate();
        } catch (const Error& e) {
            return e.code() == Errc::ConfigError;
        }
        return false;
    };
    CHECK(bad([](NodeConfig& c) { c.renew_P = 7 * kSecond; }));
    CHECK(bad([](NodeConfig& c) { c.renew_P = T; }));
    CHECK(bad([](NodeConfig& c) { c.miss_k = 1; }));
    CHECK(bad([](NodeConfig& c) { c.backoff_window_l = 0; }));
    CHECK(bad([](NodeConfig& c) { c.jitter_max = T; }));
    CHECK(bad([](NodeConfig& c) { c.jitter_max = -1; }));

    auto ring = msg::HmacKeyRing::provision(3, 1);
    CHECK_THROWS_AS(NodeMachine(9, NodeConfig{}, agdh::test::toy(), ring, 1), Error);
}

TEST_CASE("silence leads to candidacy and then leadership") {
    std::set<std::uint32_t> draws;
    for (ParticipantId id = 1; id <= 20; ++id) {
        for (int seed = 0; seed < 10; ++seed) {
            auto ring = msg::HmacKeyRing::provision(20, 1);
            NodeMachine n(id, quiet_config(), agdh::test::prod(), ring, static_cast<std::uint64_t>(seed));
            (void)n.on_event(Start{}, 0);
            CHECK(n.next_deadline() == 3 * T);
            CHECK(n.on_event(TimerFired{}, 3 * T - 1).mode_changes.empty());
            CHECK(n.mode() == Mode::Member);
            auto out = n.on_event(TimerFired{}, 3 * T);
            CHECK(n.mode() == Mode::Candidate);
            REQUIRE(n.last_backoff_draw());
            const auto draw = *n.last_backoff_draw();
            draws.insert(draw);
            CHECK(draw >= 1);
            CHECK(draw <= 20);
            CHECK(n.next_deadline() == 3 * T + draw * 100 * kMillisecond);
            out = n.on_event(TimerFired{}, *n.next_deadline());
            CHECK(n.mode() == Mode::Leader);
            REQUIRE(out.messages.size() == 1);
            CHECK(out.messages[0].kind == MessageKind::IGroup);
            CHECK_FALSE(out.messages[0].to);
            auto first = msg::decode_wire(out.messages[0].wire, agdh::test::prod());
            CHECK(first.entries.empty());
            CHECK(first.epoch == 1);
        }
    }
    CHECK(draws.size() == 20);
}

TEST_CASE("a group message during backoff cancels the candidacy") {
    Bench b;
    b.add(2, false, false);
    b.advance_to(3 * T);
    REQUIRE(b.at(2).mode() == Mode::Candidate);

    b.add(5, true, false);
    auto beacon = b.sent_by(5, MessageKind::IGroup).at(0).out.wire;
    auto out = b.fire(2, MessageArrived{beacon});
    CHECK(out.disposition == Disposition::Accepted);
    CHECK(b.at(2).mode() == Mode::Member);
    CHECK(b.at(2).leader_id() == 5);
    REQUIRE(out.messages.size() == 1);
    CHECK(out.messages[0].kind == MessageKind::IReply);
    CHECK(out.messages[0].to == 5);
    CHECK(b.sent_by(2, MessageKind::IGroup).empty());
}

TEST_CASE("leader conflict resolves to the smaller id") {
    Bench b;
    b.add(7, true, false);
    b.add(12, true, false);
    auto beacon7 = b.sent_by(7, MessageKind::IGroup).at(0).out.wire;
    auto beacon12 = b.sent_by(12, MessageKind::IGroup).at(0).out.wire;

    auto out = b.fire(7, MessageArrived{beacon12});
    CHECK(out.reason == "ignored:larger-leader");
    CHECK(out.messages.empty());
    CHECK(b.at(7).mode() == Mode::Leader);

    out = b.fire(12, MessageArrived{beacon7});
    CHECK(b.at(12).mode() == Mode::Member);
    CHECK(b.at(12).leader_id() == 7);
    REQUIRE(out.messages.size() == 1);
    CHECK(out.messages[0].kind == MessageKind::IReply);
    CHECK(out.messages[0].to == 7);

    // Members follow the same rule.
    b.add(3, false, false);
    (void)b.fire(3, MessageArrived{beacon7});
    REQUIRE(b.at(3).leader_id() == 7);
    out = b.fire(3, MessageArrived{beacon12});
    CHECK(out.messages.empty());
    CHECK(b.at(3).leader_id() == 7);

    b.add(4, false, false);
    (void)b.fire(4, MessageArrived{beacon12});
    REQUIRE(b.at(4).leader_id() == 12);
    out = b.fire(4, MessageArrived{beacon7});
    CHECK(b.at(4).leader_id() == 7);
    REQUIRE(out.messages.size() == 1);
    CHECK(out.messages[0].to == 7);
}

TEST_CASE("initial agreement with a fixed leader") {
    Bench b;
    for (ParticipantId id = 2; id <= 5; ++id) b.add(id);
    b.add(1, true);
    b.flush();
    CHECK(b.at(1).pending_count() == 4);
    b.advance_to(T);

    const auto& leader = b.at(1).session();
    REQUIRE(leader);
    for (ParticipantId id = 2; id <= 5; ++id) {
        CAPTURE(id);
        REQUIRE(b.at(id).session());
        CHECK(*b.at(id).session() == *leader);
        CHECK(b.at(id).session_leader() == 1);
        CHECK(b.at(id).exp_count() == 2);
    }
    CHECK(b.at(1).exp_count() == 5);

    std::vector<group::Scalar> member_secrets;
    std::optional<group::Scalar> leader_secret;
    for (const auto& r : b.secrets) {
        if (r.role == SecretRecord::Role::MemberContribution) member_secrets.push_back(r.secret);
        else if (r.epoch == leader->epoch) leader_secret = r.secret;
    }
    REQUIRE(leader_secret);
    REQUIRE(member_secrets.size() == 4);
    group::ExpCounter c;
    group::GroupOps ops(*b.params, c);
    CHECK(gka::oracle_key(*leader_secret, member_secrets, ops) == leader->group_key);
}

TEST_CASE("steady beacons repeat byte for byte") {
    Bench b;
    b.add(2);
    b.add(1, true);
    b.advance_to(4 * T);
    auto beacons = b.sent_by(1, MessageKind::IGroup);
    REQUIRE(beacons.size() == 5);
    CHECK(beacons[2].out.wire == beacons[3].out.wire);
    CHECK(beacons[3].out.wire == beacons[4].out.wire);
    CHECK(beacons[1].at == T);
    CHECK(beacons[4].at == 4 * T);

    const auto exps = b.at(2).exp_count();
    auto out = b.fire(2, MessageArrived{beacons[4].out.wire});
    CHECK_FALSE(out.key_change);
    CHECK(b.at(2).exp_count() == exps);
}

TEST_CASE("a lone leader keeps beaconing an empty group") {
    Bench b;
    b.add(1, true);
    b.advance_to(3 * T);
    auto beacons = b.sent_by(1, MessageKind::IGroup);
    REQUIRE(beacons.size() == 4);
    for (const auto& s : beacons) CHECK(decode(b, s.out.wire).entries.empty());
    CHECK_FALSE(b.at(1).session());
}

TEST_CASE("unverifiable and malformed input changes nothing") {
    Bench b;
    b.add(2);
    b.add(1, true);
    b.advance_to(T);
    const auto session = b.at(2).session();
    const auto view_epoch = b.at(2).view().epoch;

    auto wire = b.sent_by(1, MessageKind::IGroup).back().out.wire;
    auto tampered = wire;
    tampered[10] ^= 1;
    auto out = b.at(2).on_event(MessageArrived{tampered}, b.now);
    CHECK(out.disposition == Disposition::Rejected);
    CHECK(out.reason == "signature");
    CHECK(out.messages.empty());
    CHECK(b.at(2).counters().rejected.at("signature") == 1);

    out = b.at(2).on_event(MessageArrived{Bytes{0x09, 0x00}}, b.now);
    CHECK(out.reason == "decode:UnknownKind");

    auto bad_shape = msg::build_igroup(1, {}, 99, {});
    bad_shape.kind = MessageKind::IReply;
    out = b.at(2).on_event(MessageArrived{b.signed_wire(bad_shape)}, b.now);
    CHECK(out.reason == "shape");

    CHECK(b.at(2).session() == session);
    CHECK(b.at(2).view().epoch == view_epoch);
    CHECK(b.at(2).mode() == Mode::Member);
}

TEST_CASE("echo failure is rejected without a key change") {
    Bench b;
    b.add(2);
    b.add(1, true);
    b.advance_to(T);
    const auto session = b.at(2).session();
    REQUIRE(session);

    auto m = decode(b, b.sent_by(1, MessageKind::IGroup).back().out.wire);
    m.epoch += 1;
    m.entries.at(0).nonce[0] ^= 0xff;
    auto out = b.at(2).on_event(MessageArrived{b.signed_wire(m)}, b.now);
    CHECK(out.disposition == Disposition::Rejected);
    CHECK(out.reason == "echo");
    CHECK_FALSE(out.key_change);
    CHECK(out.mode_changes.empty());
    CHECK(b.at(2).session() == session);
    CHECK(b.at(2).counters().echo_failures == 1);
    REQUIRE(out.messages.size() == 1);
    CHECK(out.messages[0].kind == MessageKind::IReply);
}

TEST_CASE("renewal changes the key") {
    Bench b;
    b.config.renew_P = 4 * T;
    b.add(2);
    b.add(3);
    b.add(1, true);
    b.advance_to(T);
    REQUIRE(b.at(2).session());
    const auto first = *b.at(2).session();
    b.advance_to(5 * T);
    REQUIRE(b.at(2).session());
    CHECK(b.at(2).session()->epoch > first.epoch);
    CHECK(b.at(2).session()->group_key != first.group_key);
    CHECK(*b.at(2).session() == *b.at(1).session());
    CHECK(*b.at(3).session() == *b.at(1).session());
}

TEST_CASE("a graceful leave triggers an immediate rekey") {
    Bench b;
    for (ParticipantId id = 2; id <= 4; ++id) b.add(id);
    b.add(1, true);
    b.advance_to(T);
    const auto before = *b.at(1).session();
    b.now = T + kSecond;
    (void)b.fire(3, LocalLeaveRequest{true});
    CHECK(b.at(3).stopped());
    b.flush();
    auto dgroups = b.sent_by(1, MessageKind::DGroup);
    REQUIRE(dgroups.size() == 1);
    CHECK(dgroups[0].at == T + kSecond);
    auto m = decode(b, dgroups[0].out.wire);
    CHECK(m.entries.size() == 2);
    CHECK(m.epoch == before.epoch + 1);
    CHECK(*b.at(2).session() == *b.at(1).session());
    CHECK(b.at(2).session()->group_key != before.group_key);

    auto out = b.at(3).on_event(MessageArrived{dgroups[0].out.wire}, b.now);
    CHECK(out.reason == "stopped");
}

TEST_CASE("a crashed member is dropped after the silence window") {
    Bench b;
    b.add(2);
    b.add(3);
    b.add(1, true);
    b.advance_to(T);
    b.connected.erase(3);
    b.advance_to(6 * T);
    CHECK(b.at(1).view().members.count(3) == 0);
    CHECK(b.at(1).view().members.count(2) == 1);
    CHECK(*b.at(2).session() == *b.at(1).session());
}

TEST_CASE("a leader DEL sends members into candidacy") {
    Bench b;
    b.add(2);
    b.add(1, true);
    b.advance_to(T);
    (void)b.fire(1, LocalLeaveRequest{true});
    b.flush();
    CHECK(b.at(2).mode() == Mode::Candidate);
}

TEST_CASE("stale epochs are refused") {
    Bench b;
    b.add(2);
    b.add(1, true);
    b.advance_to(2 * T);
    auto beacons = b.sent_by(1, MessageKind::IGroup);
    REQUIRE(beacons.size() >= 2);
    auto out = b.at(2).on_event(MessageArrived{beacons.front().out.wire}, b.now);
    CHECK(out.reason == "stale-epoch");
}

TEST_CASE("batched absorption leaves no exponentiation for the beacon") {
    Bench b;
    for (ParticipantId id = 2; id <= 9; ++id) b.add(id);
    b.add(1, true);
    b.flush();
    const auto before = b.at(1).exp_count();
    CHECK(before == 1 + 8);
    b.advance_to(T);
    CHECK(b.at(1).exp_count() == before);
    CHECK(b.at(1).session());
}

TEST_CASE("a degenerate key drops the last contribution") {
    auto params = agdh::test::toy_ptr();
    Bench b(params);
    b.add(1, true, false);
    group::ExpCounter c;
    group::GroupOps ops(*params, c);
    // 1 + 4 + 6 == 0 mod 11 whatever the leader draws.
    gka::Contribution c2{2, {}, gka::blind(s(4), ops)};
    gka::Contribution c3{3, {}, gka::blind(s(6), ops)};
    c2.nonce[0] = 2;
    c3.nonce[0] = 3;
    b.now = kSecond;
    (void)b.fire(1, MessageArrived{b.signed_wire(msg::build_ireply(c2, 1))});
    (void)b.fire(1, MessageArrived{b.signed_wire(msg::build_ireply(c3, 1))});
    b.advance_to(T);

    CHECK(b.at(1).counters().degenerate_exclusions == 1);
    auto m = decode(b, b.sent_by(1, MessageKind::IGroup).back().out.wire);
    REQUIRE(m.entries.size() == 1);
    CHECK(m.entries[0].participant_id == 2);
    REQUIRE(b.at(1).session());
    CHECK_FALSE(b.at(1).session()->group_key.is_identity());
    std::vector<group::Scalar> member{s(4)};
    CHECK(b.at(1).session()->group_key == gka::oracle_key(*b.at(1).leader_secret(), member, ops));
}

TEST_CASE("the smallest backoff draw wins the election") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Bench b;
        b.config.jitter_max = 0;
        for (ParticipantId id = 2; id <= 6; ++id) {
            b.nodes[id] = std::make_unique<NodeMachine>(id, b.config, *b.params, b.ring, seed * 100 + id);
            b.connected.insert(id);
            b.fire(id, Start{});
        }
        b.advance_to(3 * T + 3 * kSecond);
        std::map<std::uint32_t, std::vector<ParticipantId>> by_draw;
        for (ParticipantId id = 2; id <= 6; ++id) by_draw[*b.at(id).last_backoff_draw()].push_back(id);
        const auto& first = by_draw.begin()->second;
        if (first.size() != 1) continue;
        ++checked;
        std::vector<ParticipantId> leaders;
        for (ParticipantId id = 2; id <= 6; ++id) {
            if (b.at(id).mode() == Mode::Leader) leaders.push_back(id);
        }
        CHECK(leaders == first);
    }
    CHECK(checked >= 10);
}

}  // TEST_SUITE
