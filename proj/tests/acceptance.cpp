// Acceptance suite: one line per criterion, exit status 0 only if all pass.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "agdh/error.hpp"
#include "agdh/oracle.hpp"

using namespace agdh;
namespace fs = std::filesystem;
using fsm::kMillisecond;
using fsm::kSecond;
using fsm::Micros;

namespace {

// Pinned tolerances.
constexpr Micros kPeriod = 5 * kSecond;
constexpr Micros kConvergenceAfterReply = 3 * kPeriod;
constexpr Micros kElectionBound = 3 * kPeriod + 20 * 100 * kMillisecond + kPeriod;  // kT + l*t_rtd + T
constexpr Micros kCrashAt = 30 * kSecond;
constexpr int kElectionTrials = 100;
constexpr int kElectionRequired = 100;
constexpr double kLoss = 0.3;
constexpr Micros kLossBudget = 60 * kSecond;
constexpr int kLossTrials = 100;
constexpr int kLossRequired = 95;
constexpr std::size_t kBatchSize = 50;
constexpr int kDeterminismRuns = 3;

std::shared_ptr<const group::GroupParams> prod() {
    static auto p = std::make_shared<const group::GroupParams>(
        group::GroupParams::load(fs::path(AGDH_PARAMS_DIR) / "modp-1024-160.txt"));
    return p;
}

std::shared_ptr<const group::GroupParams> toy() {
    static auto p = std::make_shared<const group::GroupParams>(group::GroupParams::toy());
    return p;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;
int only = 0;

void report(int number, const std::string& name, const std::function<Outcome()>& check) {
    if (only != 0 && only != number) return;
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", number, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

// 1 ------------------------------------------------------------------------

Outcome key_agreement() {
    std::ostringstream detail;
    bool pass = true;
    for (std::uint32_t n : {2U, 3U, 5U, 10U, 50U}) {
        sim::SimConfig config;
        config.node_count = n;
        config.seed = 1000 + n;
        config.duration = 60 * kSecond;
        sim::Simulator s(config, fsm::NodeConfig{}, prod());
        s.run();
        bool ok = s.converged();
        Micros lag = -1;
        if (ok) {
            auto leader = s.leaders().front();
            const auto& L = s.node(leader);
            std::vector<group::Scalar> secrets;
            for (auto id : s.live_nodes()) {
                if (id != leader) secrets.push_back(s.node(id).contribution()->secret);
            }
            group::ExpCounter scratch;
            group::GroupOps ops(s.params(), scratch);
            auto expected = gka::oracle_key(*L.leader_secret(), secrets, ops);
            for (auto id : s.live_nodes()) ok = ok && s.node(id).session()->group_key == expected;

            // Last IREPLY that carried a contribution not offered before.
            std::set<Bytes> offered;
            Micros last_new = 0;
            for (const auto& m : s.transcript().messages) {
                if (m.kind != msg::MessageKind::IReply) continue;
                auto decoded = msg::decode_wire(m.wire, s.params());
                Bytes key(decoded.entries[0].nonce.begin(), decoded.entries[0].nonce.end());
                if (offered.insert(key).second) last_new = m.at;
            }
            lag = *s.converged_since() - last_new;
            ok = ok && lag <= kConvergenceAfterReply;
            ok = ok && oracle::audit_transcript(s.transcript(), s.params()).clean();
        }
        pass = pass && ok;
        detail << "n=" << n << (ok ? " ok" : " BAD") << " (" << lag / kMillisecond << "ms) ";
    }
    return {pass, detail.str()};
}

// 2 ------------------------------------------------------------------------

Outcome cost_row() {
    std::ostringstream detail;
    bool pass = true;
    for (std::size_t m : {2U, 4U, 10U, 50U}) {
        auto row = oracle::cost_table(oracle::measure_ika(m, 7, prod()));
        try {
            oracle::check_cost_row(row, m);
            detail << "[" << row.render() << "] ";
        } catch (const Error& e) {
            pass = false;
            detail << "[" << e.what() << "] ";
        }
    }
    return {pass, detail.str()};
}

// 3 ------------------------------------------------------------------------

Outcome toy_exhaustive() {
    const auto& params = *toy();
    group::ExpCounter counter;
    group::GroupOps ops(params, counter);
    int cases = 0;
    int matched = 0;
    int degenerate = 0;
    for (std::uint64_t rl = 1; rl <= 10; ++rl) {
        for (std::uint64_t ri = 1; ri <= 10; ++ri) {
            for (std::uint64_t rj = 1; rj <= 10; ++rj) {
                ++cases;
                auto sl = group::Scalar::from_u64(rl, params);
                auto si = group::Scalar::from_u64(ri, params);
                auto sj = group::Scalar::from_u64(rj, params);
                std::vector<group::Scalar> members{si, sj};
                auto expected = gka::oracle_key(sl, members, ops);
                std::vector<gka::Contribution> contributions{{2, {}, gka::blind(si, ops)}, {3, {}, gka::blind(sj, ops)}};
                try {
                    auto leader = gka::compute_key_leader(sl, contributions, ops);
                    bool ok = leader.key == expected;
                    for (std::size_t k = 0; k < 2; ++k) {
                        auto blind = gka::recover_leader_blind(leader.responses[k].response, members[k], ops);
                        ok = ok && gka::compute_key_member(blind, leader.responses, ops) == expected;
                    }
                    if (ok) ++matched;
                } catch (const Error& e) {
                    if (e.code() == Errc::DegenerateKey && expected.is_identity()) {
                        ++matched;
                        ++degenerate;
                    }
                }
            }
        }
    }
    std::ostringstream detail;
    detail << matched << "/" << cases << " match (" << degenerate << " degenerate, rejected on both paths)";
    return {cases == 1000 && matched == cases, detail.str()};
}

// 4 ------------------------------------------------------------------------

Outcome rekey_semantics() {
    sim::SimConfig config;
    config.node_count = 5;
    config.seed = 4;
    config.initial_leader = 1;
    config.duration = 150 * kSecond;
    config.scenario = sim::Scenario::parse("40s join 6\n70s leave 3 graceful\n100s leave 4 crash\n");
    sim::Simulator s(config, fsm::NodeConfig{}, prod());
    s.run();
    const auto& t = s.transcript();

    struct LeaderKey {
        Micros at;
        std::uint64_t epoch;
        gka::DerivedKey derived;
    };
    std::vector<LeaderKey> leader_keys;
    for (const auto& k : t.keys) {
        if (k.change.node == 1) leader_keys.push_back({k.at, k.change.new_epoch, k.change.derived});
    }
    std::map<std::uint64_t, group::Scalar> leader_secret;
    for (const auto& sec : t.secrets) {
        if (sec.record.role == fsm::SecretRecord::Role::LeaderSecret && sec.record.node == 1) {
            leader_secret[sec.record.epoch] = sec.record.secret;
        }
    }
    auto before = [&](Micros at) {
        const LeaderKey* k = nullptr;
        for (const auto& lk : leader_keys) {
            if (lk.at <= at) k = &lk;
        }
        return k;
    };
    auto after = [&](Micros at) -> const LeaderKey* {
        for (const auto& lk : leader_keys) {
            if (lk.at > at) return &lk;
        }
        return nullptr;
    };

    std::ostringstream detail;
    bool pass = true;
    for (const auto& ev : config.scenario.events) {
        const auto* b = before(ev.at);
        const auto* a = after(ev.at);
        bool ok = b && a && a->epoch > b->epoch && !(a->derived == b->derived) &&
                  !(leader_secret.at(a->epoch) == leader_secret.at(b->epoch));
        if (ok) {
            // Membership of the new key matches the event.
            for (const auto& m : t.messages) {
                if (m.sender == 1 && msg::is_group_kind(m.kind) && m.epoch == a->epoch) {
                    auto decoded = msg::decode_wire(m.wire, s.params());
                    bool listed = msg::find_entry(decoded, ev.node) != nullptr;
                    ok = ok && (ev.verb == sim::ScenarioEvent::Verb::Join ? listed : !listed);
                    break;
                }
            }
        }
        if (ev.verb == sim::ScenarioEvent::Verb::Leave) {
            // The departed node's last key must never come back.
            std::optional<gka::DerivedKey> last;
            for (const auto& k : t.keys) {
                if (k.change.node == ev.node && k.at <= ev.at) last = k.change.derived;
            }
            for (const auto& k : t.keys) {
                if (last && k.at > ev.at && k.change.derived == *last) ok = false;
            }
        }
        pass = pass && ok;
        detail << sim::format_duration(ev.at)
               << (ev.verb == sim::ScenarioEvent::Verb::Join ? " join" : ev.graceful ? " leave" : " crash") << " "
               << (b ? b->epoch : 0) << "->" << (a ? a->epoch : 0) << (ok ? " ok; " : " BAD; ");
    }
    auto audit = oracle::audit_transcript(t, s.params());
    pass = pass && audit.clean() && s.converged();
    detail << "audit " << (audit.clean() ? "clean" : "FINDINGS") << ", keys checked " << audit.keys_checked;
    return {pass, detail.str()};
}

// 5 ------------------------------------------------------------------------

Outcome leader_election() {
    int elected = 0;
    int merges = 0;
    int merges_min = 0;
    Micros worst = 0;
    for (int trial = 1; trial <= kElectionTrials; ++trial) {
        sim::SimConfig config;
        config.node_count = 10;
        config.seed = static_cast<std::uint64_t>(trial);
        config.duration = kCrashAt + 2 * kElectionBound;
        sim::Simulator s(config, fsm::NodeConfig{}, prod());

        std::set<gka::ParticipantId> coexisting;
        s.set_observer([&](const sim::Simulator& sim) {
            auto leads = sim.leaders();
            if (leads.size() > 1) {
                coexisting.insert(leads.begin(), leads.end());
            } else if (!coexisting.empty()) {
                ++merges;
                if (leads.size() == 1 && leads.front() == *coexisting.begin()) ++merges_min;
                coexisting.clear();
            }
        });
        s.run_until(kCrashAt);
        auto leads = s.leaders();
        if (leads.size() != 1) continue;
        s.node_leave(leads.front(), false, kCrashAt);
        s.step();

        std::optional<Micros> first_single;
        while (s.step()) {
            if (!first_single && s.leaders().size() == 1) first_single = s.now();
            if (s.now() >= kCrashAt + kElectionBound) break;
        }
        s.run_until(kCrashAt + kElectionBound);
        if (first_single && s.leaders().size() == 1 && *first_single - kCrashAt <= kElectionBound) {
            ++elected;
            worst = std::max(worst, *first_single - kCrashAt);
        }
        s.run();
    }
    std::ostringstream detail;
    detail << elected << "/" << kElectionTrials << " single leader within " << kElectionBound / kSecond
           << "s (worst " << worst / kMillisecond << "ms); merges resolved to min id " << merges_min << "/" << merges;
    return {elected >= kElectionRequired && merges_min == merges, detail.str()};
}

// 6 ------------------------------------------------------------------------

Outcome loss_robustness() {
    int converged = 0;
    Micros worst = 0;
    for (int trial = 1; trial <= kLossTrials; ++trial) {
        sim::SimConfig config;
        config.node_count = 10;
        config.loss_prob = kLoss;
        config.seed = static_cast<std::uint64_t>(trial);
        config.duration = kLossBudget;
        sim::Simulator s(config, fsm::NodeConfig{}, prod());
        std::optional<Micros> first;
        while (!first && s.step()) {
            if (s.converged() && s.live_nodes().size() == 10) first = s.now();
        }
        if (first) {
            ++converged;
            worst = std::max(worst, *first);
        }
    }
    std::ostringstream detail;
    detail << converged << "/" << kLossTrials << " converged within " << kLossBudget / kSecond
           << "s at loss " << kLoss << " (required " << kLossRequired << ", slowest " << worst / kMillisecond
           << "ms)";
    return {converged >= kLossRequired, detail.str()};
}

// 7 ------------------------------------------------------------------------

struct Snapshot {
    fsm::Mode mode;
    std::optional<gka::ParticipantId> leader;
    std::uint64_t epoch;
    std::optional<gka::SessionKey> session;
    std::optional<gka::Nonce> contribution;

    bool operator==(const Snapshot&) const = default;
};

Snapshot snapshot(const fsm::NodeMachine& n) {
    std::optional<gka::Nonce> c;
    if (n.contribution()) c = n.contribution()->pub.nonce;
    return {n.mode(), n.leader_id(), n.view().epoch, n.session(), c};
}

Outcome adversarial() {
    sim::SimConfig config;
    config.node_count = 5;
    config.seed = 77;
    config.initial_leader = 1;
    config.duration = 40 * kSecond;
    sim::Simulator s(config, fsm::NodeConfig{}, prod());
    const Micros at = 27 * kSecond;
    s.run_until(at);
    const auto& params = s.params();
    const auto& keyring = s.keyring();
    const auto& t = s.transcript();

    const sim::SentMessage* first_group = nullptr;
    const sim::SentMessage* current_group = nullptr;
    const sim::SentMessage* first_reply = nullptr;
    for (const auto& m : t.messages) {
        if (m.sender == 1 && m.kind == msg::MessageKind::IGroup) {
            if (!first_group) first_group = &m;
            current_group = &m;
        }
        if (m.sender == 2 && m.kind == msg::MessageKind::IReply && !first_reply) first_reply = &m;
    }
    auto current = msg::decode_wire(current_group->wire, params);

    std::vector<std::pair<gka::ParticipantId, Bytes>> corpus;
    auto add = [&](gka::ParticipantId to, Bytes wire) { corpus.emplace_back(to, std::move(wire)); };
    for (std::size_t i = 0; i < 4; ++i) {
        Bytes w = current_group->wire;
        w[w.size() - 1 - i * 7] ^= 0x01;  // signature bytes
        add(2 + static_cast<gka::ParticipantId>(i % 4), w);
    }
    {
        Bytes w = current_group->wire;
        w[31 + 4 + 16 + 1 + params.element_width() - 1] ^= 0x01;  // last byte of the first blinded secret
        add(3, w);
    }
    {
        // Signed by node 3, claiming to be the leader.
        auto forged = current;
        forged.epoch += 1;
        forged.signature = keyring.sign_bytes(3, msg::encode_canonical(forged, params));
        add(2, msg::encode_wire(forged, params));
        auto reply = msg::decode_wire(first_reply->wire, params);
        reply.signature = keyring.sign_bytes(4, msg::encode_canonical(reply, params));
        add(1, msg::encode_wire(reply, params));
    }
    // Stale-epoch replays of genuinely signed messages.
    add(2, first_group->wire);
    add(3, first_group->wire);
    add(1, first_reply->wire);
    {
        // Correctly signed by the leader but echoing the wrong nonce.
        for (gka::ParticipantId victim : {2U, 3U}) {
            auto bad = current;
            bad.epoch += 1;
            for (auto& e : bad.entries) {
                if (e.participant_id == victim) e.nonce[0] ^= 0xff;
            }
            add(victim, msg::encode_wire(msg::sign(bad, keyring, params), params));
        }
    }
    {
        Bytes w = current_group->wire;
        w.pop_back();
        add(4, w);
        Bytes k = current_group->wire;
        k[0] = 0x09;
        add(5, k);
    }

    std::map<gka::ParticipantId, Snapshot> before;
    for (auto id : s.live_nodes()) before.emplace(id, snapshot(s.node(id)));
    const auto first_message = t.messages.size() + 1;
    for (auto& [to, wire] : corpus) s.inject(to, wire, at);
    const auto key_records = t.keys.size();
    s.run_until(at + 100 * kMillisecond);

    int accepted = 0;
    int delivered = 0;
    for (const auto& d : t.deliveries) {
        if (d.message < first_message || d.message >= first_message + corpus.size()) continue;
        ++delivered;
        if (d.disposition != fsm::Disposition::Rejected) ++accepted;
    }
    int transitions = 0;
    for (auto id : s.live_nodes()) {
        if (!(snapshot(s.node(id)) == before.at(id))) ++transitions;
    }
    const auto key_changes = t.keys.size() - key_records;
    std::ostringstream detail;
    detail << corpus.size() << " tampered messages, " << delivered << " delivered, " << accepted << " accepted, "
           << transitions << " state transitions, " << key_changes << " key changes";
    return {delivered == static_cast<int>(corpus.size()) && accepted == 0 && transitions == 0 && key_changes == 0,
            detail.str()};
}

// 8 ------------------------------------------------------------------------

Outcome batching() {
    const auto& params = *prod();
    Rng rng(8);
    group::ExpCounter setup;
    group::GroupOps setup_ops(params, setup);
    std::vector<gka::Contribution> contributions;
    for (std::size_t i = 0; i < kBatchSize; ++i) {
        contributions.push_back({static_cast<gka::ParticipantId>(i + 2), {},
                                 gka::blind(group::random_scalar(rng, params), setup_ops)});
    }
    auto leader_secret = group::random_scalar(rng, params);

    group::ExpCounter batched;
    group::GroupOps bops(params, batched);
    gka::LeaderBatch batch(leader_secret, bops);
    for (const auto& c : contributions) batch.absorb(c, bops);
    const auto before_finalize = batched.count;
    auto result = batch.finalize(bops);
    const auto at_finalize = batched.count - before_finalize;

    group::ExpCounter plain;
    group::GroupOps pops(params, plain);
    auto reference = gka::compute_key_leader(leader_secret, contributions, pops);

    const bool same = result.key == reference.key && result.responses == reference.responses;
    std::ostringstream detail;
    detail << "batched: " << at_finalize << " exps at finalize; unbatched: " << plain.count
           << " exps after the last contribution; results " << (same ? "identical" : "DIFFER");
    return {at_finalize == 0 && plain.count >= kBatchSize && same, detail.str()};
}

// 9 ------------------------------------------------------------------------

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream b;
    b << f.rdbuf();
    return b.str();
}

Outcome determinism() {
    struct Reference {
        std::string name;
        sim::SimConfig config;
    };
    std::vector<Reference> refs(2);
    refs[0].name = "seed42_n10.txt";
    refs[0].config.node_count = 10;
    refs[0].config.seed = 42;
    refs[0].config.duration = 120 * kSecond;
    refs[1].name = "merge_split_seed7.txt";
    refs[1].config.node_count = 10;
    refs[1].config.seed = 7;
    refs[1].config.duration = 120 * kSecond;
    refs[1].config.scenario = sim::Scenario::load(fs::path(AGDH_SOURCE_DIR) / "scenarios" / "merge_split.scn");

    std::ostringstream detail;
    bool pass = true;
    for (const auto& ref : refs) {
        std::string first;
        bool stable = true;
        for (int run = 0; run < kDeterminismRuns; ++run) {
            sim::Simulator s(ref.config, fsm::NodeConfig{}, prod());
            s.run();
            auto text = s.transcript().render();
            if (run == 0) first = text;
            else stable = stable && text == first;
        }
        const bool golden = first == read_file(fs::path(AGDH_SOURCE_DIR) / "tests" / "golden" / ref.name);
        pass = pass && stable && golden;
        detail << ref.name << (stable ? " stable" : " UNSTABLE") << (golden ? "+golden " : " golden-MISMATCH ");
    }
    return {pass, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
    // Optional single criterion: agdh_acceptance <number>
    if (argc > 1) only = std::atoi(argv[1]);
    report(1, "key agreement exactness", key_agreement);
    report(2, "cost row (2 exps/member, m/leader, m messages, 1 broadcast, 2 rounds)", cost_row);
    report(3, "TOY exhaustive algebra", toy_exhaustive);
    report(4, "rekey on join, graceful leave, crash", rekey_semantics);
    report(5, "leader election after crash", leader_election);
    report(6, "loss robustness", loss_robustness);
    report(7, "adversarial rejection", adversarial);
    report(8, "leader batching", batching);
    report(9, "determinism and golden transcripts", determinism);
    std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
