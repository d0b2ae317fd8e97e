#include "agdh/node_fsm.hpp"

#include <algorithm>

#include "agdh/error.hpp"

namespace agdh::fsm {

namespace {

constexpr std::size_t kRetainedContributions = 3;

}  // namespace

void NodeConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::ConfigError, what); };
    if (period_T <= 0) fail("period_T must be positive");
    if (renew_P <= 0) fail("renew_P must be positive");
    if (slot_t_rtd <= 0) fail("slot_t_rtd must be positive");
    if (renew_P % period_T != 0 || renew_P / period_T < 2) fail("renew_P must be a multiple (>= 2) of period_T");
    if (miss_k < 2) fail("miss_k must be at least 2");
    if (backoff_window_l < 1) fail("backoff_window_l must be at least 1");
    if (jitter_max < 0 || jitter_max >= period_T) fail("jitter_max must lie in [0, period_T)");
}

const char* to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::Member: return "member";
        case Mode::Leader: return "leader";
        case Mode::Candidate: return "candidate";
    }
    return "?";
}

NodeMachine::NodeMachine(ParticipantId id, NodeConfig config, const GroupParams& params,
                         std::shared_ptr<const msg::KeyRing> keyring, std::uint64_t seed)
    : id_(id), config_(config), params_(&params), keyring_(std::move(keyring)), rng_(seed, id) {
    config_.validate();
    if (!keyring_ || !keyring_->knows(id_)) {
        throw Error(Errc::UnknownParticipant, "no signing key for node " + std::to_string(id_));
    }
}

FsmOutput NodeMachine::on_event(const Event& event, Micros now) {
    FsmOutput out;
    if (stopped_) {
        if (std::holds_alternative<MessageArrived>(event)) reject(out, "stopped");
        return out;
    }
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, Start>) {
                handle_start(e, now, out);
            } else if constexpr (std::is_same_v<T, MessageArrived>) {
                handle_message(e, now, out);
            } else if constexpr (std::is_same_v<T, TimerFired>) {
                handle_timers(now, out);
            } else {
                handle_leave(e, now, out);
            }
        },
        event);
    out.stopped = stopped_;
    out.next_deadline = next_deadline();
    return out;
}

std::optional<Micros> NodeMachine::next_deadline() const {
    if (stopped_) return std::nullopt;
    std::optional<Micros> best;
    for (const auto& t : {timers_.beacon, timers_.reply, timers_.silence, timers_.renewal, timers_.backoff}) {
        if (t && (!best || *t < *best)) best = t;
    }
    return best;
}

const OwnContribution* NodeMachine::contribution() const noexcept {
    return contributions_.empty() ? nullptr : &contributions_.front();
}

std::optional<Scalar> NodeMachine::leader_secret() const {
    if (!leader_) return std::nullopt;
    return leader_->secret;
}

std::size_t NodeMachine::pending_count() const noexcept { return leader_ ? leader_->pending.size() : 0; }

// ---------------------------------------------------------------------------
// Event entry points

void NodeMachine::handle_start(const Start& start, Micros now, FsmOutput& out) {
    if (started_) return;
    started_ = true;
    timers_.renewal = now + config_.renew_P;
    if (start.as_leader) {
        become_leader(now, out);
    } else {
        timers_.silence = now + config_.silence_timeout();
    }
}

void NodeMachine::handle_message(const MessageArrived& arrived, Micros now, FsmOutput& out) {
    if (!started_) {
        reject(out, "not-started");
        return;
    }
    msg::Message m;
    try {
        m = msg::decode_wire(arrived.wire, *params_);
    } catch (const Error& e) {
        reject(out, std::string("decode:") + agdh::to_string(e.code()));
        return;
    }
    if (!config_.fault_skip_verification && !msg::verify(m, *keyring_, *params_)) {
        reject(out, "signature");
        return;
    }
    try {
        msg::validate_shape(m);
    } catch (const Error&) {
        reject(out, "shape");
        return;
    }
    if (m.sender_id == id_) {
        reject(out, "self");
        return;
    }
    out.disposition = Disposition::Accepted;
    switch (m.kind) {
        case msg::MessageKind::Init:
        case msg::MessageKind::IGroup:
        case msg::MessageKind::JGroup:
        case msg::MessageKind::DGroup:
            handle_group_message(m, now, out);
            break;
        case msg::MessageKind::IReply:
        case msg::MessageKind::Join:
            handle_reply(m, now, out);
            break;
        case msg::MessageKind::Del:
            handle_del(m, now, out);
            break;
        case msg::MessageKind::JReply:
            // Leadership handoff by JREPLY is not used; the smallest id leads.
            ++counters_.ignored;
            out.reason = "ignored:jreply";
            break;
    }
}

void NodeMachine::handle_timers(Micros now, FsmOutput& out) {
    // Fixed order keeps simultaneous deadlines deterministic.
    for (;;) {
        auto due = [now](const std::optional<Micros>& t) { return t && *t <= now; };
        if (due(timers_.backoff)) {
            timers_.backoff.reset();
            if (mode_ == Mode::Candidate) become_leader(now, out);
        } else if (due(timers_.silence)) {
            timers_.silence.reset();
            if (mode_ == Mode::Member) handle_leader_silence(now, out);
        } else if (due(timers_.renewal)) {
            timers_.renewal.reset();
            renewal_tick(now, out);
        } else if (due(timers_.beacon)) {
            timers_.beacon.reset();
            if (mode_ == Mode::Leader) leader_beacon_tick(now, out);
        } else if (due(timers_.reply)) {
            timers_.reply.reset();
            member_reply_tick(now, out);
        } else {
            break;
        }
    }
}

void NodeMachine::handle_leave(const LocalLeaveRequest& leave, Micros /*now*/, FsmOutput& out) {
    if (leave.graceful && started_) {
        auto del = msg::build_del(id_, contributions_.empty() ? fresh_nonce() : contributions_.front().pub.nonce,
                                  max_epoch_seen_);
        if (mode_ == Mode::Leader) {
            broadcast(del, out);
        } else if (mode_ == Mode::Member && view_.leader_id) {
            unicast(*view_.leader_id, del, out);
        }
    }
    stopped_ = true;
    timers_ = Timers{};
}

// ---------------------------------------------------------------------------
// Group messages (INIT / IGROUP / JGROUP / DGROUP)

void NodeMachine::handle_group_message(const msg::Message& m, Micros now, FsmOutput& out) {
    const ParticipantId sender = m.sender_id;
    if (auto it = epoch_high_water_.find(sender); it != epoch_high_water_.end() && m.epoch < it->second) {
        reject(out, "stale-epoch");
        return;
    }

    // Leader conflict: the smallest id keeps leading.
    if (mode_ == Mode::Leader) {
        if (sender > id_) {
            ++counters_.ignored;
            out.reason = "ignored:larger-leader";
            return;
        }
    } else if (mode_ == Mode::Member && view_.leader_id && sender > *view_.leader_id) {
        ++counters_.ignored;
        out.reason = "ignored:larger-leader";
        return;
    }

    // Echo check before anything changes: our entry, if present, must carry a
    // contribution we actually made.
    const msg::GroupEntry* own = msg::find_entry(m, id_);
    if (own != nullptr) {
        auto match = std::find_if(contributions_.begin(), contributions_.end(), [&](const OwnContribution& c) {
            return c.pub.nonce == own->nonce && c.pub.blinded_secret == own->blinded_secret;
        });
        if (match == contributions_.end()) {
            ++counters_.echo_failures;
            reject(out, "echo");
            // Re-offer the current contribution; no state is touched.
            if (mode_ == Mode::Member && view_.leader_id == sender && !contributions_.empty()) {
                unicast(sender, msg::build_ireply(contributions_.front().pub, max_epoch_seen_), out);
            }
            return;
        }
    }

    bool adopted = false;
    if (mode_ == Mode::Leader) {
        // handle_leader_conflict: a smaller id leads, stop beaconing and join it
        // with a fresh contribution.
        leader_.reset();
        timers_.beacon.reset();
        set_mode(Mode::Member, out);
        adopt_leader(sender, out);
        refresh_contribution(out);
        adopted = true;
    } else if (mode_ == Mode::Candidate) {
        timers_.backoff.reset();
        set_mode(Mode::Member, out);
        adopt_leader(sender, out);
        adopted = true;
    } else if (view_.leader_id != sender) {
        adopt_leader(sender, out);
        adopted = true;
    }

    epoch_high_water_[sender] = m.epoch;
    max_epoch_seen_ = std::max(max_epoch_seen_, m.epoch);
    timers_.silence = now + config_.silence_timeout();
    if (!timers_.reply) timers_.reply = jittered(now + config_.period_T);

    handle_igroup_as_member(m, adopted, now, out);
}

void NodeMachine::handle_igroup_as_member(const msg::Message& m, bool adopted, Micros now, FsmOutput& out) {
    const msg::GroupEntry* own = msg::find_entry(m, id_);
    if (own == nullptr) {
        // Not (or no longer) included. If the leader rekeyed after our last
        // reply and still left us out, it dropped our contribution: draw a new one.
        if (!adopted && replied_to_ == m.sender_id && m.epoch > reply_epoch_mark_ && !contributions_.empty()) {
            refresh_contribution(out);
        }
        view_.members.clear();
        view_.epoch = m.epoch;
        send_ireply(now, out);
        return;
    }

    view_.epoch = m.epoch;
    view_.members.clear();
    for (const auto& e : m.entries) {
        view_.members[e.participant_id] =
            MemberRecord{gka::Contribution{e.participant_id, e.nonce, e.blinded_secret}, now, m.epoch};
    }

    if (session_ && session_leader_ == m.sender_id && session_->epoch == m.epoch) return;  // repeat beacon

    auto match = std::find_if(contributions_.begin(), contributions_.end(), [&](const OwnContribution& c) {
        return c.pub.nonce == own->nonce && c.pub.blinded_secret == own->blinded_secret;
    });
    auto group_ops = ops();
    auto leader_blind = gka::recover_leader_blind(*own->blinded_response, match->secret, group_ops);
    std::vector<gka::BlindedResponse> responses;
    responses.reserve(m.entries.size());
    for (const auto& e : m.entries) responses.push_back({e.participant_id, *e.blinded_response});
    auto key = gka::compute_key_member(leader_blind, responses, group_ops);
    if (key.is_identity()) {
        reject(out, "degenerate-key");
        return;
    }
    // Contributions older than the one in use can no longer be echoed.
    contributions_.erase(match + 1, contributions_.end());

    const std::uint64_t old_epoch = session_ ? session_->epoch : 0;
    session_ = gka::make_session(key, m.epoch, *params_);
    session_leader_ = m.sender_id;
    out.key_change = KeyChange{id_, m.sender_id, old_epoch, m.epoch, key, session_->derived};
}

// ---------------------------------------------------------------------------
// Leader-side inputs

void NodeMachine::handle_reply(const msg::Message& m, Micros now, FsmOutput& out) {
    if (mode_ != Mode::Leader) {
        ++counters_.ignored;
        out.reason = "ignored:not-leader";
        return;
    }
    const auto sender = m.sender_id;
    const auto& entry = m.entries.front();
    gka::Contribution c{entry.participant_id, entry.nonce, entry.blinded_secret};

    auto member = view_.members.find(sender);
    auto pending = leader_->pending.find(sender);
    std::uint64_t reported = 0;
    if (member != view_.members.end()) reported = std::max(reported, member->second.reported_epoch);
    if (pending != leader_->pending.end()) reported = std::max(reported, pending->second.reported_epoch);
    if (m.epoch < reported) {
        reject(out, "stale-epoch");
        return;
    }
    max_epoch_seen_ = std::max(max_epoch_seen_, m.epoch);

    const bool is_member = member != view_.members.end();
    if (is_member) {
        member->second.last_heard = now;
        member->second.reported_epoch = m.epoch;
        if (member->second.contribution == c) {
            if (pending != leader_->pending.end()) leader_->pending.erase(pending);
            return;
        }
    }
    // New arrival or refreshed contribution: last writer wins until folded in.
    if (pending != leader_->pending.end() && pending->second.contribution == c) {
        pending->second.last_heard = now;
        pending->second.reported_epoch = m.epoch;
        return;
    }
    MemberRecord record{c, now, m.epoch};
    leader_->pending[sender] = record;
    absorb_pending(record);

    if (!is_member && config_.eager_rekey) rekey(msg::MessageKind::JGroup, now, out);
}

void NodeMachine::handle_del(const msg::Message& m, Micros now, FsmOutput& out) {
    const auto sender = m.sender_id;
    if (mode_ == Mode::Leader) {
        auto member = view_.members.find(sender);
        auto pending = leader_->pending.find(sender);
        std::uint64_t reported = 0;
        if (member != view_.members.end()) reported = std::max(reported, member->second.reported_epoch);
        if (pending != leader_->pending.end()) reported = std::max(reported, pending->second.reported_epoch);
        if (m.epoch < reported) {
            reject(out, "stale-epoch");
            return;
        }
        if (pending != leader_->pending.end()) {
            leader_->pending.erase(pending);
            if (leader_->batch) {
                auto group_ops = ops();
                leader_->batch->remove(sender, group_ops);
            }
        }
        if (member != view_.members.end()) {
            view_.members.erase(member);
            rekey(msg::MessageKind::DGroup, now, out);
        } else {
            ++counters_.ignored;
            out.reason = "ignored:not-member";
        }
        return;
    }
    if (mode_ == Mode::Member && view_.leader_id == sender) {
        auto it = epoch_high_water_.find(sender);
        if (it != epoch_high_water_.end() && m.epoch < it->second) {
            reject(out, "stale-epoch");
            return;
        }
        // Our leader withdrew: start the election without waiting for silence.
        handle_leader_silence(now, out);
        return;
    }
    ++counters_.ignored;
    out.reason = "ignored:del";
}

void NodeMachine::absorb_pending(const MemberRecord& record) {
    auto group_ops = ops();
    auto& batch = leader_->batch;
    if (!batch) batch.emplace(group::random_scalar(rng_, *params_), group_ops);
    if (auto existing = batch->find(record.contribution.participant_id)) {
        if (*existing == record.contribution) return;
        batch->remove(record.contribution.participant_id, group_ops);
    }
    batch->absorb(record.contribution, group_ops);
}

// ---------------------------------------------------------------------------
// Timers

void NodeMachine::handle_leader_silence(Micros now, FsmOutput& out) {
    set_mode(Mode::Candidate, out);
    view_.leader_id.reset();
    view_.members.clear();
    timers_.silence.reset();
    timers_.reply.reset();
    const auto draw = static_cast<std::uint32_t>(rng_.uniform(1, config_.backoff_window_l));
    last_backoff_draw_ = draw;
    timers_.backoff = now + static_cast<Micros>(draw) * config_.slot_t_rtd;
}

void NodeMachine::become_leader(Micros now, FsmOutput& out) {
    set_mode(Mode::Leader, out);
    timers_.backoff.reset();
    timers_.silence.reset();
    timers_.reply.reset();
    leader_.emplace();
    leader_->nonce = fresh_nonce();
    view_.leader_id = id_;
    view_.members.clear();
    view_.epoch = ++max_epoch_seen_;
    epoch_high_water_[id_] = view_.epoch;
    leader_->current = msg::sign(msg::build_igroup(id_, leader_->nonce, view_.epoch, {}), *keyring_, *params_);
    leader_->current_wire = msg::encode_wire(leader_->current, *params_);
    out.messages.push_back({std::nullopt, msg::MessageKind::IGroup, leader_->current_wire});
    timers_.beacon = jittered(now + config_.period_T);
}

bool NodeMachine::detect_member_departure(Micros now) {
    const Micros limit = config_.silence_timeout();
    bool removed = false;
    for (auto it = view_.members.begin(); it != view_.members.end();) {
        if (now - it->second.last_heard > limit) {
            it = view_.members.erase(it);
            removed = true;
        } else {
            ++it;
        }
    }
    for (auto it = leader_->pending.begin(); it != leader_->pending.end();) {
        if (now - it->second.last_heard > limit) {
            if (leader_->batch) {
                auto group_ops = ops();
                leader_->batch->remove(it->first, group_ops);
            }
            it = leader_->pending.erase(it);
        } else {
            ++it;
        }
    }
    return removed;
}

void NodeMachine::leader_beacon_tick(Micros now, FsmOutput& out) {
    const bool removed = detect_member_departure(now);
    const bool arrivals = std::any_of(leader_->pending.begin(), leader_->pending.end(),
                                      [&](const auto& p) { return !view_.members.contains(p.first); });
    if (removed || arrivals) {
        rekey(msg::MessageKind::IGroup, now, out);
    } else {
        // Unchanged group: repeat the exact same bytes.
        out.messages.push_back({std::nullopt, msg::MessageKind::IGroup, leader_->current_wire});
    }
    timers_.beacon = jittered(now + config_.period_T);
}

void NodeMachine::member_reply_tick(Micros now, FsmOutput& out) {
    if (mode_ != Mode::Member || !view_.leader_id) return;
    send_ireply(now, out);
}

void NodeMachine::renewal_tick(Micros now, FsmOutput& out) {
    timers_.renewal = now + config_.renew_P;
    if (mode_ == Mode::Leader) {
        if (!view_.members.empty() || !leader_->pending.empty()) rekey(msg::MessageKind::IGroup, now, out);
    } else if (!contributions_.empty()) {
        // The fresh contribution goes out with the next periodic IREPLY.
        refresh_contribution(out);
    }
}

void NodeMachine::rekey(msg::MessageKind kind, Micros /*now*/, FsmOutput& out) {
    auto group_ops = ops();
    for (auto& [pid, record] : leader_->pending) view_.members[pid] = record;
    leader_->pending.clear();

    auto& batch = leader_->batch;
    if (!view_.members.empty()) {
        if (!batch) batch.emplace(group::random_scalar(rng_, *params_), group_ops);
        for (const auto& [pid, record] : view_.members) {
            if (auto existing = batch->find(pid)) {
                if (*existing == record.contribution) continue;
                batch->remove(pid, group_ops);
            }
            batch->absorb(record.contribution, group_ops);
        }
        std::vector<ParticipantId> stale;
        for (const auto& c : batch->contributions()) {
            if (!view_.members.contains(c.participant_id)) stale.push_back(c.participant_id);
        }
        for (auto pid : stale) batch->remove(pid, group_ops);
    }

    std::optional<gka::LeaderResult> result;
    while (!view_.members.empty()) {
        try {
            result = batch->finalize(group_ops);
            break;
        } catch (const Error& e) {
            if (e.code() != Errc::DegenerateKey) throw;
            // 1 + sum r_i == 0: leave out the newest contribution; that member
            // sees itself dropped and re-sends with a fresh secret.
            auto last = *batch->last_absorbed();
            batch->remove(last, group_ops);
            view_.members.erase(last);
            ++counters_.degenerate_exclusions;
        }
    }

    std::uint64_t epoch = std::max(view_.epoch, max_epoch_seen_);
    for (const auto& [pid, record] : view_.members) epoch = std::max(epoch, record.reported_epoch);
    ++epoch;
    view_.epoch = epoch;
    max_epoch_seen_ = epoch;
    epoch_high_water_[id_] = epoch;
    leader_->nonce = fresh_nonce();
    ++counters_.rekeys;

    std::vector<msg::GroupEntry> entries;
    if (result) {
        entries = msg::group_entries(batch->contributions(), result->responses);
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.participant_id < b.participant_id; });
    }
    leader_->current =
        msg::sign(msg::build_igroup(id_, leader_->nonce, epoch, entries), *keyring_, *params_);
    leader_->current_wire = msg::encode_wire(leader_->current, *params_);
    if (kind == msg::MessageKind::IGroup) {
        out.messages.push_back({std::nullopt, kind, leader_->current_wire});
    } else {
        auto announce = leader_->current;
        announce.kind = kind;
        broadcast(announce, out);
    }

    if (result) {
        leader_->secret = batch->leader_secret();
        out.secrets.push_back(SecretRecord{id_, SecretRecord::Role::LeaderSecret, batch->leader_secret(),
                                           batch->leader_blind(), leader_->nonce, epoch});
        GroupElement key = result->key;
        if (config_.fault_corrupt_leader_key) key = group_ops.mul(key, params_->generator());
        const std::uint64_t old_epoch = session_ ? session_->epoch : 0;
        session_ = gka::make_session(key, epoch, *params_);
        session_leader_ = id_;
        out.key_change = KeyChange{id_, id_, old_epoch, epoch, key, session_->derived};
    } else {
        leader_->secret.reset();
    }
    batch.reset();
}

// ---------------------------------------------------------------------------
// Helpers

void NodeMachine::set_mode(Mode next, FsmOutput& out) {
    if (next == mode_) return;
    out.mode_changes.push_back({mode_, next});
    mode_ = next;
}

void NodeMachine::adopt_leader(ParticipantId leader, FsmOutput& /*out*/) {
    view_.leader_id = leader;
    view_.members.clear();
}

void NodeMachine::send_ireply(Micros now, FsmOutput& out) {
    if (!view_.leader_id) return;
    const auto& own = ensure_contribution(out);
    unicast(*view_.leader_id, msg::build_ireply(own.pub, max_epoch_seen_), out);
    replied_to_ = view_.leader_id;
    reply_epoch_mark_ = view_.epoch;
    timers_.reply = jittered(now + config_.period_T);
}

const OwnContribution& NodeMachine::ensure_contribution(FsmOutput& out) {
    if (contributions_.empty()) refresh_contribution(out);
    return contributions_.front();
}

void NodeMachine::refresh_contribution(FsmOutput& out) {
    auto group_ops = ops();
    OwnContribution c;
    c.secret = group::random_scalar(rng_, *params_);
    c.pub.participant_id = id_;
    c.pub.nonce = fresh_nonce();
    c.pub.blinded_secret = gka::blind(c.secret, group_ops);
    out.secrets.push_back(SecretRecord{id_, SecretRecord::Role::MemberContribution, c.secret, c.pub.blinded_secret,
                                       c.pub.nonce, 0});
    contributions_.push_front(std::move(c));
    if (contributions_.size() > kRetainedContributions) contributions_.pop_back();
}

void NodeMachine::broadcast(const msg::Message& m, FsmOutput& out) {
    auto signed_msg = msg::sign(m, *keyring_, *params_);
    out.messages.push_back({std::nullopt, m.kind, msg::encode_wire(signed_msg, *params_)});
}

void NodeMachine::unicast(ParticipantId to, const msg::Message& m, FsmOutput& out) {
    auto signed_msg = msg::sign(m, *keyring_, *params_);
    out.messages.push_back({to, m.kind, msg::encode_wire(signed_msg, *params_)});
}

void NodeMachine::reject(FsmOutput& out, const std::string& reason) {
    out.disposition = Disposition::Rejected;
    out.reason = reason;
    ++counters_.rejected[reason];
}

Micros NodeMachine::jittered(Micros base) {
    if (config_.jitter_max == 0) return base;
    return base + static_cast<Micros>(rng_.uniform(0, static_cast<std::uint64_t>(config_.jitter_max)));
}

gka::Nonce NodeMachine::fresh_nonce() {
    gka::Nonce n{};
    rng_.fill(n);
    return n;
}

}  // namespace agdh::fsm
