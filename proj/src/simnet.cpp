#include "agdh/simnet.hpp"

#include <algorithm>
#include <sstream>

#include "agdh/crypto.hpp"
#include "agdh/error.hpp"

namespace agdh::sim {

namespace {

constexpr std::uint64_t kIncarnationMix = 0x9e3779b97f4a7c15ULL;

struct Header {
    std::optional<MessageKind> kind;
    ParticipantId sender = 0;
    std::uint64_t epoch = 0;
    std::size_t entries = 0;
};

// Reads the fixed header without touching group elements.
Header peek_header(ByteView wire) {
    Header h;
    try {
        ByteReader r(wire);
        h.kind = msg::kind_from_byte(r.u8());
        h.sender = r.u32();
        r.raw(16);
        h.epoch = r.u64();
        h.entries = r.u16();
    } catch (const Error&) {
    }
    return h;
}

std::string kind_name(std::optional<MessageKind> kind) { return kind ? msg::to_string(*kind) : "?"; }

std::string join_ids(const std::vector<ParticipantId>& ids) {
    std::string s;
    for (auto id : ids) {
        if (!s.empty()) s += ',';
        s += std::to_string(id);
    }
    return s;
}

}  // namespace

void SimConfig::validate() const {
    if (node_count == 0) throw Error(Errc::ConfigError, "node_count must be positive");
    if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) throw Error(Errc::ConfigError, "loss_prob must lie in [0, 1]");
    if (latency_min < 0 || latency_max < latency_min) throw Error(Errc::ConfigError, "bad latency range");
    if (duration <= 0) throw Error(Errc::ConfigError, "duration must be positive");
    if (initial_leader && (*initial_leader == 0 || *initial_leader > node_count)) {
        throw Error(Errc::ConfigError, "initial leader must be one of the initial nodes");
    }
    // Replay liveness through the script so bad ids fail before the run.
    std::set<ParticipantId> live;
    for (ParticipantId id = 1; id <= node_count; ++id) live.insert(id);
    for (const auto& ev : scenario.events) {
        switch (ev.verb) {
            case ScenarioEvent::Verb::Join:
                if (!live.insert(ev.node).second) {
                    throw Error(Errc::ConfigError, "join of node " + std::to_string(ev.node) + " which is already live");
                }
                break;
            case ScenarioEvent::Verb::Leave:
                if (live.erase(ev.node) == 0) {
                    throw Error(Errc::UnknownNode, "leave of node " + std::to_string(ev.node) + " which is not live");
                }
                break;
            default:
                break;
        }
    }
}

const char* to_string(RecordKind kind) noexcept {
    switch (kind) {
        case RecordKind::Start: return "START";
        case RecordKind::Send: return "SEND";
        case RecordKind::Recv: return "RECV";
        case RecordKind::Drop: return "DROP";
        case RecordKind::Suppress: return "SUPPRESS";
        case RecordKind::Mode: return "MODE";
        case RecordKind::Key: return "KEY";
        case RecordKind::Join: return "JOIN";
        case RecordKind::Leave: return "LEAVE";
        case RecordKind::Crash: return "CRASH";
        case RecordKind::Partition: return "PARTITION";
        case RecordKind::Heal: return "HEAL";
    }
    return "?";
}

std::string Transcript::render() const {
    std::string out;
    for (const auto& r : records) {
        out += std::to_string(r.at);
        out += ' ';
        out += to_string(r.kind);
        out += ' ';
        out += r.node == 0 ? std::string("-") : std::to_string(r.node);
        if (!r.detail.empty()) {
            out += ' ';
            out += r.detail;
        }
        out += '\n';
    }
    return out;
}

std::uint64_t Metrics::total_drops() const {
    std::uint64_t n = 0;
    for (const auto& [reason, count] : drops) n += count;
    return n;
}

std::string Metrics::render() const {
    std::ostringstream o;
    o << "sends " << sends << "\n";
    o << "broadcasts " << broadcasts << "\n";
    o << "unicasts " << unicasts << "\n";
    o << "attempts " << attempts << "\n";
    o << "deliveries " << deliveries << "\n";
    o << "suppressed " << suppressed << "\n";
    o << "in_flight " << in_flight << "\n";
    for (const auto& [reason, count] : drops) o << "drops." << reason << " " << count << "\n";
    for (const auto& [id, n] : nodes) {
        o << "node " << id << " exps=" << n.exponentiations << " received=" << n.received
          << " rejected=" << n.rejected << " key_changes=" << n.key_changes;
        for (const auto& [kind, count] : n.broadcasts) o << " bcast." << msg::to_string(kind) << "=" << count;
        for (const auto& [kind, count] : n.unicasts) o << " ucast." << msg::to_string(kind) << "=" << count;
        o << "\n";
    }
    for (const auto& c : convergence) {
        o << "converged at=" << c.at << " leader=" << c.leader << " epoch=" << c.epoch << " nodes=" << c.nodes
          << "\n";
    }
    return o.str();
}

std::shared_ptr<const msg::KeyRing> make_keyring(ParticipantId max_id, std::uint64_t seed, bool ed25519) {
    if (ed25519) return msg::Ed25519KeyRing::provision(max_id, seed);
    return msg::HmacKeyRing::provision(max_id, seed);
}

std::string short_digest(ByteView bytes) {
    auto d = crypto::sha256(bytes);
    return to_hex(ByteView(d.data(), 8));
}

Simulator::Simulator(SimConfig config, NodeConfig node_config, std::shared_ptr<const group::GroupParams> params)
    : config_(std::move(config)), node_config_(node_config), params_(std::move(params)), net_rng_(config_.seed, 0) {
    config_.validate();
    node_config_.validate();
    if (!params_) throw Error(Errc::ConfigError, "no group parameters");
    max_id_ = config_.node_count;
    for (const auto& ev : config_.scenario.events) {
        max_id_ = std::max(max_id_, ev.node);
        for (const auto& comp : ev.components) {
            for (auto id : comp) max_id_ = std::max(max_id_, id);
        }
    }
    keyring_ = make_keyring(max_id_, config_.seed, config_.ed25519);

    for (const auto& ev : config_.scenario.events) schedule(ev.at, Action{ev});

    for (ParticipantId id = 1; id <= config_.node_count; ++id) {
        if (id != config_.initial_leader) start_node(id, false, 0);
    }
    // Last, so that its first beacon reaches everyone.
    if (config_.initial_leader) start_node(*config_.initial_leader, true, 0);
    update_convergence();
}

void Simulator::schedule(Micros at, Payload payload) { queue_.push(Queued{at, ++queue_seq_, std::move(payload)}); }

bool Simulator::step() {
    if (queue_.empty() || queue_.top().at > config_.duration) return false;
    Queued q = queue_.top();
    queue_.pop();
    now_ = q.at;
    if (const auto* t = std::get_if<Timer>(&q.payload)) {
        auto it = nodes_.find(t->node);
        if (it == nodes_.end() || !it->second.live || it->second.timer_generation != t->generation) return true;
    }
    process(q);
    update_convergence();
    if (observer_) observer_(*this);
    return true;
}

void Simulator::run_until(Micros t) {
    const Micros limit = std::min(t, config_.duration);
    while (!queue_.empty() && queue_.top().at <= limit) step();
    now_ = std::max(now_, limit);
}

void Simulator::run() { run_until(config_.duration); }

void Simulator::node_join(ParticipantId id, Micros at) {
    ScenarioEvent ev;
    ev.at = at;
    ev.verb = ScenarioEvent::Verb::Join;
    ev.node = id;
    if (at < now_) throw Error(Errc::ConfigError, "cannot schedule in the past");
    schedule(at, Action{ev});
}

void Simulator::node_leave(ParticipantId id, bool graceful, Micros at) {
    if (nodes_.find(id) == nodes_.end() && id > max_id_) throw Error(Errc::UnknownNode, std::to_string(id));
    if (at < now_) throw Error(Errc::ConfigError, "cannot schedule in the past");
    ScenarioEvent ev;
    ev.at = at;
    ev.verb = ScenarioEvent::Verb::Leave;
    ev.node = id;
    ev.graceful = graceful;
    schedule(at, Action{ev});
}

void Simulator::apply_partition(std::vector<std::vector<ParticipantId>> components, Micros at) {
    std::set<ParticipantId> seen;
    for (const auto& comp : components) {
        for (auto id : comp) {
            if (!seen.insert(id).second) {
                throw Error(Errc::OverlapError, "node " + std::to_string(id) + " in two components");
            }
        }
    }
    if (at < now_) throw Error(Errc::ConfigError, "cannot schedule in the past");
    ScenarioEvent ev;
    ev.at = at;
    ev.verb = ScenarioEvent::Verb::Partition;
    ev.components = std::move(components);
    schedule(at, Action{ev});
}

void Simulator::heal(Micros at) {
    if (at < now_) throw Error(Errc::ConfigError, "cannot schedule in the past");
    ScenarioEvent ev;
    ev.at = at;
    ev.verb = ScenarioEvent::Verb::Heal;
    schedule(at, Action{ev});
}

void Simulator::inject(ParticipantId receiver, Bytes wire, Micros at) {
    if (at < now_) throw Error(Errc::ConfigError, "cannot schedule in the past");
    auto h = peek_header(wire);
    SentMessage m;
    m.id = transcript_.messages.size() + 1;
    m.at = at;
    m.sender = h.sender;
    m.to = receiver;
    m.kind = h.kind.value_or(MessageKind::Init);
    m.epoch = h.epoch;
    m.entries = h.entries;
    m.wire = std::move(wire);
    m.from_node = false;
    transcript_.messages.push_back(std::move(m));
    ++metrics_.in_flight;
    schedule(at, Injected{transcript_.messages.back().id, receiver});
}

bool Simulator::is_live(ParticipantId id) const {
    auto it = nodes_.find(id);
    return it != nodes_.end() && it->second.live;
}

std::vector<ParticipantId> Simulator::live_nodes() const {
    std::vector<ParticipantId> ids;
    for (const auto& [id, slot] : nodes_) {
        if (slot.live) ids.push_back(id);
    }
    return ids;
}

const fsm::NodeMachine& Simulator::node(ParticipantId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, std::to_string(id));
    return *it->second.machine;
}

std::uint64_t Simulator::exp_count(ParticipantId id) const { return node(id).exp_count(); }

std::vector<ParticipantId> Simulator::leaders() const {
    std::vector<ParticipantId> ids;
    for (const auto& [id, slot] : nodes_) {
        if (slot.live && slot.machine->mode() == Mode::Leader) ids.push_back(id);
    }
    return ids;
}

bool Simulator::converged() const {
    auto live = live_nodes();
    if (live.empty()) return false;
    auto leads = leaders();
    if (leads.size() != 1) return false;
    if (live.size() == 1) return true;
    const auto& leader = node(leads.front());
    const auto& ref = leader.session();
    if (!ref || leader.session_leader() != leads.front()) return false;
    for (auto id : live) {
        const auto& n = node(id);
        if (n.session_leader() != leads.front() || !n.session() || !(*n.session() == *ref)) return false;
    }
    return true;
}

void Simulator::update_convergence() {
    if (!converged()) {
        converged_since_.reset();
        return;
    }
    if (!converged_since_) converged_since_ = now_;
    auto leads = leaders();
    const auto& leader = node(leads.front());
    std::uint64_t epoch = leader.session() ? leader.session()->epoch : 0;
    auto& list = metrics_.convergence;
    if (list.empty() || list.back().leader != leads.front() || list.back().epoch != epoch ||
        list.back().nodes != live_nodes().size()) {
        list.push_back(Convergence{now_, leads.front(), epoch, live_nodes().size()});
    }
}

Metrics Simulator::metrics() const {
    Metrics m = metrics_;
    for (const auto& [id, slot] : nodes_) {
        m.nodes[id].exponentiations = slot.exps_retired + slot.machine->exp_count();
    }
    return m;
}

std::uint64_t Simulator::record(RecordKind kind, ParticipantId node, std::string detail, std::uint64_t message,
                                std::uint64_t cause) {
    Record r;
    r.seq = transcript_.records.size() + 1;
    r.at = now_;
    r.kind = kind;
    r.node = node;
    r.message = message;
    r.cause = cause;
    r.detail = std::move(detail);
    transcript_.records.push_back(std::move(r));
    return transcript_.records.back().seq;
}

bool Simulator::same_component(ParticipantId a, ParticipantId b) const {
    if (!partitioned_) return true;
    auto lookup = [this](ParticipantId id) {
        auto it = component_.find(id);
        return it == component_.end() ? SIZE_MAX : it->second;
    };
    return lookup(a) == lookup(b);
}

void Simulator::start_node(ParticipantId id, bool as_leader, std::uint64_t cause) {
    auto& slot = nodes_[id];
    if (slot.live) throw Error(Errc::ConfigError, "node " + std::to_string(id) + " is already live");
    if (slot.machine) {
        slot.exps_retired += slot.machine->exp_count();
        ++slot.incarnation;
    }
    const std::uint64_t seed = config_.seed ^ (kIncarnationMix * slot.incarnation);
    auto override_it = config_.node_overrides.find(id);
    const auto& node_config = override_it == config_.node_overrides.end() ? node_config_ : override_it->second;
    slot.machine = std::make_unique<fsm::NodeMachine>(id, node_config, *params_, keyring_, seed);
    slot.live = true;
    slot.timer_at.reset();
    ++slot.timer_generation;
    metrics_.nodes[id];
    auto seq = record(RecordKind::Start, id, as_leader ? "leader" : "member", 0, cause);
    apply(id, slot.machine->on_event(fsm::Start{as_leader}, now_), seq);
}

void Simulator::process(const Queued& q) {
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Deliver>) {
                handle_deliver(p);
            } else if constexpr (std::is_same_v<T, Injected>) {
                handle_deliver(Deliver{p.message, p.receiver});
            } else if constexpr (std::is_same_v<T, Timer>) {
                handle_timer(p);
            } else {
                handle_action(p.event);
            }
        },
        q.payload);
}

void Simulator::handle_deliver(const Deliver& d) {
    --metrics_.in_flight;
    const auto& m = transcript_.message(d.message);
    if (!is_live(d.receiver)) {
        ++metrics_.drops["down"];
        record(RecordKind::Drop, d.receiver, "id=" + std::to_string(d.message) + " reason=down", d.message);
        return;
    }
    Delivery delivery;
    delivery.message = d.message;
    delivery.receiver = d.receiver;
    delivery.at = now_;
    try {
        delivery.verified = msg::verify(msg::decode_wire(m.wire, *params_), *keyring_, *params_);
    } catch (const Error&) {
        delivery.verified = false;
    }
    auto& slot = nodes_.at(d.receiver);
    auto out = slot.machine->on_event(fsm::MessageArrived{m.wire}, now_);
    delivery.disposition = out.disposition;
    delivery.reason = out.reason;

    ++metrics_.deliveries;
    auto& nm = metrics_.nodes[d.receiver];
    ++nm.received;
    if (out.disposition == fsm::Disposition::Rejected) ++nm.rejected;

    auto h = peek_header(m.wire);
    std::string detail = kind_name(h.kind) + " id=" + std::to_string(d.message) + " from=" + std::to_string(h.sender);
    switch (out.disposition) {
        case fsm::Disposition::Accepted: detail += " result=accept"; break;
        case fsm::Disposition::Rejected: detail += " result=reject"; break;
        case fsm::Disposition::None: detail += " result=none"; break;
    }
    if (!out.reason.empty()) detail += " reason=" + out.reason;
    delivery.recv_seq = record(RecordKind::Recv, d.receiver, std::move(detail), d.message);
    delivery.acted = apply(d.receiver, out, delivery.recv_seq);
    transcript_.deliveries.push_back(std::move(delivery));
}

void Simulator::handle_timer(const Timer& t) {
    auto& slot = nodes_.at(t.node);
    slot.timer_at.reset();
    apply(t.node, slot.machine->on_event(fsm::TimerFired{}, now_), 0);
}

void Simulator::handle_action(const ScenarioEvent& ev) {
    switch (ev.verb) {
        case ScenarioEvent::Verb::Join: {
            auto seq = record(RecordKind::Join, ev.node, "");
            start_node(ev.node, false, seq);
            break;
        }
        case ScenarioEvent::Verb::Leave: {
            if (!is_live(ev.node)) throw Error(Errc::UnknownNode, "node " + std::to_string(ev.node) + " is not live");
            auto& slot = nodes_.at(ev.node);
            auto seq = ev.graceful ? record(RecordKind::Leave, ev.node, "graceful") : record(RecordKind::Crash, ev.node, "");
            auto out = slot.machine->on_event(fsm::LocalLeaveRequest{ev.graceful}, now_);
            apply(ev.node, out, seq);
            slot.live = false;
            ++slot.timer_generation;
            slot.timer_at.reset();
            break;
        }
        case ScenarioEvent::Verb::Partition: {
            component_.clear();
            std::string detail;
            for (std::size_t i = 0; i < ev.components.size(); ++i) {
                for (auto id : ev.components[i]) component_[id] = i;
                if (i > 0) detail += '|';
                detail += join_ids(ev.components[i]);
            }
            partitioned_ = !ev.components.empty();
            record(RecordKind::Partition, 0, detail.empty() ? std::string("none") : detail);
            break;
        }
        case ScenarioEvent::Verb::Heal:
            component_.clear();
            partitioned_ = false;
            record(RecordKind::Heal, 0, "");
            break;
    }
}

bool Simulator::apply(ParticipantId id, const fsm::FsmOutput& out, std::uint64_t cause) {
    auto& slot = nodes_.at(id);
    for (const auto& s : out.secrets) transcript_.secrets.push_back(SecretEvent{cause, now_, s});
    for (const auto& mc : out.mode_changes) {
        record(RecordKind::Mode, id, std::string(fsm::to_string(mc.from)) + "->" + fsm::to_string(mc.to), 0, cause);
    }
    for (const auto& o : out.messages) send(id, o, cause);
    if (out.key_change) {
        const auto& k = *out.key_change;
        auto seq = record(RecordKind::Key, id,
                          "leader=" + std::to_string(k.leader) + " epoch=" + std::to_string(k.new_epoch) +
                              " key=" + short_digest(ByteView(k.derived.data(), k.derived.size())),
                          0, cause);
        transcript_.keys.push_back(KeyEvent{seq, now_, k});
        ++metrics_.nodes[id].key_changes;
    }
    if (out.next_deadline != slot.timer_at) {
        ++slot.timer_generation;
        slot.timer_at = out.next_deadline;
        if (slot.timer_at) schedule(*slot.timer_at, Timer{id, slot.timer_generation});
    }
    return !out.messages.empty() || out.key_change.has_value() || !out.mode_changes.empty();
}

void Simulator::send(ParticipantId sender, const fsm::Outgoing& o, std::uint64_t cause) {
    auto h = peek_header(o.wire);
    SentMessage m;
    m.id = transcript_.messages.size() + 1;
    m.at = now_;
    m.sender = sender;
    m.to = o.to;
    m.kind = o.kind;
    m.epoch = h.epoch;
    m.entries = h.entries;
    m.wire = o.wire;
    const std::string to = o.to ? std::to_string(*o.to) : std::string("*");
    m.send_seq = record(RecordKind::Send, sender,
                        std::string(msg::to_string(o.kind)) + " id=" + std::to_string(m.id) + " to=" + to +
                            " epoch=" + std::to_string(h.epoch) + " entries=" + std::to_string(h.entries) +
                            " digest=" + short_digest(o.wire),
                        m.id, cause);
    const auto id = m.id;
    const auto send_seq = m.send_seq;
    transcript_.messages.push_back(std::move(m));

    ++metrics_.sends;
    auto& nm = metrics_.nodes[sender];
    if (o.to) {
        ++metrics_.unicasts;
        ++nm.unicasts[o.kind];
        if (!is_live(*o.to)) {
            ++metrics_.attempts;
            ++metrics_.drops["down"];
            record(RecordKind::Drop, *o.to, "id=" + std::to_string(id) + " reason=down", id);
            return;
        }
        attempt(id, *o.to, send_seq);
    } else {
        ++metrics_.broadcasts;
        ++nm.broadcasts[o.kind];
        for (const auto& [rid, slot] : nodes_) {
            if (rid != sender && slot.live) attempt(id, rid, send_seq);
        }
    }
}

void Simulator::attempt(std::uint64_t message, ParticipantId receiver, std::uint64_t /*send_seq*/) {
    ++metrics_.attempts;
    const auto sender = transcript_.message(message).sender;
    if (!same_component(sender, receiver)) {
        ++metrics_.suppressed;
        record(RecordKind::Suppress, receiver, "id=" + std::to_string(message), message);
        return;
    }
    if (config_.loss_prob > 0.0 && net_rng_.unit() < config_.loss_prob) {
        ++metrics_.drops["loss"];
        record(RecordKind::Drop, receiver, "id=" + std::to_string(message) + " reason=loss", message);
        return;
    }
    const auto latency = static_cast<Micros>(
        net_rng_.uniform(static_cast<std::uint64_t>(config_.latency_min), static_cast<std::uint64_t>(config_.latency_max)));
    ++metrics_.in_flight;
    schedule(now_ + latency, Deliver{message, receiver});
}

}  // namespace agdh::sim
