#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "agdh/node_fsm.hpp"
#include "agdh/scenario.hpp"

namespace agdh::sim {

using fsm::Mode;
using fsm::NodeConfig;
using msg::MessageKind;

struct SimConfig {
    std::uint32_t node_count = 10;
    double loss_prob = 0.0;
    Micros latency_min = 10 * fsm::kMillisecond;
    Micros latency_max = 50 * fsm::kMillisecond;
    std::uint64_t seed = 1;
    Micros duration = 120 * fsm::kSecond;
    Scenario scenario;
    /// Boot this node straight into the leader role instead of electing one.
    std::optional<ParticipantId> initial_leader;
    /// Use Ed25519 signatures instead of the HMAC test keyring.
    bool ed25519 = false;
    /// Per-node configuration replacing the shared one (fault injection).
    std::map<ParticipantId, NodeConfig> node_overrides;

    /// Throws Error(ConfigError).
    void validate() const;
};

enum class RecordKind { Start, Send, Recv, Drop, Suppress, Mode, Key, Join, Leave, Crash, Partition, Heal };
const char* to_string(RecordKind kind) noexcept;

/// One line of the transcript. `detail` is rendered when the record is made
/// so that the text form is a pure function of the run.
struct Record {
    std::uint64_t seq = 0;
    Micros at = 0;
    RecordKind kind = RecordKind::Start;
    /// 0 for network-wide records (partition, heal).
    ParticipantId node = 0;
    /// Message id for Send/Recv/Drop/Suppress, 0 otherwise.
    std::uint64_t message = 0;
    /// Seq of the Recv record (or 0 for timers and scenario actions) that
    /// made the node act.
    std::uint64_t cause = 0;
    std::string detail;
};

struct SentMessage {
    std::uint64_t id = 0;
    std::uint64_t send_seq = 0;
    Micros at = 0;
    ParticipantId sender = 0;
    std::optional<ParticipantId> to;
    MessageKind kind = MessageKind::Init;
    std::uint64_t epoch = 0;
    std::size_t entries = 0;
    Bytes wire;
    /// False for bytes injected from outside the protocol.
    bool from_node = true;
};

struct Delivery {
    std::uint64_t recv_seq = 0;
    std::uint64_t message = 0;
    ParticipantId receiver = 0;
    Micros at = 0;
    /// Independent signature check done by the simulator.
    bool verified = false;
    fsm::Disposition disposition = fsm::Disposition::None;
    std::string reason;
    /// The node sent something, changed mode or changed key in response.
    bool acted = false;
};

struct KeyEvent {
    std::uint64_t seq = 0;
    Micros at = 0;
    fsm::KeyChange change;
};

struct SecretEvent {
    std::uint64_t seq = 0;
    Micros at = 0;
    fsm::SecretRecord record;
};

struct Transcript {
    std::vector<Record> records;
    std::vector<SentMessage> messages;
    std::vector<Delivery> deliveries;
    std::vector<KeyEvent> keys;
    std::vector<SecretEvent> secrets;

    /// `<time_us> <KIND> <node> <detail>` per line.
    std::string render() const;
    const SentMessage& message(std::uint64_t id) const { return messages.at(id - 1); }
};

struct NodeMetrics {
    std::map<MessageKind, std::uint64_t> unicasts;
    std::map<MessageKind, std::uint64_t> broadcasts;
    std::uint64_t received = 0;
    std::uint64_t rejected = 0;
    std::uint64_t key_changes = 0;
    std::uint64_t exponentiations = 0;
};

struct Convergence {
    Micros at = 0;
    ParticipantId leader = 0;
    std::uint64_t epoch = 0;
    std::size_t nodes = 0;
};

struct Metrics {
    std::map<ParticipantId, NodeMetrics> nodes;
    std::uint64_t sends = 0;
    std::uint64_t broadcasts = 0;
    std::uint64_t unicasts = 0;
    std::uint64_t attempts = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t suppressed = 0;
    /// Scheduled deliveries not yet processed.
    std::uint64_t in_flight = 0;
    std::map<std::string, std::uint64_t> drops;
    std::vector<Convergence> convergence;

    std::uint64_t total_drops() const;
    std::string render() const;
};

/// Deterministic discrete-event network. Events are processed in (time,
/// insertion sequence) order; the seed fixes everything else.
class Simulator {
public:
    using Observer = std::function<void(const Simulator&)>;

    Simulator(SimConfig config, NodeConfig node_config, std::shared_ptr<const group::GroupParams> params);

    /// Processes one event. False when the queue is empty or the next event
    /// lies past the duration budget.
    bool step();
    void run_until(Micros t);
    /// Runs to the configured duration.
    void run();

    /// Called after every processed event.
    void set_observer(Observer observer) { observer_ = std::move(observer); }

    // Direct controls; scenario files schedule the same actions.
    void node_join(ParticipantId id, Micros at);
    void node_leave(ParticipantId id, bool graceful, Micros at);
    void apply_partition(std::vector<std::vector<ParticipantId>> components, Micros at);
    void heal(Micros at);
    /// Delivers arbitrary bytes to `receiver` at `at`, as if sent by the
    /// message's claimed sender.
    void inject(ParticipantId receiver, Bytes wire, Micros at);

    Micros now() const noexcept { return now_; }
    const SimConfig& config() const noexcept { return config_; }
    const group::GroupParams& params() const noexcept { return *params_; }
    const msg::KeyRing& keyring() const noexcept { return *keyring_; }

    bool is_live(ParticipantId id) const;
    std::vector<ParticipantId> live_nodes() const;
    /// Throws Error(UnknownNode) for ids never started.
    const fsm::NodeMachine& node(ParticipantId id) const;
    std::uint64_t exp_count(ParticipantId id) const;
    std::vector<ParticipantId> leaders() const;

    /// Exactly one live leader and every live node holding the same
    /// (leader, epoch, key) as that leader.
    bool converged() const;
    /// Start of the current converged stretch.
    std::optional<Micros> converged_since() const noexcept { return converged_since_; }

    const Transcript& transcript() const noexcept { return transcript_; }
    Metrics metrics() const;

private:
    struct Deliver {
        std::uint64_t message;
        ParticipantId receiver;
    };
    struct Timer {
        ParticipantId node;
        std::uint64_t generation;
    };
    struct Action {
        ScenarioEvent event;
    };
    struct Injected {
        std::uint64_t message;
        ParticipantId receiver;
    };
    using Payload = std::variant<Deliver, Timer, Action, Injected>;

    struct Queued {
        Micros at;
        std::uint64_t seq;
        Payload payload;
        bool operator>(const Queued& o) const { return at != o.at ? at > o.at : seq > o.seq; }
    };

    struct Slot {
        std::unique_ptr<fsm::NodeMachine> machine;
        bool live = false;
        std::uint32_t incarnation = 0;
        std::uint64_t timer_generation = 0;
        std::optional<Micros> timer_at;
        std::uint64_t exps_retired = 0;
    };

    void schedule(Micros at, Payload payload);
    void process(const Queued& q);
    void handle_deliver(const Deliver& d);
    void handle_timer(const Timer& t);
    void handle_action(const ScenarioEvent& ev);

    void start_node(ParticipantId id, bool as_leader, std::uint64_t cause);
    /// Applies an FSM output: sends, records, timer. True if the node acted.
    bool apply(ParticipantId id, const fsm::FsmOutput& out, std::uint64_t cause);
    void send(ParticipantId sender, const fsm::Outgoing& outgoing, std::uint64_t cause);
    void attempt(std::uint64_t message, ParticipantId receiver, std::uint64_t send_seq);
    std::uint64_t record(RecordKind kind, ParticipantId node, std::string detail, std::uint64_t message = 0,
                         std::uint64_t cause = 0);
    bool same_component(ParticipantId a, ParticipantId b) const;
    void update_convergence();

    SimConfig config_;
    NodeConfig node_config_;
    std::shared_ptr<const group::GroupParams> params_;
    std::shared_ptr<const msg::KeyRing> keyring_;
    ParticipantId max_id_ = 0;
    Rng net_rng_;

    std::priority_queue<Queued, std::vector<Queued>, std::greater<>> queue_;
    std::uint64_t queue_seq_ = 0;
    Micros now_ = 0;
    std::map<ParticipantId, Slot> nodes_;
    std::map<ParticipantId, std::size_t> component_;
    bool partitioned_ = false;

    Transcript transcript_;
    Metrics metrics_;
    std::optional<Micros> converged_since_;
    Observer observer_;
};

/// Builds the default keyring for a run: keys for ids 1..max_id.
std::shared_ptr<const msg::KeyRing> make_keyring(ParticipantId max_id, std::uint64_t seed, bool ed25519);

/// Short hex digest used in transcripts: first 8 bytes of SHA-256.
std::string short_digest(ByteView bytes);

}  // namespace agdh::sim
