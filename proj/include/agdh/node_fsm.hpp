#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "agdh/gka_core.hpp"
#include "agdh/keyring.hpp"
#include "agdh/messages.hpp"
#include "agdh/rng.hpp"

namespace agdh::fsm {

using gka::ParticipantId;
using group::GroupElement;
using group::GroupParams;
using group::Scalar;

/// Simulated time in microseconds.
using Micros = std::int64_t;
inline constexpr Micros kMillisecond = 1'000;
inline constexpr Micros kSecond = 1'000'000;
inline constexpr Micros kMinute = 60 * kSecond;

struct NodeConfig {
    Micros period_T = 5 * kSecond;
    Micros renew_P = 20 * kMinute;
    std::uint32_t miss_k = 3;
    std::uint32_t backoff_window_l = 20;
    Micros slot_t_rtd = 100 * kMillisecond;
    Micros jitter_max = 500 * kMillisecond;
    /// Rekey as soon as a new member's IREPLY arrives (sent as JGROUP)
    /// instead of at the next beacon.
    bool eager_rekey = false;

    // Fault hooks for audit tests. Never set outside tests.
    bool fault_skip_verification = false;
    bool fault_corrupt_leader_key = false;

    Micros silence_timeout() const { return static_cast<Micros>(miss_k) * period_T; }
    /// Throws Error(ConfigError).
    void validate() const;
};

enum class Mode { Member, Leader, Candidate };
const char* to_string(Mode mode) noexcept;

/// A contribution together with the secret behind it.
struct OwnContribution {
    Scalar secret;
    gka::Contribution pub;
};

struct MemberRecord {
    gka::Contribution contribution;
    Micros last_heard = 0;
    std::uint64_t reported_epoch = 0;
};

struct GroupView {
    std::optional<ParticipantId> leader_id;
    std::map<ParticipantId, MemberRecord> members;
    std::uint64_t epoch = 0;
};

struct Start {
    /// Boot directly into the leader role (a pre-chosen IKA leader).
    bool as_leader = false;
};
struct MessageArrived {
    Bytes wire;
};
struct TimerFired {};
struct LocalLeaveRequest {
    bool graceful = true;
};
using Event = std::variant<Start, MessageArrived, TimerFired, LocalLeaveRequest>;

struct Outgoing {
    /// nullopt means broadcast.
    std::optional<ParticipantId> to;
    msg::MessageKind kind = msg::MessageKind::IGroup;
    Bytes wire;
};

struct KeyChange {
    ParticipantId node = 0;
    ParticipantId leader = 0;
    std::uint64_t old_epoch = 0;
    std::uint64_t new_epoch = 0;
    GroupElement group_key;
    gka::DerivedKey derived{};
};

struct ModeChange {
    Mode from = Mode::Member;
    Mode to = Mode::Member;
};

/// Ground truth for the transcript audit: every secret a node draws.
struct SecretRecord {
    enum class Role { MemberContribution, LeaderSecret };
    ParticipantId node = 0;
    Role role = Role::MemberContribution;
    Scalar secret;
    /// g^secret for member contributions.
    GroupElement blinded;
    gka::Nonce nonce{};
    /// Epoch the leader secret keyed.
    std::uint64_t epoch = 0;
};

enum class Disposition { None, Accepted, Rejected };

struct FsmOutput {
    std::vector<Outgoing> messages;
    std::optional<KeyChange> key_change;
    std::vector<ModeChange> mode_changes;
    std::vector<SecretRecord> secrets;
    /// Set for MessageArrived events.
    Disposition disposition = Disposition::None;
    std::string reason;
    bool stopped = false;
    std::optional<Micros> next_deadline;
};

struct Counters {
    std::map<std::string, std::uint64_t> rejected;
    std::uint64_t ignored = 0;
    std::uint64_t echo_failures = 0;
    std::uint64_t degenerate_exclusions = 0;
    std::uint64_t rekeys = 0;
};

/// One participant's protocol engine. A deterministic transition function of
/// (state, event, now): it never reads a clock or does I/O, and everything it
/// wants done comes back in FsmOutput.
class NodeMachine {
public:
    NodeMachine(ParticipantId id, NodeConfig config, const GroupParams& params,
                std::shared_ptr<const msg::KeyRing> keyring, std::uint64_t seed);

    FsmOutput on_event(const Event& event, Micros now);

    ParticipantId id() const noexcept { return id_; }
    Mode mode() const noexcept { return mode_; }
    bool stopped() const noexcept { return stopped_; }
    const GroupView& view() const noexcept { return view_; }
    std::optional<ParticipantId> leader_id() const noexcept { return view_.leader_id; }
    const std::optional<gka::SessionKey>& session() const noexcept { return session_; }
    std::optional<ParticipantId> session_leader() const noexcept { return session_leader_; }
    std::uint64_t exp_count() const noexcept { return exps_.count; }
    const Counters& counters() const noexcept { return counters_; }
    const NodeConfig& config() const noexcept { return config_; }
    std::optional<Micros> next_deadline() const;
    /// Slot count drawn on the most recent entry into Candidate mode.
    std::optional<std::uint32_t> last_backoff_draw() const noexcept { return last_backoff_draw_; }
    /// Current contribution, if one has been drawn.
    const OwnContribution* contribution() const noexcept;
    /// Leader secret for the epoch currently keyed (leader mode only).
    std::optional<Scalar> leader_secret() const;
    /// Contributions received but not yet folded into the key (leader mode only).
    std::size_t pending_count() const noexcept;

private:
    struct Timers {
        std::optional<Micros> beacon;
        std::optional<Micros> reply;
        std::optional<Micros> silence;
        std::optional<Micros> renewal;
        std::optional<Micros> backoff;
    };

    struct LeaderState {
        std::optional<Scalar> secret;
        gka::Nonce nonce{};
        std::map<ParticipantId, MemberRecord> pending;
        std::optional<gka::LeaderBatch> batch;
        msg::Message current;
        Bytes current_wire;
    };

    void handle_start(const Start& start, Micros now, FsmOutput& out);
    void handle_message(const MessageArrived& arrived, Micros now, FsmOutput& out);
    void handle_timers(Micros now, FsmOutput& out);
    void handle_leave(const LocalLeaveRequest& leave, Micros now, FsmOutput& out);

    void handle_group_message(const msg::Message& m, Micros now, FsmOutput& out);
    void handle_igroup_as_member(const msg::Message& m, bool adopted, Micros now, FsmOutput& out);
    void handle_reply(const msg::Message& m, Micros now, FsmOutput& out);
    void handle_del(const msg::Message& m, Micros now, FsmOutput& out);

    void handle_leader_silence(Micros now, FsmOutput& out);
    void become_leader(Micros now, FsmOutput& out);
    void leader_beacon_tick(Micros now, FsmOutput& out);
    void member_reply_tick(Micros now, FsmOutput& out);
    bool detect_member_departure(Micros now);
    void renewal_tick(Micros now, FsmOutput& out);
    void rekey(msg::MessageKind kind, Micros now, FsmOutput& out);

    void set_mode(Mode next, FsmOutput& out);
    void adopt_leader(ParticipantId leader, FsmOutput& out);
    void send_ireply(Micros now, FsmOutput& out);
    const OwnContribution& ensure_contribution(FsmOutput& out);
    void refresh_contribution(FsmOutput& out);
    void absorb_pending(const MemberRecord& record);
    void broadcast(const msg::Message& m, FsmOutput& out);
    void unicast(ParticipantId to, const msg::Message& m, FsmOutput& out);
    void reject(FsmOutput& out, const std::string& reason);
    Micros jittered(Micros base);
    gka::Nonce fresh_nonce();
    group::GroupOps ops() { return group::GroupOps(*params_, exps_); }

    ParticipantId id_;
    NodeConfig config_;
    const GroupParams* params_;
    std::shared_ptr<const msg::KeyRing> keyring_;
    Rng rng_;
    group::ExpCounter exps_;

    Mode mode_ = Mode::Member;
    bool stopped_ = false;
    bool started_ = false;
    GroupView view_;
    Timers timers_;
    std::deque<OwnContribution> contributions_;
    std::optional<gka::SessionKey> session_;
    std::optional<ParticipantId> session_leader_;
    std::optional<LeaderState> leader_;
    std::uint64_t max_epoch_seen_ = 0;
    std::map<ParticipantId, std::uint64_t> epoch_high_water_;
    /// Leader and its epoch when this node last sent an IREPLY.
    std::optional<ParticipantId> replied_to_;
    std::uint64_t reply_epoch_mark_ = 0;
    std::optional<std::uint32_t> last_backoff_draw_;
    Counters counters_;
};

}  // namespace agdh::fsm
