#pragma once

#include "lldc/dcnet.hpp"
#include "lldc/disruption.hpp"
#include "lldc/equivocation.hpp"
#include "lldc/setup.hpp"
#include "lldc/simnet.hpp"
#include "lldc/wire.hpp"

#include <deque>
#include <memory>
#include <optional>
#include <set>

namespace lldc::nodes {

using crypto::Element;
using crypto::Group;
using crypto::KeyPair;
using crypto::Scalar;

// Knobs shared by every node of a deployment; parse/format round-trips
// the key-value config file.
struct ProtocolConfig {
  std::string group_id = "p256";
  size_t cell_bits = 8192;            // l
  size_t downstream_cap = 16384;      // l' in bytes
  size_t window = 1;                  // W, pipelined rounds
  size_t load_period = 0;             // L; 0 disables load tuning
  uint64_t sleep_interval_us = 100000;
  bool equivocation = true;
  bool premask = false;
  size_t prestream_depth = 0;         // 0 -> 2W
  uint64_t setup_timeout_us = 10000000;
  uint64_t round_timeout_us = 500000;
  uint64_t blame_timeout_us = 300000;
  int max_retransmit = 3;
  uint64_t exit_latency_us = 0;
  std::set<uint32_t> trusted_guards;  // empty = trust every roster guard

  dcnet::CellConfig cell_config() const { return {cell_bits, premask}; }
  size_t prestream() const { return prestream_depth ? prestream_depth : 2 * window; }

  static ProtocolConfig parse(std::string_view text);
  std::string format() const;
};

enum class ChurnMode { kNaive, kAbrupt, kGraceful };
ChurnMode churn_mode_from(std::string_view name);

// 4.5: what a membership event does to the running epoch.
struct ChurnPlan {
  bool halt_rounds = false;      // stop Anonymize before re-Setup
  bool background_setup = false; // new epoch forms while the old one runs
};
ChurnPlan churn_handler(bool is_join, ChurnMode mode);

// Declarative fault injection for scripted adversaries.
struct FaultSpec {
  enum Kind {
    kNone,
    kFlipBits,       // XOR chosen bit positions into own ciphertext
    kRandomCipher,   // replace own ciphertext with random bytes
    kBadKappa,       // multiply own kappa by g
    kBadSigma,       // add 1 to own sigma
    kWithhold,       // stop sending ciphertexts
    kOffline,        // ignore every message (setup never completes)
    kEquivocateZ,    // relay-side: one client gets a different z
  } kind = kNone;
  bool target_guard = false;
  uint32_t entity_id = 0;  // roster id (or victim client for kEquivocateZ)
  uint64_t from_round = 0;
  uint64_t to_round = 0;   // inclusive
  std::vector<uint32_t> flip_positions;
  bool lie_in_reveal = false;  // stay self-consistent in the bit reveal

  bool applies(uint64_t round) const {
    return kind != kNone && round >= from_round && round <= to_round;
  }
};

struct Workload {
  enum Kind { kIdle, kPing, kCbr } kind = kIdle;
  double active_fraction = 1.0;     // share of clients generating traffic
  size_t payload_bytes = 64;
  uint64_t cbr_interval_us = 20000; // packet spacing for kCbr
  uint64_t max_messages = 0;        // 0 = unbounded
};

struct ChurnScriptEntry {
  uint64_t time_us = 0;
  bool join = false;  // else leave
  size_t client_index = 0;
  ChurnMode mode = ChurnMode::kAbrupt;
};

// ---------------------------------------------------------------------------

class RelayNode;
class ClientNode;
class GuardNode;

struct NetworkSpec {
  simnet::Topology topology = simnet::Topology::lan_default();
  size_t n = 2;
  size_t m = 1;
  size_t initial_active = 0;  // clients present at epoch 0; 0 = all n
  ProtocolConfig proto;
  Workload workload;
  ChurnMode churn_mode = ChurnMode::kNaive;
  std::vector<FaultSpec> faults;
  std::vector<ChurnScriptEntry> churn_script;
  uint64_t seed = 1;
  uint64_t target_rounds = 0;    // stop after this many committed rounds
  uint64_t duration_us = 0;      // or after this much simulated time
};

// Owns the sim, the roster, and all actors; runs one deployment.
class Network {
 public:
  struct Directory {
    uint32_t relay_node = 0;
    std::vector<uint32_t> guard_nodes;
    std::vector<uint32_t> client_nodes;
  };

  explicit Network(const NetworkSpec& spec);
  ~Network();

  void run();

  simnet::Sim& sim() { return *sim_; }
  const simnet::Sim& sim() const { return *sim_; }
  RelayNode& relay() { return *relay_; }
  const RelayNode& relay() const { return *relay_; }
  ClientNode& client(size_t i) { return *clients_[i]; }
  size_t client_count() const { return clients_.size(); }
  const setup::Roster& roster() const { return roster_; }
  const Directory& dir() const { return dir_; }
  const Group& group() const { return *group_; }
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  const Group* group_ = nullptr;
  setup::Roster roster_;
  Directory dir_;
  std::unique_ptr<simnet::Sim> sim_;
  std::unique_ptr<RelayNode> relay_;
  std::vector<std::unique_ptr<ClientNode>> clients_;
  std::vector<std::unique_ptr<GuardNode>> guards_;
};

// -- Internal state machines -------------------------------------------------

enum class Phase { kIdle, kSetup, kAnonymize, kBlame, kSleeping, kHalted };

// Per-epoch relay bookkeeping for one committed or in-flight round.
struct RoundRecord {
  uint64_t round = 0;
  std::map<uint32_t, Bytes> client_ciphers;
  std::map<uint32_t, Bytes> guard_ciphers;   // retained for blame only
  std::map<uint32_t, Element> kappas;
  std::map<uint32_t, Scalar> sigmas;
  equivocation::DownstreamHistory h_snapshot;
  Bytes y_raw;
  std::optional<Bytes> recovered_seed;
  size_t owner_slot = 0;
  bool reservation = false;
  bool committed = false;
  bool trap_ok = true;
};

class GuardNode : public simnet::Actor {
 public:
  GuardNode(Network& net, size_t index, uint32_t id, KeyPair key,
            const ProtocolConfig& cfg);
  void on_message(simnet::Sim& sim, uint32_t from, const Bytes& frame) override;
  void on_timer(simnet::Sim&, uint64_t) override {}

  void set_fault(const FaultSpec& f) { fault_ = f; }
  uint32_t id() const { return id_; }

 private:
  struct EpochState {
    std::vector<uint32_t> client_ids;
    std::vector<crypto::SharedSecret> secrets;  // per client, transcript order
    std::vector<Element> ephemerals;            // original ephemeral keys
    const Element& ephemerals_by_index(size_t i) const { return ephemerals[i]; }
  };

  void handle_transcript(simnet::Sim& sim, const wire::Frame& f);
  void stream_ciphers(simnet::Sim& sim);
  void handle_blame_request(simnet::Sim& sim, const wire::Frame& f);
  void handle_hash_request(simnet::Sim& sim, const wire::Frame& f);
  void handle_pair_evidence(simnet::Sim& sim, const wire::Frame& f);
  uint32_t sim_node(simnet::Sim&) const;

  Network& net_;
  size_t index_;
  uint32_t id_;
  KeyPair key_;
  ProtocolConfig cfg_;
  const Group* group_ = nullptr;
  FaultSpec fault_;
  Prng rng_;

  uint32_t epoch_ = 0;        // epoch currently streamed
  uint64_t credit_ = 0;       // may stream rounds < credit_
  uint64_t next_round_ = 0;
  uint32_t relay_node_ = 0;
  std::map<uint32_t, setup::ShuffleSecret> shuffle_secrets_;  // by epoch
  std::map<uint32_t, EpochState> epochs_;
};

class ClientNode : public simnet::Actor {
 public:
  ClientNode(Network& net, size_t index, uint32_t id, KeyPair long_term,
             const ProtocolConfig& cfg, const Workload& wl, bool active_sender);
  void on_message(simnet::Sim& sim, uint32_t from, const Bytes& frame) override;
  void on_timer(simnet::Sim& sim, uint64_t label) override;
  void start(simnet::Sim& sim) override;

  void set_fault(const FaultSpec& f) { fault_ = f; }
  void set_participating(bool p) { participating_ = p; }
  void schedule_leave(simnet::Sim& sim, uint64_t at_us, ChurnMode mode);
  void schedule_join(simnet::Sim& sim, uint64_t at_us);
  uint32_t id() const { return id_; }
  bool participating() const { return participating_; }
  uint64_t payloads_echoed() const { return echoes_; }
  uint64_t messages_generated() const { return messages_generated_; }

 private:
  void handle_schedule(simnet::Sim& sim, const wire::Frame& f);
  void handle_downstream(simnet::Sim& sim, const wire::Frame& f);
  void process_downstream(simnet::Sim& sim, uint64_t round, const Bytes& body);
  void send_round(simnet::Sim& sim, uint64_t round, size_t owner_slot,
                  bool reservation);
  dcnet::UpstreamCell choose_cell(uint64_t round, bool reservation);
  void handle_blame_request(simnet::Sim& sim, const wire::Frame& f);
  void handle_hash_request(simnet::Sim& sim, const wire::Frame& f);
  void handle_pair_evidence(simnet::Sim& sim, const wire::Frame& f);
  void maybe_generate_traffic(simnet::Sim& sim);
  void begin_auth(simnet::Sim& sim, uint32_t epoch);
  uint32_t sim_node() const;
  Bytes traffic_payload(uint32_t seq) const;

  Network& net_;
  size_t index_;
  uint32_t id_;
  KeyPair long_term_;
  ProtocolConfig cfg_;
  Workload workload_;
  bool active_sender_;
  FaultSpec fault_;
  Prng rng_;
  const Group* group_ = nullptr;

  bool participating_ = true;
  bool leaving_gracefully_ = false;
  bool cbr_armed_ = false;

  // Epoch state.
  uint32_t epoch_ = 0;
  bool epoch_ready_ = false;
  KeyPair ephemeral_;
  std::map<uint32_t, KeyPair> pending_ephemerals_;  // by forming epoch
  setup::Schedule schedule_;
  size_t my_slot_ = 0;
  std::vector<uint32_t> guard_ids_;            // active guards, chain order
  std::vector<crypto::SharedSecret> secrets_;  // per active guard
  Bytes slot_secret_;
  equivocation::DownstreamHistory history_;
  uint64_t next_downstream_ = 0;       // next z round to absorb
  std::map<uint64_t, Bytes> z_buffer_; // out-of-order downstream bodies

  // Traffic.
  uint32_t conn_id_ = 0;
  std::deque<Bytes> upstream_queue_;
  size_t upstream_offset_ = 0;  // into the front message
  std::map<uint32_t, uint64_t> ping_sent_at_;  // seq -> enqueue time
  uint32_t next_seq_ = 0;
  uint64_t messages_generated_ = 0;
  uint64_t echoes_ = 0;
  dcnet::DownstreamReassembler reassembler_;

  // Retransmission (5.2): resend the identical cell in the next owned slot.
  std::map<uint64_t, dcnet::UpstreamCell> sent_cells_;  // owned round -> cell
  std::deque<dcnet::UpstreamCell> retransmit_queue_;
};

class RelayNode : public simnet::Actor {
 public:
  RelayNode(Network& net, const NetworkSpec& spec, KeyPair key,
            std::vector<bool> initially_active);
  void start(simnet::Sim& sim) override;
  void on_message(simnet::Sim& sim, uint32_t from, const Bytes& frame) override;
  void on_timer(simnet::Sim& sim, uint64_t label) override;

  uint64_t committed_rounds() const { return total_committed_; }
  uint32_t epoch() const { return epoch_; }
  Phase phase() const { return phase_; }
  const std::vector<disruption::BlameTranscript>& blame_transcripts() const {
    return transcripts_;
  }
  const std::vector<disruption::Verdict>& verdicts() const { return verdicts_; }
  void request_stop() { stopping_ = true; }
  uint64_t epochs_started() const { return epochs_started_; }
  uint64_t total_payload_bytes() const { return total_payload_bytes_; }

 private:
  // Epoch lifecycle.
  void begin_setup(simnet::Sim& sim, bool background);
  void continue_shuffle(simnet::Sim& sim);
  void finish_setup(simnet::Sim& sim);
  void abort_setup(simnet::Sim& sim, const std::string& why);
  void handle_churn(simnet::Sim& sim, bool is_join, uint32_t client_id,
                    ChurnMode mode);
  std::vector<size_t> active_guard_chain() const;
  uint32_t sim_node() const;

  // Round engine.
  void extend_plan(uint64_t round);
  void try_commit(simnet::Sim& sim);
  void commit_round(simnet::Sim& sim, RoundRecord& rec);
  void broadcast_downstream(simnet::Sim& sim, uint64_t round, uint8_t flags,
                            bool announce);
  void extend_credit(simnet::Sim& sim);

  // Blame.
  void arm_blame_deadline(simnet::Sim& sim);
  void start_blame(simnet::Sim& sim, uint64_t disputed_round, const Bytes& truth_cell);
  void begin_bit_blame(simnet::Sim& sim);
  void on_bit_reveal(simnet::Sim& sim, const wire::Frame& f);
  void finish_bit_collection(simnet::Sim& sim);
  void begin_hash_blame(simnet::Sim& sim);
  void on_hash_reveal(simnet::Sim& sim, const wire::Frame& f);
  void finish_hash_collection(simnet::Sim& sim);
  void escalate_pair(simnet::Sim& sim, uint32_t client_id, uint32_t guard_id,
                     bool hash_stage);
  void on_secret_reveal(simnet::Sim& sim, const wire::Frame& f);
  void finish_pair(simnet::Sim& sim);
  void conclude_blame(simnet::Sim& sim, disruption::Verdict v);

  Network& net_;
  NetworkSpec spec_;
  ProtocolConfig cfg_;
  KeyPair key_;
  const Group* group_ = nullptr;
  Prng rng_;
  bool stopping_ = false;

  // Membership (relay's view; roster ids).
  std::vector<bool> registered_;        // by client index
  std::vector<bool> guard_registered_;  // by guard index
  std::set<uint32_t> excluded_;         // convicted entities (roster ids)

  Phase phase_ = Phase::kIdle;
  uint32_t epoch_ = 0;
  uint32_t epoch_counter_ = 0;
  uint64_t epochs_started_ = 0;
  uint64_t total_committed_ = 0;
  uint64_t total_payload_bytes_ = 0;
  uint64_t setup_backoff_us_ = 0;
  Bytes pending_broadcast_;  // downstream delayed by an all-closed sleep

  // Forming epoch (setup in flight).
  struct Forming {
    uint32_t epoch = 0;
    bool background = false;
    std::map<uint32_t, Element> ephemerals;  // client id -> key
    std::vector<uint32_t> order;             // client ids, sorted
    size_t awaiting_auth = 0;
    size_t shuffle_at = 0;  // position in the active guard chain
    std::vector<Element> chain_keys;
    Element chain_base;
    setup::ShuffleTranscript transcript;
    std::vector<Bytes> signatures;
    size_t sig_count = 0;
    uint64_t started_us = 0;
  };
  std::optional<Forming> forming_;

  // Active epoch.
  struct PlanEntry {
    uint16_t slot = 0;
    bool reservation = false;
  };
  struct Active {
    std::vector<uint32_t> client_ids;       // epoch participants, sorted
    std::map<uint32_t, size_t> client_pos;  // id -> index in client_ids
    std::vector<uint32_t> guard_ids;        // active guards, chain order
    std::vector<Element> schedule_inputs;   // ephemeral keys, client order
    setup::Schedule schedule;
    std::vector<Bytes> slot_secrets;
    std::vector<Bytes> encrypted_secrets;
    dcnet::GuardAccumulator guard_acc;
    std::map<uint64_t, RoundRecord> rounds;  // in flight + blame log
    uint64_t next_commit = 0;
    uint64_t guard_credit_sent = 0;
    // History snapshots: hist_states[j - hist_base] is the digest after j
    // absorbed downstream messages.
    std::deque<equivocation::DownstreamHistory> hist_states;
    uint64_t hist_base = 0;
    equivocation::DownstreamHistory history;
    dcnet::DownstreamQueue downstream;
    dcnet::UpstreamReassembler upstream;
    std::map<uint32_t, size_t> conn_slot;  // conn id -> slot
    // Slot plan: round -> (owner slot, reservation?), extended lazily.
    std::vector<PlanEntry> plan;
    std::deque<PlanEntry> pass_queue;
    std::vector<bool> open_slots;
    std::vector<bool> votes;
    uint64_t rounds_since_poll = 0;
    bool last_pass_reservation = false;
    bool sleep_pending = false;
    // Retransmission dispute in flight.
    struct PendingBlame {
      uint64_t disputed_round = 0;
      size_t slot = 0;
      int attempts = 0;
    };
    std::optional<PendingBlame> pending;
    uint64_t last_commit_us = 0;
  };
  Active act_;

  // Blame in flight.
  struct BlameState {
    uint64_t round = 0;
    Bytes truth_cell;   // ground-truth frame bytes (round-t mask domain)
    Bytes truth_dcnet;  // frame ^ blinding mask, the pad-cancel domain
    Bytes disrupted;    // recorded y_raw
    std::optional<size_t> position;
    bool hash_stage_done = false;
    std::map<uint32_t, disruption::BitReveal> client_reveals;
    std::map<uint32_t, disruption::BitReveal> guard_reveals;
    std::map<uint32_t, equivocation::HashReveal> client_hashes;
    std::map<uint32_t, equivocation::HashReveal> guard_hashes;
    // Pair escalation.
    bool pair_active = false;
    bool pair_from_hash = false;
    uint32_t pair_client = 0, pair_guard = 0;
    std::optional<disruption::SecretReveal> pair_client_reveal;
    std::optional<disruption::SecretReveal> pair_guard_reveal;
    int stage_token = 0;  // invalidates stale deadline timers
    disruption::BlameTranscript transcript;
  };
  std::optional<BlameState> blame_;

  std::vector<disruption::BlameTranscript> transcripts_;
  std::vector<disruption::Verdict> verdicts_;

  friend class Network;
  friend class ClientNode;
  friend class GuardNode;
};

}  // namespace lldc::nodes
