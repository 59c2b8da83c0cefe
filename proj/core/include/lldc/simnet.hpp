#pragma once

#include "lldc/bytes.hpp"
#include "lldc/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <string>
#include <vector>

namespace lldc::simnet {

using Us = uint64_t;  // simulated microseconds

enum class Role { kRelay, kGuard, kClient };

struct LinkSpec {
  double latency_ms = 0;
  double jitter_ms = 0;
  double bandwidth_mbps = 0;  // 0 = infinite
};

// Star topology around the relay. lan_default mirrors the reference
// testbed: 100 Mbps / 10 ms clients, 10 Mbps / 100 ms guards. local_guard
// moves the single guard into the LAN; vpn pushes every client to 100 ms.
struct Topology {
  std::string preset = "lan_default";
  LinkSpec client;  // client <-> relay
  LinkSpec guard;   // guard <-> relay

  static Topology lan_default();
  static Topology local_guard();
  static Topology vpn();
  static Topology by_preset(std::string_view name);

  // Key-value text file, one `key value` pair per line.
  static Topology parse(std::string_view text);
  std::string format() const;
};

struct LogEntry {
  Us time = 0;
  std::string kind;
  std::string detail;
};

class Sim;

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void start(Sim&) {}
  virtual void on_message(Sim&, uint32_t from, const Bytes& frame) = 0;
  virtual void on_timer(Sim&, uint64_t label) { (void)label; }
};

// Deterministic event queue. All client<->relay traffic serializes
// through the relay's shared LAN port (one full-duplex queue pair), so
// per-round time grows with the number of contributing clients; guard
// links are point-to-point. Ties break on a global sequence number.
class Sim {
 public:
  Sim(const Topology& topo, uint64_t seed);

  uint32_t add_node(Actor* actor, Role role);
  Role role_of(uint32_t node) const { return roles_.at(node); }
  const std::vector<uint32_t>& nodes_of(Role r) const;

  void send(uint32_t from, uint32_t to, Bytes frame);
  // One LAN transmission heard by every client (layer-2 broadcast).
  void broadcast_clients(uint32_t from, Bytes frame);
  void set_timer(uint32_t node, Us delay, uint64_t label);

  Us now() const { return now_; }
  void run();                    // drain the queue
  bool run_until(Us deadline);   // false when the queue drained first

  uint64_t lan_bytes() const { return lan_bytes_; }
  uint64_t wan_bytes() const { return wan_bytes_; }

  void log_event(std::string_view kind, std::string_view detail);
  const std::vector<LogEntry>& log() const { return log_; }

  Prng& rng() { return rng_; }

 private:
  struct Event {
    Us time;
    uint64_t seq;
    uint32_t node;
    bool timer;
    uint64_t label;
    uint32_t from;
    Bytes frame;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  Us deliver_time(uint32_t from, uint32_t to, size_t bytes, bool accounted);
  LinkSpec link_between(uint32_t a, uint32_t b) const;

  Topology topo_;
  Prng rng_;
  std::vector<Actor*> actors_;
  std::map<uint32_t, Role> roles_;
  std::map<Role, std::vector<uint32_t>> by_role_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  uint64_t seq_ = 0;
  Us now_ = 0;
  // Relay LAN port serializers, one per direction; guard link serializers
  // per guard per direction.
  Us lan_up_free_ = 0, lan_down_free_ = 0;
  std::map<uint32_t, Us> guard_up_free_, guard_down_free_;
  uint64_t lan_bytes_ = 0, wan_bytes_ = 0;
  std::vector<LogEntry> log_;
};

// -- Churn analytics ----------------------------------------------------------

struct ChurnEvent {
  uint64_t time_ms = 0;
  uint32_t device = 0;
  bool assoc = true;
};

struct ChurnTrace {
  std::vector<ChurnEvent> events;  // times non-decreasing
  uint64_t duration_ms = 0;
};

// CSV: time_ms,device_id,assoc|disassoc. Parse errors carry line numbers.
ChurnTrace parse_churn_csv(std::string_view text);
std::string format_churn_csv(const ChurnTrace& t);

// Synthetic stand-in for the cafe capture: 222 associations across 33
// devices and 32 disassociations across 12, over 240 minutes.
ChurnTrace synth_cafe_trace(uint64_t seed);

enum class ChurnStrategy { kNaive, kAbrupt, kGraceful };
ChurnStrategy churn_strategy_from(std::string_view name);
const char* churn_strategy_name(ChurnStrategy s);

struct AvailabilityReport {
  size_t interruptions = 0;
  double availability = 1.0;  // 1 - merged_downtime/total_time
  double max_downtime_s = 0.0;
};

// naive: every event opens a D-second window; abrupt: disassociations
// only; graceful: none. Windows merge before summing.
AvailabilityReport replay_churn(const ChurnTrace& trace, ChurnStrategy strategy,
                                double resync_seconds);

struct SeriesPoint {
  uint64_t time_ms = 0;
  size_t set_size = 0;
};
std::vector<SeriesPoint> anonymity_set_series(const ChurnTrace& trace,
                                              uint64_t window_ms);

struct SeriesStats {
  double mean = 0;
  double max_deviation_pct = 0;  // vs the removed linear component
};
SeriesStats detrended_stats(const std::vector<SeriesPoint>& series);

}  // namespace lldc::simnet
