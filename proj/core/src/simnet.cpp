#include "lldc/simnet.hpp"

#include "lldc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lldc::simnet {

Topology Topology::lan_default() {
  Topology t;
  t.preset = "lan_default";
  t.client = {10, 0, 100};
  t.guard = {100, 0, 10};
  return t;
}

Topology Topology::local_guard() {
  Topology t;
  t.preset = "local_guard";
  t.client = {10, 0, 100};
  t.guard = {10, 0, 100};  // the one guard sits in the LAN
  return t;
}

Topology Topology::vpn() {
  Topology t;
  t.preset = "vpn";
  t.client = {100, 0, 100};
  t.guard = {100, 0, 10};
  return t;
}

Topology Topology::by_preset(std::string_view name) {
  if (name == "lan_default" || name == "lan") return lan_default();
  if (name == "local_guard") return local_guard();
  if (name == "vpn") return vpn();
  throw ConfigError("unknown topology preset: " + std::string(name));
}

Topology Topology::parse(std::string_view text) {
  Topology t;
  std::istringstream in{std::string(text)};
  std::string key;
  size_t lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string value;
    if (!(ls >> key >> value))
      throw ConfigError("topology line " + std::to_string(lineno) + ": malformed");
    auto num = [&] { return std::stod(value); };
    if (key == "preset")
      t = by_preset(value);
    else if (key == "client_latency_ms")
      t.client.latency_ms = num();
    else if (key == "client_jitter_ms")
      t.client.jitter_ms = num();
    else if (key == "lan_bandwidth_mbps")
      t.client.bandwidth_mbps = num();
    else if (key == "guard_latency_ms")
      t.guard.latency_ms = num();
    else if (key == "guard_jitter_ms")
      t.guard.jitter_ms = num();
    else if (key == "guard_bandwidth_mbps")
      t.guard.bandwidth_mbps = num();
    else
      throw ConfigError("topology line " + std::to_string(lineno) + ": unknown key " + key);
  }
  return t;
}

std::string Topology::format() const {
  std::ostringstream out;
  out << "preset " << preset << "\n";
  out << "client_latency_ms " << client.latency_ms << "\n";
  out << "client_jitter_ms " << client.jitter_ms << "\n";
  out << "lan_bandwidth_mbps " << client.bandwidth_mbps << "\n";
  out << "guard_latency_ms " << guard.latency_ms << "\n";
  out << "guard_jitter_ms " << guard.jitter_ms << "\n";
  out << "guard_bandwidth_mbps " << guard.bandwidth_mbps << "\n";
  return out.str();
}

Sim::Sim(const Topology& topo, uint64_t seed) : topo_(topo), rng_(Prng(seed).child("simnet")) {}

uint32_t Sim::add_node(Actor* actor, Role role) {
  uint32_t id = static_cast<uint32_t>(actors_.size());
  actors_.push_back(actor);
  roles_[id] = role;
  by_role_[role].push_back(id);
  return id;
}

const std::vector<uint32_t>& Sim::nodes_of(Role r) const {
  static const std::vector<uint32_t> empty;
  auto it = by_role_.find(r);
  return it == by_role_.end() ? empty : it->second;
}

LinkSpec Sim::link_between(uint32_t a, uint32_t b) const {
  Role ra = roles_.at(a), rb = roles_.at(b);
  Role other = ra == Role::kRelay ? rb : ra;
  if (other == Role::kGuard) return topo_.guard;
  return topo_.client;
}

Us Sim::deliver_time(uint32_t from, uint32_t to, size_t bytes, bool accounted) {
  LinkSpec link = link_between(from, to);
  Us ser_us = 0;
  if (link.bandwidth_mbps > 0)
    ser_us = static_cast<Us>(std::llround(static_cast<double>(bytes) * 8.0 /
                                          link.bandwidth_mbps));
  bool from_relay = roles_.at(from) == Role::kRelay;
  Role other = from_relay ? roles_.at(to) : roles_.at(from);

  Us port_done;
  if (other == Role::kClient) {
    Us& port = from_relay ? lan_down_free_ : lan_up_free_;
    port = std::max(port, now_) + ser_us;
    port_done = port;
    if (accounted) lan_bytes_ += bytes;
  } else {
    uint32_t guard = from_relay ? to : from;
    Us& port = from_relay ? guard_down_free_[guard] : guard_up_free_[guard];
    port = std::max(port, now_) + ser_us;
    port_done = port;
    if (accounted) wan_bytes_ += bytes;
  }

  Us jitter = 0;
  if (link.jitter_ms > 0)
    jitter = rng_.uniform(static_cast<uint64_t>(link.jitter_ms * 1000) + 1);
  return port_done + static_cast<Us>(std::llround(link.latency_ms * 1000)) + jitter;
}

void Sim::send(uint32_t from, uint32_t to, Bytes frame) {
  Us at = deliver_time(from, to, frame.size(), true);
  queue_.push(Event{at, seq_++, to, false, 0, from, std::move(frame)});
}

void Sim::broadcast_clients(uint32_t from, Bytes frame) {
  // One transmission on the shared medium; every client hears it.
  const auto& clients = nodes_of(Role::kClient);
  if (clients.empty()) return;
  Us base = deliver_time(from, clients.front(), frame.size(), true);
  LinkSpec link = topo_.client;
  for (uint32_t c : clients) {
    Us jitter = 0;
    if (link.jitter_ms > 0)
      jitter = rng_.uniform(static_cast<uint64_t>(link.jitter_ms * 1000) + 1);
    queue_.push(Event{base + jitter, seq_++, c, false, 0, from, frame});
  }
}

void Sim::set_timer(uint32_t node, Us delay, uint64_t label) {
  queue_.push(Event{now_ + delay, seq_++, node, true, label, node, {}});
}

void Sim::run() {
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    if (ev.timer)
      actors_[ev.node]->on_timer(*this, ev.label);
    else
      actors_[ev.node]->on_message(*this, ev.from, ev.frame);
  }
}

bool Sim::run_until(Us deadline) {
  while (!queue_.empty() && queue_.top().time <= deadline) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    if (ev.timer)
      actors_[ev.node]->on_timer(*this, ev.label);
    else
      actors_[ev.node]->on_message(*this, ev.from, ev.frame);
  }
  bool drained = queue_.empty();
  now_ = std::max(now_, deadline);
  return !drained;
}

void Sim::log_event(std::string_view kind, std::string_view detail) {
  log_.push_back({now_, std::string(kind), std::string(detail)});
}

// -- Churn analytics ---------------------------------------------------------

ChurnTrace parse_churn_csv(std::string_view text) {
  ChurnTrace t;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  uint64_t prev = 0;
  std::map<uint32_t, bool> assoc_state;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string time_s, dev_s, kind_s;
    if (!std::getline(ls, time_s, ',') || !std::getline(ls, dev_s, ',') ||
        !std::getline(ls, kind_s))
      throw ConfigError("churn line " + std::to_string(lineno) + ": malformed");
    ChurnEvent ev;
    try {
      ev.time_ms = std::stoull(time_s);
      ev.device = static_cast<uint32_t>(std::stoul(dev_s));
    } catch (const std::exception&) {
      throw ConfigError("churn line " + std::to_string(lineno) + ": bad number");
    }
    if (kind_s == "assoc")
      ev.assoc = true;
    else if (kind_s == "disassoc")
      ev.assoc = false;
    else
      throw ConfigError("churn line " + std::to_string(lineno) + ": bad kind " + kind_s);
    if (ev.time_ms < prev)
      throw ConfigError("churn line " + std::to_string(lineno) + ": time goes backwards");
    if (!ev.assoc && !assoc_state[ev.device])
      throw ConfigError("churn line " + std::to_string(lineno) +
                        ": disassoc while not associated");
    assoc_state[ev.device] = ev.assoc;
    prev = ev.time_ms;
    t.events.push_back(ev);
  }
  t.duration_ms = t.events.empty() ? 0 : t.events.back().time_ms;
  return t;
}

std::string format_churn_csv(const ChurnTrace& t) {
  std::ostringstream out;
  for (auto& ev : t.events)
    out << ev.time_ms << "," << ev.device << "," << (ev.assoc ? "assoc" : "disassoc")
        << "\n";
  return out.str();
}

ChurnTrace synth_cafe_trace(uint64_t seed) {
  // 240 minutes; 33 devices associate, 12 of them also disassociate for a
  // total of 32 disassociations, and re-associations bring the
  // association count to 222. Disassociations are spaced > 2 s apart so a
  // sub-second resync window never merges two of them.
  constexpr uint64_t kDurationMs = 240ull * 60 * 1000;
  Prng rng = Prng(seed).child("cafe-trace");
  ChurnTrace t;
  t.duration_ms = kDurationMs;

  struct Pending {
    uint64_t time_ms;
    uint32_t device;
    bool assoc;
  };
  std::vector<Pending> events;

  // Initial associations, one per device, in the first hour.
  for (uint32_t d = 0; d < 33; ++d)
    events.push_back({1000 + rng.uniform(3600 * 1000), d, true});

  // 32 disassociations over 12 devices, each followed by a re-association
  // (so state stays consistent and re-assoc events accumulate).
  std::vector<uint64_t> disassoc_times;
  for (size_t i = 0; i < 32; ++i) {
    for (;;) {
      uint64_t at = 3700 * 1000 + rng.uniform(kDurationMs - 4000 * 1000);
      bool clear = true;
      for (uint64_t other : disassoc_times)
        if (at > other ? at - other < 2500 : other - at < 2500) clear = false;
      if (clear) {
        disassoc_times.push_back(at);
        break;
      }
    }
  }
  std::sort(disassoc_times.begin(), disassoc_times.end());
  for (size_t i = 0; i < 32; ++i) {
    uint32_t device = static_cast<uint32_t>(i % 12);
    events.push_back({disassoc_times[i], device, false});
    events.push_back({disassoc_times[i] + 1000 + rng.uniform(1000), device, true});
  }

  // Idempotent re-association noise to reach 222 association events:
  // 33 initial + 32 rejoins + 157 extras.
  for (size_t i = 0; i < 157; ++i)
    events.push_back({3700 * 1000 + rng.uniform(kDurationMs - 4000 * 1000),
                      static_cast<uint32_t>(12 + rng.uniform(21)), true});

  std::stable_sort(events.begin(), events.end(),
                   [](const Pending& a, const Pending& b) { return a.time_ms < b.time_ms; });
  for (auto& ev : events) t.events.push_back({ev.time_ms, ev.device, ev.assoc});
  return t;
}

ChurnStrategy churn_strategy_from(std::string_view name) {
  if (name == "naive") return ChurnStrategy::kNaive;
  if (name == "abrupt") return ChurnStrategy::kAbrupt;
  if (name == "graceful") return ChurnStrategy::kGraceful;
  throw ConfigError("unknown churn strategy: " + std::string(name));
}

const char* churn_strategy_name(ChurnStrategy s) {
  switch (s) {
    case ChurnStrategy::kNaive: return "naive";
    case ChurnStrategy::kAbrupt: return "abrupt";
    case ChurnStrategy::kGraceful: return "graceful";
  }
  return "?";
}

AvailabilityReport replay_churn(const ChurnTrace& trace, ChurnStrategy strategy,
                                double resync_seconds) {
  if (strategy != ChurnStrategy::kGraceful && resync_seconds <= 0)
    throw ConfigError("resync duration must be positive for this strategy");

  AvailabilityReport out;
  std::vector<std::pair<uint64_t, uint64_t>> windows;
  uint64_t d_ms = static_cast<uint64_t>(std::llround(resync_seconds * 1000.0));
  for (auto& ev : trace.events) {
    bool counts = strategy == ChurnStrategy::kNaive ||
                  (strategy == ChurnStrategy::kAbrupt && !ev.assoc);
    if (!counts) continue;
    out.interruptions++;
    windows.emplace_back(ev.time_ms, std::min(ev.time_ms + d_ms, trace.duration_ms));
  }

  // Merge overlaps before summing, so coincident events count once.
  std::sort(windows.begin(), windows.end());
  uint64_t total_down = 0;
  uint64_t max_down = 0;
  size_t i = 0;
  while (i < windows.size()) {
    uint64_t lo = windows[i].first, hi = windows[i].second;
    while (i + 1 < windows.size() && windows[i + 1].first <= hi) {
      hi = std::max(hi, windows[i + 1].second);
      ++i;
    }
    total_down += hi - lo;
    max_down = std::max(max_down, hi - lo);
    ++i;
  }

  out.max_downtime_s = static_cast<double>(max_down) / 1000.0;
  out.availability =
      trace.duration_ms == 0
          ? 1.0
          : 1.0 - static_cast<double>(total_down) / static_cast<double>(trace.duration_ms);
  return out;
}

std::vector<SeriesPoint> anonymity_set_series(const ChurnTrace& trace,
                                              uint64_t window_ms) {
  std::vector<SeriesPoint> out;
  std::map<uint32_t, bool> state;
  size_t idx = 0;
  size_t count = 0;
  for (uint64_t t = 0; t <= trace.duration_ms; t += window_ms) {
    while (idx < trace.events.size() && trace.events[idx].time_ms <= t) {
      const auto& ev = trace.events[idx++];
      bool& assoc = state[ev.device];
      if (ev.assoc && !assoc) {
        assoc = true;
        ++count;
      } else if (!ev.assoc && assoc) {
        assoc = false;
        --count;
      }
    }
    out.push_back({t, count});
    if (window_ms == 0) break;
  }
  return out;
}

SeriesStats detrended_stats(const std::vector<SeriesPoint>& series) {
  SeriesStats st;
  if (series.empty()) return st;
  double n = static_cast<double>(series.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < series.size(); ++i) {
    double x = static_cast<double>(i);
    double y = static_cast<double>(series[i].set_size);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  st.mean = sy / n;
  double denom = n * sxx - sx * sx;
  double slope = denom == 0 ? 0 : (n * sxy - sx * sy) / denom;
  double intercept = (sy - slope * sx) / n;
  for (size_t i = 0; i < series.size(); ++i) {
    double fit = intercept + slope * static_cast<double>(i);
    if (fit <= 0) continue;
    double pct = 100.0 * (static_cast<double>(series[i].set_size) - fit) / fit;
    st.max_deviation_pct = std::max(st.max_deviation_pct, std::abs(pct));
  }
  return st;
}

}  // namespace lldc::simnet
