#include "lldc/harness.hpp"

#include "lldc/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace lldc::harness {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, sep)) out.push_back(tok);
  return out;
}

// Extract `key=value` integer fields from a log detail string.
bool detail_field(const std::string& detail, const std::string& key, uint64_t* out) {
  size_t at = detail.find(key + "=");
  if (at == std::string::npos) return false;
  *out = std::strtoull(detail.c_str() + at + key.size() + 1, nullptr, 10);
  return true;
}

}  // namespace

std::vector<nodes::FaultSpec> parse_adversary(const std::string& s, size_t n, size_t m,
                                              const nodes::ProtocolConfig& cfg) {
  std::vector<nodes::FaultSpec> out;
  if (s.empty()) return out;
  for (const std::string& one : split(s, ';')) {
    auto parts = split(one, ':');
    nodes::FaultSpec f;
    size_t fault_at = 1;
    if (parts[0] == "equivocate-z") {
      f.kind = nodes::FaultSpec::kEquivocateZ;
      fault_at = 0;
    } else if (parts[0] == "disrupt-client") {
      f.target_guard = false;
    } else if (parts[0] == "disrupt-guard") {
      f.target_guard = true;
    } else {
      throw ConfigError("bad adversary role: " + parts[0]);
    }

    size_t index = 0;
    uint64_t round = 5;
    uint64_t round_to = 0;
    if (f.kind == nodes::FaultSpec::kEquivocateZ) {
      if (parts.size() > 1) index = std::stoul(parts[1]);
      if (parts.size() > 2) round = std::stoull(parts[2]);
      round_to = round;
    } else {
      if (parts.size() < 2) throw ConfigError("adversary spec needs a fault");
      const std::string& fault = parts[fault_at];
      if (fault == "flip0") {
        f.kind = nodes::FaultSpec::kFlipBits;
        f.flip_positions = {static_cast<uint32_t>(cfg.cell_bits - 3)};
      } else if (fault == "flip1") {
        // Bit 6 of the length field is 1 whenever the cell carries a
        // 64-byte payload; flipping it is a pure 1->0 disruption.
        f.kind = nodes::FaultSpec::kFlipBits;
        f.flip_positions = {static_cast<uint32_t>(dcnet::kLenOff * 8 + 6)};
      } else if (fault.rfind("flip", 0) == 0 && fault.size() > 4) {
        f.kind = nodes::FaultSpec::kFlipBits;
        f.flip_positions = {static_cast<uint32_t>(std::stoul(fault.substr(4)))};
      } else if (fault == "smart-flip0") {
        f.kind = nodes::FaultSpec::kFlipBits;
        f.flip_positions = {static_cast<uint32_t>(cfg.cell_bits - 3)};
        f.lie_in_reveal = true;
      } else if (fault == "random-cipher") {
        f.kind = nodes::FaultSpec::kRandomCipher;
      } else if (fault == "bad-kappa") {
        f.kind = nodes::FaultSpec::kBadKappa;
      } else if (fault == "bad-sigma") {
        f.kind = nodes::FaultSpec::kBadSigma;
      } else if (fault == "withhold") {
        f.kind = nodes::FaultSpec::kWithhold;
      } else if (fault == "offline") {
        f.kind = nodes::FaultSpec::kOffline;
      } else {
        throw ConfigError("unknown fault: " + fault);
      }
      if (parts.size() > 2) index = std::stoul(parts[2]);
      if (parts.size() > 3) round = std::stoull(parts[3]);
      round_to = round;
      if (f.kind == nodes::FaultSpec::kWithhold || f.kind == nodes::FaultSpec::kOffline)
        round_to = UINT64_MAX;
    }

    if (f.kind == nodes::FaultSpec::kEquivocateZ) {
      if (index >= n) throw ConfigError("equivocate-z victim out of range");
      f.entity_id = static_cast<uint32_t>(1 + index);
    } else if (f.target_guard) {
      if (index >= m) throw ConfigError("guard index out of range");
      f.entity_id = static_cast<uint32_t>(101 + index);
    } else {
      if (index >= n) throw ConfigError("client index out of range");
      f.entity_id = static_cast<uint32_t>(1 + index);
    }
    f.from_round = round;
    f.to_round = round_to;
    out.push_back(f);
  }
  return out;
}

nodes::NetworkSpec build_spec(const Experiment& e) {
  nodes::NetworkSpec spec;
  spec.topology = simnet::Topology::by_preset(e.preset);
  spec.n = e.n;
  spec.m = e.m;
  spec.seed = e.seed;
  spec.target_rounds = e.rounds;
  spec.duration_us = e.duration_us;
  spec.churn_mode = nodes::churn_mode_from(e.churn_mode);

  nodes::ProtocolConfig& p = spec.proto;
  p.group_id = e.group;
  p.cell_bits = e.cell_bits;
  p.window = e.window;
  p.load_period = e.load_period;
  p.equivocation = e.equivocation;
  p.premask = e.premask;

  // Timeouts follow the topology: 5x the slowest round trip plus
  // serialization slack for n ciphertexts on the shared port.
  double rtt_ms = 2 * std::max(spec.topology.client.latency_ms,
                               spec.topology.guard.latency_ms) +
                  2 * std::max(spec.topology.client.jitter_ms,
                               spec.topology.guard.jitter_ms);
  double ser_ms = spec.topology.client.bandwidth_mbps > 0
                      ? static_cast<double>(e.n) * (e.cell_bits / 8.0 + 64) * 8.0 /
                            (spec.topology.client.bandwidth_mbps * 1000.0)
                      : 0;
  p.round_timeout_us = static_cast<uint64_t>((5 * rtt_ms + 10 * ser_ms + 50) * 1000);
  p.blame_timeout_us = static_cast<uint64_t>((3 * rtt_ms + 10 * ser_ms + 30) * 1000);

  nodes::Workload& w = spec.workload;
  if (e.workload == "ping") w.kind = nodes::Workload::kPing;
  else if (e.workload == "cbr") w.kind = nodes::Workload::kCbr;
  else if (e.workload == "idle") w.kind = nodes::Workload::kIdle;
  else throw ConfigError("unknown workload: " + e.workload);
  w.active_fraction = e.active_fraction;
  w.payload_bytes = e.payload_bytes;
  w.max_messages = e.rounds ? e.rounds : 10000;

  spec.faults = parse_adversary(e.adversary, e.n, e.m, p);
  return spec;
}

std::vector<std::string> event_log_lines(const nodes::Network& net) {
  std::vector<std::string> lines;
  for (const simnet::LogEntry& ev : net.sim().log()) {
    std::ostringstream os;
    os << ev.time << " " << ev.kind << " " << ev.detail;
    lines.push_back(os.str());
  }
  // Counters ride in the log so reports stay pure functions of it.
  std::ostringstream os;
  os << net.sim().now() << " counters lan=" << net.sim().lan_bytes()
     << " wan=" << net.sim().wan_bytes()
     << " payload=" << net.relay().total_payload_bytes()
     << " rounds=" << net.relay().committed_rounds()
     << " epochs=" << net.relay().epochs_started();
  lines.push_back(os.str());
  return lines;
}

Report report_from_log(const std::vector<std::string>& lines, const Experiment& e) {
  Report r;
  r.name = e.name;
  std::vector<uint64_t> rtts;
  uint64_t end_time = 0;
  uint64_t downtime = 0;
  bool halted = false;
  uint64_t halt_since = 0;

  for (const std::string& line : lines) {
    std::istringstream is(line);
    uint64_t t;
    std::string kind;
    is >> t >> kind;
    std::string detail;
    std::getline(is, detail);
    end_time = std::max(end_time, t);

    if (kind == "ping_rtt") {
      uint64_t v = 0;
      if (detail_field(detail, "rtt_us", &v)) rtts.push_back(v);
    } else if (kind == "halt") {
      uint64_t since = t;
      detail_field(detail, "since_us", &since);
      if (!halted) {
        halted = true;
        halt_since = since;
      }
    } else if (kind == "epoch_active") {
      if (halted) {
        downtime += t - halt_since;
        halted = false;
      }
    } else if (kind == "verdict") {
      r.verdicts.push_back(detail.empty() ? "" : detail.substr(1));
    } else if (kind == "counters") {
      detail_field(detail, "lan", &r.lan_bytes);
      detail_field(detail, "wan", &r.wan_bytes);
      detail_field(detail, "payload", &r.payload_bytes);
      detail_field(detail, "rounds", &r.rounds_committed);
      detail_field(detail, "epochs", &r.epochs);
    }
  }
  if (halted) downtime += end_time - halt_since;

  std::sort(rtts.begin(), rtts.end());
  r.rtt.count = rtts.size();
  if (!rtts.empty()) {
    double sum = 0;
    for (uint64_t v : rtts) sum += static_cast<double>(v);
    r.rtt.mean_us = sum / static_cast<double>(rtts.size());
    r.rtt.p50_us = rtts[rtts.size() / 2];
    r.rtt.p95_us = rtts[std::min(rtts.size() - 1, rtts.size() * 95 / 100)];
    r.rtt.max_us = rtts.back();
  }
  r.downtime_us = downtime;
  r.availability = end_time == 0
                       ? 1.0
                       : 1.0 - static_cast<double>(downtime) / static_cast<double>(end_time);

  // Structural check: with guards no more numerous than clients, WAN
  // traffic cannot exceed LAN traffic on the default presets.
  if (e.preset == "lan_default" && e.m <= e.n && r.wan_bytes > r.lan_bytes) {
    r.invariant_violation = true;
    r.violation_detail = "wan bytes exceed lan bytes";
  }
  return r;
}

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["rtt"] = {{"count", rtt.count}, {"mean_us", rtt.mean_us}, {"p50_us", rtt.p50_us},
              {"p95_us", rtt.p95_us}, {"max_us", rtt.max_us}};
  j["lan_bytes"] = lan_bytes;
  j["wan_bytes"] = wan_bytes;
  j["payload_bytes"] = payload_bytes;
  j["rounds_committed"] = rounds_committed;
  j["epochs"] = epochs;
  j["availability"] = availability;
  j["downtime_us"] = downtime_us;
  j["verdicts"] = verdicts;
  j["invariant_violation"] = invariant_violation;
  if (invariant_violation) j["violation_detail"] = violation_detail;
  return j.dump(2);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
}

RunResult run_experiment(const Experiment& e, const std::string& out_dir) {
  nodes::NetworkSpec spec = build_spec(e);
  nodes::Network net(spec);
  net.run();

  RunResult res;
  res.log = event_log_lines(net);
  res.report = report_from_log(res.log, e);
  for (const auto& t : net.relay().blame_transcripts())
    res.transcripts_json.push_back(t.to_json());

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::string base = out_dir + "/" + e.name;
    write_file(base + ".report.json", res.report.to_json() + "\n");

    std::ostringstream log;
    for (auto& l : res.log) log << l << "\n";
    write_file(base + ".events.log", log.str());

    std::ostringstream csv;
    csv << "sample,rtt_us\n";
    size_t i = 0;
    for (const std::string& line : res.log) {
      size_t at = line.find(" ping_rtt ");
      if (at == std::string::npos) continue;
      uint64_t v = 0;
      if (detail_field(line, "rtt_us", &v)) csv << i++ << "," << v << "\n";
    }
    write_file(base + ".rtt.csv", csv.str());

    for (size_t t = 0; t < res.transcripts_json.size(); ++t)
      write_file(base + ".blame" + std::to_string(t) + ".json",
                 res.transcripts_json[t] + "\n");
  }
  return res;
}

std::vector<SweepRow> sweep_latency(const std::vector<size_t>& ns,
                                    const Experiment& base) {
  if (ns.empty()) throw ConfigError("sweep needs at least one n");
  std::vector<std::future<SweepRow>> futures;
  for (size_t n : ns) {
    futures.push_back(std::async(std::launch::async, [n, base] {
      Experiment e = base;
      e.n = n;
      e.name = base.name + "-n" + std::to_string(n);
      RunResult res = run_experiment(e, "");
      SweepRow row;
      row.n = n;
      row.mean_rtt_us = res.report.rtt.mean_us;
      row.p95_us = res.report.rtt.p95_us;
      row.lan_bytes = res.report.lan_bytes;
      row.wan_bytes = res.report.wan_bytes;
      return row;
    }));
  }
  std::vector<SweepRow> rows;
  for (auto& f : futures) rows.push_back(f.get());
  return rows;
}

uint64_t seed_from_env(uint64_t fallback) {
  const char* s = std::getenv("LLDC_SEED");
  if (!s || !*s) return fallback;
  return std::strtoull(s, nullptr, 10);
}

std::string Report::rtt_csv_header() const { return "sample,rtt_us"; }

}  // namespace lldc::harness
