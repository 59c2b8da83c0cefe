#pragma once

#include "lldc/nodes.hpp"

#include <string>
#include <vector>

namespace lldc::harness {

struct Experiment {
  std::string name = "run";
  std::string preset = "lan_default";
  size_t n = 10;
  size_t m = 3;
  size_t window = 1;
  std::string workload = "ping";  // ping | cbr | idle
  double active_fraction = 0.05;
  size_t payload_bytes = 64;
  uint64_t rounds = 200;
  uint64_t duration_us = 0;
  uint64_t seed = 1;
  std::string group = "p256";
  size_t cell_bits = 8192;
  bool equivocation = true;
  bool premask = false;
  size_t load_period = 0;
  std::string adversary;  // e.g. "disrupt-guard:flip0"
  std::string churn_mode = "abrupt";
};

struct LatencyStats {
  size_t count = 0;
  double mean_us = 0;
  uint64_t p50_us = 0;
  uint64_t p95_us = 0;
  uint64_t max_us = 0;
};

struct Report {
  std::string name;
  LatencyStats rtt;
  uint64_t lan_bytes = 0;
  uint64_t wan_bytes = 0;
  uint64_t payload_bytes = 0;
  uint64_t rounds_committed = 0;
  uint64_t epochs = 0;
  double availability = 1.0;
  uint64_t downtime_us = 0;
  std::vector<std::string> verdicts;
  bool invariant_violation = false;
  std::string violation_detail;

  std::string to_json() const;
  std::string rtt_csv_header() const;
};

// Fault-spec strings, the scripted-adversary vocabulary:
//   disrupt-client:<fault>[:index[:round]]
//   disrupt-guard:<fault>[:index[:round]]
//   equivocate-z[:index[:round]]
// with fault in {flip0, flip1, flip:<bit>, random-cipher, bad-kappa,
// bad-sigma, withhold, offline, smart-flip0}.
std::vector<nodes::FaultSpec> parse_adversary(const std::string& s, size_t n, size_t m,
                                              const nodes::ProtocolConfig& cfg);

nodes::NetworkSpec build_spec(const Experiment& e);

// Log lines in their serialized text form; reports derive from these.
std::vector<std::string> event_log_lines(const nodes::Network& net);
Report report_from_log(const std::vector<std::string>& lines, const Experiment& e);

struct RunResult {
  Report report;
  std::vector<std::string> log;
  std::vector<std::string> transcripts_json;
};

// Runs the experiment; when out_dir is nonempty writes
// <name>.report.json, <name>.rtt.csv, <name>.events.log and any blame
// transcripts under it.
RunResult run_experiment(const Experiment& e, const std::string& out_dir);

struct SweepRow {
  size_t n = 0;
  double mean_rtt_us = 0;
  uint64_t p95_us = 0;
  uint64_t lan_bytes = 0;
  uint64_t wan_bytes = 0;
};

// One simulation per worker thread; merge preserves the n order.
std::vector<SweepRow> sweep_latency(const std::vector<size_t>& ns, const Experiment& base);

uint64_t seed_from_env(uint64_t fallback);
void write_file(const std::string& path, const std::string& content);

}  // namespace lldc::harness
