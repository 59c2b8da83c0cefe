#include "lldc/errors.hpp"
#include "lldc/harness.hpp"
#include "lldc/simnet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace lldc;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lldc::ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void add_experiment_flags(CLI::App* cmd, harness::Experiment& e) {
  cmd->add_option("--preset", e.preset, "topology preset: lan_default|local_guard|vpn");
  cmd->add_option("--n", e.n, "number of clients");
  cmd->add_option("--m", e.m, "number of guards");
  cmd->add_option("--window,-W", e.window, "pipeline window W");
  cmd->add_option("--workload", e.workload, "ping|cbr|idle");
  cmd->add_option("--active-fraction", e.active_fraction, "share of senders (cbr)");
  cmd->add_option("--payload", e.payload_bytes, "payload bytes per message");
  cmd->add_option("--rounds", e.rounds, "stop after N committed rounds");
  cmd->add_option("--duration-ms", e.duration_us,
                  "stop after simulated milliseconds")
      ->transform([](std::string s) { return std::to_string(std::stoull(s) * 1000); });
  cmd->add_option("--seed", e.seed, "simulation seed (LLDC_SEED overrides)");
  cmd->add_option("--group", e.group, "p256|test101");
  cmd->add_option("--cell-bits", e.cell_bits, "DC-net cell size in bits");
  cmd->add_option("--equivocation", e.equivocation, "equivocation protection on/off");
  cmd->add_option("--premask", e.premask, "disruption premask on/off");
  cmd->add_option("--load-period", e.load_period, "load-request period L (0=off)");
  cmd->add_option("--adversary", e.adversary,
                  "scripted fault, e.g. disrupt-guard:flip0");
  cmd->add_option("--churn-mode", e.churn_mode, "naive|abrupt|graceful");
  cmd->add_option("--name", e.name, "report base name");
}

int cmd_run(harness::Experiment& e, const std::string& out) {
  e.seed = harness::seed_from_env(e.seed);
  harness::RunResult res = harness::run_experiment(e, out);
  std::cout << res.report.to_json() << "\n";
  return res.report.invariant_violation ? 1 : 0;
}

int cmd_sweep(harness::Experiment& base, const std::string& out,
              const std::string& n_list) {
  base.seed = harness::seed_from_env(base.seed);
  std::vector<size_t> ns;
  std::istringstream is(n_list);
  std::string tok;
  while (std::getline(is, tok, ',')) ns.push_back(std::stoul(tok));
  auto rows = harness::sweep_latency(ns, base);

  std::ostringstream csv;
  csv << "n,mean_rtt_us,p95_rtt_us,lan_bytes,wan_bytes\n";
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  bool monotone = true;
  for (size_t i = 0; i < rows.size(); ++i) {
    csv << rows[i].n << "," << rows[i].mean_rtt_us << "," << rows[i].p95_us << ","
        << rows[i].lan_bytes << "," << rows[i].wan_bytes << "\n";
    j.push_back({{"n", rows[i].n},
                 {"mean_rtt_us", rows[i].mean_rtt_us},
                 {"p95_rtt_us", rows[i].p95_us},
                 {"lan_bytes", rows[i].lan_bytes},
                 {"wan_bytes", rows[i].wan_bytes}});
    if (i && rows[i].mean_rtt_us + 1e-9 < rows[i - 1].mean_rtt_us) monotone = false;
  }
  std::filesystem::create_directories(out);
  harness::write_file(out + "/" + base.name + ".sweep.csv", csv.str());
  harness::write_file(out + "/" + base.name + ".sweep.json", j.dump(2) + "\n");
  std::cout << csv.str();
  if (!monotone)
    std::cerr << "note: mean latency is not monotone over the sweep\n";
  return 0;
}

int cmd_churn(const std::string& trace_path, const std::string& generate,
              const std::string& strategy, double d_seconds, uint64_t series_window_ms,
              uint64_t seed, const std::string& out) {
  simnet::ChurnTrace trace;
  if (!generate.empty()) {
    if (generate != "cafe") throw lldc::ConfigError("only the cafe trace can be generated");
    trace = simnet::synth_cafe_trace(harness::seed_from_env(seed));
    if (!trace_path.empty())
      harness::write_file(trace_path, simnet::format_churn_csv(trace));
  } else {
    trace = simnet::parse_churn_csv(read_file(trace_path));
  }

  simnet::AvailabilityReport rep =
      simnet::replay_churn(trace, simnet::churn_strategy_from(strategy), d_seconds);

  nlohmann::ordered_json j;
  j["strategy"] = strategy;
  j["resync_s"] = d_seconds;
  j["interruptions"] = rep.interruptions;
  j["availability"] = rep.availability;
  j["max_downtime_s"] = rep.max_downtime_s;

  if (series_window_ms) {
    auto series = simnet::anonymity_set_series(trace, series_window_ms);
    auto stats = simnet::detrended_stats(series);
    j["anonymity_mean"] = stats.mean;
    j["anonymity_max_deviation_pct"] = stats.max_deviation_pct;
    std::ostringstream csv;
    csv << "time_ms,set_size\n";
    for (auto& p : series) csv << p.time_ms << "," << p.set_size << "\n";
    std::filesystem::create_directories(out);
    harness::write_file(out + "/anonymity_series.csv", csv.str());
  }

  std::filesystem::create_directories(out);
  harness::write_file(out + "/churn.report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_blame_demo(harness::Experiment& e, const std::string& out) {
  e.seed = harness::seed_from_env(e.seed);
  if (e.adversary.empty()) e.adversary = "disrupt-client:flip0:1";
  e.name = e.name == "run" ? "blame-demo" : e.name;
  harness::RunResult res = harness::run_experiment(e, out);
  for (auto& v : res.report.verdicts) std::cout << "verdict:" << v << "\n";
  if (!res.transcripts_json.empty())
    std::cout << res.transcripts_json.back() << "\n";
  return 0;
}

int cmd_setup_bench(const std::string& n_list, const std::string& m_list,
                    const std::string& preset, uint64_t seed, const std::string& out) {
  auto parse_list = [](const std::string& s) {
    std::vector<size_t> v;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) v.push_back(std::stoul(tok));
    return v;
  };
  std::ostringstream csv;
  csv << "n,m,setup_us\n";
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (size_t n : parse_list(n_list)) {
    for (size_t m : parse_list(m_list)) {
      harness::Experiment e;
      e.preset = preset;
      e.n = n;
      e.m = m;
      e.workload = "idle";
      e.rounds = 1;
      e.seed = harness::seed_from_env(seed);
      e.name = "setup-bench";
      harness::RunResult res = harness::run_experiment(e, "");
      uint64_t setup_us = 0;
      for (const std::string& line : res.log) {
        size_t at = line.find(" epoch_active ");
        if (at == std::string::npos) continue;
        size_t su = line.find("setup_us=");
        if (su != std::string::npos)
          setup_us = std::strtoull(line.c_str() + su + 9, nullptr, 10);
        break;
      }
      csv << n << "," << m << "," << setup_us << "\n";
      j.push_back({{"n", n}, {"m", m}, {"setup_us", setup_us}});
    }
  }
  std::filesystem::create_directories(out);
  harness::write_file(out + "/setup_bench.csv", csv.str());
  harness::write_file(out + "/setup_bench.json", j.dump(2) + "\n");
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anonymous-communication DC-net simulator and protocol harness"};
  app.require_subcommand(1);
  std::string out = "out";
  app.add_option("--out", out, "output directory")->capture_default_str();

  harness::Experiment run_e;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_experiment_flags(run, run_e);

  harness::Experiment sweep_e;
  sweep_e.name = "sweep";
  std::string n_list = "2,10,20,50";
  CLI::App* sweep = app.add_subcommand("sweep", "latency sweep over client counts");
  add_experiment_flags(sweep, sweep_e);
  sweep->add_option("--n-list", n_list, "comma-separated client counts");

  CLI::App* churn = app.add_subcommand("churn", "churn-trace availability analysis");
  std::string trace_path, generate, strategy = "abrupt";
  double d_seconds = 0.82;
  uint64_t series_window_ms = 0, churn_seed = 1;
  churn->add_option("--trace", trace_path, "churn CSV path");
  churn->add_option("--generate", generate, "synthesize a trace first (cafe)");
  churn->add_option("--strategy", strategy, "naive|abrupt|graceful");
  churn->add_option("--D", d_seconds, "resync duration in seconds");
  churn->add_option("--series-window", series_window_ms,
                    "emit anonymity-set series with this window (ms)");
  churn->add_option("--seed", churn_seed, "seed for --generate");

  harness::Experiment blame_e;
  blame_e.n = 4;
  blame_e.m = 2;
  blame_e.group = "test101";
  blame_e.cell_bits = 1024;
  blame_e.equivocation = false;
  blame_e.workload = "cbr";
  blame_e.active_fraction = 1.0;
  blame_e.rounds = 40;
  CLI::App* blame = app.add_subcommand("blame-demo", "scripted disruption and blame");
  add_experiment_flags(blame, blame_e);

  CLI::App* bench = app.add_subcommand("setup-bench", "measure Setup duration D");
  std::string bn = "2,10,50", bm = "1,3", bpreset = "lan_default";
  uint64_t bseed = 1;
  bench->add_option("--n-list", bn, "client counts");
  bench->add_option("--m-list", bm, "guard counts");
  bench->add_option("--preset", bpreset, "topology preset");
  bench->add_option("--seed", bseed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_e, out);
    if (sweep->parsed()) return cmd_sweep(sweep_e, out, n_list);
    if (churn->parsed())
      return cmd_churn(trace_path, generate, strategy, d_seconds, series_window_ms,
                       churn_seed, out);
    if (blame->parsed()) return cmd_blame_demo(blame_e, out);
    if (bench->parsed()) return cmd_setup_bench(bn, bm, bpreset, bseed, out);
  } catch (const lldc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
