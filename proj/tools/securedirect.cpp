// securedirect: operator entry point.
//
// Subcommands:
//   ids-serve        run the signature-inspection query server
//   run-sim          run a canned scenario in the deterministic simulator
//   bench            run the load benchmark scenarios and emit reports
//   proxy-live       stream-level proxy on real sockets
//   inspect          one-shot payload inspection
//   export-captures  dump a honeypot capture file as text
//
// Exit codes: 0 success/benign, 1 attack (inspect), 2 config/parse,
// 3 bind failure, 4 I/O failure.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "securedirect/live_proxy.hpp"
#include "securedirect/loadgen.hpp"
#include "securedirect/scenarios.hpp"

using namespace securedirect;

namespace {

constexpr int kExitBenign = 0;
constexpr int kExitAttack = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBind = 3;
constexpr int kExitIo = 4;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

void wait_for_interrupt() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

Expected<Bytes> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Error{Errc::io_error, "cannot open " + path};
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

int cmd_ids_serve(const std::string& signatures, const std::string& listen, bool pooled) {
  auto db = SignatureDb::load_file(signatures);
  if (!db.ok()) {
    std::cerr << "signature load failed: " << db.error().detail << "\n";
    return db.error().code == Errc::io_error ? kExitIo : kExitConfig;
  }
  auto hostport = detail::parse_hostport(listen, 0);
  if (!hostport.ok() || hostport.value().second == 0) {
    std::cerr << "bad --listen, expected ADDR:PORT\n";
    return kExitConfig;
  }
  auto listener = TcpListener::bind(hostport.value().first, hostport.value().second);
  if (!listener.ok()) {
    std::cerr << "bind failed: " << listener.error().detail << "\n";
    return kExitBind;
  }
  std::cout << "loaded " << db.value().signatures().size() << " signatures\n";
  std::cout << "listening on " << hostport.value().first << ":" << listener.value().port()
            << (pooled ? " (pooled)" : "") << "\n";
  IdsServer server(db.value(), listener.take(), IdsServerConfig{pooled, 5000});
  server.start();
  wait_for_interrupt();
  server.stop();
  std::cout << "served " << server.queries_served() << " queries\n";
  return kExitBenign;
}

Expected<Topology> topology_from_config(const BalancerConfig& cfg) {
  Topology topo;
  topo.vip = cfg.vip;
  topo.service_port = cfg.service_port;
  auto backends = cfg.resolve_backends();
  if (!backends.ok()) return backends.error();
  topo.backend_ips.clear();
  for (const auto& b : backends.value()) topo.backend_ips.push_back(b.ip);
  topo.honeypot_ip = cfg.honeypot_ip;
  topo.session_timeout_s = cfg.session_timeout_s;
  topo.probe_interval_s = cfg.probe_interval_s;
  topo.failure_threshold = cfg.failure_threshold;
  topo.attacker_ttl_s = cfg.attacker_ttl_s;
  return topo;
}

int cmd_run_sim(const std::string& config_path, const std::string& scenario_name,
                std::uint64_t seed, const std::string& trace_path,
                const std::string& attackers_path) {
  auto cfg = BalancerConfig::load_file(config_path);
  if (!cfg.ok()) {
    std::cerr << "config error: " << cfg.error().detail << "\n";
    return cfg.error().code == Errc::io_error ? kExitIo : kExitConfig;
  }
  auto db = SignatureDb::load_file(cfg.value().signatures_path);
  if (!db.ok()) {
    std::cerr << "signature load failed: " << db.error().detail << "\n";
    return db.error().code == Errc::io_error ? kExitIo : kExitConfig;
  }
  auto scenario = make_scenario_by_name(scenario_name, seed, db.value());
  if (!scenario.ok()) {
    std::cerr << scenario.error().detail << "\n";
    return kExitConfig;
  }
  auto topo = topology_from_config(cfg.value());
  if (!topo.ok()) {
    std::cerr << "config error: " << topo.error().detail << "\n";
    return kExitConfig;
  }
  auto trace = run(topo.value(), db.value(), scenario.value().scripts, seed,
                   scenario.value().until);
  if (!trace.ok()) {
    std::cerr << "simulation failed: " << trace.error().detail << "\n";
    return kExitConfig;
  }
  if (!trace_path.empty()) {
    std::ofstream out(trace_path, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write " << trace_path << "\n";
      return kExitIo;
    }
    out << trace.value().text();
    if (!out.good()) return kExitIo;
    std::cout << "trace written to " << trace_path << " (" << trace.value().lines.size()
              << " lines)\n";
  }
  if (!attackers_path.empty()) {
    std::ofstream out(attackers_path, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write " << attackers_path << "\n";
      return kExitIo;
    }
    out << AttackerRegistry::format_attacker_report(trace.value().flagged);
    if (!out.good()) return kExitIo;
  }
  std::cout << "scenario " << scenario_name << " seed " << seed << "\n";
  std::cout << summarize_trace(trace.value());
  return kExitBenign;
}

int cmd_bench(const std::string& rates_csv, std::int64_t duration_s, const std::string& out_dir,
              std::uint64_t seed, double attacker_fraction) {
  std::vector<double> rates;
  for (auto part : split(rates_csv, ',')) {
    auto v = detail::parse_int(trim(part));
    if (!v.ok() || v.value() <= 0) {
      std::cerr << "bad --rates, expected comma-separated positive pages/hour\n";
      return kExitConfig;
    }
    rates.push_back(static_cast<double>(v.value()));
  }
  if (rates.empty() || duration_s <= 0) {
    std::cerr << "need at least one rate and a positive duration\n";
    return kExitConfig;
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "cannot create " << out_dir << ": " << ec.message() << "\n";
    return kExitIo;
  }

  auto db = default_signature_db();
  Topology topo;
  std::string summary;
  std::vector<LatencyReport> reports;
  std::vector<std::string> labels;
  for (double rate : rates) {
    LoadScenario scenario;
    scenario.rate_pages_per_hour = rate;
    scenario.duration_s = duration_s;
    scenario.attacker_fraction = attacker_fraction;
    scenario.seed = seed;
    auto report = run_scenario(scenario, topo, db);
    if (!report.ok()) {
      std::cerr << "scenario failed: " << report.error().detail << "\n";
      return kExitConfig;
    }
    const std::string stem = out_dir + "/rate_" + std::to_string(static_cast<long>(rate));
    {
      std::ofstream csv(stem + ".csv", std::ios::binary);
      if (!csv || !emit_csv(report.value(), csv).ok()) {
        std::cerr << "cannot write " << stem << ".csv\n";
        return kExitIo;
      }
    }
    {
      std::ofstream svg(stem + ".svg", std::ios::binary);
      if (!svg ||
          !emit_svg(report.value(), svg,
                    "response time, " + std::to_string(static_cast<long>(rate)) + " pages/hour")
               .ok()) {
        std::cerr << "cannot write " << stem << ".svg\n";
        return kExitIo;
      }
    }
    {
      std::ofstream text(stem + ".txt", std::ios::binary);
      if (!text || !emit_text(report.value(), text).ok()) {
        std::cerr << "cannot write " << stem << ".txt\n";
        return kExitIo;
      }
    }
    summary += "rate " + std::to_string(static_cast<long>(rate)) + " pages/hour: completed=" +
               std::to_string(report.value().completed) + " mean=" +
               format_double(report.value().summary.mean) + "ms p95=" +
               std::to_string(report.value().summary.p95) + "ms\n";
    std::cout << "rate " << rate << ": " << report.value().completed << " requests, mean "
              << report.value().summary.mean << " ms\n";
    labels.push_back(std::to_string(static_cast<long>(rate)) + "/h");
    reports.push_back(report.take());
  }
  std::ofstream sum(out_dir + "/summary.txt", std::ios::binary);
  if (!sum) {
    std::cerr << "cannot write summary.txt\n";
    return kExitIo;
  }
  sum << summary;
  std::ofstream cmp(out_dir + "/comparison.svg", std::ios::binary);
  if (!cmp || !emit_comparison_svg(reports, labels, cmp).ok()) {
    std::cerr << "cannot write comparison.svg\n";
    return kExitIo;
  }
  return kExitBenign;
}

int cmd_proxy_live(const std::string& config_path) {
  auto cfg = BalancerConfig::load_file(config_path);
  if (!cfg.ok()) {
    std::cerr << "config error: " << cfg.error().detail << "\n";
    return cfg.error().code == Errc::io_error ? kExitIo : kExitConfig;
  }
  LiveProxy proxy(cfg.value());
  auto started = proxy.start();
  if (!started.ok()) {
    std::cerr << "cannot start proxy: " << started.error().detail << "\n";
    return kExitBind;
  }
  std::cout << "proxying " << cfg.value().vip_str << ":" << proxy.port() << " -> "
            << cfg.value().backend_addrs.size() << " backends (honeypot "
            << cfg.value().honeypot_str << ")\n";
  std::cout << "note: stream mode; packet-level defenses (RST injection, fragment and\n"
               "duplicate-seq handling) run in the simulator, not here\n";
  wait_for_interrupt();
  proxy.stop();
  return kExitBenign;
}

int cmd_inspect(const std::string& signatures, const std::string& payload_file) {
  auto db = SignatureDb::load_file(signatures);
  if (!db.ok()) {
    std::cerr << "signature load failed: " << db.error().detail << "\n";
    return db.error().code == Errc::io_error ? kExitIo : kExitConfig;
  }
  auto payload = read_file_bytes(payload_file);
  if (!payload.ok()) {
    std::cerr << payload.error().detail << "\n";
    return kExitIo;
  }
  Verdict v = inspect(db.value(), payload.value());
  std::cout << "attack=" << (v.attack ? "true" : "false") << " matched=[";
  for (std::size_t i = 0; i < v.matched.size(); ++i) {
    if (i > 0) std::cout << " ";
    std::cout << v.matched[i];
  }
  std::cout << "]\n";
  return v.attack ? kExitAttack : kExitBenign;
}

int cmd_export_captures(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open " << in_path << "\n";
    return kExitIo;
  }
  auto log = CaptureLog::import_from(in);
  if (!log.ok()) {
    std::cerr << "capture parse failed: " << log.error().detail << "\n";
    return kExitConfig;
  }
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);
    if (!file) {
      std::cerr << "cannot write " << out_path << "\n";
      return kExitIo;
    }
    out = &file;
  }
  for (const auto& rec : log.value().records()) {
    *out << rec.timestamp << " " << format_ipv4_addr(rec.src_ip) << ":" << rec.src_port << " "
         << (rec.direction == CaptureRecord::Direction::in ? "in" : "out") << " "
         << rec.bytes.size() << " " << to_hex(rec.bytes) << "\n";
  }
  if (!out->good()) return kExitIo;
  std::cerr << log.value().size() << " records\n";
  return kExitBenign;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"content-inspecting TCP load balancer with honeypot deflection"};
  app.require_subcommand(1);

  std::string signatures, listen, config_path, scenario_name, trace_path, payload_file;
  std::string attackers_path;
  std::string rates = "3600,14400,18000", out_dir, in_path, out_path;
  std::uint64_t seed = 0;
  std::int64_t duration_s = 3600;
  double attacker_fraction = 0.0;
  bool pooled = false;

  auto* ids_serve = app.add_subcommand("ids-serve", "run the IDS query server");
  ids_serve->add_option("--signatures", signatures, "signature database file")->required();
  ids_serve->add_option("--listen", listen, "ADDR:PORT to listen on")->required();
  ids_serve->add_flag("--pooled", pooled, "serve multiple frames per connection");

  auto* run_sim = app.add_subcommand("run-sim", "run a simulator scenario");
  run_sim->add_option("--config", config_path, "balancer config file")->required();
  run_sim
      ->add_option("--scenario", scenario_name,
                   "baseline|duplicate-seq|frag-evasion|reconnect|mixed")
      ->required();
  run_sim->add_option("--seed", seed, "deterministic seed (default 0)");
  run_sim->add_option("--trace", trace_path, "write the event trace to this file");
  run_sim->add_option("--attackers", attackers_path,
                      "write the attacker registry report to this file");

  auto* bench = app.add_subcommand("bench", "run load benchmarks");
  bench->add_option("--rates", rates, "comma-separated pages/hour (default 3600,14400,18000)");
  bench->add_option("--duration", duration_s, "simulated seconds per rate (default 3600)");
  bench->add_option("--out", out_dir, "output directory")->required();
  bench->add_option("--seed", seed, "deterministic seed (default 0)");
  bench->add_option("--attacker-fraction", attacker_fraction,
                    "attacker scripts per benign request (default 0)");

  auto* proxy_live = app.add_subcommand("proxy-live", "stream proxy on real sockets");
  proxy_live->add_option("--config", config_path, "balancer config file")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "inspect one payload file");
  inspect_cmd->add_option("--signatures", signatures, "signature database file")->required();
  inspect_cmd->add_option("--payload-file", payload_file, "payload to inspect")->required();

  auto* export_cmd = app.add_subcommand("export-captures", "dump a capture file as text");
  export_cmd->add_option("--in", in_path, "capture file (HPLOG1)")->required();
  export_cmd->add_option("--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (ids_serve->parsed()) return cmd_ids_serve(signatures, listen, pooled);
  if (run_sim->parsed()) {
    return cmd_run_sim(config_path, scenario_name, seed, trace_path, attackers_path);
  }
  if (bench->parsed()) return cmd_bench(rates, duration_s, out_dir, seed, attacker_fraction);
  if (proxy_live->parsed()) return cmd_proxy_live(config_path);
  if (inspect_cmd->parsed()) return cmd_inspect(signatures, payload_file);
  if (export_cmd->parsed()) return cmd_export_captures(in_path, out_path);
  return kExitConfig;
}
