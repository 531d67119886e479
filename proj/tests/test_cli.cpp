#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "securedirect/honeypot.hpp"
#include "securedirect/ids_service.hpp"
#include "securedirect/loadgen.hpp"

using namespace securedirect;

#ifndef SECUREDIRECT_CLI_PATH
#error "SECUREDIRECT_CLI_PATH must be defined by the build"
#endif

namespace {

const char* kCli = SECUREDIRECT_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file = "/tmp/securedirect_cli_out_" + std::to_string(::getpid());
  const std::string cmd = std::string(kCli) + " " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  result.output = ss.str();
  std::remove(out_file.c_str());
  return result;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/securedirect_test_" + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

const std::string kSigs =
    "7 shellshock 2f62696e2f7368\n"
    "9 cmdexe 636d642e657865\n";

std::string sim_config(const std::string& sig_path) {
  return "vip = 10.0.0.100\n"
         "service_port = 80\n"
         "backends = 10.0.0.1,10.0.0.2\n"
         "honeypot = 10.0.0.3\n"
         "ids_endpoint = 127.0.0.1:9090\n"
         "signatures = " +
         sig_path + "\n";
}

}  // namespace

TEST_CASE("inspect exits 0 for benign and 1 with ids for attacks", "[cli]") {
  auto sigs = write_temp("cli_sigs.sig", kSigs);
  auto benign = write_temp("benign.bin", "GET /index.html HTTP/1.0\r\n\r\n");
  auto attack = write_temp("attack.bin", "GET /bin/sh HTTP/1.0\r\n\r\n");

  auto ok = run_cli("inspect --signatures " + sigs + " --payload-file " + benign);
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("attack=false") != std::string::npos);

  auto bad = run_cli("inspect --signatures " + sigs + " --payload-file " + attack);
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("attack=true") != std::string::npos);
  CHECK(bad.output.find("7") != std::string::npos);

  auto empty_db = write_temp("empty.sig", "# nothing\n");
  auto none = run_cli("inspect --signatures " + empty_db + " --payload-file " + attack);
  CHECK(none.exit_code == 0);
}

TEST_CASE("inspect agrees with the library over a corpus", "[cli][oracle]") {
  auto sigs = write_temp("cli_sigs2.sig", kSigs);
  auto db = SignatureDb::load(kSigs).take();
  std::mt19937_64 rng(99);
  for (int i = 0; i < 12; ++i) {
    std::string payload;
    for (int k = 0; k < 24; ++k) payload.push_back(static_cast<char>('a' + rng() % 26));
    if (i % 3 == 0) payload += "cmd.exe";
    auto file = write_temp("corpus.bin", payload);
    auto got = run_cli("inspect --signatures " + sigs + " --payload-file " + file);
    Verdict expected = inspect(db, to_bytes(payload));
    CHECK(got.exit_code == (expected.attack ? 1 : 0));
  }
}

TEST_CASE("inspect error paths use the exit code contract", "[cli]") {
  auto bad_sigs = write_temp("bad.sig", "7 dup 41\n7 dup 42\n");
  auto payload = write_temp("p.bin", "x");
  CHECK(run_cli("inspect --signatures " + bad_sigs + " --payload-file " + payload).exit_code == 2);
  auto sigs = write_temp("cli_sigs3.sig", kSigs);
  CHECK(run_cli("inspect --signatures " + sigs + " --payload-file /nonexistent/x").exit_code == 4);
  CHECK(run_cli("inspect --signatures /nonexistent/s --payload-file " + payload).exit_code == 4);
  CHECK(run_cli("inspect --mystery-flag x").exit_code == 2);
}

TEST_CASE("run-sim writes deterministic traces and a summary", "[cli]") {
  auto sigs = write_temp("cli_sigs4.sig", kSigs);
  auto cfg = write_temp("sim.conf", sim_config(sigs));

  auto r1 = run_cli("run-sim --config " + cfg + " --scenario duplicate-seq --seed 5 --trace "
                    "/tmp/securedirect_trace1");
  REQUIRE(r1.exit_code == 0);
  CHECK(r1.output.find("attackers flagged: 1") != std::string::npos);
  CHECK(r1.output.find("duplicate-seq") != std::string::npos);

  auto r2 = run_cli("run-sim --config " + cfg + " --scenario duplicate-seq --seed 5 --trace "
                    "/tmp/securedirect_trace2");
  REQUIRE(r2.exit_code == 0);

  std::ifstream t1("/tmp/securedirect_trace1"), t2("/tmp/securedirect_trace2");
  std::ostringstream s1, s2;
  s1 << t1.rdbuf();
  s2 << t2.rdbuf();
  CHECK(s1.str() == s2.str());
  CHECK_FALSE(s1.str().empty());

  auto baseline = run_cli("run-sim --config " + cfg + " --scenario baseline --seed 1");
  REQUIRE(baseline.exit_code == 0);
  CHECK(baseline.output.find("requests completed: 6") != std::string::npos);
  CHECK(baseline.output.find("attackers flagged: 0") != std::string::npos);

  CHECK(run_cli("run-sim --config " + cfg + " --scenario nonsense --seed 1").exit_code == 2);
  CHECK(run_cli("run-sim --config /nonexistent.conf --scenario baseline").exit_code == 4);
  auto broken = write_temp("broken.conf", "vip = 10.0.0.100\nwho = knows\n");
  CHECK(run_cli("run-sim --config " + broken + " --scenario baseline").exit_code == 2);
}

TEST_CASE("bench emits csv, svg, and text per rate at desk scale", "[cli]") {
  const std::string dir = "/tmp/securedirect_bench_test";
  std::filesystem::remove_all(dir);
  auto r = run_cli("bench --rates 3600,7200 --duration 30 --out " + dir + " --seed 2");
  REQUIRE(r.exit_code == 0);

  for (const char* rate : {"3600", "7200"}) {
    const std::string stem = dir + "/rate_" + rate;
    std::ifstream csv(stem + ".csv");
    REQUIRE(csv.good());
    auto report = ingest_csv(csv, 30);
    REQUIRE(report.ok());
    // count matches rate * duration exactly
    const std::uint64_t expected = std::stoull(rate) * 30 / 3600;
    CHECK(report.value().rows.size() == expected);

    std::ifstream svg(stem + ".svg");
    REQUIRE(svg.good());
    std::ostringstream svg_text;
    svg_text << svg.rdbuf();
    CHECK(svg_text.str().find("<svg") == 0);

    std::ifstream txt(stem + ".txt");
    REQUIRE(txt.good());
    std::ostringstream txt_text;
    txt_text << txt.rdbuf();
    CHECK(txt_text.str().find("completed: " + std::to_string(expected)) != std::string::npos);
  }
  std::ifstream summary(dir + "/summary.txt");
  REQUIRE(summary.good());

  CHECK(run_cli("bench --rates 0 --duration 30 --out " + dir).exit_code == 2);
  CHECK(run_cli("bench --rates abc --duration 30 --out " + dir).exit_code == 2);
}

TEST_CASE("export-captures renders a capture file as text", "[cli]") {
  Honeypot hp(HoneypotConfig{default_decoy_script(), 4096, 0x0A000064, 80});
  TcpSegment syn;
  syn.src_port = 41000;
  syn.dst_port = 80;
  syn.seq = 5;
  syn.flags = tcpflag::kSyn;
  hp.accept(make_tcp_packet(0x0B000001, 0x0A000064, syn).take(), 100);
  TcpSegment data;
  data.src_port = 41000;
  data.dst_port = 80;
  data.seq = 6;
  data.flags = tcpflag::kAck | tcpflag::kPsh;
  data.payload = to_bytes("USER root");
  hp.accept(make_tcp_packet(0x0B000001, 0x0A000064, data).take(), 200);

  const std::string cap_path = "/tmp/securedirect_test.hplog";
  {
    std::ofstream out(cap_path, std::ios::binary);
    REQUIRE(hp.log().export_to(out).ok());
  }
  auto r = run_cli("export-captures --in " + cap_path);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("11.0.0.1:41000 in") != std::string::npos);
  CHECK(r.output.find(to_hex(to_bytes("USER root"))) != std::string::npos);

  auto junk = write_temp("junk.hplog", "this is not a capture");
  CHECK(run_cli("export-captures --in " + junk).exit_code == 2);
  CHECK(run_cli("export-captures --in /nonexistent.hplog").exit_code == 4);
}

TEST_CASE("ids-serve binds, serves queries, and honors the exit contract", "[cli]") {
  auto sigs = write_temp("cli_sigs5.sig", kSigs);

  SECTION("malformed signature file exits 2 with the line number") {
    auto bad = write_temp("bad2.sig", "1 ok 41\nnot a valid line at all x\n");
    auto r = run_cli("ids-serve --signatures " + bad + " --listen 127.0.0.1:0");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("line 2") != std::string::npos);
  }

  SECTION("occupied port exits 3") {
    auto holder = TcpListener::bind("127.0.0.1", 0);
    REQUIRE(holder.ok());
    auto r = run_cli("ids-serve --signatures " + sigs + " --listen 127.0.0.1:" +
                     std::to_string(holder.value().port()));
    CHECK(r.exit_code == 3);
  }

  SECTION("serves real queries until interrupted") {
    const std::uint16_t port = static_cast<std::uint16_t>(21000 + ::getpid() % 20000);
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      ::execl(kCli, kCli, "ids-serve", "--signatures", sigs.c_str(), "--listen",
              ("127.0.0.1:" + std::to_string(port)).c_str(), static_cast<char*>(nullptr));
      ::_exit(99);
    }
    // wait for the server, then query it
    Expected<Verdict> verdict = Error{Errc::connect_failed, "not yet"};
    for (int attempt = 0; attempt < 50 && !verdict.ok(); ++attempt) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      IdsClient client("127.0.0.1", port, 500);
      verdict = client.query(to_bytes("run cmd.exe"));
    }
    REQUIRE(verdict.ok());
    CHECK(verdict.value().attack);
    CHECK(verdict.value().matched == std::vector<std::uint32_t>{9});

    ::kill(pid, SIGINT);
    int status = 0;
    ::waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
  }
}

TEST_CASE("proxy-live validates its config before binding", "[cli]") {
  CHECK(run_cli("proxy-live --config /nonexistent.conf").exit_code == 4);
  auto bad = write_temp("badproxy.conf", "vip = 127.0.0.1\nunknown_key = 1\n");
  CHECK(run_cli("proxy-live --config " + bad).exit_code == 2);
}
