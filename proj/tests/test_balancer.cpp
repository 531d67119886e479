#include "securedirect/balancer.hpp"

#include <random>

#include "catch_amalgamated.hpp"

using namespace securedirect;

namespace {

constexpr std::uint32_t kVip = 0x0A000064;      // 10.0.0.100
constexpr std::uint16_t kPort = 80;

SignatureDb test_db() {
  return SignatureDb::load(
             "7 shellshock 2f62696e2f7368\n"
             "9 cmdexe 636d642e657865\n")
      .take();
}

BalancerConfig test_config() {
  BalancerConfig cfg;
  cfg.vip = kVip;
  cfg.vip_str = "10.0.0.100";
  cfg.service_port = kPort;
  cfg.backend_addrs = {"10.0.0.1", "10.0.0.2"};
  cfg.honeypot_ip = 0x0A000003;
  cfg.honeypot_str = "10.0.0.3";
  return cfg;
}

std::vector<Backend> two_backends() {
  return {Backend{0, "10.0.0.1", 0x0A000001, kPort, true, 0},
          Backend{1, "10.0.0.2", 0x0A000002, kPort, true, 0}};
}

IdsQueryFn inspect_fn(const SignatureDb& db) {
  return [&db](ByteView payload) -> Expected<Verdict> { return inspect(db, payload); };
}

IdsQueryFn down_fn() {
  return [](ByteView) -> Expected<Verdict> {
    return Error{Errc::connect_failed, "connection refused"};
  };
}

IpPacket syn(std::uint32_t src, std::uint16_t sport, std::uint32_t seq = 1000,
             std::uint16_t dport = kPort) {
  TcpSegment seg;
  seg.src_port = sport;
  seg.dst_port = dport;
  seg.seq = seq;
  seg.flags = tcpflag::kSyn;
  return make_tcp_packet(src, kVip, seg).take();
}

IpPacket data(std::uint32_t src, std::uint16_t sport, std::uint32_t seq, std::string_view payload,
              std::uint16_t dport = kPort) {
  TcpSegment seg;
  seg.src_port = sport;
  seg.dst_port = dport;
  seg.seq = seq;
  seg.flags = tcpflag::kAck | tcpflag::kPsh;
  seg.payload = to_bytes(payload);
  return make_tcp_packet(src, kVip, seg).take();
}

std::string payload_of(const Action& a) {
  auto seg = parse_tcp(a.packet);
  REQUIRE(seg.ok());
  return to_string(seg.value().payload);
}

}  // namespace

TEST_CASE("fresh benign connections rotate round-robin, later packets stick", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));

  auto a1 = lb.ingest(syn(0x0A000101, 40000), 0);
  REQUIRE(a1.size() == 1);
  CHECK(a1[0].type == Action::Type::forward_to_backend);
  CHECK(a1[0].backend == 0);

  auto a2 = lb.ingest(syn(0x0A000102, 40000), 1);
  REQUIRE(a2.size() == 1);
  CHECK(a2[0].backend == 1);

  // data on the first connection follows its assigned backend
  auto a3 = lb.ingest(data(0x0A000101, 40000, 1001, "GET /index.html HTTP/1.0\r\n\r\n"), 2);
  REQUIRE(a3.size() == 1);
  CHECK(a3[0].type == Action::Type::forward_to_backend);
  CHECK(a3[0].backend == 0);
}

TEST_CASE("traffic off the VIP service port is simply ignored", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));

  SECTION("wrong port") {
    auto actions = lb.ingest(syn(0x0A000101, 40000, 1000, 23), 0);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].type == Action::Type::drop);
    CHECK(actions[0].reason == "not-vip");
  }
  SECTION("wrong destination address") {
    IpPacket pkt = syn(0x0A000101, 40000);
    pkt.dst_ip = 0x0A000001;
    auto actions = lb.ingest(pkt, 0);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].reason == "not-vip");
  }
  SECTION("non-TCP protocol") {
    IpPacket pkt;
    pkt.src_ip = 0x0A000101;
    pkt.dst_ip = kVip;
    pkt.protocol = 17;
    pkt.payload = to_bytes("datagram");
    auto actions = lb.ingest(pkt, 0);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].reason == "not-vip");
  }
}

TEST_CASE("flagged sources bypass the IDS entirely", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  lb.attackers().flag(0x0A000105, AttackReason::signature_match, 0);

  const auto queries_before = lb.counters().ids_queries;
  auto actions = lb.ingest(data(0x0A000105, 40000, 1, "totally ordinary bytes"), 1);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0].type == Action::Type::forward_to_honeypot);
  CHECK(lb.counters().ids_queries == queries_before);
}

TEST_CASE("a mid-stream signature match resets the backend and deflects", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));

  REQUIRE(lb.ingest(syn(0x0A000110, 41000, 999), 0).size() == 1);
  auto benign = lb.ingest(data(0x0A000110, 41000, 1000, "GET / HTTP/1.0\r\n\r\n"), 1);
  REQUIRE(benign.size() == 1);
  REQUIRE(benign[0].type == Action::Type::forward_to_backend);

  auto actions = lb.ingest(data(0x0A000110, 41000, 1018, "GET /bin/sh HTTP/1.0"), 2);
  REQUIRE(actions.size() == 2);
  CHECK(actions[0].type == Action::Type::emit_rst);
  CHECK(actions[0].backend == 0);
  CHECK(actions[1].type == Action::Type::forward_to_honeypot);

  // RST is anchored to the next sequence the backend expects (1000 + 18)
  auto rst = parse_tcp(actions[0].packet);
  REQUIRE(rst.ok());
  CHECK(rst.value().seq == 1018);
  CHECK(rst.value().flags == tcpflag::kRst);

  const auto* rec = lb.attackers().find(0x0A000110);
  REQUIRE(rec != nullptr);
  CHECK(rec->reason == AttackReason::signature_match);
  CHECK(rec->signature_ids == std::vector<std::uint32_t>{7});

  // every later packet from that source goes straight to the honeypot
  auto later = lb.ingest(data(0x0A000110, 41002, 1, "harmless"), 3);
  REQUIRE(later.size() == 1);
  CHECK(later[0].type == Action::Type::forward_to_honeypot);
}

TEST_CASE("an attack on the first payload packet deflects without an RST", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  // no handshake: the session did not exist before this packet, so there is
  // no backend conversation to reset
  auto actions = lb.ingest(data(0x0A000111, 41000, 1000, "cmd.exe /c"), 0);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0].type == Action::Type::forward_to_honeypot);
  CHECK(lb.attackers().find(0x0A000111) != nullptr);
}

TEST_CASE("duplicate sequence numbers with conflicting bytes kill the connection",
          "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));

  REQUIRE(lb.ingest(syn(0x0A000120, 42000, 499), 0).size() == 1);
  auto first = lb.ingest(data(0x0A000120, 42000, 500, "AAAA"), 1);
  REQUIRE(first.size() == 1);
  REQUIRE(first[0].type == Action::Type::forward_to_backend);

  SECTION("conflicting payload at the same seq") {
    auto actions = lb.ingest(data(0x0A000120, 42000, 500, "BBBB"), 2);
    REQUIRE(actions.size() == 2);
    CHECK(actions[0].type == Action::Type::emit_rst);
    auto rst = parse_tcp(actions[0].packet);
    REQUIRE(rst.ok());
    CHECK(rst.value().seq == 504);  // after the forwarded "AAAA"
    CHECK(actions[1].type == Action::Type::drop);
    CHECK(actions[1].reason == "duplicate-seq");
    const auto* rec = lb.attackers().find(0x0A000120);
    REQUIRE(rec != nullptr);
    CHECK(rec->reason == AttackReason::duplicate_seq);
  }

  SECTION("identical retransmission is legal and forwarded") {
    auto actions = lb.ingest(data(0x0A000120, 42000, 500, "AAAA"), 2);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].type == Action::Type::forward_to_backend);
    CHECK(lb.attackers().find(0x0A000120) == nullptr);
  }
}

TEST_CASE("segments with an insane checksum are dropped before any check", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  IpPacket pkt = data(0x0A000121, 42000, 500, "AAAA");
  pkt.payload[17] ^= 0xFF;  // corrupt the TCP checksum field
  auto actions = lb.ingest(pkt, 0);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0].type == Action::Type::drop);
  CHECK(actions[0].reason == "bad-checksum");
  CHECK(lb.sessions().size() == 0);
}

TEST_CASE("fragmented benign requests are reassembled transparently", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  REQUIRE(lb.ingest(syn(0x0A000130, 43000, 999), 0).size() == 1);

  IpPacket whole = data(0x0A000130, 43000, 1000, "GET /page HTTP/1.0\r\n\r\n");
  whole.identification = 77;
  const std::size_t cut = whole.payload.size() / 8 * 8 / 2 / 8 * 8;  // aligned mid cut
  IpPacket f1 = whole;
  f1.more_fragments = true;
  f1.payload.assign(whole.payload.begin(), whole.payload.begin() + cut);
  IpPacket f2 = whole;
  f2.fragment_offset = static_cast<std::uint16_t>(cut / 8);
  f2.payload.assign(whole.payload.begin() + cut, whole.payload.end());

  auto r1 = lb.ingest(f1, 1);
  CHECK(r1.empty());  // pending
  auto r2 = lb.ingest(f2, 2);
  REQUIRE(r2.size() == 1);
  CHECK(r2[0].type == Action::Type::forward_to_backend);
  CHECK(r2[0].packet.payload == whole.payload);
  CHECK_FALSE(r2[0].packet.is_fragment());
}

TEST_CASE("conflicting fragment overlap flags the source and deflects", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));

  IpPacket whole = data(0x0A000131, 43000, 1000, "AAAAAAAABBBBBBBB");
  whole.identification = 78;
  IpPacket f1 = whole;
  f1.more_fragments = true;
  f1.payload.assign(whole.payload.begin(), whole.payload.begin() + 24);
  IpPacket conflict = whole;
  conflict.fragment_offset = 1;  // overlaps [8, 24) of f1
  conflict.more_fragments = true;
  conflict.payload = to_bytes("XXXXXXXXXXXXXXXX");

  CHECK(lb.ingest(f1, 0).empty());
  auto actions = lb.ingest(conflict, 1);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0].type == Action::Type::forward_to_honeypot);
  const auto* rec = lb.attackers().find(0x0A000131);
  REQUIRE(rec != nullptr);
  CHECK(rec->reason == AttackReason::frag_evasion);
}

TEST_CASE("handshake-only packets reach backends without an IDS query", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  auto actions = lb.ingest(syn(0x0A000140, 44000), 0);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0].type == Action::Type::forward_to_backend);
  CHECK(lb.counters().ids_queries == 0);
}

TEST_CASE("IDS failures drop payload-bearing packets, never forward them", "[balancer]") {
  Balancer lb(test_config(), two_backends(), down_fn());

  auto hs = lb.ingest(syn(0x0A000150, 45000, 999), 0);
  REQUIRE(hs.size() == 1);
  CHECK(hs[0].type == Action::Type::forward_to_backend);  // handshake still flows

  auto actions = lb.ingest(data(0x0A000150, 45000, 1000, "GET / HTTP/1.0"), 1);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0].type == Action::Type::drop);
  CHECK(actions[0].reason == "ids-unavailable");

  Balancer slow(test_config(), two_backends(),
                [](ByteView) -> Expected<Verdict> { return Error{Errc::timeout, "t"}; });
  auto timed = slow.ingest(data(0x0A000150, 45000, 1000, "GET / HTTP/1.0"), 0);
  REQUIRE(timed.size() == 1);
  CHECK(timed[0].reason == "ids-timeout");
}

TEST_CASE("select_backend cycles, skips unhealthy, fails closed when none", "[balancer]") {
  BackendPool pool({Backend{0, "b0", 1, 80, true, 0}, Backend{1, "b1", 2, 80, true, 0},
                    Backend{2, "b2", 3, 80, true, 0}});
  CHECK(pool.select_backend().value() == 0);
  CHECK(pool.select_backend().value() == 1);
  CHECK(pool.select_backend().value() == 2);
  CHECK(pool.select_backend().value() == 0);

  pool.backend(1).healthy = false;
  CHECK(pool.select_backend().value() == 2);
  CHECK(pool.select_backend().value() == 0);
  CHECK(pool.select_backend().value() == 2);
  CHECK(pool.select_backend().value() == 0);

  pool.backend(0).healthy = false;
  pool.backend(2).healthy = false;
  auto r = pool.select_backend();
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::no_healthy_backend);
}

TEST_CASE("health probes trip at the threshold and recover on one success", "[balancer]") {
  auto db = test_db();
  auto cfg = test_config();
  cfg.failure_threshold = 3;
  Balancer lb(cfg, two_backends(), inspect_fn(db));

  // two failures then success: still healthy
  lb.health_tick({{0, false}}, 0);
  lb.health_tick({{0, false}}, 1);
  auto s1 = lb.health_tick({{0, true}}, 2);
  CHECK(lb.pool().backend(0).healthy);
  CHECK(s1.became_healthy.empty());

  // three consecutive failures: unhealthy and excluded from selection
  lb.health_tick({{0, false}}, 3);
  lb.health_tick({{0, false}}, 4);
  auto s2 = lb.health_tick({{0, false}}, 5);
  REQUIRE(s2.became_unhealthy == std::vector<BackendId>{0});
  CHECK_FALSE(lb.pool().backend(0).healthy);
  CHECK(lb.pool().select_backend().value() == 1);
  CHECK(lb.pool().select_backend().value() == 1);

  // one good probe restores it
  auto s3 = lb.health_tick({{0, true}}, 6);
  REQUIRE(s3.became_healthy == std::vector<BackendId>{0});
  CHECK(lb.pool().backend(0).healthy);
}

TEST_CASE("tick expires idle sessions at the configured timeout", "[balancer]") {
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  CHECK(lb.tick(0).empty());  // no state, no actions

  REQUIRE(lb.ingest(syn(0x0A000160, 46000), 1000).size() == 1);
  lb.tick(1000 + 240'000);
  CHECK(lb.sessions().size() == 1);  // at the boundary: retained
  lb.tick(1000 + 241'000);
  CHECK(lb.sessions().size() == 0);  // one second past: gone
}

TEST_CASE("tick-driven expiry matches a brute-force re-scan", "[balancer][oracle]") {
  std::mt19937_64 rng(8);
  auto db = test_db();
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  std::vector<std::pair<std::uint16_t, TimestampMs>> touched;
  TimestampMs now = 0;
  for (std::uint16_t port = 50000; port < 50040; ++port) {
    now += static_cast<TimestampMs>(rng() % 30'000);
    REQUIRE(lb.ingest(syn(0x0A000161, port), now).size() == 1);
    touched.emplace_back(port, now);
  }
  const TimestampMs at = now + 200'000;
  std::size_t expected_alive = 0;
  for (const auto& [port, t] : touched) {
    if (at - t <= 240'000) ++expected_alive;
  }
  lb.tick(at);
  CHECK(lb.sessions().size() == expected_alive);
}

TEST_CASE("probe scheduling fires once per interval", "[balancer]") {
  auto db = test_db();
  auto cfg = test_config();
  cfg.probe_interval_s = 5;
  Balancer lb(cfg, two_backends(), inspect_fn(db));
  lb.tick(0);
  CHECK(lb.take_probe_request());
  CHECK_FALSE(lb.take_probe_request());
  lb.tick(1000);
  CHECK_FALSE(lb.take_probe_request());
  lb.tick(5000);
  CHECK(lb.take_probe_request());
}

TEST_CASE("identical inputs produce byte-identical action sequences", "[balancer]") {
  auto db = test_db();
  auto run = [&]() {
    Balancer lb(test_config(), two_backends(), inspect_fn(db));
    std::string log;
    std::mt19937_64 rng(55);
    TimestampMs now = 0;
    for (int i = 0; i < 200; ++i) {
      now += static_cast<TimestampMs>(rng() % 50);
      const std::uint32_t src = 0x0A000200 + static_cast<std::uint32_t>(rng() % 4);
      const std::uint16_t sport = static_cast<std::uint16_t>(47000 + rng() % 3);
      std::vector<Action> actions;
      switch (rng() % 4) {
        case 0:
          actions = lb.ingest(syn(src, sport, static_cast<std::uint32_t>(rng() % 5000)), now);
          break;
        case 1:
          actions = lb.ingest(data(src, sport, static_cast<std::uint32_t>(rng() % 5000), "GET /"),
                              now);
          break;
        case 2:
          actions =
              lb.ingest(data(src, sport, static_cast<std::uint32_t>(rng() % 5000), "/bin/sh"), now);
          break;
        case 3:
          actions = lb.tick(now);
          break;
      }
      for (const auto& a : actions) {
        log += std::to_string(now) + " " + action_to_string(a) + "\n";
      }
    }
    return log;
  };
  CHECK(run() == run());
}

TEST_CASE("no forwarded payload ever matches a loaded signature", "[balancer][property]") {
  auto db = test_db();
  std::mt19937_64 rng(616);
  Balancer lb(test_config(), two_backends(), inspect_fn(db));
  TimestampMs now = 0;
  for (int i = 0; i < 500; ++i) {
    now += 1;
    const std::uint32_t src = 0x0A000300 + static_cast<std::uint32_t>(rng() % 6);
    const std::uint16_t sport = static_cast<std::uint16_t>(48000 + rng() % 4);
    std::string payload;
    if (rng() % 3 == 0) {
      payload = rng() % 2 ? "run /bin/sh here" : "start cmd.exe now";
    } else {
      for (int k = 0; k < 12; ++k) payload.push_back(static_cast<char>('a' + rng() % 26));
    }
    auto actions = lb.ingest(data(src, sport, static_cast<std::uint32_t>(rng() % 100000), payload),
                             now);
    for (const auto& a : actions) {
      if (a.type == Action::Type::forward_to_backend) {
        Verdict v = inspect(db, to_bytes(payload_of(a)));
        CHECK_FALSE(v.attack);
      }
    }
  }
}

TEST_CASE("config file parses the documented keys and rejects unknown ones", "[balancer]") {
  const std::string good =
      "# comment\n"
      "vip = 10.0.0.100\n"
      "service_port = 80\n"
      "backends = 10.0.0.1,10.0.0.2:8080\n"
      "honeypot = 10.0.0.3\n"
      "ids_endpoint = 127.0.0.1:9000\n"
      "ids_timeout_ms = 500\n"
      "session_timeout_s = 120\n"
      "probe_interval_s = 2\n"
      "failure_threshold = 4\n"
      "attacker_ttl_s = 3600\n"
      "signatures = sigs.txt\n";
  auto cfg = BalancerConfig::parse(good);
  REQUIRE(cfg.ok());
  CHECK(cfg.value().vip == kVip);
  CHECK(cfg.value().service_port == 80);
  CHECK(cfg.value().backend_addrs.size() == 2);
  CHECK(cfg.value().ids_host == "127.0.0.1");
  CHECK(cfg.value().ids_port == 9000);
  CHECK(cfg.value().attacker_ttl_s == 3600);
  auto backends = cfg.value().resolve_backends();
  REQUIRE(backends.ok());
  CHECK(backends.value()[0].port == 80);
  CHECK(backends.value()[1].port == 8080);

  CHECK_FALSE(BalancerConfig::parse(good + "mystery_key = 1\n").ok());
  CHECK_FALSE(BalancerConfig::parse("vip = 10.0.0.100\n").ok());  // missing keys
  CHECK_FALSE(BalancerConfig::parse("vip = not-an-ip\n").ok());
  CHECK_FALSE(BalancerConfig::parse(good + "failure_threshold = 0\n").ok());
}

TEST_CASE("round-robin fairness holds end-to-end through ingest", "[balancer][property]") {
  auto db = test_db();
  BalancerConfig cfg = test_config();
  cfg.backend_addrs = {"10.0.0.1", "10.0.0.2", "10.0.0.5"};
  std::vector<Backend> backends = {Backend{0, "10.0.0.1", 0x0A000001, kPort, true, 0},
                                   Backend{1, "10.0.0.2", 0x0A000002, kPort, true, 0},
                                   Backend{2, "10.0.0.5", 0x0A000005, kPort, true, 0}};
  Balancer lb(cfg, backends, inspect_fn(db));

  std::map<BackendId, int> counts;
  TimestampMs now = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::uint32_t src = 0x0B000000 + static_cast<std::uint32_t>(i / 60000);
    const std::uint16_t sport = static_cast<std::uint16_t>(1024 + i % 60000);
    auto actions = lb.ingest(syn(src, sport), now++);
    REQUIRE(actions.size() == 1);
    REQUIRE(actions[0].type == Action::Type::forward_to_backend);
    ++counts[actions[0].backend];
    lb.sessions().expire(now);  // keep the table small; sessions stay distinct anyway
  }
  int lo = 1 << 30, hi = 0;
  for (auto& [id, n] : counts) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(hi - lo <= 1);
}
