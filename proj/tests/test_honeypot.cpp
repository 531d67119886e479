#include "securedirect/honeypot.hpp"

#include <sstream>

#include "catch_amalgamated.hpp"

using namespace securedirect;

namespace {

constexpr std::uint32_t kVip = 0x0A000064;
constexpr std::uint32_t kAttacker = 0x0B000001;

HoneypotConfig test_config(std::uint32_t budget = 4096) {
  HoneypotConfig cfg;
  cfg.vip = kVip;
  cfg.service_port = 80;
  cfg.outbound_budget = budget;
  return cfg;
}

IpPacket attacker_syn(std::uint16_t sport, std::uint32_t seq = 100) {
  TcpSegment seg;
  seg.src_port = sport;
  seg.dst_port = 80;
  seg.seq = seq;
  seg.flags = tcpflag::kSyn;
  return make_tcp_packet(kAttacker, kVip, seg).take();
}

IpPacket attacker_data(std::uint16_t sport, std::uint32_t seq, std::string_view payload) {
  TcpSegment seg;
  seg.src_port = sport;
  seg.dst_port = 80;
  seg.seq = seq;
  seg.flags = tcpflag::kAck | tcpflag::kPsh;
  seg.payload = to_bytes(payload);
  return make_tcp_packet(kAttacker, kVip, seg).take();
}

}  // namespace

TEST_CASE("SYN gets a SYN-ACK plus banner and an inbound record", "[honeypot]") {
  Honeypot hp(test_config());
  auto replies = hp.accept(attacker_syn(40000), 10);
  REQUIRE(replies.size() == 2);

  auto synack = parse_tcp(replies[0]);
  REQUIRE(synack.ok());
  CHECK(synack.value().flags == (tcpflag::kSyn | tcpflag::kAck));
  CHECK(synack.value().ack == 101);
  CHECK(replies[0].src_ip == kVip);
  CHECK(replies[0].dst_ip == kAttacker);

  auto banner = parse_tcp(replies[1]);
  REQUIRE(banner.ok());
  CHECK(banner.value().payload == default_decoy_script().banner);

  REQUIRE(hp.log().size() >= 1);
  const auto& first = hp.log().records()[0];
  CHECK(first.direction == CaptureRecord::Direction::in);
  CHECK(first.src_ip == kAttacker);
  CHECK(first.src_port == 40000);
  CHECK(first.bytes.empty());
}

TEST_CASE("scripted substrings get the canned reply, both directions captured", "[honeypot]") {
  Honeypot hp(test_config());
  hp.accept(attacker_syn(40001), 0);
  auto replies = hp.accept(attacker_data(40001, 101, "GET /admin HTTP/1.0\r\n\r\n"), 5);
  REQUIRE(replies.size() == 1);
  auto reply = parse_tcp(replies[0]);
  REQUIRE(reply.ok());
  CHECK(to_string(reply.value().payload).find("200 OK") != std::string::npos);

  // capture holds the request (in) and the reply (out)
  bool saw_in = false, saw_out = false;
  for (const auto& rec : hp.log().records()) {
    if (rec.direction == CaptureRecord::Direction::in &&
        to_string(rec.bytes).find("GET /admin") != std::string::npos) {
      saw_in = true;
    }
    if (rec.direction == CaptureRecord::Direction::out &&
        to_string(rec.bytes).find("200 OK") != std::string::npos) {
      saw_out = true;
    }
  }
  CHECK(saw_in);
  CHECK(saw_out);
}

TEST_CASE("unscripted payloads are acknowledged, never answered with data", "[honeypot]") {
  Honeypot hp(test_config());
  hp.accept(attacker_syn(40002), 0);
  auto replies = hp.accept(attacker_data(40002, 101, "qqqq unknown protocol qqqq"), 1);
  REQUIRE(replies.size() == 1);
  auto ack = parse_tcp(replies[0]);
  REQUIRE(ack.ok());
  CHECK(ack.value().flags == tcpflag::kAck);
  CHECK(ack.value().payload.empty());
}

TEST_CASE("outbound bytes per connection never exceed the budget", "[honeypot]") {
  const std::uint32_t budget = 64;
  Honeypot hp(test_config(budget));
  hp.accept(attacker_syn(40003), 0);

  // flood with scripted requests that would reply far beyond the budget
  TimestampMs now = 1;
  std::uint32_t seq = 101;
  std::size_t inbound_sent = 0;
  for (int i = 0; i < 200; ++i) {
    std::string req = "GET /x" + std::to_string(i) + " HTTP/1.0";
    hp.accept(attacker_data(40003, seq, req), now++);
    seq += static_cast<std::uint32_t>(req.size());
    inbound_sent += req.size();
  }

  std::size_t outbound = 0, inbound = 0;
  for (const auto& rec : hp.log().records()) {
    if (rec.direction == CaptureRecord::Direction::out) outbound += rec.bytes.size();
    if (rec.direction == CaptureRecord::Direction::in) inbound += rec.bytes.size();
  }
  CHECK(outbound <= budget);
  CHECK(hp.budget_used(kAttacker, 40003) <= budget);
  CHECK(inbound == inbound_sent);  // inbound fully captured regardless
}

TEST_CASE("every inbound byte appears exactly once, in order", "[honeypot]") {
  Honeypot hp(test_config());
  hp.accept(attacker_syn(40004), 0);
  const std::vector<std::string> chunks = {"alpha ", "beta ", "gamma"};
  std::uint32_t seq = 101;
  TimestampMs now = 1;
  std::string sent;
  for (const auto& c : chunks) {
    hp.accept(attacker_data(40004, seq, c), now++);
    seq += static_cast<std::uint32_t>(c.size());
    sent += c;
  }
  CHECK(to_string(hp.log().inbound_bytes(kAttacker)) == sent);
}

TEST_CASE("capture log export/import round-trips byte-identically", "[honeypot][oracle]") {
  Honeypot hp(test_config(128));
  hp.accept(attacker_syn(40005), 100);
  hp.accept(attacker_data(40005, 101, "GET / HTTP/1.0"), 150);
  hp.accept(attacker_data(40005, 115, "leftover junk \x01\x02\x03"), 200);

  std::ostringstream out;
  auto count = hp.log().export_to(out);
  REQUIRE(count.ok());
  CHECK(count.value() == hp.log().size());

  std::istringstream in(out.str());
  auto imported = CaptureLog::import_from(in);
  REQUIRE(imported.ok());
  REQUIRE(imported.value().records() == hp.log().records());

  std::ostringstream out2;
  REQUIRE(imported.value().export_to(out2).ok());
  CHECK(out2.str() == out.str());
}

TEST_CASE("empty log exports zero records and reimports empty", "[honeypot]") {
  CaptureLog log;
  std::ostringstream out;
  auto count = log.export_to(out);
  REQUIRE(count.ok());
  CHECK(count.value() == 0);
  CHECK(out.str() == "HPLOG1\n");

  std::istringstream in(out.str());
  auto imported = CaptureLog::import_from(in);
  REQUIRE(imported.ok());
  CHECK(imported.value().size() == 0);
}

TEST_CASE("import rejects garbage", "[honeypot]") {
  std::istringstream junk("not a capture file");
  CHECK_FALSE(CaptureLog::import_from(junk).ok());

  std::istringstream truncated(std::string("HPLOG1\n") + std::string("\x00\x01", 2));
  CHECK_FALSE(CaptureLog::import_from(truncated).ok());
}

TEST_CASE("record count equals the accept-generated entries in a scripted run",
          "[honeypot][oracle]") {
  Honeypot hp(test_config());
  std::size_t expected = 0;
  // SYN: 1 inbound + 1 outbound banner record
  hp.accept(attacker_syn(40006), 0);
  expected += 2;
  // scripted request: 1 in + 1 out
  hp.accept(attacker_data(40006, 101, "USER root"), 1);
  expected += 2;
  // unscripted: 1 in (bare ACK replies carry no payload and are not recorded)
  hp.accept(attacker_data(40006, 110, "zzz"), 2);
  expected += 1;
  CHECK(hp.log().size() == expected);

  std::ostringstream out;
  auto count = hp.log().export_to(out);
  REQUIRE(count.ok());
  CHECK(count.value() == expected);
}

TEST_CASE("mid-stream traffic without a SYN is still engaged", "[honeypot]") {
  Honeypot hp(test_config());
  auto replies = hp.accept(attacker_data(40007, 5000, "orphan bytes"), 0);
  REQUIRE(replies.size() == 1);  // bare ACK
  auto ack = parse_tcp(replies[0]);
  REQUIRE(ack.ok());
  CHECK(ack.value().payload.empty());
  CHECK(hp.log().inbound_bytes(kAttacker) == to_bytes("orphan bytes"));
}
