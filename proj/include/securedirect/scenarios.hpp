#pragma once

#include "securedirect/simnet.hpp"

// Canned simulation scenarios: the behaviors the architecture is supposed to
// exhibit, each as a ready-to-run topology + script set. Scripts are pure
// functions of the seed; payload generators reject anything that would match
// the signature database, so benign traffic is benign by construction.

namespace securedirect {

struct Scenario {
  Topology topo;
  std::vector<TrafficScript> scripts;
  TimestampMs until = 5000;
};

namespace scenario_detail {

inline Bytes benign_payload(std::mt19937_64& rng, const SignatureDb& db) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::string path = "/";
    const std::size_t len = 3 + rng() % 12;
    for (std::size_t i = 0; i < len; ++i) path.push_back(static_cast<char>('a' + rng() % 26));
    std::string req = "GET " + path + " HTTP/1.0\r\nHost: www\r\n\r\n";
    Bytes payload = to_bytes(req);
    if (!inspect(db, payload).attack) return payload;
  }
  return to_bytes("GET /fallback HTTP/1.0\r\n\r\n");
}

inline Bytes attack_payload(std::mt19937_64& rng, const SignatureDb& db) {
  const auto& sigs = db.signatures();
  const Signature& sig = sigs[rng() % sigs.size()];
  std::string prefix = "GET /";
  const std::size_t len = rng() % 8;
  for (std::size_t i = 0; i < len; ++i) prefix.push_back(static_cast<char>('a' + rng() % 26));
  Bytes payload = to_bytes(prefix + " ");
  payload.insert(payload.end(), sig.pattern.begin(), sig.pattern.end());
  Bytes tail = to_bytes(" HTTP/1.0\r\n\r\n");
  payload.insert(payload.end(), tail.begin(), tail.end());
  return payload;
}

inline std::uint32_t client_addr(std::size_t i) {
  return 0x0A010000u + static_cast<std::uint32_t>(i + 1);  // 10.1.x.y
}

inline std::uint32_t attacker_addr(std::size_t i) {
  return 0x0A020000u + static_cast<std::uint32_t>(i + 1);  // 10.2.x.y
}

}  // namespace scenario_detail

inline Scenario make_baseline(std::uint64_t seed, const SignatureDb& db) {
  std::mt19937_64 rng(seed);
  Scenario sc;
  for (std::size_t i = 0; i < 3; ++i) {
    TrafficScript s;
    s.kind = TrafficScript::Kind::benign_request;
    s.client_ip = scenario_detail::client_addr(i);
    s.start_ms = static_cast<TimestampMs>(10 + rng() % 50);
    s.request_count = 2;
    s.think_ms = static_cast<TimestampMs>(20 + rng() % 60);
    s.request = scenario_detail::benign_payload(rng, db);
    sc.scripts.push_back(std::move(s));
  }
  sc.until = 3000;
  return sc;
}

inline Scenario make_duplicate_seq(std::uint64_t seed, const SignatureDb& db,
                                   bool identical_retransmit) {
  std::mt19937_64 rng(seed);
  Scenario sc;

  TrafficScript benign;
  benign.kind = TrafficScript::Kind::benign_request;
  benign.client_ip = scenario_detail::client_addr(0);
  benign.start_ms = 10;
  benign.request = scenario_detail::benign_payload(rng, db);
  sc.scripts.push_back(std::move(benign));

  TrafficScript attacker;
  attacker.kind = TrafficScript::Kind::duplicate_seq_evasion;
  attacker.client_ip = scenario_detail::attacker_addr(0);
  attacker.start_ms = 20;
  attacker.benign_bytes = scenario_detail::benign_payload(rng, db);
  attacker.attack_bytes = scenario_detail::attack_payload(rng, db);
  attacker.identical_retransmit = identical_retransmit;
  attacker.reconnect_after_ms = 300;
  sc.scripts.push_back(std::move(attacker));

  sc.until = 3000;
  return sc;
}

inline Scenario make_frag_evasion(std::uint64_t seed, const SignatureDb& db, bool conflicting) {
  std::mt19937_64 rng(seed);
  Scenario sc;
  TrafficScript s;
  s.kind = TrafficScript::Kind::frag_evasion;
  s.client_ip = conflicting ? scenario_detail::attacker_addr(1) : scenario_detail::client_addr(1);
  s.start_ms = 10;
  s.request = scenario_detail::benign_payload(rng, db);
  s.conflicting_fragments = conflicting;
  sc.scripts.push_back(std::move(s));
  sc.until = 2000;
  return sc;
}

inline Scenario make_reconnect(std::uint64_t seed, const SignatureDb& db) {
  std::mt19937_64 rng(seed);
  Scenario sc;
  TrafficScript s;
  s.kind = TrafficScript::Kind::reconnect;
  s.client_ip = scenario_detail::attacker_addr(2);
  s.start_ms = 10;
  s.attack_bytes = scenario_detail::attack_payload(rng, db);
  s.reconnect_after_ms = 300;
  s.post_detection_bytes = to_bytes("USER root\r\nPASS hunter2\r\nls -la /\r\n");
  sc.scripts.push_back(std::move(s));
  sc.until = 3000;
  return sc;
}

/// Randomized desk-scale mix of benign clients and every attacker flavor.
inline Scenario make_mixed(std::uint64_t seed, const SignatureDb& db) {
  std::mt19937_64 rng(seed ^ 0x5D5D5D5Dull);
  Scenario sc;
  std::size_t next_client = 0, next_attacker = 0;

  const std::size_t benign_count = 2 + rng() % 4;
  for (std::size_t i = 0; i < benign_count; ++i) {
    TrafficScript s;
    s.kind = TrafficScript::Kind::benign_request;
    s.client_ip = scenario_detail::client_addr(next_client++);
    s.start_ms = static_cast<TimestampMs>(rng() % 400);
    s.request_count = 1 + static_cast<int>(rng() % 3);
    s.think_ms = static_cast<TimestampMs>(10 + rng() % 80);
    s.request = scenario_detail::benign_payload(rng, db);
    sc.scripts.push_back(std::move(s));
  }
  const std::size_t attacker_count = 1 + rng() % 3;
  for (std::size_t i = 0; i < attacker_count; ++i) {
    TrafficScript s;
    s.client_ip = scenario_detail::attacker_addr(next_attacker++);
    s.start_ms = static_cast<TimestampMs>(rng() % 400);
    switch (rng() % 4) {
      case 0:
        s.kind = TrafficScript::Kind::exploit_direct;
        s.attack_bytes = scenario_detail::attack_payload(rng, db);
        break;
      case 1:
        s.kind = TrafficScript::Kind::duplicate_seq_evasion;
        s.benign_bytes = scenario_detail::benign_payload(rng, db);
        s.attack_bytes = scenario_detail::attack_payload(rng, db);
        break;
      case 2:
        s.kind = TrafficScript::Kind::frag_evasion;
        s.request = scenario_detail::benign_payload(rng, db);
        s.conflicting_fragments = true;
        break;
      default:
        s.kind = TrafficScript::Kind::reconnect;
        s.attack_bytes = scenario_detail::attack_payload(rng, db);
        s.post_detection_bytes = scenario_detail::attack_payload(rng, db);
        break;
    }
    s.reconnect_after_ms = static_cast<TimestampMs>(100 + rng() % 300);
    sc.scripts.push_back(std::move(s));
  }
  sc.until = 4000;
  return sc;
}

// ---- named scenario entry points ----

inline Expected<SimTrace> scenario_duplicate_seq(std::uint64_t seed, const SignatureDb& db,
                                                 bool identical_retransmit = false) {
  Scenario sc = make_duplicate_seq(seed, db, identical_retransmit);
  return run(sc.topo, db, std::move(sc.scripts), seed, sc.until);
}

inline Expected<SimTrace> scenario_frag_evasion(std::uint64_t seed, const SignatureDb& db,
                                                bool conflicting = true) {
  Scenario sc = make_frag_evasion(seed, db, conflicting);
  return run(sc.topo, db, std::move(sc.scripts), seed, sc.until);
}

inline Expected<SimTrace> scenario_reconnect_to_honeypot(std::uint64_t seed,
                                                         const SignatureDb& db) {
  Scenario sc = make_reconnect(seed, db);
  return run(sc.topo, db, std::move(sc.scripts), seed, sc.until);
}

inline Expected<Scenario> make_scenario_by_name(const std::string& name, std::uint64_t seed,
                                                const SignatureDb& db) {
  if (name == "baseline") return make_baseline(seed, db);
  if (name == "duplicate-seq") return make_duplicate_seq(seed, db, false);
  if (name == "frag-evasion") return make_frag_evasion(seed, db, true);
  if (name == "reconnect") return make_reconnect(seed, db);
  if (name == "mixed") return make_mixed(seed, db);
  return Error{Errc::parse_error,
               "unknown scenario `" + name +
                   "` (expected baseline|duplicate-seq|frag-evasion|reconnect|mixed)"};
}

/// Human-readable run summary for the CLI.
inline std::string summarize_trace(const SimTrace& trace) {
  std::string out;
  out += "requests completed: " + std::to_string(trace.completed.size()) + "\n";
  std::map<BackendId, std::size_t> bytes_by_backend;
  for (const auto& c : trace.backend_conns) bytes_by_backend[c.backend] += c.received.size();
  for (const auto& [id, n] : bytes_by_backend) {
    out += "backend " + std::to_string(id) + " received bytes: " + std::to_string(n) + "\n";
  }
  out += "attackers flagged: " + std::to_string(trace.flagged.size()) + "\n";
  for (const auto& rec : trace.flagged) {
    out += "  " + format_ipv4_addr(rec.ip) + " " + attack_reason_name(rec.reason) + " at t=" +
           std::to_string(rec.flagged_at) + "ms\n";
  }
  std::size_t cap_in = 0, cap_out = 0;
  for (const auto& rec : trace.honeypot_log.records()) {
    (rec.direction == CaptureRecord::Direction::in ? cap_in : cap_out) += rec.bytes.size();
  }
  out += "honeypot capture: " + std::to_string(trace.honeypot_log.size()) + " records, " +
         std::to_string(cap_in) + " bytes in, " + std::to_string(cap_out) + " bytes out\n";
  out += "ids queries: " + std::to_string(trace.balancer_counters.ids_queries) + "\n";
  out += "packets injected/delivered/dropped/lost: " + std::to_string(trace.injected) + "/" +
         std::to_string(trace.delivered) + "/" + std::to_string(trace.dropped) + "/" +
         std::to_string(trace.lost) + "\n";
  return out;
}

}  // namespace securedirect
