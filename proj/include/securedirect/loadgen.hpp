#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>

#include "securedirect/scenarios.hpp"

// Load benchmarks: schedules benign page requests at a configured rate with
// seeded jitter, optionally mixes in attacker scripts, runs the simulator,
// and reports per-request latencies. Summary statistics use fixed
// definitions (below) so they can be re-derived exactly from the raw CSV.

namespace securedirect {

struct LoadScenario {
  double rate_pages_per_hour = 3600;
  TimestampMs duration_s = 300;
  double attacker_fraction = 0.0;  // attacker scripts per benign request
  std::uint64_t seed = 0;
};

struct LatencySummary {
  TimestampMs min = 0;
  TimestampMs max = 0;
  double median = 0;  // mean of the middle two for even counts
  double mean = 0;    // integer sum / count
  TimestampMs p95 = 0;  // nearest-rank: sorted[ceil(0.95 n) - 1]

  bool operator==(const LatencySummary&) const = default;
};

struct LatencyRow {
  std::uint64_t request_index = 0;
  TimestampMs start_ms = 0;
  TimestampMs latency_ms = 0;
};

struct LatencyReport {
  std::uint64_t completed = 0;
  std::vector<LatencyRow> rows;  // ordered by request start
  LatencySummary summary;
  std::vector<double> minute_bucket_mean;  // per simulated minute of start time
  std::vector<std::uint64_t> minute_bucket_count;
};

inline LatencySummary compute_summary(std::vector<TimestampMs> latencies) {
  LatencySummary s;
  if (latencies.empty()) return s;
  std::sort(latencies.begin(), latencies.end());
  const std::size_t n = latencies.size();
  s.min = latencies.front();
  s.max = latencies.back();
  s.median = (n % 2 == 1) ? static_cast<double>(latencies[n / 2])
                          : (static_cast<double>(latencies[n / 2 - 1]) +
                             static_cast<double>(latencies[n / 2])) /
                                2.0;
  std::int64_t sum = 0;
  for (auto l : latencies) sum += l;
  s.mean = static_cast<double>(sum) / static_cast<double>(n);
  const std::size_t rank = (19 * n + 19) / 20;  // ceil(0.95 n) in integers
  s.p95 = latencies[rank - 1];
  return s;
}

inline void finalize_report(LatencyReport& report, TimestampMs duration_s) {
  report.completed = report.rows.size();
  std::vector<TimestampMs> latencies;
  latencies.reserve(report.rows.size());
  for (const auto& r : report.rows) latencies.push_back(r.latency_ms);
  report.summary = compute_summary(std::move(latencies));

  const std::size_t buckets = static_cast<std::size_t>((duration_s + 59) / 60);
  report.minute_bucket_mean.assign(buckets, 0.0);
  report.minute_bucket_count.assign(buckets, 0);
  std::vector<std::int64_t> sums(buckets, 0);
  for (const auto& r : report.rows) {
    const std::size_t b = static_cast<std::size_t>(r.start_ms / 60'000);
    if (b >= buckets) continue;
    sums[b] += r.latency_ms;
    ++report.minute_bucket_count[b];
  }
  for (std::size_t b = 0; b < buckets; ++b) {
    if (report.minute_bucket_count[b] > 0) {
      report.minute_bucket_mean[b] =
          static_cast<double>(sums[b]) / static_cast<double>(report.minute_bucket_count[b]);
    }
  }
}

/// Deterministic jittered arrival times: exactly N requests in the window,
/// each placed in its stratum with an exponential-shaped offset.
inline std::vector<TimestampMs> arrival_times(std::uint64_t n, TimestampMs duration_ms,
                                              std::mt19937_64& rng) {
  std::vector<TimestampMs> starts;
  starts.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    const double shaped = -std::log(1.0 - u * (1.0 - std::exp(-3.0))) / 3.0;  // in [0, 1)
    const double slot = static_cast<double>(duration_ms) / static_cast<double>(n);
    starts.push_back(static_cast<TimestampMs>((static_cast<double>(i) + shaped) * slot));
  }
  return starts;
}

inline Expected<LatencyReport> run_scenario(const LoadScenario& s, const Topology& topology,
                                            const SignatureDb& db) {
  if (s.rate_pages_per_hour < 0 || s.duration_s <= 0) {
    return Error{Errc::parse_error, "rate must be >= 0 and duration positive"};
  }
  LatencyReport report;
  const std::uint64_t n = static_cast<std::uint64_t>(
      s.rate_pages_per_hour * static_cast<double>(s.duration_s) / 3600.0);
  if (n == 0) {
    finalize_report(report, s.duration_s);
    return report;
  }

  std::mt19937_64 rng(s.seed);
  const TimestampMs duration_ms = s.duration_s * 1000;
  auto starts = arrival_times(n, duration_ms, rng);

  std::vector<TrafficScript> scripts;
  scripts.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    TrafficScript script;
    script.kind = TrafficScript::Kind::benign_request;
    script.client_ip = 0x0A100000u + static_cast<std::uint32_t>(i);  // 10.16.x.y
    script.start_ms = starts[i];
    script.request = scenario_detail::benign_payload(rng, db);
    scripts.push_back(std::move(script));
  }

  const std::uint64_t attackers = static_cast<std::uint64_t>(
      std::llround(s.attacker_fraction * static_cast<double>(n)));
  for (std::uint64_t i = 0; i < attackers; ++i) {
    TrafficScript script;
    script.client_ip = 0x0A200000u + static_cast<std::uint32_t>(i);  // 10.32.x.y
    script.start_ms = static_cast<TimestampMs>((i * static_cast<std::uint64_t>(duration_ms)) /
                                               attackers);
    switch (rng() % 3) {
      case 0:
        script.kind = TrafficScript::Kind::exploit_direct;
        script.attack_bytes = scenario_detail::attack_payload(rng, db);
        break;
      case 1:
        script.kind = TrafficScript::Kind::duplicate_seq_evasion;
        script.benign_bytes = scenario_detail::benign_payload(rng, db);
        script.attack_bytes = scenario_detail::attack_payload(rng, db);
        break;
      default:
        script.kind = TrafficScript::Kind::reconnect;
        script.attack_bytes = scenario_detail::attack_payload(rng, db);
        script.post_detection_bytes = scenario_detail::attack_payload(rng, db);
        break;
    }
    script.reconnect_after_ms = 200;
    scripts.push_back(std::move(script));
  }

  Topology topo = topology;
  topo.max_events = std::max<std::uint64_t>(topo.max_events, n * 64);
  auto trace = run(topo, db, std::move(scripts), s.seed, duration_ms + 60'000);
  if (!trace.ok()) return trace.error();

  // benign completions only, ordered by start time
  std::vector<CompletedRequest> done = trace.value().completed;
  std::sort(done.begin(), done.end(), [](const CompletedRequest& a, const CompletedRequest& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.client_ip != b.client_ip) return a.client_ip < b.client_ip;
    return a.src_port < b.src_port;
  });
  std::uint64_t index = 0;
  for (const auto& r : done) {
    if ((r.client_ip & 0xFFF00000u) != (0x0A100000u & 0xFFF00000u)) continue;
    report.rows.push_back(LatencyRow{index++, r.start, r.latency()});
  }
  finalize_report(report, s.duration_s);
  return report;
}

// ---- report emission ----

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline Status emit_csv(const LatencyReport& report, std::ostream& out) {
  out << "request_index,start_ms,latency_ms\n";
  for (const auto& r : report.rows) {
    out << r.request_index << ',' << r.start_ms << ',' << r.latency_ms << '\n';
  }
  if (!out.good()) return Error{Errc::io_error, "csv write failure"};
  return ok_status();
}

/// Rebuilds a report (rows + recomputed summary) from its CSV form.
inline Expected<LatencyReport> ingest_csv(std::istream& in, TimestampMs duration_s) {
  std::string header;
  if (!std::getline(in, header) || trim(header) != "request_index,start_ms,latency_ms") {
    return Error{Errc::parse_error, "bad csv header"};
  }
  LatencyReport report;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split(trim(line), ',');
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 3) {
      return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": expected 3 fields"};
    }
    LatencyRow row;
    auto idx = detail::parse_int(fields[0]);
    auto start = detail::parse_int(fields[1]);
    auto lat = detail::parse_int(fields[2]);
    if (!idx.ok() || !start.ok() || !lat.ok()) {
      return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": bad number"};
    }
    row.request_index = static_cast<std::uint64_t>(idx.value());
    row.start_ms = start.value();
    row.latency_ms = lat.value();
    report.rows.push_back(row);
  }
  finalize_report(report, duration_s);
  return report;
}

inline Status emit_text(const LatencyReport& report, std::ostream& out) {
  out << "completed: " << report.completed << "\n";
  if (report.completed > 0) {
    out << "latency ms: min=" << report.summary.min << " median=" << format_double(report.summary.median)
        << " mean=" << format_double(report.summary.mean) << " p95=" << report.summary.p95
        << " max=" << report.summary.max << "\n";
  } else {
    out << "latency ms: min=0 median=0 mean=0 p95=0 max=0\n";
  }
  out << "per-minute mean latency:\n";
  for (std::size_t b = 0; b < report.minute_bucket_mean.size(); ++b) {
    out << "  minute " << b << ": count=" << report.minute_bucket_count[b] << " mean=";
    out << format_double(report.minute_bucket_mean[b]) << "\n";
  }
  if (!out.good()) return Error{Errc::io_error, "text write failure"};
  return ok_status();
}

/// Average-response-time comparison: one per-minute mean series per report.
inline Status emit_comparison_svg(const std::vector<LatencyReport>& reports,
                                  const std::vector<std::string>& labels, std::ostream& out,
                                  const std::string& title = "average response time") {
  const int width = 640, height = 360, margin = 48;
  const char* colors[] = {"steelblue", "darkorange", "seagreen", "crimson", "purple"};
  double peak = 1.0;
  std::size_t buckets = 0;
  for (const auto& r : reports) {
    buckets = std::max(buckets, r.minute_bucket_mean.size());
    for (double m : r.minute_bucket_mean) peak = std::max(peak, m);
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (std::size_t s = 0; s < reports.size() && buckets > 0; ++s) {
    const auto& means = reports[s].minute_bucket_mean;
    std::string points;
    for (std::size_t b = 0; b < means.size(); ++b) {
      const double x = margin + (static_cast<double>(b) + 0.5) * (width - 2.0 * margin) /
                                    static_cast<double>(buckets);
      const double y = height - margin - means[b] / peak * (height - 2.0 * margin);
      if (!points.empty()) points += " ";
      points += format_double(x) + "," + format_double(y);
    }
    const char* color = colors[s % 5];
    out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
        << points << "\"/>\n";
    out << "  <text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16 * (s + 1)
        << "\" font-size=\"11\" fill=\"" << color << "\" text-anchor=\"end\">"
        << (s < labels.size() ? labels[s] : std::to_string(s)) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out.good()) return Error{Errc::io_error, "svg write failure"};
  return ok_status();
}

/// Self-contained SVG timeline of per-minute mean latency.
inline Status emit_svg(const LatencyReport& report, std::ostream& out,
                       const std::string& title = "response time") {
  const int width = 640, height = 360, margin = 48;
  double peak = 1.0;
  for (double m : report.minute_bucket_mean) peak = std::max(peak, m);

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"11\">minute</text>\n";
  out << "  <text x=\"14\" y=\"" << height / 2 << "\" font-size=\"11\" transform=\"rotate(-90 14 "
      << height / 2 << ")\" text-anchor=\"middle\">mean latency (ms)</text>\n";
  out << "  <text x=\"" << margin - 4 << "\" y=\"" << margin
      << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(peak) << "</text>\n";

  const std::size_t buckets = report.minute_bucket_mean.size();
  if (buckets > 0) {
    std::string points;
    for (std::size_t b = 0; b < buckets; ++b) {
      const double x =
          margin + (static_cast<double>(b) + 0.5) * (width - 2.0 * margin) /
                       static_cast<double>(buckets);
      const double y =
          height - margin - report.minute_bucket_mean[b] / peak * (height - 2.0 * margin);
      if (!points.empty()) points += " ";
      points += format_double(x) + "," + format_double(y);
    }
    out << "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" << points
        << "\"/>\n";
  }
  out << "</svg>\n";
  if (!out.good()) return Error{Errc::io_error, "svg write failure"};
  return ok_status();
}

}  // namespace securedirect
