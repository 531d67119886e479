#include "securedirect/loadgen.hpp"

#include <sstream>

#include "catch_amalgamated.hpp"

using namespace securedirect;

namespace {

// Independent statistics pass used as the oracle for compute_summary.
struct RefStats {
  TimestampMs min, max, p95;
  double median, mean;

  static RefStats of(std::vector<TimestampMs> v) {
    RefStats r{};
    std::sort(v.begin(), v.end());
    r.min = v.front();
    r.max = v.back();
    const std::size_t n = v.size();
    if (n % 2 == 1) {
      r.median = static_cast<double>(v[n / 2]);
    } else {
      r.median = (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
    }
    std::int64_t sum = 0;
    for (auto x : v) sum += x;
    r.mean = static_cast<double>(sum) / static_cast<double>(n);
    std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    if (rank == 0) rank = 1;
    r.p95 = v[rank - 1];
    return r;
  }
};

}  // namespace

TEST_CASE("the request count is exactly rate times duration", "[loadgen]") {
  auto db = default_signature_db();
  Topology topo;
  LoadScenario s;
  s.rate_pages_per_hour = 7200;
  s.duration_s = 30;
  s.seed = 3;
  auto report = run_scenario(s, topo, db);
  REQUIRE(report.ok());
  CHECK(report.value().completed == 60);
  CHECK(report.value().rows.size() == 60);
  // starts are within the window and non-decreasing
  TimestampMs prev = -1;
  for (const auto& r : report.value().rows) {
    CHECK(r.start_ms >= 0);
    CHECK(r.start_ms < 30'000);
    CHECK(r.start_ms >= prev);
    prev = r.start_ms;
  }
}

TEST_CASE("rate zero produces an empty report", "[loadgen]") {
  auto db = default_signature_db();
  LoadScenario s;
  s.rate_pages_per_hour = 0;
  s.duration_s = 60;
  auto report = run_scenario(s, Topology{}, db);
  REQUIRE(report.ok());
  CHECK(report.value().completed == 0);
  CHECK(report.value().rows.empty());
  std::ostringstream text;
  REQUIRE(emit_text(report.value(), text).ok());
  CHECK(text.str().find("completed: 0") != std::string::npos);
}

TEST_CASE("summary statistics equal an independent recomputation", "[loadgen][oracle]") {
  auto db = default_signature_db();
  LoadScenario s;
  s.rate_pages_per_hour = 6000;
  s.duration_s = 60;
  s.seed = 17;
  auto report = run_scenario(s, Topology{}, db);
  REQUIRE(report.ok());
  REQUIRE(report.value().completed == 100);

  std::vector<TimestampMs> latencies;
  for (const auto& r : report.value().rows) latencies.push_back(r.latency_ms);
  RefStats ref = RefStats::of(latencies);
  CHECK(report.value().summary.min == ref.min);
  CHECK(report.value().summary.max == ref.max);
  CHECK(report.value().summary.median == ref.median);
  CHECK(report.value().summary.mean == ref.mean);
  CHECK(report.value().summary.p95 == ref.p95);
}

TEST_CASE("csv round-trips to an identical report", "[loadgen][oracle]") {
  auto db = default_signature_db();
  LoadScenario s;
  s.rate_pages_per_hour = 3600;
  s.duration_s = 45;
  s.seed = 9;
  auto report = run_scenario(s, Topology{}, db);
  REQUIRE(report.ok());

  std::ostringstream csv;
  REQUIRE(emit_csv(report.value(), csv).ok());
  std::istringstream in(csv.str());
  auto back = ingest_csv(in, s.duration_s);
  REQUIRE(back.ok());

  REQUIRE(back.value().rows.size() == report.value().rows.size());
  for (std::size_t i = 0; i < back.value().rows.size(); ++i) {
    CHECK(back.value().rows[i].request_index == report.value().rows[i].request_index);
    CHECK(back.value().rows[i].start_ms == report.value().rows[i].start_ms);
    CHECK(back.value().rows[i].latency_ms == report.value().rows[i].latency_ms);
  }
  CHECK(back.value().summary == report.value().summary);
  CHECK(back.value().minute_bucket_mean == report.value().minute_bucket_mean);
  CHECK(back.value().minute_bucket_count == report.value().minute_bucket_count);
}

TEST_CASE("per-minute buckets partition the run", "[loadgen]") {
  auto db = default_signature_db();
  LoadScenario s;
  s.rate_pages_per_hour = 3600;
  s.duration_s = 180;
  s.seed = 21;
  auto report = run_scenario(s, Topology{}, db);
  REQUIRE(report.ok());
  REQUIRE(report.value().minute_bucket_count.size() == 3);
  std::uint64_t total = 0;
  for (auto c : report.value().minute_bucket_count) total += c;
  CHECK(total == report.value().completed);
}

TEST_CASE("attacker traffic neither inflates nor starves benign completions", "[loadgen]") {
  auto db = default_signature_db();
  LoadScenario clean;
  clean.rate_pages_per_hour = 3600;
  clean.duration_s = 60;
  clean.seed = 33;
  auto baseline = run_scenario(clean, Topology{}, db);
  REQUIRE(baseline.ok());

  LoadScenario noisy = clean;
  noisy.attacker_fraction = 0.2;
  auto contested = run_scenario(noisy, Topology{}, db);
  REQUIRE(contested.ok());

  // same benign request count, and completions within 1% of the clean run
  CHECK(contested.value().completed == baseline.value().completed);
  const double ratio = static_cast<double>(contested.value().completed) /
                       static_cast<double>(baseline.value().completed);
  CHECK(ratio >= 0.99);
  CHECK(ratio <= 1.01);
}

TEST_CASE("svg and text emitters produce well-formed output", "[loadgen]") {
  auto db = default_signature_db();
  LoadScenario s;
  s.rate_pages_per_hour = 3600;
  s.duration_s = 120;
  s.seed = 5;
  auto report = run_scenario(s, Topology{}, db);
  REQUIRE(report.ok());

  std::ostringstream svg;
  REQUIRE(emit_svg(report.value(), svg, "test plot").ok());
  CHECK(svg.str().rfind("<svg", 0) == 0);
  CHECK(svg.str().find("polyline") != std::string::npos);
  CHECK(svg.str().find("</svg>") != std::string::npos);

  std::ostringstream text;
  REQUIRE(emit_text(report.value(), text).ok());
  CHECK(text.str().find("completed: 120") != std::string::npos);
  CHECK(text.str().find("minute 1:") != std::string::npos);
}

TEST_CASE("identical load scenarios reproduce identical reports", "[loadgen]") {
  auto db = default_signature_db();
  LoadScenario s;
  s.rate_pages_per_hour = 7200;
  s.duration_s = 30;
  s.seed = 77;
  auto a = run_scenario(s, Topology{}, db);
  auto b = run_scenario(s, Topology{}, db);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  std::ostringstream csv_a, csv_b;
  REQUIRE(emit_csv(a.value(), csv_a).ok());
  REQUIRE(emit_csv(b.value(), csv_b).ok());
  CHECK(csv_a.str() == csv_b.str());
}
