#include "securedirect/ids_wire.hpp"

#include <random>

#include "catch_amalgamated.hpp"

using namespace securedirect;
using namespace securedirect::idswire;

TEST_CASE("query frame layout is bit-exact", "[idswire]") {
  Bytes frame = encode_query(to_bytes("hi"));
  REQUIRE(frame.size() == 7);
  CHECK(frame[0] == 0x53);
  CHECK(frame[1] == 0x44);
  CHECK(frame[2] == 0x01);
  CHECK(frame[3] == 0x00);
  CHECK(frame[4] == 0x02);
  CHECK(frame[5] == 'h');
  CHECK(frame[6] == 'i');
}

TEST_CASE("response frames encode the verdict and matched ids", "[idswire]") {
  CHECK(encode_response(Verdict{}) == Bytes{0x00});

  Verdict attack;
  attack.attack = true;
  attack.matched = {7, 0x01020304};
  Bytes frame = encode_response(attack);
  REQUIRE(frame.size() == 2 + 8);
  CHECK(frame[0] == 0x01);
  CHECK(frame[1] == 2);
  CHECK(get_u32(frame, 2) == 7);
  CHECK(get_u32(frame, 6) == 0x01020304);

  CHECK(encode_error_response() == Bytes{0xFF});
}

TEST_CASE("frame codecs round-trip", "[idswire][property]") {
  std::mt19937_64 rng(4242);
  for (int i = 0; i < 200; ++i) {
    Bytes payload(rng() % 300);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    auto decoded = decode_query(encode_query(payload));
    REQUIRE(decoded.ok());
    CHECK(decoded.value() == payload);

    Verdict v;
    const std::size_t n = rng() % 6;
    for (std::size_t k = 0; k < n; ++k) v.matched.push_back(static_cast<std::uint32_t>(rng()));
    std::sort(v.matched.begin(), v.matched.end());
    v.matched.erase(std::unique(v.matched.begin(), v.matched.end()), v.matched.end());
    v.attack = !v.matched.empty();
    auto back = decode_response(encode_response(v));
    REQUIRE(back.ok());
    CHECK(back.value().attack == v.attack);
    CHECK(back.value().matched == v.matched);
  }
}

TEST_CASE("malformed frames are rejected", "[idswire]") {
  CHECK_FALSE(decode_query(Bytes{0x53, 0x44}).ok());                    // truncated
  CHECK_FALSE(decode_query(Bytes{0x58, 0x44, 0x01, 0x00, 0x00}).ok());  // bad magic
  CHECK_FALSE(decode_query(Bytes{0x53, 0x44, 0x02, 0x00, 0x00}).ok());  // bad version
  CHECK_FALSE(decode_query(Bytes{0x53, 0x44, 0x01, 0x00, 0x02, 'x'}).ok());  // length mismatch

  CHECK_FALSE(decode_response(Bytes{}).ok());
  CHECK_FALSE(decode_response(Bytes{0x01}).ok());        // missing count
  CHECK_FALSE(decode_response(Bytes{0x01, 0x00}).ok());  // zero matches
  CHECK_FALSE(decode_response(Bytes{0x01, 0x01, 0x00}).ok());  // short id list
  CHECK_FALSE(decode_response(Bytes{0x02}).ok());        // unknown verdict byte
  auto err = decode_response(Bytes{0xFF});
  REQUIRE_FALSE(err.ok());
  CHECK(err.error().code == Errc::protocol_error);
}
