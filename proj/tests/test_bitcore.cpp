#include "doctest.h"

#include <vector>

#include "xnorforge/bitcore.hpp"
#include "xnorforge/modelio.hpp"

using namespace xnorforge;

namespace {

BitVector random_vector(DetRng& rng, std::size_t len) {
  std::vector<int> vals(len);
  for (int& v : vals) v = rng.coin() ? 1 : -1;
  return BitVector::pack(vals);
}

BitVector complement(const BitVector& v) {
  BitVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.set_bit(i, !v.bit(i));
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("bitcore");

TEST_CASE("pack encodes plus-one as a set bit, LSB first") {
  const BitVector v = BitVector::pack(std::vector<int>{+1, -1, +1});
  CHECK(v.size() == 3);
  CHECK(v.words()[0] == 0b101u);
  CHECK(v.bit(0));
  CHECK_FALSE(v.bit(1));
  CHECK(v.bit(2));
  CHECK(v.unpack() == std::vector<int>{+1, -1, +1});
}

TEST_CASE("pack of the empty sequence") {
  const BitVector v = BitVector::pack(std::vector<int>{});
  CHECK(v.size() == 0);
  CHECK(v.words().empty());
}

TEST_CASE("pack fills a whole word") {
  const std::vector<int> ones(64, +1);
  const BitVector v = BitVector::pack(ones);
  CHECK(v.size() == 64);
  CHECK(v.words()[0] == ~std::uint64_t{0});
}

TEST_CASE("pack rejects non-unit values") {
  CHECK_THROWS_AS(BitVector::pack(std::vector<int>{1, 0, -1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(BitVector::pack(std::vector<int>{2}), std::invalid_argument);
}

TEST_CASE("xnor truth table and identities") {
  const BitVector a = BitVector::pack(std::vector<int>{+1, -1, +1});
  const BitVector b = BitVector::pack(std::vector<int>{+1, +1, -1});
  const BitVector r = xnor(a, b);
  CHECK(r.bit(0));
  CHECK_FALSE(r.bit(1));
  CHECK_FALSE(r.bit(2));

  DetRng rng(7);
  for (std::size_t len : {1u, 63u, 64u, 65u, 200u}) {
    const BitVector v = random_vector(rng, len);
    CHECK(popcount(xnor(v, v)) == len);          // x xnor x = all ones
    CHECK(popcount(xnor(v, complement(v))) == 0);  // x xnor ~x = all zeros
  }
}

TEST_CASE("xnor rejects mismatched lengths") {
  CHECK_THROWS_AS(xnor(BitVector(3), BitVector(4)), std::invalid_argument);
}

TEST_CASE("xnor output stays canonical") {
  DetRng rng(11);
  for (int i = 0; i < 50; ++i) {
    const std::size_t len = 1 + rng.below(130);
    const BitVector r = xnor(random_vector(rng, len), random_vector(rng, len));
    CHECK(r.is_canonical());
  }
}

TEST_CASE("popcount basics") {
  CHECK(popcount(BitVector::pack(std::vector<int>(25, +1))) == 25);
  CHECK(popcount(BitVector(1000)) == 0);
}

TEST_CASE("popcount equals the naive per-bit loop") {
  DetRng rng(13);
  const BitVector v = random_vector(rng, 1000);
  std::size_t naive = 0;
  for (std::size_t i = 0; i < v.size(); ++i) naive += v.bit(i) ? 1 : 0;
  CHECK(popcount(v) == naive);
}

TEST_CASE("xnor_dot on matched, inverted, and hand-checked vectors") {
  DetRng rng(17);
  const BitVector v = random_vector(rng, 25);
  CHECK(xnor_dot(v, v) == 25);
  CHECK(xnor_dot(v, complement(v)) == -25);

  const BitVector a = BitVector::pack(std::vector<int>{+1, -1, +1});
  const BitVector b = BitVector::pack(std::vector<int>{+1, +1, -1});
  CHECK(xnor_dot(a, b) == -1);  // (+1)(+1) + (-1)(+1) + (+1)(-1)
}

TEST_CASE("xnor_dot domain errors") {
  CHECK_THROWS_AS(xnor_dot(BitVector(0), BitVector(0)), std::invalid_argument);
  CHECK_THROWS_AS(xnor_dot(BitVector(3), BitVector(5)), std::invalid_argument);
}

TEST_CASE("xnor_dot equals the integer dot product") {
  DetRng rng(19);
  for (int i = 0; i < 500; ++i) {
    const std::size_t len = 1 + rng.below(4096);
    std::vector<int> av(len), bv(len);
    for (int& x : av) x = rng.coin() ? 1 : -1;
    for (int& x : bv) x = rng.coin() ? 1 : -1;
    std::int64_t expect = 0;
    for (std::size_t k = 0; k < len; ++k) expect += av[k] * bv[k];
    const BitVector a = BitVector::pack(av);
    const BitVector b = BitVector::pack(bv);
    const std::int64_t got = xnor_dot(a, b);
    REQUIRE(got == expect);
    // Same value through the explicit two-step route.
    REQUIRE(got == 2 * std::int64_t(popcount(xnor(a, b))) -
                       std::int64_t(len));
    // Parity and bounds.
    REQUIRE(((got % 2) + 2) % 2 == std::int64_t(len % 2));
    REQUIRE(got >= -std::int64_t(len));
    REQUIRE(got <= std::int64_t(len));
  }
}

TEST_CASE("xnor involution returns the first operand") {
  DetRng rng(23);
  for (int i = 0; i < 50; ++i) {
    const std::size_t len = 1 + rng.below(300);
    const BitVector a = random_vector(rng, len);
    const BitVector b = random_vector(rng, len);
    CHECK(xnor(xnor(a, b), b) == a);
  }
}

TEST_CASE("append keeps bit order across word boundaries") {
  DetRng rng(29);
  const BitVector a = random_vector(rng, 70);
  const BitVector b = random_vector(rng, 59);
  BitVector joined = a;
  joined.append(b);
  REQUIRE(joined.size() == 129);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(joined.bit(i) == a.bit(i));
  for (std::size_t i = 0; i < b.size(); ++i)
    CHECK(joined.bit(a.size() + i) == b.bit(i));
  CHECK(joined.is_canonical());
}

TEST_CASE("hamming tree depth") {
  CHECK(hamming_tree_stages(25) == 5);
  CHECK(hamming_tree_stages(1) == 0);
  CHECK(hamming_tree_stages(1024) == 10);
  CHECK_THROWS_AS(hamming_tree_stages(0), std::invalid_argument);
  for (std::size_t n = 1; n <= 300; ++n) {
    int s = 0;
    while ((std::size_t{1} << s) < n) ++s;  // smallest s with 2^s >= n
    CHECK(hamming_tree_stages(n) == s);
  }
}

TEST_SUITE_END();
