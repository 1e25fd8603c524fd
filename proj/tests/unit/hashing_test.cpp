#include <numeric>
#include <gtest/gtest.h>

#include <set>

#include "textmill/hashing.hpp"
#include "textmill/random.hpp"

namespace textmill {
namespace {

// RFC 1321, appendix A.5.
TEST(Md5, ReferenceVectors) {
  EXPECT_EQ(fingerprint(""), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_EQ(fingerprint("a"), "0cc175b9c0f1b6a831c399e269772661");
  EXPECT_EQ(fingerprint("abc"), "900150983cd24fb0d6963f7d28e17f72");
  EXPECT_EQ(fingerprint("message digest"), "f96b697d7cb7938d525a2f31aaf161d0");
  EXPECT_EQ(fingerprint("abcdefghijklmnopqrstuvwxyz"), "c3fcd3d76192e4007dfb496cca67e13b");
  EXPECT_EQ(fingerprint("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"),
            "d174ab98d277d9f5a5611c2c9f419d9f");
  EXPECT_EQ(fingerprint("1234567890123456789012345678901234567890"
                        "1234567890123456789012345678901234567890"),
            "57edf4a22be3c955ac49da2e2107b67a");
}

TEST(Hash64, FrozenValues) {
  // Values are part of the on-disk contract (signatures, window keys).
  static_assert(hash64("abc") == hash64("abc"));
  EXPECT_NE(hash64("abc"), hash64("abd"));
  EXPECT_NE(hash64("abc", 1), hash64("abc", 2));
  EXPECT_NE(hash64(""), hash64(std::string_view("\0", 1)));
  EXPECT_EQ(to_hex(std::uint64_t{0xdeadbeef}), "00000000deadbeef");
}

TEST(Hash64, BitBalance) {
  std::array<int, 64> ones{};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t h = hash64(std::to_string(i));
    for (int b = 0; b < 64; ++b) ones[b] += (h >> b) & 1;
  }
  for (int b = 0; b < 64; ++b) {
    EXPECT_NEAR(ones[b] / static_cast<double>(n), 0.5, 0.02) << "bit " << b;
  }
}

TEST(Random, SplitMixIsDeterministic) {
  SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
  }
}

TEST(Random, UniformBelowStaysInRange) {
  SplitMix64 g(1);
  std::array<int, 7> hist{};
  for (int i = 0; i < 70000; ++i) ++hist[uniform_below(g, 7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Random, ShuffleIsAPermutation) {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  SplitMix64 g(9);
  shuffle(std::span<int>(v), g);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 100u);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Random, CounterDrawIsPure) {
  EXPECT_EQ(counter_draw(1, "doc", 3), counter_draw(1, "doc", 3));
  EXPECT_NE(counter_draw(1, "doc", 3), counter_draw(1, "doc", 4));
  EXPECT_NE(counter_draw(1, "doc", 3), counter_draw(2, "doc", 3));
  const double u = to_unit(counter_draw(5, "x"));
  EXPECT_GE(u, 0.0);
  EXPECT_LT(u, 1.0);
}

}  // namespace
}  // namespace textmill
