#include <gtest/gtest.h>

#include <set>

#include "miwb/random.hpp"

using miwb::SeededRng;

TEST(SeededRng, SameSeedSameStream) {
  SeededRng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(SeededRng, MatchesStandardEngineOutput) {
  // The raw stream is fixed by the C++ standard for mt19937_64.
  SeededRng rng(5489);
  for (int i = 0; i < 9999; ++i) rng.next();
  EXPECT_EQ(rng.next(), 9981545732273789042ULL);
}

TEST(SeededRng, BelowStaysInRange) {
  SeededRng rng(7);
  for (std::uint64_t bound : {1ULL, 2ULL, 3ULL, 10ULL, 1000ULL}) {
    for (int i = 0; i < 200; ++i) ASSERT_LT(rng.below(bound), bound);
  }
}

TEST(SeededRng, SampleIndicesAreDistinct) {
  SeededRng rng(3);
  const auto idx = rng.sample_indices(50, 20);
  ASSERT_EQ(idx.size(), 20u);
  std::set<std::size_t> uniq(idx.begin(), idx.end());
  EXPECT_EQ(uniq.size(), 20u);
  for (auto i : idx) EXPECT_LT(i, 50u);
}

TEST(SeededRng, ShuffleIsAPermutation) {
  SeededRng rng(11);
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  rng.shuffle(v);
  std::multiset<int> s(v.begin(), v.end());
  EXPECT_EQ(s, (std::multiset<int>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(SeededRng, HexToken) {
  SeededRng rng(1);
  const auto t = rng.hex_token(8);
  ASSERT_EQ(t.size(), 16u);
  EXPECT_EQ(t.find_first_not_of("0123456789abcdef"), std::string::npos);
}
