#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace miwb {

// Seeded generator whose output is identical on every platform.
//
// std::mt19937_64's raw output sequence is fixed by the standard, but the
// standard distributions are not, so bounded draws use rejection sampling
// on the raw 64-bit output instead of std::uniform_int_distribution.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Fisher-Yates: for i from size-1 down to 1, swap(i, below(i + 1)).
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // First `count` positions of a Fisher-Yates permutation of [0, size).
  std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count);

  // `bytes` random bytes rendered as lowercase hex.
  std::string hex_token(std::size_t bytes);

 private:
  std::mt19937_64 engine_;
};

}  // namespace miwb
