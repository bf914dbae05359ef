#include "miwb/random.hpp"

#include <limits>
#include <numeric>

namespace miwb {

std::uint64_t SeededRng::below(std::uint64_t bound) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  // Largest multiple of bound that fits; draws at or above it are rejected.
  const std::uint64_t limit = kMax - (kMax % bound + 1) % bound;
  std::uint64_t r = engine_();
  while (r > limit) r = engine_();
  return r % bound;
}

std::vector<std::size_t> SeededRng::sample_indices(std::size_t size, std::size_t count) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Forward partial Fisher-Yates: position i receives a uniform pick from [i, size).
  for (std::size_t i = 0; i < count && i < size; ++i) {
    const auto j = i + static_cast<std::size_t>(below(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count < size ? count : size);
  return idx;
}

std::string SeededRng::hex_token(std::size_t bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes * 2);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < bytes; ++i) {
    if (i % 8 == 0) word = engine_();
    const auto b = static_cast<unsigned>((word >> ((i % 8) * 8)) & 0xFF);
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

}  // namespace miwb
