#pragma once

#include <cstdint>
#include <string_view>

namespace talkhead {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-purpose seed: splitmix64(root XOR fnv1a64(purpose)).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(root ^ h);
}

} // namespace talkhead
