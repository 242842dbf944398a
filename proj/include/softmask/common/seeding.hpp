#pragma once

#include <cstdint>
#include <initializer_list>

namespace softmask {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a tuple of
/// counters (epoch, step, purpose tag ...). Training code reseeds from
/// these instead of carrying generator state, so a resumed run replays
/// exactly the draws an uninterrupted run would have made.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(root);
  for (auto p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

namespace stream {
inline constexpr std::uint64_t kEpochOrder = 1;
inline constexpr std::uint64_t kCriticBatch = 2;
inline constexpr std::uint64_t kGeneratorPlan = 3;
inline constexpr std::uint64_t kTorch = 4;
inline constexpr std::uint64_t kFlip = 5;
inline constexpr std::uint64_t kInit = 6;
}  // namespace stream

}  // namespace softmask
