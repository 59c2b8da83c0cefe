#pragma once

#include "lldc/bytes.hpp"

#include <cstdint>
#include <string_view>

namespace lldc {

// Deterministic randomness source: a SHA-256 counter stream over a 32-byte
// state. Every protocol run draws all randomness through one of these, so
// identical seeds reproduce identical transcripts on any platform.
class Prng {
 public:
  explicit Prng(uint64_t seed);
  explicit Prng(BytesView seed);

  void fill(Bytes& out);
  Bytes bytes(size_t n);
  uint64_t next_u64();
  // Uniform in [0, bound), bound > 0; rejection-sampled.
  uint64_t uniform(uint64_t bound);
  // Uniform in [lo, hi] inclusive.
  int64_t range(int64_t lo, int64_t hi);
  double unit_double();  // [0,1)

  // Independent stream derived from this one's seed and a label; does not
  // disturb this stream's position.
  Prng child(std::string_view label) const;
  Prng child(std::string_view label, uint64_t index) const;

 private:
  Bytes state_;      // 32-byte key
  uint64_t counter_ = 0;
  Bytes block_;      // current output block
  size_t offset_ = 0;
  void refill();
};

}  // namespace lldc
