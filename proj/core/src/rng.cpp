#include "lldc/rng.hpp"

#include "lldc/hash.hpp"

#include <stdexcept>

namespace lldc {

static const std::string_view kSeedTag = "lldc/rng/v1";
static const std::string_view kChildTag = "lldc/rng/child";

Prng::Prng(uint64_t seed) {
  Bytes s;
  put_u64le(s, seed);
  state_ = sha256({from_string(kSeedTag), s});
}

Prng::Prng(BytesView seed) { state_ = sha256({from_string(kSeedTag), seed}); }

void Prng::refill() {
  Bytes ctr;
  put_u64le(ctr, counter_++);
  block_ = sha256({state_, ctr});
  offset_ = 0;
}

void Prng::fill(Bytes& out) {
  for (size_t i = 0; i < out.size(); ++i) {
    if (block_.empty() || offset_ == block_.size()) refill();
    out[i] = block_[offset_++];
  }
}

Bytes Prng::bytes(size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

uint64_t Prng::next_u64() {
  Bytes b = bytes(8);
  return get_u64le(b, 0);
}

uint64_t Prng::uniform(uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform: zero bound");
  // Rejection sampling over the largest multiple of bound.
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    uint64_t v = next_u64();
    if (v < limit) return v % bound;
  }
}

int64_t Prng::range(int64_t lo, int64_t hi) {
  if (hi < lo) throw std::invalid_argument("range: hi < lo");
  return lo + static_cast<int64_t>(uniform(static_cast<uint64_t>(hi - lo) + 1));
}

double Prng::unit_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

Prng Prng::child(std::string_view label) const {
  return Prng(sha256({from_string(kChildTag), state_, from_string(label)}));
}

Prng Prng::child(std::string_view label, uint64_t index) const {
  Bytes idx;
  put_u64le(idx, index);
  return Prng(sha256({from_string(kChildTag), state_, from_string(label), idx}));
}

}  // namespace lldc
