#pragma once

#include "lldc/bytes.hpp"
#include "lldc/rng.hpp"

#include <string>
#include <string_view>

namespace lldc::crypto {

// Canonical byte encodings; all comparisons are on encodings.
struct Element {
  Bytes data;
  friend bool operator==(const Element&, const Element&) = default;
};

struct Scalar {
  Bytes data;
  friend bool operator==(const Scalar&, const Scalar&) = default;
};

// Prime-order group abstraction. Two instantiations ship: a production
// curve (P-256) and a tiny order-101 subgroup of Z_607^* whose discrete
// logs are brute-forceable, so every algebraic claim is testable by
// exhaustive search.
class Group {
 public:
  virtual ~Group() = default;

  virtual std::string id() const = 0;
  virtual size_t element_size() const = 0;
  virtual size_t scalar_size() const = 0;
  virtual uint64_t order_u64() const = 0;  // 0 when the order exceeds 64 bits

  virtual Element generator() const = 0;
  virtual Element identity() const = 0;
  virtual bool valid_element(const Element& e) const = 0;
  bool is_identity(const Element& e) const { return e == identity(); }

  virtual Element mul(const Element& a, const Element& b) const = 0;
  virtual Element inv(const Element& a) const = 0;
  virtual Element exp(const Element& base, const Scalar& e) const = 0;
  Element exp_g(const Scalar& e) const { return exp(generator(), e); }

  virtual Scalar scalar_zero() const = 0;
  virtual Scalar scalar_from_u64(uint64_t v) const = 0;
  virtual uint64_t scalar_as_u64(const Scalar& s) const = 0;  // small groups only
  virtual Scalar scalar_add(const Scalar& a, const Scalar& b) const = 0;
  virtual Scalar scalar_sub(const Scalar& a, const Scalar& b) const = 0;
  virtual Scalar scalar_mul(const Scalar& a, const Scalar& b) const = 0;
  virtual Scalar scalar_neg(const Scalar& a) const = 0;
  // Interprets bytes as a little-endian integer and reduces mod q.
  virtual Scalar scalar_reduce(BytesView wide) const = 0;

  // Uniform in [1, q): zero keys are resampled away.
  Scalar random_scalar(Prng& rng) const;

  // F1: invertible embedding of short bitstrings into the group.
  // Domain: exactly f1_bytes() bytes with bits above f1_bits() clear.
  virtual size_t f1_bits() const = 0;
  size_t f1_bytes() const { return (f1_bits() + 7) / 8; }
  virtual Element f1_map(BytesView bits) const = 0;  // MapRangeError outside domain
  virtual Bytes f1_inv(const Element& e) const = 0;  // MapRangeError outside range

  // F2: bitstrings to scalars, truncation-then-read; one-to-one on the
  // truncated domain.
  virtual size_t f2_bits() const = 0;
  Scalar f2_map(BytesView bits) const;

  // Truncate arbitrary input into F1's domain (low f1_bits() bits kept).
  Bytes f1_truncate(BytesView in) const;
};

Bytes truncate_bits(BytesView in, size_t bits);

const Group& test_group();
const Group& p256_group();
// Lookup by id ("test101" or "p256"); throws ConfigError on unknown id.
const Group& group_by_id(std::string_view id);

}  // namespace lldc::crypto
