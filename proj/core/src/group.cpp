#include "lldc/group.hpp"

#include "lldc/errors.hpp"
#include "lldc/hash.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/obj_mac.h>

#include <algorithm>
#include <array>
#include <cassert>
#include <memory>
#include <mutex>

namespace lldc::crypto {

Bytes truncate_bits(BytesView in, size_t bits) {
  size_t nbytes = (bits + 7) / 8;
  Bytes out(nbytes, 0);
  for (size_t i = 0; i < nbytes && i < in.size(); ++i) out[i] = in[i];
  if (bits % 8) out[nbytes - 1] &= static_cast<uint8_t>((1u << (bits % 8)) - 1);
  return out;
}

Bytes Group::f1_truncate(BytesView in) const { return truncate_bits(in, f1_bits()); }

Scalar Group::f2_map(BytesView bits) const {
  Bytes t = truncate_bits(bits, f2_bits());
  return scalar_reduce(t);  // value < q by construction of f2_bits
}

Scalar Group::random_scalar(Prng& rng) const {
  for (;;) {
    Bytes wide = rng.bytes(scalar_size() + 8);
    Scalar s = scalar_reduce(wide);
    if (!(s == scalar_zero())) return s;
  }
}

// ---------------------------------------------------------------------------
// Test group: the order-101 subgroup of Z_607^*, generator 122 = 3^6 mod 607.
// Small enough that discrete logs fall to exhaustive search.

namespace {

constexpr uint32_t kTestP = 607;
constexpr uint32_t kTestQ = 101;
constexpr uint32_t kTestG = 122;

class TestGroup final : public Group {
 public:
  TestGroup() {
    // Enumerate the subgroup once; doubles as an order check.
    uint32_t v = 1;
    for (uint32_t i = 0; i < kTestQ; ++i) {
      powers_[i] = v;
      v = v * kTestG % kTestP;
    }
    assert(v == 1);
    sorted_ = powers_;
    std::sort(sorted_.begin(), sorted_.end());
    assert(std::unique(sorted_.begin(), sorted_.end()) == sorted_.end());
  }

  std::string id() const override { return "test101"; }
  size_t element_size() const override { return 2; }
  size_t scalar_size() const override { return 1; }
  uint64_t order_u64() const override { return kTestQ; }

  Element generator() const override { return enc(kTestG); }
  Element identity() const override { return enc(1); }

  bool valid_element(const Element& e) const override {
    if (e.data.size() != 2) return false;
    uint32_t v = dec_raw(e);
    return std::binary_search(sorted_.begin(), sorted_.end(), v);
  }

  Element mul(const Element& a, const Element& b) const override {
    return enc(dec(a) * dec(b) % kTestP);
  }

  Element inv(const Element& a) const override {
    // a^(q-1) inverts inside an order-q subgroup
    return exp_u(dec(a), kTestQ - 1);
  }

  Element exp(const Element& base, const Scalar& e) const override {
    return exp_u(dec(base), scalar_as_u64(e));
  }

  Scalar scalar_zero() const override { return {Bytes{0}}; }
  Scalar scalar_from_u64(uint64_t v) const override {
    return {Bytes{static_cast<uint8_t>(v % kTestQ)}};
  }
  uint64_t scalar_as_u64(const Scalar& s) const override {
    if (s.data.size() != 1 || s.data[0] >= kTestQ) throw ProtocolError("bad test scalar");
    return s.data[0];
  }
  Scalar scalar_add(const Scalar& a, const Scalar& b) const override {
    return scalar_from_u64(scalar_as_u64(a) + scalar_as_u64(b));
  }
  Scalar scalar_sub(const Scalar& a, const Scalar& b) const override {
    return scalar_from_u64(scalar_as_u64(a) + kTestQ - scalar_as_u64(b));
  }
  Scalar scalar_mul(const Scalar& a, const Scalar& b) const override {
    return scalar_from_u64(scalar_as_u64(a) * scalar_as_u64(b));
  }
  Scalar scalar_neg(const Scalar& a) const override {
    return scalar_from_u64(kTestQ - scalar_as_u64(a));
  }
  Scalar scalar_reduce(BytesView wide) const override {
    uint64_t acc = 0;
    // little-endian fold; 256 ≡ 54 (mod 101) handled by iterating high→low
    for (size_t i = wide.size(); i-- > 0;) acc = (acc * 256 + wide[i]) % kTestQ;
    return scalar_from_u64(acc);
  }

  size_t f1_bits() const override { return 6; }  // 64 <= 101
  size_t f2_bits() const override { return 6; }

  Element f1_map(BytesView bits) const override {
    if (bits.size() != 1 || bits[0] >= 64) throw MapRangeError();
    return enc(sorted_[bits[0]]);
  }

  Bytes f1_inv(const Element& e) const override {
    uint32_t v = dec(e);
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), v);
    if (it == sorted_.end() || *it != v) throw MapRangeError();
    auto idx = static_cast<size_t>(it - sorted_.begin());
    if (idx >= 64) throw MapRangeError();
    return Bytes{static_cast<uint8_t>(idx)};
  }

 private:
  std::array<uint32_t, kTestQ> powers_{};
  std::array<uint32_t, kTestQ> sorted_{};

  static Element enc(uint32_t v) {
    Bytes b;
    put_u16le(b, static_cast<uint16_t>(v));
    return {std::move(b)};
  }
  static uint32_t dec_raw(const Element& e) { return get_u16le(e.data, 0); }
  uint32_t dec(const Element& e) const {
    if (!valid_element(e)) throw ProtocolError("element outside test group");
    return dec_raw(e);
  }
  Element exp_u(uint32_t base, uint64_t e) const {
    uint64_t acc = 1, b = base;
    e %= kTestQ;  // subgroup order
    while (e) {
      if (e & 1) acc = acc * b % kTestP;
      b = b * b % kTestP;
      e >>= 1;
    }
    return enc(static_cast<uint32_t>(acc));
  }
};

// ---------------------------------------------------------------------------
// P-256: prime-order curve via OpenSSL. Elements are 33-byte compressed
// SEC1 encodings; the identity is encoded as 33 zero bytes. F1 is the
// Koblitz embedding x = m*256 + i with the first on-curve x and even y.

struct BnCtxFree {
  void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct BnFree {
  void operator()(BIGNUM* p) const { BN_free(p); }
};
struct PointFree {
  void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxFree>;
using BnPtr = std::unique_ptr<BIGNUM, BnFree>;
using PointPtr = std::unique_ptr<EC_POINT, PointFree>;

BN_CTX* tls_ctx() {
  thread_local BnCtxPtr ctx(BN_CTX_new());
  return ctx.get();
}

class P256Group final : public Group {
 public:
  P256Group() : group_(EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1)) {
    if (!group_) throw ProtocolError("p256 init failed");
    order_.reset(BN_new());
    EC_GROUP_get_order(group_, order_.get(), tls_ctx());
  }
  ~P256Group() override { EC_GROUP_free(group_); }

  std::string id() const override { return "p256"; }
  size_t element_size() const override { return 33; }
  size_t scalar_size() const override { return 32; }
  uint64_t order_u64() const override { return 0; }

  Element generator() const override {
    return enc_point(EC_GROUP_get0_generator(group_));
  }

  Element identity() const override { return {Bytes(33, 0)}; }

  bool valid_element(const Element& e) const override {
    if (e.data.size() != 33) return false;
    if (is_zero(e.data)) return true;
    PointPtr p(EC_POINT_new(group_));
    return EC_POINT_oct2point(group_, p.get(), e.data.data(), e.data.size(),
                              tls_ctx()) == 1;
  }

  Element mul(const Element& a, const Element& b) const override {
    PointPtr pa = dec_point(a), pb = dec_point(b), r(EC_POINT_new(group_));
    EC_POINT_add(group_, r.get(), pa.get(), pb.get(), tls_ctx());
    return enc_point(r.get());
  }

  Element inv(const Element& a) const override {
    PointPtr p = dec_point(a);
    EC_POINT_invert(group_, p.get(), tls_ctx());
    return enc_point(p.get());
  }

  Element exp(const Element& base, const Scalar& e) const override {
    PointPtr pb = dec_point(base), r(EC_POINT_new(group_));
    BnPtr be = dec_scalar(e);
    EC_POINT_mul(group_, r.get(), nullptr, pb.get(), be.get(), tls_ctx());
    return enc_point(r.get());
  }

  Scalar scalar_zero() const override { return {Bytes(32, 0)}; }

  Scalar scalar_from_u64(uint64_t v) const override {
    BnPtr b(BN_new());
    BN_set_word(b.get(), v);
    return enc_scalar(b.get());
  }

  uint64_t scalar_as_u64(const Scalar& s) const override {
    BnPtr b = dec_scalar(s);
    if (BN_num_bytes(b.get()) > 8) throw ProtocolError("scalar exceeds u64");
    return BN_get_word(b.get());
  }

  Scalar scalar_add(const Scalar& a, const Scalar& b) const override {
    return mod_op(a, b, [](BIGNUM* r, const BIGNUM* x, const BIGNUM* y,
                           const BIGNUM* m, BN_CTX* c) { BN_mod_add(r, x, y, m, c); });
  }
  Scalar scalar_sub(const Scalar& a, const Scalar& b) const override {
    return mod_op(a, b, [](BIGNUM* r, const BIGNUM* x, const BIGNUM* y,
                           const BIGNUM* m, BN_CTX* c) { BN_mod_sub(r, x, y, m, c); });
  }
  Scalar scalar_mul(const Scalar& a, const Scalar& b) const override {
    return mod_op(a, b, [](BIGNUM* r, const BIGNUM* x, const BIGNUM* y,
                           const BIGNUM* m, BN_CTX* c) { BN_mod_mul(r, x, y, m, c); });
  }
  Scalar scalar_neg(const Scalar& a) const override {
    return scalar_sub(scalar_zero(), a);
  }

  Scalar scalar_reduce(BytesView wide) const override {
    BnPtr v(BN_lebin2bn(wide.data(), static_cast<int>(wide.size()), nullptr));
    BnPtr r(BN_new());
    BN_mod(r.get(), v.get(), order_.get(), tls_ctx());
    return enc_scalar(r.get());
  }

  size_t f1_bits() const override { return 240; }  // 30 bytes; 8 bits of search room
  size_t f2_bits() const override { return 248; }  // 31 bytes < order

  Element f1_map(BytesView bits) const override {
    if (bits.size() != f1_bytes()) throw MapRangeError();
    BnPtr m(BN_lebin2bn(bits.data(), static_cast<int>(bits.size()), nullptr));
    BnPtr x(BN_new());
    BN_lshift(x.get(), m.get(), 8);
    PointPtr p(EC_POINT_new(group_));
    for (int i = 0; i < 256; ++i) {
      if (EC_POINT_set_compressed_coordinates(group_, p.get(), x.get(), 0,
                                              tls_ctx()) == 1)
        return enc_point(p.get());
      BN_add_word(x.get(), 1);
    }
    throw MapRangeError();  // 2^-256 event
  }

  Bytes f1_inv(const Element& e) const override {
    if (is_zero(e.data)) throw MapRangeError();
    PointPtr p = dec_point(e);
    BnPtr x(BN_new()), y(BN_new());
    EC_POINT_get_affine_coordinates(group_, p.get(), x.get(), y.get(), tls_ctx());
    BnPtr m(BN_new());
    BN_rshift(m.get(), x.get(), 8);
    Bytes out(f1_bytes());
    if (BN_num_bytes(m.get()) > static_cast<int>(out.size())) throw MapRangeError();
    BN_bn2lebinpad(m.get(), out.data(), static_cast<int>(out.size()));
    // Canonical-range check: the embedding of m must reproduce e exactly.
    if (!(f1_map(out) == e)) throw MapRangeError();
    return out;
  }

 private:
  EC_GROUP* group_;
  BnPtr order_;

  Element enc_point(const EC_POINT* p) const {
    if (EC_POINT_is_at_infinity(group_, p)) return identity();
    Bytes out(33);
    size_t n = EC_POINT_point2oct(group_, p, POINT_CONVERSION_COMPRESSED, out.data(),
                                  out.size(), tls_ctx());
    if (n != 33) throw ProtocolError("p256 encode failed");
    return {std::move(out)};
  }

  PointPtr dec_point(const Element& e) const {
    PointPtr p(EC_POINT_new(group_));
    if (e.data.size() != 33) throw ProtocolError("bad p256 element");
    if (is_zero(e.data)) {
      EC_POINT_set_to_infinity(group_, p.get());
      return p;
    }
    if (EC_POINT_oct2point(group_, p.get(), e.data.data(), e.data.size(), tls_ctx()) != 1)
      throw ProtocolError("bad p256 element");
    return p;
  }

  Scalar enc_scalar(const BIGNUM* b) const {
    Bytes out(32);
    BN_bn2binpad(b, out.data(), 32);
    return {std::move(out)};
  }

  BnPtr dec_scalar(const Scalar& s) const {
    if (s.data.size() != 32) throw ProtocolError("bad p256 scalar");
    return BnPtr(BN_bin2bn(s.data.data(), 32, nullptr));
  }

  template <typename F>
  Scalar mod_op(const Scalar& a, const Scalar& b, F f) const {
    BnPtr ba = dec_scalar(a), bb = dec_scalar(b), r(BN_new());
    f(r.get(), ba.get(), bb.get(), order_.get(), tls_ctx());
    return enc_scalar(r.get());
  }
};

}  // namespace

const Group& test_group() {
  static TestGroup g;
  return g;
}

const Group& p256_group() {
  static P256Group g;
  return g;
}

const Group& group_by_id(std::string_view id) {
  if (id == "test101") return test_group();
  if (id == "p256") return p256_group();
  throw ConfigError("unknown group id: " + std::string(id));
}

}  // namespace lldc::crypto
