#include "lldc/crypto.hpp"

#include "lldc/errors.hpp"

#include <stdexcept>

namespace lldc::crypto {

namespace {
const std::string_view kKdfTag = "lldc/kdf/v1";
const std::string_view kPadTag = "lldc/pad/v1";
const std::string_view kNonceTag = "lldc/schnorr/nonce/v1";
const std::string_view kChalTag = "lldc/schnorr/chal/v1";
const std::string_view kPkeTag = "lldc/pke/v1";
const std::string_view kPkeStreamTag = "lldc/pke/stream/v1";
const std::string_view kDleqTag = "lldc/dleq/chal/v1";
}  // namespace

KeyPair keygen(const Group& g, Prng& rng) {
  Scalar x = g.random_scalar(rng);
  return {x, g.exp_g(x)};
}

SharedSecret dh_derive(const Group& g, const Scalar& own_private,
                       const Element& peer_public, uint32_t client_id,
                       uint32_t guard_id) {
  if (!g.valid_element(peer_public) || g.is_identity(peer_public))
    throw DegenerateKey();
  Element shared = g.exp(peer_public, own_private);
  Bytes seed = sha256({from_string(kKdfTag), shared.data});
  return {std::move(seed), client_id, guard_id};
}

static Bytes pad_block(BytesView seed, uint64_t round, uint64_t block) {
  Bytes suffix;
  put_u64le(suffix, round);
  put_u64le(suffix, block);
  return sha256({from_string(kPadTag), seed, suffix});
}

Pad prg_pad(const SharedSecret& s, uint64_t round, size_t length_bits) {
  if (length_bits % 8) throw std::invalid_argument("pad length not byte-aligned");
  Bytes bits;
  bits.reserve(length_bits / 8);
  uint64_t block = 0;
  while (bits.size() < length_bits / 8) {
    Bytes b = pad_block(s.seed, round, block++);
    size_t take = std::min(b.size(), length_bits / 8 - bits.size());
    bits.insert(bits.end(), b.begin(), b.begin() + static_cast<long>(take));
  }
  return {std::move(bits), round, s.client_id, s.guard_id};
}

int pad_bit_at(const SharedSecret& s, uint64_t round, size_t k) {
  Bytes block = pad_block(s.seed, round, k / (kHashLen * 8));
  return bit_at(block, k % (kHashLen * 8));
}

Bytes sign(const Group& g, const Scalar& priv, BytesView message) {
  // Deterministic nonce: two hash blocks reduced mod q.
  Bytes n1 = sha256({from_string(kNonceTag), priv.data, message});
  Bytes n2 = sha256({n1, priv.data});
  Bytes wide = concat({n1, n2});
  Scalar nonce = g.scalar_reduce(wide);
  if (nonce == g.scalar_zero()) nonce = g.scalar_from_u64(1);
  Element commit = g.exp_g(nonce);
  Element pub = g.exp_g(priv);
  Bytes gid = from_string(g.id());
  Scalar c =
      g.scalar_reduce(sha256({from_string(kChalTag), gid, commit.data, pub.data, message}));
  Scalar s = g.scalar_add(nonce, g.scalar_mul(c, priv));
  return concat({commit.data, s.data});
}

bool verify(const Group& g, const Element& pub, BytesView message, BytesView sig) {
  if (sig.size() != g.element_size() + g.scalar_size()) return false;
  Element commit{Bytes(sig.begin(), sig.begin() + static_cast<long>(g.element_size()))};
  Scalar s{Bytes(sig.begin() + static_cast<long>(g.element_size()), sig.end())};
  if (!g.valid_element(commit) || !g.valid_element(pub)) return false;
  Bytes gid = from_string(g.id());
  Scalar c;
  try {
    c = g.scalar_reduce(
        sha256({from_string(kChalTag), gid, commit.data, pub.data, message}));
    Element lhs = g.exp_g(s);
    Element rhs = g.mul(commit, g.exp(pub, c));
    return lhs == rhs;
  } catch (const ProtocolError&) {
    return false;
  }
}

Bytes expand_key(BytesView seed, size_t length_bits, std::string_view domain) {
  if (length_bits % 8) throw std::invalid_argument("expand length not byte-aligned");
  Bytes out;
  out.reserve(length_bits / 8);
  uint64_t block = 0;
  while (out.size() < length_bits / 8) {
    Bytes ctr;
    put_u64le(ctr, block++);
    Bytes b = sha256({from_string(domain), seed, ctr});
    size_t take = std::min(b.size(), length_bits / 8 - out.size());
    out.insert(out.end(), b.begin(), b.begin() + static_cast<long>(take));
  }
  return out;
}

Bytes pke_encrypt(const Group& g, const Element& pub, BytesView plaintext, Prng& rng) {
  return pke_encrypt(g, pub, plaintext, rng, g.generator());
}

Bytes pke_encrypt(const Group& g, const Element& pub, BytesView plaintext, Prng& rng,
                  const Element& base) {
  Scalar y = g.random_scalar(rng);
  Element c1 = g.exp(base, y);
  Element shared = g.exp(pub, y);
  Bytes key = sha256({from_string(kPkeTag), c1.data, shared.data});
  Bytes stream = expand_key(key, plaintext.size() * 8, kPkeStreamTag);
  Bytes body = plaintext ^ BytesView(stream);
  Bytes tag = hmac_sha256(key, body);
  return concat({c1.data, tag, body});
}

Bytes pke_decrypt(const Group& g, const Scalar& priv, BytesView ciphertext) {
  size_t head = g.element_size() + kHashLen;
  if (ciphertext.size() < head) throw DecryptFailed();
  Element c1{Bytes(ciphertext.begin(), ciphertext.begin() + static_cast<long>(g.element_size()))};
  if (!g.valid_element(c1)) throw DecryptFailed();
  BytesView tag = ciphertext.subspan(g.element_size(), kHashLen);
  BytesView body = ciphertext.subspan(head);
  Element shared = g.exp(c1, priv);
  Bytes key = sha256({from_string(kPkeTag), c1.data, shared.data});
  Bytes expect = hmac_sha256(key, body);
  if (!std::equal(expect.begin(), expect.end(), tag.begin(), tag.end()))
    throw DecryptFailed();
  Bytes stream = expand_key(key, body.size() * 8, kPkeStreamTag);
  return body ^ BytesView(stream);
}

DleqProof dleq_prove(const Group& g, const Scalar& x, const Element& base2, Prng& rng) {
  Scalar w = g.random_scalar(rng);
  Element a = g.exp_g(w);
  Element b = g.exp(base2, w);
  Element pub_g = g.exp_g(x);
  Element pub_b = g.exp(base2, x);
  Scalar c = g.scalar_reduce(sha256({from_string(kDleqTag), g.generator().data,
                                     base2.data, pub_g.data, pub_b.data, a.data,
                                     b.data}));
  Scalar z = g.scalar_add(w, g.scalar_mul(c, x));
  return {a, b, z};
}

bool dleq_verify(const Group& g, const Element& pub_g, const Element& base2,
                 const Element& pub_b, const DleqProof& proof) {
  if (!g.valid_element(pub_g) || !g.valid_element(pub_b) ||
      !g.valid_element(proof.commit_g) || !g.valid_element(proof.commit_b))
    return false;
  try {
    Scalar c = g.scalar_reduce(sha256({from_string(kDleqTag), g.generator().data,
                                       base2.data, pub_g.data, pub_b.data,
                                       proof.commit_g.data, proof.commit_b.data}));
    bool ok1 = g.exp_g(proof.response) == g.mul(proof.commit_g, g.exp(pub_g, c));
    bool ok2 =
        g.exp(base2, proof.response) == g.mul(proof.commit_b, g.exp(pub_b, c));
    return ok1 && ok2;
  } catch (const ProtocolError&) {
    return false;
  }
}

Bytes serialize_dleq(const Group& g, const DleqProof& p) {
  (void)g;
  return concat({p.commit_g.data, p.commit_b.data, p.response.data});
}

DleqProof parse_dleq(const Group& g, BytesView b) {
  size_t es = g.element_size(), ss = g.scalar_size();
  if (b.size() != 2 * es + ss) throw FrameError("bad dleq encoding");
  DleqProof p;
  p.commit_g.data.assign(b.begin(), b.begin() + static_cast<long>(es));
  p.commit_b.data.assign(b.begin() + static_cast<long>(es),
                         b.begin() + static_cast<long>(2 * es));
  p.response.data.assign(b.begin() + static_cast<long>(2 * es), b.end());
  return p;
}

}  // namespace lldc::crypto
