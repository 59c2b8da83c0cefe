#pragma once

#include "lldc/group.hpp"
#include "lldc/hash.hpp"
#include "lldc/rng.hpp"

namespace lldc::crypto {

struct KeyPair {
  Scalar priv;
  Element pub;
};

// DH-derived seed shared by one (client, guard) pair.
struct SharedSecret {
  Bytes seed;  // 32 bytes
  uint32_t client_id = 0;
  uint32_t guard_id = 0;
};

struct Pad {
  Bytes bits;  // length_bits/8 bytes
  uint64_t round = 0;
  uint32_t client_id = 0;
  uint32_t guard_id = 0;
};

// Private scalar uniform in [1, q); public = g^private.
KeyPair keygen(const Group& g, Prng& rng);

// seed = KDF(peer^own). Symmetric in the two sides of the exchange.
// Throws DegenerateKey on an identity peer key.
SharedSecret dh_derive(const Group& g, const Scalar& own_private,
                       const Element& peer_public, uint32_t client_id = 0,
                       uint32_t guard_id = 0);

// Hash-counter stream: block b of round t is H(tag || seed || t || b).
// Deterministic and seekable down to single bits, which the disruption
// blame protocol needs.
Pad prg_pad(const SharedSecret& s, uint64_t round, size_t length_bits);
int pad_bit_at(const SharedSecret& s, uint64_t round, size_t k);

// Schnorr over the group; deterministic nonce, so no rng parameter.
// Signature layout: element(R) || scalar(s).
Bytes sign(const Group& g, const Scalar& priv, BytesView message);
// Malformed input yields false, never an exception.
bool verify(const Group& g, const Element& pub, BytesView message, BytesView sig);

// Hybrid encryption: ElGamal KEM + hash-counter stream + HMAC,
// encrypt-then-MAC. `base` overrides the generator (the schedule's
// shuffled keys live under the shuffled base point).
Bytes pke_encrypt(const Group& g, const Element& pub, BytesView plaintext, Prng& rng);
Bytes pke_encrypt(const Group& g, const Element& pub, BytesView plaintext, Prng& rng,
                  const Element& base);
Bytes pke_decrypt(const Group& g, const Scalar& priv, BytesView ciphertext);

// Full-width HMAC-SHA256, the trap primitive of the disruption layer.
inline Bytes hmac_tag(BytesView key, BytesView message) {
  return hmac_sha256(key, message);
}

// Stretches a short seed to length_bits via the hash counter; used for the
// equivocation blinding mask and the pre-agreed disruption mask.
Bytes expand_key(BytesView seed, size_t length_bits, std::string_view domain);

// Chaum-Pedersen proof of discrete-log equality across bases g and base2.
struct DleqProof {
  Element commit_g;
  Element commit_b;
  Scalar response;
};
DleqProof dleq_prove(const Group& g, const Scalar& x, const Element& base2, Prng& rng);
bool dleq_verify(const Group& g, const Element& pub_g, const Element& base2,
                 const Element& pub_b, const DleqProof& proof);

Bytes serialize_dleq(const Group& g, const DleqProof& p);
DleqProof parse_dleq(const Group& g, BytesView b);

}  // namespace lldc::crypto
