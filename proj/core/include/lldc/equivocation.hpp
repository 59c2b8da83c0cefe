#pragma once

#include "lldc/crypto.hpp"

#include <map>
#include <optional>
#include <vector>

namespace lldc::equivocation {

using crypto::Element;
using crypto::Group;
using crypto::Pad;
using crypto::Scalar;

// Running hash over every downstream message, h' = H(h || z), h0 = 0.
struct DownstreamHistory {
  Bytes digest = Bytes(kHashLen, 0);
  uint64_t length = 0;
  friend bool operator==(const DownstreamHistory&, const DownstreamHistory&) = default;
};

DownstreamHistory history_update(const DownstreamHistory& h, BytesView z);

// The owner's per-round blinding. key_seed sits in F1's domain; the
// actual XOR mask is its hash-counter expansion to cell width.
struct BlindedCell {
  Bytes x_prime;
  Bytes key;       // the full-width mask k
  Bytes key_seed;  // F1-embeddable seed the relay recovers
};

Bytes blinding_mask(const Group& g, BytesView key_seed, size_t cell_bits);
BlindedCell blind_with_mask(BytesView x, BytesView mask, Bytes key_seed = {});
BlindedCell owner_blind(const Group& g, BytesView x, Prng& rng);

// Sum of F2(H(p)) over a round's pads.
Scalar pad_exponent(const Group& g, const std::vector<Pad>& pads);
Bytes pad_hash(const Pad& pad);

// kappa_i: F1(h)^e for bystanders, times F1(key_seed) for the owner.
Element client_tag(const Group& g, const std::vector<Pad>& pads,
                   const DownstreamHistory& h, bool is_owner, BytesView key_seed);
// sigma_j = -sum_i F2(H(p_ij)).
Scalar guard_tag(const Group& g, const std::vector<Pad>& pads);

// K = F1(h_R)^(sum sigma) * prod kappa. Equal histories make K collapse
// to F1(key_seed); the seed comes back exactly. A K outside F1's range
// throws HistoryMismatch; a wrong-but-in-range K surfaces later as an
// HMAC failure, indistinguishable from disruption at this layer.
Bytes relay_recover_key(const Group& g, const DownstreamHistory& h_relay,
                        const std::vector<Scalar>& sigmas,
                        const std::vector<Element>& kappas);

// -- Hash-reveal blame (kappa/sigma corruption) ------------------------------

// Each entity reveals the H(p_ij) values behind its tag; hash-width only,
// pads never leave their owners.
struct HashReveal {
  uint32_t entity_id = 0;
  bool is_guard = false;
  uint64_t round = 0;
  std::vector<Bytes> hashes;  // client: guard order; guard: client order
  Bytes signature;
};

Bytes hash_reveal_message(const HashReveal& r);
HashReveal make_hash_reveal(const Group& g, uint32_t entity_id, bool is_guard,
                            uint64_t round, const std::vector<Pad>& pads,
                            const Scalar& signing_key);

struct BlameResult {
  enum Kind {
    kNoFault,
    kExcludedClient,
    kExcludedGuard,
    kPairMismatch,  // escalate (client_id, guard_id) to the secret reveal
    kAmbiguous,     // several owner-shaped tags, none provable; convict nobody
  } kind = kNoFault;
  uint32_t entity = 0;
  uint32_t pair_client = 0;
  uint32_t pair_guard = 0;
  std::string detail;
};

struct BlameInputs {
  DownstreamHistory h_snapshot;  // relay history for the disputed round
  std::vector<uint32_t> client_ids;
  std::vector<uint32_t> guard_ids;
  std::map<uint32_t, Element> recorded_kappas;
  std::map<uint32_t, Scalar> recorded_sigmas;
  std::map<uint32_t, HashReveal> client_reveals;
  std::map<uint32_t, HashReveal> guard_reveals;
  // y_raw ^ true frame, known once the retransmission produced ground
  // truth; lets the relay tell the genuine owner from a tag forger.
  std::optional<Bytes> observed_mask;
  size_t cell_bits = 0;
};

// Recomputes every sigma and kappa from the revealed hashes. A mismatched
// guard is convicted outright. A mismatched client is cleared only if its
// kappa surplus is a well-formed F1 image whose expansion reproduces the
// observed blinding mask, which exactly one honest owner satisfies.
// Surviving disagreement between a client's and a guard's revealed hashes
// escalates to the pair secret reveal.
BlameResult equivocation_blame(const Group& g, const BlameInputs& in);

}  // namespace lldc::equivocation
