#pragma once

#include "lldc/crypto.hpp"
#include "lldc/dcnet.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lldc::disruption {

using crypto::Element;
using crypto::Group;
using crypto::Scalar;
using crypto::SharedSecret;

// Relay-and-owner secret for one slot; indexed by slot, never by client.
struct SlotSecret {
  size_t slot = 0;
  Bytes r;  // 32 bytes
};

// True when the cell's trap tag checks out. Idle slots carry no trap and
// pass vacuously; a false return is the protocol signal to set the
// retransmit flag, not an error.
bool verify_trap(const dcnet::ParsedCell& cell);

// Smallest position where the true frame has 0 and the disrupted one has
// 1; nullopt when every flip is 1->0 (untraceable by design). FrameError
// on length mismatch.
std::optional<size_t> find_flipped_zero(BytesView x, BytesView x_bar);

// 5.4: the optional pre-agreed mask; involutive.
Bytes apply_premask(BytesView x, BytesView slot_secret, uint64_t round,
                    const dcnet::CellConfig& cfg);

// -- Signed bit reveals (protocol step 4) -----------------------------------

struct BitReveal {
  uint32_t entity_id = 0;
  bool is_guard = false;
  uint64_t round = 0;
  uint32_t position = 0;
  std::vector<uint8_t> bits;  // client: one per guard; guard: one per client
  Bytes signature;
};

Bytes bit_reveal_message(const BitReveal& r);
Bytes blame_request_message(uint64_t round, uint32_t position);

BitReveal make_reveal(const Group& g, uint32_t entity_id, bool is_guard,
                      uint64_t round, uint32_t position,
                      const std::vector<SharedSecret>& secrets,
                      const Scalar& signing_key);
bool verify_reveal(const Group& g, const BitReveal& r, const Element& pub);

// -- Step 5: isolate the liar or the suspect pair ----------------------------

struct IsolationOutcome {
  enum Kind {
    kExcluded,      // self-inconsistent reveal, immediate conviction
    kPair,          // cross mismatch between client and guard
    kInconsistent,  // no explanation; recorded ciphers do not support blame
  } kind = kInconsistent;
  uint32_t entity = 0;  // for kExcluded
  bool entity_is_guard = false;
  uint32_t client = 0;  // for kPair
  uint32_t guard = 0;
  std::string detail;
};

IsolationOutcome isolate_mismatch(const std::vector<uint32_t>& client_ids,
                                  const std::vector<uint32_t>& guard_ids,
                                  const std::map<uint32_t, BitReveal>& client_reveals,
                                  const std::map<uint32_t, BitReveal>& guard_reveals,
                                  const std::map<uint32_t, Bytes>& client_ciphers,
                                  const std::map<uint32_t, Bytes>& guard_ciphers,
                                  size_t position);

// -- Steps 6-7: shared-secret reveal with correctness proof ------------------

struct SecretReveal {
  uint32_t client_id = 0;
  uint32_t guard_id = 0;
  bool by_guard = false;
  Element dh_element;      // peer^own, the DH value behind r_ij
  crypto::DleqProof proof;  // own key and dh_element share one exponent
  Bytes signature;
};

Bytes secret_reveal_message(const Group& g, const SecretReveal& r);

// Produce a signed r_ij reveal with the correctness proof, no checks.
SecretReveal make_secret_reveal(const Group& g, bool is_guard, uint32_t client_id,
                                uint32_t guard_id, const crypto::KeyPair& own_key,
                                const Element& peer_pub, Prng& rng);

// Signature plus DLEQ validation of one side's reveal.
bool secret_reveal_valid(const Group& g, const SecretReveal& r,
                         const Element& revealer_pub, const Element& peer_pub);

// Rebuild the pair's shared secret from a revealed DH element, exactly as
// dh_derive would have; lets the relay recompute any pad of the pair.
crypto::SharedSecret secret_from_dh(const Element& dh_element);

// One party's answer to the pair accusation. Verifies the relay's
// countersignature and the counterpart's reveal signature, re-checks the
// claimed mismatch, and aborts (nullopt) if the evidence does not hold.
std::optional<SecretReveal> pair_respond(
    const Group& g, bool is_guard, uint32_t client_id, uint32_t guard_id,
    const crypto::KeyPair& own_key, const Element& peer_pub,
    const BitReveal& own_reveal, const BitReveal& counterpart_reveal,
    const Element& counterpart_pub, const Element& relay_pub,
    BytesView relay_countersignature, size_t own_index_in_counterpart,
    size_t counterpart_index_in_own, Prng& rng);

struct Verdict {
  enum Kind {
    kNoFault,
    kExcludedClient,
    kExcludedGuard,
    kUntraceable,
    kInconsistent,
  } kind = kNoFault;
  uint32_t entity = 0;
  std::string detail;
};

// Relay side: validate both proofs, recompute the pad bit from the
// revealed secret, convict whoever's claimed bit contradicts it.
// A refusal (nullopt) or an invalid proof convicts its party.
Verdict resolve_pair(const Group& g, uint32_t client_id, uint32_t guard_id,
                     const Element& client_ephemeral_pub, const Element& guard_pub,
                     const std::optional<SecretReveal>& from_client,
                     const std::optional<SecretReveal>& from_guard,
                     uint64_t round, size_t position, uint8_t client_claimed_bit,
                     uint8_t guard_claimed_bit);

// -- Audit record ------------------------------------------------------------

struct BlameTranscript {
  uint64_t trigger_round = 0;
  Bytes original_x;
  Bytes disrupted_x;
  std::optional<uint32_t> position;
  std::vector<BitReveal> reveals;
  std::optional<std::pair<uint32_t, uint32_t>> pair;
  std::vector<SecretReveal> secret_reveals;
  Verdict verdict;
  std::string to_json() const;
};

const char* verdict_name(Verdict::Kind k);

}  // namespace lldc::disruption
