#pragma once

#include "lldc/crypto.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lldc::setup {

using crypto::Element;
using crypto::Group;
using crypto::KeyPair;
using crypto::Scalar;
using crypto::SharedSecret;

struct RosterEntry {
  uint32_t id = 0;
  Element pub;
};

struct Roster {
  std::vector<RosterEntry> clients;
  std::vector<RosterEntry> guards;  // order fixes the shuffle chain
  Element relay_pub;

  const RosterEntry* find_client(uint32_t id) const;
  const RosterEntry* find_client_by_key(const Element& pub) const;
  const RosterEntry* find_guard(uint32_t id) const;
};

// Line-oriented roster file: `role id base64-public-key`, role in
// {client, guard, relay}; guard lines in chain order.
Roster parse_roster(const Group& g, std::string_view text);
std::string format_roster(const Roster& roster);

struct AuthMessage {
  Element long_term_pub;
  Element ephemeral_pub;
  Bytes signature;  // over the ephemeral key, by the long-term key
};

struct ShuffleLink {
  uint32_t guard_id = 0;
  std::vector<Element> input_keys;
  std::vector<Element> output_keys;
  Element input_base;
  Element output_base;
};

// Never leaves the producing guard.
struct ShuffleSecret {
  Scalar blinding;
  std::vector<size_t> permutation;  // output position of input key i
};

struct ShuffleTranscript {
  std::vector<ShuffleLink> links;  // one per guard, chain order
  std::vector<Element> final_schedule;
  Element final_base;
  std::vector<Bytes> signatures;  // indexed by guard chain position
  Bytes proof_ext;                // extension slot for a full shuffle proof
};

struct Schedule {
  std::vector<Element> slots;  // shuffled blinded ephemeral keys, slot order
  Element base;
  uint64_t epoch = 0;
};

// The byte string every guard signs and every client verifies.
Bytes schedule_message(const std::vector<Element>& slots, const Element& base);

// -- Protocol step 1 -------------------------------------------------------
std::pair<KeyPair, AuthMessage> client_authenticate(const Group& g,
                                                    const Roster& roster,
                                                    const KeyPair& long_term,
                                                    Prng& rng);
// Relay side; returns the roster client id. UnknownClient / BadSignature.
uint32_t relay_check_auth(const Group& g, const Roster& roster,
                          const AuthMessage& msg);

// -- Protocol step 2 -------------------------------------------------------
// Blind every key with a fresh scalar, permute, advance the base point.
// force_unit_blinding is a test hook (pure permutation).
std::pair<ShuffleLink, ShuffleSecret> guard_shuffle(const Group& g,
                                                    const std::vector<Element>& keys,
                                                    const Element& base,
                                                    uint32_t guard_id, Prng& rng,
                                                    bool force_unit_blinding = false);

// Chain integrity across adjacent links; FrameError on violation.
void verify_chain(const Group& g, const ShuffleTranscript& t);

// The guard re-derives its own link from its retained secret and signs
// (schedule || base) only on an exact match. TranscriptTampered otherwise.
Bytes guard_verify_and_sign(const Group& g, const ShuffleTranscript& t,
                            uint32_t guard_id, const KeyPair& guard,
                            const ShuffleSecret& secret);

// -- Protocol step 3 -------------------------------------------------------
// Returns the slot index owned by this ephemeral key.
size_t client_accept_schedule(const Group& g, const Schedule& schedule,
                              const std::vector<Bytes>& signatures,
                              const Roster& roster, const KeyPair& ephemeral,
                              const std::set<uint32_t>& trusted_guards);

// -- Protocol step 4 -------------------------------------------------------
using SecretMatrix = std::vector<std::vector<SharedSecret>>;  // [client][guard]

SecretMatrix derive_secrets_client_side(const Group& g,
                                        const std::vector<KeyPair>& ephemerals,
                                        const std::vector<RosterEntry>& guards,
                                        const std::vector<uint32_t>& client_ids);
SecretMatrix derive_secrets_guard_side(const Group& g,
                                       const std::vector<KeyPair>& guard_keys,
                                       const std::vector<Element>& ephemeral_pubs,
                                       const std::vector<uint32_t>& client_ids,
                                       const std::vector<uint32_t>& guard_ids);

// -- Whole-protocol orchestration, in-process ------------------------------
// Runs Protocol 1 with all parties local: shuffle chain, transcript
// signing, schedule assembly, per-slot relay secrets. The simulator runs
// the same steps over messages; this form backs the library tests and the
// acceptance suite.
struct LocalSetupResult {
  Schedule schedule;
  ShuffleTranscript transcript;
  std::vector<Bytes> slot_secrets;             // relay side, indexed by slot
  std::vector<Bytes> encrypted_slot_secrets;   // broadcast form, per slot
  std::vector<size_t> client_slots;            // client index -> slot index
  SecretMatrix client_secrets;                 // client-side derivation
  SecretMatrix guard_secrets;                  // guard-side derivation
};

LocalSetupResult run_setup_local(const Group& g, const Roster& roster,
                                 const std::vector<KeyPair>& client_long_terms,
                                 const std::vector<KeyPair>& guard_keys,
                                 uint64_t epoch, Prng& rng);

}  // namespace lldc::setup
