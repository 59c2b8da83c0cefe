#include "lldc/disruption.hpp"

#include "lldc/errors.hpp"

#include <json.hpp>

namespace lldc::disruption {

namespace {
const std::string_view kRevealTag = "lldc/bitreveal/v1";
const std::string_view kBlameReqTag = "lldc/blamereq/v1";
const std::string_view kSecretRevealTag = "lldc/secretreveal/v1";
const std::string_view kKdfTag = "lldc/kdf/v1";  // must match crypto::dh_derive
}  // namespace

bool verify_trap(const dcnet::ParsedCell& cell) {
  if (cell.idle) return true;  // no trap on idle slots
  return cell.hmac_ok;
}

std::optional<size_t> find_flipped_zero(BytesView x, BytesView x_bar) {
  if (x.size() != x_bar.size()) throw FrameError("flip search length mismatch");
  for (size_t i = 0; i < x.size(); ++i) {
    uint8_t flipped_up = static_cast<uint8_t>(~x[i] & x_bar[i]);
    if (flipped_up) {
      for (size_t b = 0; b < 8; ++b)
        if (flipped_up >> b & 1) return i * 8 + b;
    }
  }
  return std::nullopt;
}

Bytes apply_premask(BytesView x, BytesView slot_secret, uint64_t round,
                    const dcnet::CellConfig& cfg) {
  return x ^ BytesView(dcnet::premask_bytes(slot_secret, round, cfg));
}

Bytes bit_reveal_message(const BitReveal& r) {
  Bytes msg = from_string(kRevealTag);
  put_u32le(msg, r.entity_id);
  msg.push_back(r.is_guard ? 1 : 0);
  put_u64le(msg, r.round);
  put_u32le(msg, r.position);
  put_u32le(msg, static_cast<uint32_t>(r.bits.size()));
  for (uint8_t b : r.bits) msg.push_back(b);
  return msg;
}

Bytes blame_request_message(uint64_t round, uint32_t position) {
  Bytes msg = from_string(kBlameReqTag);
  put_u64le(msg, round);
  put_u32le(msg, position);
  return msg;
}

BitReveal make_reveal(const Group& g, uint32_t entity_id, bool is_guard,
                      uint64_t round, uint32_t position,
                      const std::vector<SharedSecret>& secrets,
                      const Scalar& signing_key) {
  BitReveal r;
  r.entity_id = entity_id;
  r.is_guard = is_guard;
  r.round = round;
  r.position = position;
  for (auto& s : secrets)
    r.bits.push_back(static_cast<uint8_t>(crypto::pad_bit_at(s, round, position)));
  r.signature = crypto::sign(g, signing_key, bit_reveal_message(r));
  return r;
}

bool verify_reveal(const Group& g, const BitReveal& r, const Element& pub) {
  return crypto::verify(g, pub, bit_reveal_message(r), r.signature);
}

IsolationOutcome isolate_mismatch(const std::vector<uint32_t>& client_ids,
                                  const std::vector<uint32_t>& guard_ids,
                                  const std::map<uint32_t, BitReveal>& client_reveals,
                                  const std::map<uint32_t, BitReveal>& guard_reveals,
                                  const std::map<uint32_t, Bytes>& client_ciphers,
                                  const std::map<uint32_t, Bytes>& guard_ciphers,
                                  size_t position) {
  // Self-consistency: each entity's revealed bits must XOR to the bit it
  // actually sent. Violators are convicted on the spot. The slot owner
  // passes because the flip position was chosen where the plaintext bit
  // is zero.
  for (uint32_t cid : client_ids) {
    auto rit = client_reveals.find(cid);
    if (rit == client_reveals.end() || rit->second.bits.size() != guard_ids.size())
      return {IsolationOutcome::kExcluded, cid, false, 0, 0, "missing or malformed reveal"};
    int acc = 0;
    for (uint8_t b : rit->second.bits) acc ^= b & 1;
    if (acc != bit_at(client_ciphers.at(cid), position))
      return {IsolationOutcome::kExcluded, cid, false, 0, 0,
              "revealed bits contradict recorded ciphertext"};
  }
  for (uint32_t gid : guard_ids) {
    auto rit = guard_reveals.find(gid);
    if (rit == guard_reveals.end() || rit->second.bits.size() != client_ids.size())
      return {IsolationOutcome::kExcluded, gid, true, 0, 0, "missing or malformed reveal"};
    int acc = 0;
    for (uint8_t b : rit->second.bits) acc ^= b & 1;
    if (acc != bit_at(guard_ciphers.at(gid), position))
      return {IsolationOutcome::kExcluded, gid, true, 0, 0,
              "revealed bits contradict recorded ciphertext"};
  }

  for (size_t i = 0; i < client_ids.size(); ++i) {
    const auto& cr = client_reveals.at(client_ids[i]);
    for (size_t j = 0; j < guard_ids.size(); ++j) {
      const auto& gr = guard_reveals.at(guard_ids[j]);
      if ((cr.bits[j] & 1) != (gr.bits[i] & 1))
        return {IsolationOutcome::kPair, 0, false, client_ids[i], guard_ids[j],
                "pad bit disagreement"};
    }
  }
  return {IsolationOutcome::kInconsistent, 0, false, 0, 0,
          "all reveals consistent; recorded ciphertexts do not explain the flip"};
}

Bytes secret_reveal_message(const Group& g, const SecretReveal& r) {
  Bytes msg = from_string(kSecretRevealTag);
  put_u32le(msg, r.client_id);
  put_u32le(msg, r.guard_id);
  msg.push_back(r.by_guard ? 1 : 0);
  msg.insert(msg.end(), r.dh_element.data.begin(), r.dh_element.data.end());
  Bytes proof = crypto::serialize_dleq(g, r.proof);
  msg.insert(msg.end(), proof.begin(), proof.end());
  return msg;
}

std::optional<SecretReveal> pair_respond(
    const Group& g, bool is_guard, uint32_t client_id, uint32_t guard_id,
    const crypto::KeyPair& own_key, const Element& peer_pub,
    const BitReveal& own_reveal, const BitReveal& counterpart_reveal,
    const Element& counterpart_pub, const Element& relay_pub,
    BytesView relay_countersignature, size_t own_index_in_counterpart,
    size_t counterpart_index_in_own, Prng& rng) {
  // Evidence check: relay countersignature over the counterpart's signed
  // reveal, the counterpart's own signature, and the mismatch itself.
  Bytes counterpart_msg = bit_reveal_message(counterpart_reveal);
  if (!crypto::verify(g, relay_pub, counterpart_reveal.signature,
                      relay_countersignature))
    return std::nullopt;
  if (!crypto::verify(g, counterpart_pub, counterpart_msg, counterpart_reveal.signature))
    return std::nullopt;
  if (own_index_in_counterpart >= counterpart_reveal.bits.size() ||
      counterpart_index_in_own >= own_reveal.bits.size())
    return std::nullopt;
  if ((counterpart_reveal.bits[own_index_in_counterpart] & 1) ==
      (own_reveal.bits[counterpart_index_in_own] & 1))
    return std::nullopt;  // no mismatch: fabricated accusation, abort

  return make_secret_reveal(g, is_guard, client_id, guard_id, own_key, peer_pub, rng);
}

SecretReveal make_secret_reveal(const Group& g, bool is_guard, uint32_t client_id,
                                uint32_t guard_id, const crypto::KeyPair& own_key,
                                const Element& peer_pub, Prng& rng) {
  SecretReveal out;
  out.client_id = client_id;
  out.guard_id = guard_id;
  out.by_guard = is_guard;
  out.dh_element = g.exp(peer_pub, own_key.priv);
  out.proof = crypto::dleq_prove(g, own_key.priv, peer_pub, rng);
  out.signature = crypto::sign(g, own_key.priv, secret_reveal_message(g, out));
  return out;
}

bool secret_reveal_valid(const Group& g, const SecretReveal& r,
                         const Element& revealer_pub, const Element& peer_pub) {
  if (!crypto::verify(g, revealer_pub, secret_reveal_message(g, r), r.signature))
    return false;
  return crypto::dleq_verify(g, revealer_pub, peer_pub, r.dh_element, r.proof);
}

crypto::SharedSecret secret_from_dh(const Element& dh_element) {
  return {sha256({from_string(kKdfTag), dh_element.data}), 0, 0};
}

namespace {

uint8_t pad_bit_from_dh(const Element& dh, uint64_t round, size_t position) {
  return static_cast<uint8_t>(crypto::pad_bit_at(secret_from_dh(dh), round, position));
}

}  // namespace

Verdict resolve_pair(const Group& g, uint32_t client_id, uint32_t guard_id,
                     const Element& client_ephemeral_pub, const Element& guard_pub,
                     const std::optional<SecretReveal>& from_client,
                     const std::optional<SecretReveal>& from_guard,
                     uint64_t round, size_t position, uint8_t client_claimed_bit,
                     uint8_t guard_claimed_bit) {
  bool client_ok = from_client &&
                   secret_reveal_valid(g, *from_client, client_ephemeral_pub, guard_pub);
  bool guard_ok = from_guard &&
                  secret_reveal_valid(g, *from_guard, guard_pub, client_ephemeral_pub);

  if (!client_ok && !guard_ok)
    return {Verdict::kInconsistent, 0, "both pair reveals unusable"};
  if (!client_ok)
    return {Verdict::kExcludedClient, client_id,
            from_client ? "invalid secret reveal" : "refused to reveal"};
  if (!guard_ok)
    return {Verdict::kExcludedGuard, guard_id,
            from_guard ? "invalid secret reveal" : "refused to reveal"};

  // Both proofs verify, so both DH elements equal g^(a*b) and agree.
  uint8_t true_bit = pad_bit_from_dh(from_client->dh_element, round, position);
  if ((client_claimed_bit & 1) != true_bit)
    return {Verdict::kExcludedClient, client_id, "claimed pad bit contradicts secret"};
  if ((guard_claimed_bit & 1) != true_bit)
    return {Verdict::kExcludedGuard, guard_id, "claimed pad bit contradicts secret"};
  return {Verdict::kInconsistent, 0, "pair bits both match recomputed pad"};
}

const char* verdict_name(Verdict::Kind k) {
  switch (k) {
    case Verdict::kNoFault: return "NoFault";
    case Verdict::kExcludedClient: return "ExcludedClient";
    case Verdict::kExcludedGuard: return "ExcludedGuard";
    case Verdict::kUntraceable: return "Untraceable";
    case Verdict::kInconsistent: return "Inconsistent";
  }
  return "?";
}

std::string BlameTranscript::to_json() const {
  nlohmann::ordered_json j;
  j["trigger_round"] = trigger_round;
  j["original_x"] = to_hex(original_x);
  j["disrupted_x"] = to_hex(disrupted_x);
  if (position)
    j["position"] = *position;
  else
    j["position"] = nullptr;
  auto reveal_json = [](const BitReveal& r) {
    nlohmann::ordered_json e;
    e["entity"] = r.entity_id;
    e["role"] = r.is_guard ? "guard" : "client";
    e["round"] = r.round;
    e["position"] = r.position;
    e["bits"] = r.bits;
    e["signature"] = to_hex(r.signature);
    return e;
  };
  j["reveals"] = nlohmann::ordered_json::array();
  for (auto& r : reveals) j["reveals"].push_back(reveal_json(r));
  if (pair) {
    j["pair"] = {{"client", pair->first}, {"guard", pair->second}};
  } else {
    j["pair"] = nullptr;
  }
  j["secret_reveals"] = nlohmann::ordered_json::array();
  for (auto& r : secret_reveals) {
    nlohmann::ordered_json e;
    e["client"] = r.client_id;
    e["guard"] = r.guard_id;
    e["by"] = r.by_guard ? "guard" : "client";
    e["dh_element"] = to_hex(r.dh_element.data);
    j["secret_reveals"].push_back(e);
  }
  j["verdict"] = verdict_name(verdict.kind);
  j["entity"] = verdict.entity;
  j["detail"] = verdict.detail;
  return j.dump(2);
}

}  // namespace lldc::disruption
