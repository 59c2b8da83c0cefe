#include "lldc/equivocation.hpp"

#include "lldc/errors.hpp"

namespace lldc::equivocation {

namespace {
const std::string_view kKeyExpandTag = "lldc/eqkey/v1";
const std::string_view kRevealTag = "lldc/hashreveal/v1";
}  // namespace

DownstreamHistory history_update(const DownstreamHistory& h, BytesView z) {
  return {sha256({h.digest, z}), h.length + 1};
}

Bytes blinding_mask(const Group& g, BytesView key_seed, size_t cell_bits) {
  (void)g;
  return crypto::expand_key(key_seed, cell_bits, kKeyExpandTag);
}

BlindedCell blind_with_mask(BytesView x, BytesView mask, Bytes key_seed) {
  BlindedCell out;
  out.x_prime = x ^ mask;
  out.key.assign(mask.begin(), mask.end());
  out.key_seed = std::move(key_seed);
  return out;
}

BlindedCell owner_blind(const Group& g, BytesView x, Prng& rng) {
  Bytes seed = g.f1_truncate(rng.bytes(g.f1_bytes()));
  Bytes mask = blinding_mask(g, seed, x.size() * 8);
  return blind_with_mask(x, mask, std::move(seed));
}

Bytes pad_hash(const Pad& pad) { return sha256(pad.bits); }

Scalar pad_exponent(const Group& g, const std::vector<Pad>& pads) {
  Scalar e = g.scalar_zero();
  for (auto& p : pads) e = g.scalar_add(e, g.f2_map(pad_hash(p)));
  return e;
}

Element client_tag(const Group& g, const std::vector<Pad>& pads,
                   const DownstreamHistory& h, bool is_owner, BytesView key_seed) {
  Scalar e = pad_exponent(g, pads);
  Element base = g.f1_map(g.f1_truncate(h.digest));
  Element kappa = g.exp(base, e);
  if (is_owner) kappa = g.mul(g.f1_map(Bytes(key_seed.begin(), key_seed.end())), kappa);
  return kappa;
}

Scalar guard_tag(const Group& g, const std::vector<Pad>& pads) {
  return g.scalar_neg(pad_exponent(g, pads));
}

Bytes relay_recover_key(const Group& g, const DownstreamHistory& h_relay,
                        const std::vector<Scalar>& sigmas,
                        const std::vector<Element>& kappas) {
  Scalar sigma_sum = g.scalar_zero();
  for (auto& s : sigmas) sigma_sum = g.scalar_add(sigma_sum, s);
  Element k = g.exp(g.f1_map(g.f1_truncate(h_relay.digest)), sigma_sum);
  for (auto& kap : kappas) k = g.mul(k, kap);
  try {
    return g.f1_inv(k);
  } catch (const MapRangeError&) {
    throw HistoryMismatch();
  }
}

Bytes hash_reveal_message(const HashReveal& r) {
  Bytes msg = from_string(kRevealTag);
  put_u32le(msg, r.entity_id);
  msg.push_back(r.is_guard ? 1 : 0);
  put_u64le(msg, r.round);
  put_u32le(msg, static_cast<uint32_t>(r.hashes.size()));
  for (auto& h : r.hashes) msg.insert(msg.end(), h.begin(), h.end());
  return msg;
}

HashReveal make_hash_reveal(const Group& g, uint32_t entity_id, bool is_guard,
                            uint64_t round, const std::vector<Pad>& pads,
                            const Scalar& signing_key) {
  HashReveal r;
  r.entity_id = entity_id;
  r.is_guard = is_guard;
  r.round = round;
  for (auto& p : pads) r.hashes.push_back(pad_hash(p));
  r.signature = crypto::sign(g, signing_key, hash_reveal_message(r));
  return r;
}

BlameResult equivocation_blame(const Group& g, const BlameInputs& in) {
  // Guards first: sigma is a pure function of the revealed hashes.
  for (uint32_t gid : in.guard_ids) {
    auto rit = in.guard_reveals.find(gid);
    auto sit = in.recorded_sigmas.find(gid);
    if (rit == in.guard_reveals.end() || sit == in.recorded_sigmas.end() ||
        rit->second.hashes.size() != in.client_ids.size())
      return {BlameResult::kExcludedGuard, gid, 0, 0, "missing or malformed reveal"};
    Scalar e = g.scalar_zero();
    for (auto& h : rit->second.hashes) e = g.scalar_add(e, g.f2_map(h));
    if (!(g.scalar_neg(e) == sit->second))
      return {BlameResult::kExcludedGuard, gid, 0, 0, "sigma recomputation mismatch"};
  }

  // Clients: recompute kappa from the reveals. A mismatch with an
  // out-of-range surplus is an outright forgery. In-range surpluses are
  // owner candidates: exactly one is expected (the true owner), and with
  // ground truth available the candidates' seeds must reproduce the
  // observed blinding mask. Conviction happens only when the true owner
  // is provably someone else; ambiguity convicts nobody.
  Element hbase = g.f1_map(g.f1_truncate(in.h_snapshot.digest));
  struct Candidate {
    uint32_t id;
    Bytes seed;
  };
  std::vector<Candidate> candidates;
  for (uint32_t cid : in.client_ids) {
    auto rit = in.client_reveals.find(cid);
    auto kit = in.recorded_kappas.find(cid);
    if (rit == in.client_reveals.end() || kit == in.recorded_kappas.end() ||
        rit->second.hashes.size() != in.guard_ids.size())
      return {BlameResult::kExcludedClient, cid, 0, 0, "missing or malformed reveal"};
    Scalar e = g.scalar_zero();
    for (auto& h : rit->second.hashes) e = g.scalar_add(e, g.f2_map(h));
    Element expect = g.exp(hbase, e);
    if (expect == kit->second) continue;  // faithful bystander

    Element surplus = g.mul(kit->second, g.inv(expect));
    try {
      candidates.push_back({cid, g.f1_inv(surplus)});
    } catch (const MapRangeError&) {
      return {BlameResult::kExcludedClient, cid, 0, 0, "kappa recomputation mismatch"};
    }
  }

  if (candidates.size() > 1) {
    if (!in.observed_mask)
      return {BlameResult::kAmbiguous, 0, 0, 0, "several owner-shaped tags"};
    std::vector<uint32_t> matching, offending;
    for (auto& c : candidates) {
      if (blinding_mask(g, c.seed, in.cell_bits) == *in.observed_mask)
        matching.push_back(c.id);
      else
        offending.push_back(c.id);
    }
    if (matching.size() == 1 && !offending.empty())
      return {BlameResult::kExcludedClient, offending.front(), 0, 0,
              "owner-shaped tag fails the mask check"};
    return {BlameResult::kAmbiguous, 0, 0, 0, "owner cannot be pinned down"};
  }

  // Tags all check out against the reveals; any remaining lie must show up
  // as a hash disagreement inside some (client, guard) pair.
  for (size_t i = 0; i < in.client_ids.size(); ++i) {
    for (size_t j = 0; j < in.guard_ids.size(); ++j) {
      const auto& ch = in.client_reveals.at(in.client_ids[i]).hashes;
      const auto& gh = in.guard_reveals.at(in.guard_ids[j]).hashes;
      if (ch[j] != gh[i])
        return {BlameResult::kPairMismatch, 0, in.client_ids[i], in.guard_ids[j],
                "pad hash disagreement"};
    }
  }
  return {BlameResult::kNoFault, 0, 0, 0, ""};
}

}  // namespace lldc::equivocation
