#include "lldc/setup.hpp"

#include "lldc/errors.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace lldc::setup {

const RosterEntry* Roster::find_client(uint32_t id) const {
  for (auto& c : clients)
    if (c.id == id) return &c;
  return nullptr;
}

const RosterEntry* Roster::find_client_by_key(const Element& pub) const {
  for (auto& c : clients)
    if (c.pub == pub) return &c;
  return nullptr;
}

const RosterEntry* Roster::find_guard(uint32_t id) const {
  for (auto& s : guards)
    if (s.id == id) return &s;
  return nullptr;
}

Roster parse_roster(const Group& g, std::string_view text) {
  Roster roster;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string role, key_b64;
    uint32_t id = 0;
    if (!(ls >> role >> id >> key_b64))
      throw ConfigError("roster line " + std::to_string(lineno) + ": malformed");
    Element pub{from_base64(key_b64)};
    if (!g.valid_element(pub))
      throw ConfigError("roster line " + std::to_string(lineno) + ": bad key");
    if (role == "client")
      roster.clients.push_back({id, std::move(pub)});
    else if (role == "guard")
      roster.guards.push_back({id, std::move(pub)});
    else if (role == "relay")
      roster.relay_pub = std::move(pub);
    else
      throw ConfigError("roster line " + std::to_string(lineno) + ": unknown role " + role);
  }
  return roster;
}

std::string format_roster(const Roster& roster) {
  std::ostringstream out;
  for (auto& c : roster.clients)
    out << "client " << c.id << " " << to_base64(c.pub.data) << "\n";
  for (auto& s : roster.guards)
    out << "guard " << s.id << " " << to_base64(s.pub.data) << "\n";
  if (!roster.relay_pub.data.empty())
    out << "relay 0 " << to_base64(roster.relay_pub.data) << "\n";
  return out.str();
}

Bytes schedule_message(const std::vector<Element>& slots, const Element& base) {
  Bytes msg = from_string("lldc/sched/v1");
  put_u32le(msg, static_cast<uint32_t>(slots.size()));
  for (auto& s : slots) msg.insert(msg.end(), s.data.begin(), s.data.end());
  msg.insert(msg.end(), base.data.begin(), base.data.end());
  return msg;
}

std::pair<KeyPair, AuthMessage> client_authenticate(const Group& g,
                                                    const Roster& roster,
                                                    const KeyPair& long_term,
                                                    Prng& rng) {
  if (!roster.find_client_by_key(long_term.pub))
    throw UnknownClient("own key missing from roster");
  KeyPair ephemeral = crypto::keygen(g, rng);
  Bytes sig = crypto::sign(g, long_term.priv, ephemeral.pub.data);
  return {ephemeral, AuthMessage{long_term.pub, ephemeral.pub, std::move(sig)}};
}

uint32_t relay_check_auth(const Group& g, const Roster& roster,
                          const AuthMessage& msg) {
  const RosterEntry* entry = roster.find_client_by_key(msg.long_term_pub);
  if (!entry) throw UnknownClient();
  if (!crypto::verify(g, msg.long_term_pub, msg.ephemeral_pub.data, msg.signature))
    throw BadSignature();
  return entry->id;
}

std::pair<ShuffleLink, ShuffleSecret> guard_shuffle(const Group& g,
                                                    const std::vector<Element>& keys,
                                                    const Element& base,
                                                    uint32_t guard_id, Prng& rng,
                                                    bool force_unit_blinding) {
  if (keys.size() < 2) throw TooFewClients();
  Scalar b = force_unit_blinding ? g.scalar_from_u64(1) : g.random_scalar(rng);

  std::vector<size_t> perm(keys.size());
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates on the seeded stream.
  for (size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform(i)]);

  ShuffleLink link;
  link.guard_id = guard_id;
  link.input_keys = keys;
  link.input_base = base;
  link.output_base = g.exp(base, b);
  link.output_keys.resize(keys.size());
  for (size_t i = 0; i < keys.size(); ++i)
    link.output_keys[perm[i]] = g.exp(keys[i], b);
  return {std::move(link), ShuffleSecret{b, std::move(perm)}};
}

void verify_chain(const Group& g, const ShuffleTranscript& t) {
  (void)g;
  if (t.links.empty()) throw FrameError("empty transcript");
  for (size_t j = 1; j < t.links.size(); ++j) {
    if (t.links[j].input_keys != t.links[j - 1].output_keys ||
        !(t.links[j].input_base == t.links[j - 1].output_base))
      throw FrameError("transcript chain broken at link " + std::to_string(j));
  }
  const ShuffleLink& last = t.links.back();
  if (t.final_schedule != last.output_keys || !(t.final_base == last.output_base))
    throw FrameError("transcript tail does not match final schedule");
}

Bytes guard_verify_and_sign(const Group& g, const ShuffleTranscript& t,
                            uint32_t guard_id, const KeyPair& guard,
                            const ShuffleSecret& secret) {
  const ShuffleLink* own = nullptr;
  for (auto& l : t.links)
    if (l.guard_id == guard_id) own = &l;
  if (!own) throw TranscriptTampered("own link missing");

  try {
    verify_chain(g, t);
  } catch (const FrameError&) {
    throw TranscriptTampered("chain integrity");
  }

  // Recompute the link from retained blinding and permutation.
  if (own->input_keys.size() != secret.permutation.size() ||
      own->output_keys.size() != secret.permutation.size())
    throw TranscriptTampered("link shape");
  if (!(own->output_base == g.exp(own->input_base, secret.blinding)))
    throw TranscriptTampered("base point");
  for (size_t i = 0; i < own->input_keys.size(); ++i) {
    Element expect = g.exp(own->input_keys[i], secret.blinding);
    if (!(own->output_keys[secret.permutation[i]] == expect))
      throw TranscriptTampered("output key " + std::to_string(i));
  }

  return crypto::sign(g, guard.priv, schedule_message(t.final_schedule, t.final_base));
}

size_t client_accept_schedule(const Group& g, const Schedule& schedule,
                              const std::vector<Bytes>& signatures,
                              const Roster& roster, const KeyPair& ephemeral,
                              const std::set<uint32_t>& trusted_guards) {
  if (schedule.slots.size() < 2) throw TooFewClients();

  Bytes msg = schedule_message(schedule.slots, schedule.base);
  bool trusted_ok = false;
  for (size_t j = 0; j < signatures.size() && j < roster.guards.size(); ++j) {
    if (signatures[j].empty()) continue;
    if (!trusted_guards.contains(roster.guards[j].id)) continue;
    if (crypto::verify(g, roster.guards[j].pub, msg, signatures[j])) {
      trusted_ok = true;
      break;
    }
  }
  if (!trusted_ok) throw NoTrustedSignature();

  Element mine = g.exp(schedule.base, ephemeral.priv);
  for (size_t i = 0; i < schedule.slots.size(); ++i)
    if (schedule.slots[i] == mine) return i;
  throw SlotNotFound();
}

SecretMatrix derive_secrets_client_side(const Group& g,
                                        const std::vector<KeyPair>& ephemerals,
                                        const std::vector<RosterEntry>& guards,
                                        const std::vector<uint32_t>& client_ids) {
  SecretMatrix m(ephemerals.size());
  for (size_t i = 0; i < ephemerals.size(); ++i) {
    m[i].reserve(guards.size());
    for (auto& s : guards)
      m[i].push_back(crypto::dh_derive(g, ephemerals[i].priv, s.pub, client_ids[i], s.id));
  }
  return m;
}

SecretMatrix derive_secrets_guard_side(const Group& g,
                                       const std::vector<KeyPair>& guard_keys,
                                       const std::vector<Element>& ephemeral_pubs,
                                       const std::vector<uint32_t>& client_ids,
                                       const std::vector<uint32_t>& guard_ids) {
  SecretMatrix m(ephemeral_pubs.size());
  for (size_t i = 0; i < ephemeral_pubs.size(); ++i) {
    m[i].reserve(guard_keys.size());
    for (size_t j = 0; j < guard_keys.size(); ++j)
      m[i].push_back(crypto::dh_derive(g, guard_keys[j].priv, ephemeral_pubs[i],
                                       client_ids[i], guard_ids[j]));
  }
  return m;
}

LocalSetupResult run_setup_local(const Group& g, const Roster& roster,
                                 const std::vector<KeyPair>& client_long_terms,
                                 const std::vector<KeyPair>& guard_keys,
                                 uint64_t epoch, Prng& rng) {
  size_t n = client_long_terms.size();
  size_t m = guard_keys.size();
  if (n < 2) throw TooFewClients();
  if (m < 1) throw SetupFailed("no guards");

  // Step 1: authentication, ephemeral key collection.
  std::vector<KeyPair> ephemerals;
  std::vector<uint32_t> client_ids;
  std::vector<Element> collected;
  for (size_t i = 0; i < n; ++i) {
    Prng crng = rng.child("client-auth", i);
    auto [eph, msg] = client_authenticate(g, roster, client_long_terms[i], crng);
    client_ids.push_back(relay_check_auth(g, roster, msg));
    collected.push_back(eph.pub);
    ephemerals.push_back(std::move(eph));
  }

  // Step 2: shuffle chain through every guard.
  LocalSetupResult out;
  ShuffleTranscript& t = out.transcript;
  std::vector<Element> keys = collected;
  Element base = g.generator();
  std::vector<ShuffleSecret> secrets;
  for (size_t j = 0; j < m; ++j) {
    Prng grng = rng.child("guard-shuffle", j);
    auto [link, secret] = guard_shuffle(g, keys, base, roster.guards[j].id, grng);
    keys = link.output_keys;
    base = link.output_base;
    t.links.push_back(std::move(link));
    secrets.push_back(std::move(secret));
  }
  t.final_schedule = keys;
  t.final_base = base;

  // Step 2d: transcript broadcast, per-guard verification and signature.
  t.signatures.resize(m);
  for (size_t j = 0; j < m; ++j)
    t.signatures[j] =
        guard_verify_and_sign(g, t, roster.guards[j].id, guard_keys[j], secrets[j]);

  out.schedule = Schedule{t.final_schedule, t.final_base, epoch};

  // Step 3 on every client: locate slots.
  out.client_slots.resize(n);
  std::set<uint32_t> all_guards;
  for (auto& s : roster.guards) all_guards.insert(s.id);
  for (size_t i = 0; i < n; ++i)
    out.client_slots[i] = client_accept_schedule(g, out.schedule, t.signatures, roster,
                                                 ephemerals[i], all_guards);

  // Step 4: secret matrices on both sides.
  std::vector<Element> eph_pubs;
  for (auto& e : ephemerals) eph_pubs.push_back(e.pub);
  std::vector<uint32_t> guard_ids;
  for (auto& s : roster.guards) guard_ids.push_back(s.id);
  out.client_secrets = derive_secrets_client_side(g, ephemerals, roster.guards, client_ids);
  out.guard_secrets =
      derive_secrets_guard_side(g, guard_keys, eph_pubs, client_ids, guard_ids);

  // Per-slot disruption secrets, encrypted under the shuffled slot keys.
  Prng srng = rng.child("slot-secrets");
  out.slot_secrets.resize(n);
  out.encrypted_slot_secrets.resize(n);
  for (size_t s = 0; s < n; ++s) {
    out.slot_secrets[s] = srng.bytes(kHashLen);
    out.encrypted_slot_secrets[s] = crypto::pke_encrypt(
        g, out.schedule.slots[s], out.slot_secrets[s], srng, out.schedule.base);
  }
  return out;
}

}  // namespace lldc::setup
