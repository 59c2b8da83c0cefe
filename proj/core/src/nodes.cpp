#include "lldc/nodes.hpp"

#include "lldc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lldc::nodes {

namespace {

// Timer labels pack kind | epoch | value.
enum TimerKind : uint64_t {
  kTimerRound = 1,
  kTimerSetup = 2,
  kTimerBlame = 3,
  kTimerSleep = 4,
  kTimerJoin = 5,
  kTimerLeave = 6,
  kTimerCbr = 7,
  kTimerRetrySetup = 8,
};

uint64_t make_label(TimerKind kind, uint32_t epoch, uint32_t value) {
  return static_cast<uint64_t>(kind) << 56 |
         (static_cast<uint64_t>(epoch) & 0xFFFFFF) << 32 | value;
}
TimerKind label_kind(uint64_t l) { return static_cast<TimerKind>(l >> 56); }
uint32_t label_epoch(uint64_t l) { return static_cast<uint32_t>(l >> 32 & 0xFFFFFF); }
uint32_t label_value(uint64_t l) { return static_cast<uint32_t>(l); }

void put_element(Bytes& out, const Element& e) {
  out.insert(out.end(), e.data.begin(), e.data.end());
}
Element get_element(const Group& g, BytesView b, size_t& off) {
  if (off + g.element_size() > b.size()) throw FrameError("truncated element");
  Element e{Bytes(b.begin() + static_cast<long>(off),
                  b.begin() + static_cast<long>(off + g.element_size()))};
  off += g.element_size();
  return e;
}
void put_scalar(Bytes& out, const Scalar& s) {
  out.insert(out.end(), s.data.begin(), s.data.end());
}
Scalar get_scalar(const Group& g, BytesView b, size_t& off) {
  if (off + g.scalar_size() > b.size()) throw FrameError("truncated scalar");
  Scalar s{Bytes(b.begin() + static_cast<long>(off),
                 b.begin() + static_cast<long>(off + g.scalar_size()))};
  off += g.scalar_size();
  return s;
}
void put_blob16(Bytes& out, BytesView blob) {
  put_u16le(out, static_cast<uint16_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
}
Bytes get_blob16(BytesView b, size_t& off) {
  if (off + 2 > b.size()) throw FrameError("truncated blob");
  uint16_t len = get_u16le(b, off);
  off += 2;
  if (off + len > b.size()) throw FrameError("truncated blob body");
  Bytes out(b.begin() + static_cast<long>(off), b.begin() + static_cast<long>(off + len));
  off += len;
  return out;
}
Bytes get_fixed(BytesView b, size_t& off, size_t n) {
  if (off + n > b.size()) throw FrameError("truncated field");
  Bytes out(b.begin() + static_cast<long>(off), b.begin() + static_cast<long>(off + n));
  off += n;
  return out;
}

Bytes serialize_bit_reveal(const disruption::BitReveal& r) {
  Bytes b;
  put_u32le(b, r.entity_id);
  b.push_back(r.is_guard ? 1 : 0);
  put_u32le(b, r.position);
  put_u16le(b, static_cast<uint16_t>(r.bits.size()));
  b.insert(b.end(), r.bits.begin(), r.bits.end());
  put_blob16(b, r.signature);
  return b;
}

disruption::BitReveal parse_bit_reveal(BytesView b, uint64_t round) {
  disruption::BitReveal r;
  size_t off = 0;
  r.entity_id = get_u32le(b, off);
  off += 4;
  r.is_guard = b[off++] != 0;
  r.round = round;
  r.position = get_u32le(b, off);
  off += 4;
  uint16_t n = get_u16le(b, off);
  off += 2;
  Bytes bits = get_fixed(b, off, n);
  r.bits.assign(bits.begin(), bits.end());
  r.signature = get_blob16(b, off);
  return r;
}

Bytes serialize_hash_reveal(const equivocation::HashReveal& r) {
  Bytes b;
  put_u32le(b, r.entity_id);
  b.push_back(r.is_guard ? 1 : 0);
  put_u16le(b, static_cast<uint16_t>(r.hashes.size()));
  for (auto& h : r.hashes) b.insert(b.end(), h.begin(), h.end());
  put_blob16(b, r.signature);
  return b;
}

equivocation::HashReveal parse_hash_reveal(BytesView b, uint64_t round) {
  equivocation::HashReveal r;
  size_t off = 0;
  r.entity_id = get_u32le(b, off);
  off += 4;
  r.is_guard = b[off++] != 0;
  r.round = round;
  uint16_t n = get_u16le(b, off);
  off += 2;
  for (uint16_t i = 0; i < n; ++i) r.hashes.push_back(get_fixed(b, off, kHashLen));
  r.signature = get_blob16(b, off);
  return r;
}

Bytes serialize_secret_reveal(const Group& g, const disruption::SecretReveal& r) {
  Bytes b;
  put_u32le(b, r.client_id);
  put_u32le(b, r.guard_id);
  b.push_back(r.by_guard ? 1 : 0);
  put_element(b, r.dh_element);
  Bytes proof = crypto::serialize_dleq(g, r.proof);
  b.insert(b.end(), proof.begin(), proof.end());
  put_blob16(b, r.signature);
  return b;
}

disruption::SecretReveal parse_secret_reveal(const Group& g, BytesView b) {
  disruption::SecretReveal r;
  size_t off = 0;
  r.client_id = get_u32le(b, off);
  off += 4;
  r.guard_id = get_u32le(b, off);
  off += 4;
  r.by_guard = b[off++] != 0;
  r.dh_element = get_element(g, b, off);
  Bytes proof = get_fixed(b, off, 2 * g.element_size() + g.scalar_size());
  r.proof = crypto::parse_dleq(g, proof);
  r.signature = get_blob16(b, off);
  return r;
}

// Hash-blame request reuses the blame request tag with a sentinel position.
constexpr uint32_t kHashRequestPosition = 0xFFFFFFFFu;

struct KeyListBody {
  std::vector<Element> keys;
  Element base;
};

Bytes serialize_keylist(const KeyListBody& kl) {
  Bytes b;
  put_u16le(b, static_cast<uint16_t>(kl.keys.size()));
  for (auto& k : kl.keys) put_element(b, k);
  put_element(b, kl.base);
  return b;
}

KeyListBody parse_keylist(const Group& g, BytesView b) {
  KeyListBody kl;
  size_t off = 0;
  uint16_t n = get_u16le(b, off);
  off += 2;
  for (uint16_t i = 0; i < n; ++i) kl.keys.push_back(get_element(g, b, off));
  kl.base = get_element(g, b, off);
  return kl;
}

Bytes serialize_transcript(const std::vector<uint32_t>& client_ids,
                           const setup::ShuffleTranscript& t) {
  Bytes b;
  put_u16le(b, static_cast<uint16_t>(client_ids.size()));
  for (uint32_t id : client_ids) put_u32le(b, id);
  b.push_back(static_cast<uint8_t>(t.links.size()));
  for (auto& l : t.links) {
    put_u32le(b, l.guard_id);
    put_u16le(b, static_cast<uint16_t>(l.input_keys.size()));
    for (auto& k : l.input_keys) put_element(b, k);
    for (auto& k : l.output_keys) put_element(b, k);
    put_element(b, l.input_base);
    put_element(b, l.output_base);
  }
  put_u16le(b, static_cast<uint16_t>(t.final_schedule.size()));
  for (auto& k : t.final_schedule) put_element(b, k);
  put_element(b, t.final_base);
  return b;
}

std::pair<std::vector<uint32_t>, setup::ShuffleTranscript> parse_transcript(
    const Group& g, BytesView b) {
  std::vector<uint32_t> ids;
  setup::ShuffleTranscript t;
  size_t off = 0;
  uint16_t n = get_u16le(b, off);
  off += 2;
  for (uint16_t i = 0; i < n; ++i) {
    ids.push_back(get_u32le(b, off));
    off += 4;
  }
  uint8_t nlinks = b[off++];
  for (uint8_t j = 0; j < nlinks; ++j) {
    setup::ShuffleLink l;
    l.guard_id = get_u32le(b, off);
    off += 4;
    uint16_t nk = get_u16le(b, off);
    off += 2;
    for (uint16_t i = 0; i < nk; ++i) l.input_keys.push_back(get_element(g, b, off));
    for (uint16_t i = 0; i < nk; ++i) l.output_keys.push_back(get_element(g, b, off));
    l.input_base = get_element(g, b, off);
    l.output_base = get_element(g, b, off);
    t.links.push_back(std::move(l));
  }
  uint16_t nf = get_u16le(b, off);
  off += 2;
  for (uint16_t i = 0; i < nf; ++i) t.final_schedule.push_back(get_element(g, b, off));
  t.final_base = get_element(g, b, off);
  return {std::move(ids), std::move(t)};
}

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

}  // namespace

// -- ProtocolConfig ----------------------------------------------------------

ProtocolConfig ProtocolConfig::parse(std::string_view text) {
  ProtocolConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key >> value))
      throw ConfigError("config line " + std::to_string(lineno) + ": malformed");
    if (key == "group") c.group_id = value;
    else if (key == "cell_bits") c.cell_bits = std::stoul(value);
    else if (key == "downstream_cap") c.downstream_cap = std::stoul(value);
    else if (key == "window") c.window = std::stoul(value);
    else if (key == "load_period") c.load_period = std::stoul(value);
    else if (key == "sleep_interval_us") c.sleep_interval_us = std::stoull(value);
    else if (key == "equivocation") c.equivocation = value == "on" || value == "1";
    else if (key == "premask") c.premask = value == "on" || value == "1";
    else if (key == "prestream_depth") c.prestream_depth = std::stoul(value);
    else if (key == "setup_timeout_us") c.setup_timeout_us = std::stoull(value);
    else if (key == "round_timeout_us") c.round_timeout_us = std::stoull(value);
    else if (key == "blame_timeout_us") c.blame_timeout_us = std::stoull(value);
    else if (key == "max_retransmit") c.max_retransmit = std::stoi(value);
    else if (key == "exit_latency_us") c.exit_latency_us = std::stoull(value);
    else if (key == "trusted_guard") c.trusted_guards.insert(std::stoul(value));
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
  }
  if (c.cell_bits % 8 || c.cell_bits / 8 <= dcnet::kCellOverhead)
    throw ConfigError("cell_bits too small");
  if (c.window < 1) throw ConfigError("window must be >= 1");
  if (c.load_period > 0 && c.window != 1)
    throw ConfigError("load tuning requires window 1");
  return c;
}

std::string ProtocolConfig::format() const {
  std::ostringstream out;
  out << "group " << group_id << "\n";
  out << "cell_bits " << cell_bits << "\n";
  out << "downstream_cap " << downstream_cap << "\n";
  out << "window " << window << "\n";
  out << "load_period " << load_period << "\n";
  out << "sleep_interval_us " << sleep_interval_us << "\n";
  out << "equivocation " << (equivocation ? "on" : "off") << "\n";
  out << "premask " << (premask ? "on" : "off") << "\n";
  out << "prestream_depth " << prestream_depth << "\n";
  out << "setup_timeout_us " << setup_timeout_us << "\n";
  out << "round_timeout_us " << round_timeout_us << "\n";
  out << "blame_timeout_us " << blame_timeout_us << "\n";
  out << "max_retransmit " << max_retransmit << "\n";
  out << "exit_latency_us " << exit_latency_us << "\n";
  for (uint32_t g : trusted_guards) out << "trusted_guard " << g << "\n";
  return out.str();
}

ChurnMode churn_mode_from(std::string_view name) {
  if (name == "naive") return ChurnMode::kNaive;
  if (name == "abrupt") return ChurnMode::kAbrupt;
  if (name == "graceful") return ChurnMode::kGraceful;
  throw ConfigError("unknown churn mode: " + std::string(name));
}

ChurnPlan churn_handler(bool is_join, ChurnMode mode) {
  switch (mode) {
    case ChurnMode::kNaive: return {true, false};
    case ChurnMode::kAbrupt: return is_join ? ChurnPlan{false, true} : ChurnPlan{true, false};
    case ChurnMode::kGraceful: return {false, true};
  }
  return {true, false};
}

// -- Network -----------------------------------------------------------------

Network::Network(const NetworkSpec& spec) : spec_(spec) {
  if (spec_.n < 2) throw ConfigError("need at least 2 clients");
  if (spec_.m < 1) throw ConfigError("need at least 1 guard");
  if (spec_.proto.load_period > 0 && spec_.proto.window != 1)
    throw ConfigError("load tuning requires window 1");
  group_ = &crypto::group_by_id(spec_.proto.group_id);

  Prng master(spec_.seed);
  Prng key_rng = master.child("keys");

  KeyPair relay_key = crypto::keygen(*group_, key_rng);
  roster_.relay_pub = relay_key.pub;
  std::vector<KeyPair> client_keys, guard_keys;
  for (size_t i = 0; i < spec_.n; ++i) {
    Prng r = key_rng.child("client", i);
    client_keys.push_back(crypto::keygen(*group_, r));
    roster_.clients.push_back({static_cast<uint32_t>(1 + i), client_keys.back().pub});
  }
  for (size_t j = 0; j < spec_.m; ++j) {
    Prng r = key_rng.child("guard", j);
    guard_keys.push_back(crypto::keygen(*group_, r));
    roster_.guards.push_back({static_cast<uint32_t>(101 + j), guard_keys.back().pub});
  }

  sim_ = std::make_unique<simnet::Sim>(spec_.topology, spec_.seed);

  size_t active = spec_.initial_active ? std::min(spec_.initial_active, spec_.n) : spec_.n;
  std::vector<bool> initially_active(spec_.n, false);
  for (size_t i = 0; i < active; ++i) initially_active[i] = true;

  size_t senders = 1;
  if (spec_.workload.kind == Workload::kCbr)
    senders = std::max<size_t>(
        1, static_cast<size_t>(std::llround(spec_.workload.active_fraction *
                                            static_cast<double>(spec_.n))));

  relay_ = std::make_unique<RelayNode>(*this, spec_, relay_key, initially_active);
  dir_.relay_node = sim_->add_node(relay_.get(), simnet::Role::kRelay);
  for (size_t j = 0; j < spec_.m; ++j) {
    guards_.push_back(std::make_unique<GuardNode>(*this, j, roster_.guards[j].id,
                                                  guard_keys[j], spec_.proto));
    dir_.guard_nodes.push_back(sim_->add_node(guards_.back().get(), simnet::Role::kGuard));
  }
  for (size_t i = 0; i < spec_.n; ++i) {
    bool sender = spec_.workload.kind != Workload::kIdle && i < senders;
    clients_.push_back(std::make_unique<ClientNode>(*this, i, roster_.clients[i].id,
                                                    client_keys[i], spec_.proto,
                                                    spec_.workload, sender));
    dir_.client_nodes.push_back(sim_->add_node(clients_.back().get(), simnet::Role::kClient));
  }

  // Dispatch scripted faults.
  for (const FaultSpec& f : spec_.faults) {
    if (f.kind == FaultSpec::kEquivocateZ) continue;  // relay-side, read from spec_
    if (f.target_guard) {
      for (auto& g : guards_)
        if (g->id() == f.entity_id) g->set_fault(f);
    } else {
      for (auto& c : clients_)
        if (c->id() == f.entity_id) c->set_fault(f);
    }
  }

  for (size_t i = 0; i < spec_.n; ++i)
    clients_[i]->set_participating(initially_active[i]);

  for (const ChurnScriptEntry& e : spec_.churn_script) {
    if (e.join)
      clients_[e.client_index]->schedule_join(*sim_, e.time_us);
    else
      clients_[e.client_index]->schedule_leave(*sim_, e.time_us, e.mode);
  }

  relay_->start(*sim_);
  for (auto& c : clients_) c->start(*sim_);
}

Network::~Network() = default;

void Network::run() {
  if (spec_.duration_us) {
    sim_->run_until(spec_.duration_us);
  } else {
    sim_->run();
  }
}

// -- GuardNode ---------------------------------------------------------------

GuardNode::GuardNode(Network& net, size_t index, uint32_t id, KeyPair key,
                     const ProtocolConfig& cfg)
    : net_(net),
      index_(index),
      id_(id),
      key_(std::move(key)),
      cfg_(cfg),
      group_(&net.group()),
      rng_(Prng(net.spec().seed).child("guard-node", id)) {}

void GuardNode::on_message(simnet::Sim& sim, uint32_t from, const Bytes& raw) {
  if (fault_.kind == FaultSpec::kOffline) return;
  wire::Frame f = wire::decode(raw);
  relay_node_ = net_.dir().relay_node;
  switch (f.type) {
    case wire::kShuffleRequest: {
      KeyListBody in = parse_keylist(*group_, f.body);
      Prng srng = rng_.child("shuffle", f.epoch);
      auto [link, secret] = setup::guard_shuffle(*group_, in.keys, in.base, id_, srng);
      shuffle_secrets_[f.epoch] = std::move(secret);
      wire::Frame reply{wire::kShuffleReply, f.epoch, 0,
                        serialize_keylist({link.output_keys, link.output_base})};
      sim.send(sim_node(sim), relay_node_, wire::encode(reply));
      break;
    }
    case wire::kTranscript:
      handle_transcript(sim, f);
      break;
    case wire::kGuardCredit: {
      if (f.epoch != epoch_) {
        // Fresh epoch goes live for this guard; retire the previous one.
        epoch_ = f.epoch;
        next_round_ = 0;
        credit_ = 0;
        auto it = epochs_.find(epoch_);
        if (it == epochs_.end()) break;  // never saw this epoch's transcript
        while (epochs_.size() > 2) epochs_.erase(epochs_.begin());
      }
      credit_ = std::max(credit_, f.round);
      stream_ciphers(sim);
      break;
    }
    case wire::kBlameRequest:
      handle_blame_request(sim, f);
      break;
    case wire::kHashRevealRequest:
      handle_hash_request(sim, f);
      break;
    case wire::kPairEvidence:
      handle_pair_evidence(sim, f);
      break;
    default:
      break;
  }
}

uint32_t GuardNode::sim_node(simnet::Sim&) const {
  return net_.dir().guard_nodes[index_];
}

void GuardNode::handle_transcript(simnet::Sim& sim, const wire::Frame& f) {
  auto [client_ids, transcript] = parse_transcript(*group_, f.body);
  auto sit = shuffle_secrets_.find(f.epoch);
  if (sit == shuffle_secrets_.end()) return;

  Bytes sig;
  try {
    sig = setup::guard_verify_and_sign(*group_, transcript, id_, key_, sit->second);
  } catch (const TranscriptTampered&) {
    sim.log_event("transcript_rejected", fmt("guard=%u epoch=%u", id_, f.epoch));
    return;  // refusal: no signature leaves this guard
  }

  // Protocol 1 step 4: secrets from the original ephemeral keys.
  EpochState st;
  st.client_ids = client_ids;
  st.ephemerals = transcript.links.front().input_keys;
  for (size_t i = 0; i < st.ephemerals.size(); ++i)
    st.secrets.push_back(
        crypto::dh_derive(*group_, key_.priv, st.ephemerals[i], client_ids[i], id_));
  epochs_[f.epoch] = std::move(st);

  Bytes body;
  put_blob16(body, sig);
  sim.send(sim_node(sim), relay_node_, wire::encode({wire::kTranscriptSig, f.epoch, 0, body}));
  stream_ciphers(sim);  // credit may have raced ahead of the transcript
}

void GuardNode::stream_ciphers(simnet::Sim& sim) {
  auto it = epochs_.find(epoch_);
  if (it == epochs_.end()) return;
  const EpochState& st = it->second;
  while (next_round_ < credit_) {
    uint64_t t = next_round_++;
    if (fault_.kind == FaultSpec::kWithhold && fault_.applies(t)) continue;

    Bytes bits = dcnet::guard_cipher_bits(st.secrets, t, cfg_.cell_bits);
    std::optional<Scalar> sigma;
    if (cfg_.equivocation) {
      std::vector<crypto::Pad> pads;
      for (auto& s : st.secrets) pads.push_back(crypto::prg_pad(s, t, cfg_.cell_bits));
      sigma = equivocation::guard_tag(*group_, pads);
    }

    if (fault_.applies(t)) {
      if (fault_.kind == FaultSpec::kFlipBits)
        for (uint32_t k : fault_.flip_positions) flip_bit(bits, k);
      if (fault_.kind == FaultSpec::kRandomCipher) bits = rng_.bytes(bits.size());
      if (fault_.kind == FaultSpec::kBadSigma && sigma)
        sigma = group_->scalar_add(*sigma, group_->scalar_from_u64(1));
    }

    Bytes body;
    put_u32le(body, id_);
    body.push_back(sigma ? 1 : 0);
    if (sigma) put_scalar(body, *sigma);
    body.insert(body.end(), bits.begin(), bits.end());
    sim.send(sim_node(sim), relay_node_, wire::encode({wire::kGuardCipher, epoch_, t, body}));
  }
}

void GuardNode::handle_blame_request(simnet::Sim& sim, const wire::Frame& f) {
  size_t off = 0;
  uint32_t position = get_u32le(f.body, off);
  off += 4;
  Bytes sig = get_blob16(f.body, off);
  if (!crypto::verify(*group_, net_.roster().relay_pub,
                      disruption::blame_request_message(f.round, position), sig))
    return;
  auto it = epochs_.find(f.epoch);
  if (it == epochs_.end()) return;

  disruption::BitReveal r = disruption::make_reveal(*group_, id_, true, f.round,
                                                    position, it->second.secrets,
                                                    key_.priv);
  if (fault_.lie_in_reveal && fault_.applies(f.round)) {
    r.bits[0] ^= 1;
    r.signature = crypto::sign(*group_, key_.priv, disruption::bit_reveal_message(r));
  }
  sim.send(sim_node(sim), relay_node_,
           wire::encode({wire::kBitReveal, f.epoch, f.round, serialize_bit_reveal(r)}));
}

void GuardNode::handle_hash_request(simnet::Sim& sim, const wire::Frame& f) {
  size_t off = 0;
  Bytes sig = get_blob16(f.body, off);
  if (!crypto::verify(*group_, net_.roster().relay_pub,
                      disruption::blame_request_message(f.round, kHashRequestPosition), sig))
    return;
  auto it = epochs_.find(f.epoch);
  if (it == epochs_.end()) return;

  std::vector<crypto::Pad> pads;
  for (auto& s : it->second.secrets)
    pads.push_back(crypto::prg_pad(s, f.round, cfg_.cell_bits));
  equivocation::HashReveal r =
      equivocation::make_hash_reveal(*group_, id_, true, f.round, pads, key_.priv);
  sim.send(sim_node(sim), relay_node_,
           wire::encode({wire::kHashReveal, f.epoch, f.round, serialize_hash_reveal(r)}));
}

void GuardNode::handle_pair_evidence(simnet::Sim& sim, const wire::Frame& f) {
  size_t off = 0;
  uint32_t pair_client = get_u32le(f.body, off);
  off += 4;
  uint32_t pair_guard = get_u32le(f.body, off);
  off += 4;
  bool hash_stage = f.body[off++] != 0;
  uint16_t own_idx = get_u16le(f.body, off);
  off += 2;
  uint16_t cp_idx = get_u16le(f.body, off);
  off += 2;
  uint32_t cp_len = get_u32le(f.body, off);
  off += 4;
  Bytes cp_blob = get_fixed(f.body, off, cp_len);
  Bytes countersig = get_blob16(f.body, off);
  if (pair_guard != id_) return;

  auto it = epochs_.find(f.epoch);
  if (it == epochs_.end()) return;
  const EpochState& st = it->second;
  auto cpos = std::find(st.client_ids.begin(), st.client_ids.end(), pair_client);
  if (cpos == st.client_ids.end()) return;
  size_t client_index = static_cast<size_t>(cpos - st.client_ids.begin());
  const setup::RosterEntry* client_entry = net_.roster().find_client(pair_client);
  if (!client_entry) return;
  // The DH counterpart is the client's *ephemeral* key, recovered from the
  // transcript we verified at setup.
  const Element& client_eph = st.ephemerals_by_index(client_index);

  std::optional<disruption::SecretReveal> reveal;
  if (!hash_stage) {
    disruption::BitReveal cp = parse_bit_reveal(cp_blob, f.round);
    disruption::BitReveal own = disruption::make_reveal(*group_, id_, true, f.round,
                                                        cp.position, st.secrets,
                                                        key_.priv);
    if (fault_.lie_in_reveal && fault_.applies(f.round)) own.bits[0] ^= 1;
    reveal = disruption::pair_respond(*group_, true, pair_client, pair_guard, key_,
                                      client_eph, own, cp, client_entry->pub,
                                      net_.roster().relay_pub, countersig, own_idx,
                                      cp_idx, rng_);
  } else {
    equivocation::HashReveal cp = parse_hash_reveal(cp_blob, f.round);
    // Verify the evidence, then re-check the hash disagreement ourselves.
    bool sig_ok =
        crypto::verify(*group_, net_.roster().relay_pub, cp.signature, countersig) &&
        crypto::verify(*group_, client_entry->pub, equivocation::hash_reveal_message(cp),
                       cp.signature);
    if (sig_ok && own_idx < cp.hashes.size() && cp_idx < st.secrets.size()) {
      crypto::Pad own_pad = crypto::prg_pad(st.secrets[client_index], f.round, cfg_.cell_bits);
      if (equivocation::pad_hash(own_pad) != cp.hashes[own_idx])
        reveal = disruption::make_secret_reveal(*group_, true, pair_client, pair_guard,
                                                key_, client_eph, rng_);
    }
  }
  if (!reveal) return;  // evidence bogus: abort, per protocol
  sim.send(sim_node(sim), relay_node_,
           wire::encode({wire::kSecretReveal, f.epoch, f.round,
                         serialize_secret_reveal(*group_, *reveal)}));
}

// -- ClientNode --------------------------------------------------------------

ClientNode::ClientNode(Network& net, size_t index, uint32_t id, KeyPair long_term,
                       const ProtocolConfig& cfg, const Workload& wl,
                       bool active_sender)
    : net_(net),
      index_(index),
      id_(id),
      long_term_(std::move(long_term)),
      cfg_(cfg),
      workload_(wl),
      active_sender_(active_sender),
      rng_(Prng(net.spec().seed).child("client-node", id)),
      group_(&net.group()) {}

uint32_t ClientNode::sim_node() const { return net_.dir().client_nodes[index_]; }

void ClientNode::start(simnet::Sim&) {}

void ClientNode::schedule_leave(simnet::Sim& sim, uint64_t at_us, ChurnMode mode) {
  sim.set_timer(sim_node(), at_us, make_label(kTimerLeave, 0, static_cast<uint32_t>(mode)));
}

void ClientNode::schedule_join(simnet::Sim& sim, uint64_t at_us) {
  sim.set_timer(sim_node(), at_us, make_label(kTimerJoin, 0, 0));
}

void ClientNode::on_timer(simnet::Sim& sim, uint64_t label) {
  switch (label_kind(label)) {
    case kTimerLeave: {
      auto mode = static_cast<ChurnMode>(label_value(label));
      sim.log_event("churn_event", fmt("kind=leave client=%u mode=%u", id_,
                                       label_value(label)));
      if (mode == ChurnMode::kAbrupt) {
        participating_ = false;  // vanish; the relay finds out by timeout
      } else {
        Bytes body;
        put_u32le(body, id_);
        body.push_back(mode == ChurnMode::kGraceful ? 1 : 0);
        sim.send(sim_node(), net_.dir().relay_node,
                 wire::encode({wire::kLeaveNotice, epoch_, 0, body}));
        if (mode == ChurnMode::kGraceful)
          leaving_gracefully_ = true;  // keep padding until the next epoch
        else
          participating_ = false;
      }
      break;
    }
    case kTimerJoin: {
      participating_ = true;
      sim.log_event("churn_event", fmt("kind=join client=%u", id_));
      Bytes body;
      put_u32le(body, id_);
      sim.send(sim_node(), net_.dir().relay_node,
               wire::encode({wire::kJoinRequest, epoch_, 0, body}));
      break;
    }
    case kTimerCbr: {
      cbr_armed_ = false;
      if (participating_ && epoch_ready_ && active_sender_ &&
          (workload_.max_messages == 0 || messages_generated_ < workload_.max_messages)) {
        uint32_t seq = next_seq_++;
        ping_sent_at_[seq] = sim.now();
        upstream_queue_.push_back(traffic_payload(seq));
        messages_generated_++;
        if (workload_.max_messages == 0 || messages_generated_ < workload_.max_messages) {
          cbr_armed_ = true;
          sim.set_timer(sim_node(), workload_.cbr_interval_us, make_label(kTimerCbr, 0, 0));
        }
      }
      break;
    }
    default:
      break;
  }
}

void ClientNode::on_message(simnet::Sim& sim, uint32_t from, const Bytes& raw) {
  (void)from;
  wire::Frame f = wire::decode(raw);
  switch (f.type) {
    case wire::kSetupRequest:
      if (participating_ && !leaving_gracefully_) begin_auth(sim, f.epoch);
      break;
    case wire::kSchedule:
      handle_schedule(sim, f);
      break;
    case wire::kDownstream:
      if (participating_ && epoch_ready_ && f.epoch == epoch_) handle_downstream(sim, f);
      break;
    case wire::kBlameRequest:
      if (participating_ && epoch_ready_ && f.epoch == epoch_) handle_blame_request(sim, f);
      break;
    case wire::kHashRevealRequest:
      if (participating_ && epoch_ready_ && f.epoch == epoch_) handle_hash_request(sim, f);
      break;
    case wire::kPairEvidence:
      if (participating_ && epoch_ready_ && f.epoch == epoch_) handle_pair_evidence(sim, f);
      break;
    default:
      break;
  }
}

void ClientNode::begin_auth(simnet::Sim& sim, uint32_t epoch) {
  Prng arng = rng_.child("auth", epoch);
  auto [eph, msg] = setup::client_authenticate(*group_, net_.roster(), long_term_, arng);
  pending_ephemerals_[epoch] = eph;
  while (pending_ephemerals_.size() > 2) pending_ephemerals_.erase(pending_ephemerals_.begin());
  Bytes body;
  put_element(body, msg.long_term_pub);
  put_element(body, msg.ephemeral_pub);
  put_blob16(body, msg.signature);
  sim.send(sim_node(), net_.dir().relay_node, wire::encode({wire::kAuth, epoch, 0, body}));
}

void ClientNode::handle_schedule(simnet::Sim& sim, const wire::Frame& f) {
  auto pit = pending_ephemerals_.find(f.epoch);
  if (pit == pending_ephemerals_.end()) return;
  const KeyPair& eph = pit->second;

  size_t off = 0;
  uint8_t nguards = f.body[off++];
  std::vector<uint32_t> guard_ids;
  for (uint8_t j = 0; j < nguards; ++j) {
    guard_ids.push_back(get_u32le(f.body, off));
    off += 4;
  }
  uint16_t nslots = get_u16le(f.body, off);
  off += 2;
  setup::Schedule sched;
  sched.epoch = f.epoch;
  for (uint16_t i = 0; i < nslots; ++i)
    sched.slots.push_back(get_element(*group_, f.body, off));
  sched.base = get_element(*group_, f.body, off);
  std::vector<Bytes> sigs;
  for (uint8_t j = 0; j < nguards; ++j) sigs.push_back(get_blob16(f.body, off));
  std::vector<Bytes> secret_cts;
  for (uint16_t i = 0; i < nslots; ++i) secret_cts.push_back(get_blob16(f.body, off));

  // Active-guard roster view for this epoch.
  setup::Roster view = net_.roster();
  view.guards.clear();
  for (uint32_t gid : guard_ids) {
    const setup::RosterEntry* e = net_.roster().find_guard(gid);
    if (!e) return;
    view.guards.push_back(*e);
  }
  std::set<uint32_t> trusted = cfg_.trusted_guards;
  if (trusted.empty())
    for (auto& g : view.guards) trusted.insert(g.id);

  size_t slot;
  try {
    slot = setup::client_accept_schedule(*group_, sched, sigs, view, eph, trusted);
  } catch (const SlotNotFound&) {
    if (leaving_gracefully_) participating_ = false;  // clean exit point
    return;
  } catch (const ProtocolError& e) {
    sim.log_event("schedule_rejected", fmt("client=%u reason=%s", id_, e.what()));
    return;
  }

  Bytes slot_secret;
  try {
    slot_secret = crypto::pke_decrypt(*group_, eph.priv, secret_cts[slot]);
  } catch (const DecryptFailed&) {
    sim.log_event("schedule_rejected", fmt("client=%u reason=slot_secret", id_));
    return;
  }

  // Epoch switch: everything derived from the old epoch dies here.
  epoch_ = f.epoch;
  ephemeral_ = eph;
  schedule_ = std::move(sched);
  my_slot_ = slot;
  guard_ids_ = guard_ids;
  slot_secret_ = std::move(slot_secret);
  secrets_.clear();
  for (uint32_t gid : guard_ids_)
    secrets_.push_back(crypto::dh_derive(*group_, eph.priv,
                                         net_.roster().find_guard(gid)->pub, id_, gid));
  history_ = {};
  next_downstream_ = 0;
  z_buffer_.clear();
  sent_cells_.clear();
  retransmit_queue_.clear();
  reassembler_ = {};
  upstream_offset_ = 0;
  epoch_ready_ = true;
  Prng crng = rng_.child("conn", epoch_);
  do {
    conn_id_ = static_cast<uint32_t>(crng.next_u64());
  } while (conn_id_ == dcnet::kIdleConnId || conn_id_ == dcnet::kCloseConnId);

  // Un-echoed traffic from the previous epoch goes out again.
  if (!ping_sent_at_.empty()) {
    upstream_queue_.clear();
    for (auto& [seq, at] : ping_sent_at_) upstream_queue_.push_back(traffic_payload(seq));
  }
  maybe_generate_traffic(sim);

  size_t n = schedule_.slots.size();
  for (uint64_t u = 0; u < cfg_.window; ++u) send_round(sim, u, u % n, false);
}

Bytes ClientNode::traffic_payload(uint32_t seq) const {
  Bytes p;
  put_u32le(p, seq);
  size_t want = std::max<size_t>(workload_.payload_bytes, 8);
  while (p.size() < want) p.push_back(static_cast<uint8_t>(0xA0 + (id_ + p.size()) % 64));
  return p;
}

void ClientNode::maybe_generate_traffic(simnet::Sim& sim) {
  if (!participating_ || !active_sender_ || !epoch_ready_) return;
  if (workload_.kind == Workload::kPing) {
    if (!ping_sent_at_.empty()) return;  // one outstanding ping at a time
    if (workload_.max_messages && messages_generated_ >= workload_.max_messages) return;
    uint32_t seq = next_seq_++;
    ping_sent_at_[seq] = sim.now();
    upstream_queue_.push_back(traffic_payload(seq));
    messages_generated_++;
  } else if (workload_.kind == Workload::kCbr && !cbr_armed_) {
    cbr_armed_ = true;
    sim.set_timer(sim_node(), workload_.cbr_interval_us, make_label(kTimerCbr, 0, 0));
  }
}

void ClientNode::handle_downstream(simnet::Sim& sim, const wire::Frame& f) {
  z_buffer_[f.round] = f.body;
  while (true) {
    auto it = z_buffer_.find(next_downstream_);
    if (it == z_buffer_.end()) break;
    Bytes body = std::move(it->second);
    z_buffer_.erase(it);
    uint64_t r = next_downstream_++;
    process_downstream(sim, r, body);
  }
}

void ClientNode::process_downstream(simnet::Sim& sim, uint64_t round, const Bytes& body) {
  // The history binds the exact broadcast bytes, scheduling metadata and all.
  history_ = equivocation::history_update(history_, body);

  size_t off = 0;
  uint16_t upcoming_slot = get_u16le(body, off);
  off += 2;
  bool upcoming_res = body[off++] != 0;
  dcnet::DownstreamMessage z =
      dcnet::parse_downstream(BytesView(body).subspan(off));

  if (z.flags & dcnet::kFlagRetransmit) {
    auto sc = sent_cells_.find(round);
    if (sc != sent_cells_.end()) retransmit_queue_.push_back(sc->second);
  }

  for (const dcnet::DownstreamChunk& c : z.chunks) {
    if (c.conn_id != conn_id_) continue;
    std::optional<Bytes> msg;
    try {
      msg = reassembler_.feed(*group_, ephemeral_.priv, c);
    } catch (const DecryptFailed&) {
      continue;  // equivocating relay: the chunk will not open
    }
    if (!msg || msg->size() < 4) continue;
    uint32_t seq = get_u32le(*msg, 0);
    auto pit = ping_sent_at_.find(seq);
    if (pit != ping_sent_at_.end()) {
      uint64_t rtt = sim.now() - pit->second;
      sim.log_event("ping_rtt", fmt("client=%u seq=%u rtt_us=%llu", id_, seq,
                                    static_cast<unsigned long long>(rtt)));
      ping_sent_at_.erase(pit);
      echoes_++;
    }
  }
  maybe_generate_traffic(sim);

  send_round(sim, round + cfg_.window, upcoming_slot, upcoming_res);
}

dcnet::UpstreamCell ClientNode::choose_cell(uint64_t round, bool reservation) {
  (void)round;
  if (!retransmit_queue_.empty()) {
    dcnet::UpstreamCell cell = retransmit_queue_.front();
    retransmit_queue_.pop_front();
    return cell;
  }
  if (reservation && cfg_.load_period > 0) {
    bool want_open = active_sender_ || !upstream_queue_.empty();
    if (!want_open) return {dcnet::kCloseConnId, {}, false};
  }
  if (!upstream_queue_.empty()) {
    const Bytes& msg = upstream_queue_.front();
    size_t max_pl = cfg_.cell_config().max_payload();
    size_t rest = msg.size() - upstream_offset_;
    size_t take = std::min(rest, max_pl);
    dcnet::UpstreamCell cell;
    cell.conn_id = conn_id_;
    cell.payload.assign(msg.begin() + static_cast<long>(upstream_offset_),
                        msg.begin() + static_cast<long>(upstream_offset_ + take));
    cell.more_fragments = take < rest;
    if (cell.more_fragments) {
      upstream_offset_ += take;
    } else {
      upstream_queue_.pop_front();
      upstream_offset_ = 0;
    }
    return cell;
  }
  return {};  // idle
}

void ClientNode::send_round(simnet::Sim& sim, uint64_t round, size_t owner_slot,
                            bool reservation) {
  if (!participating_ || !epoch_ready_) return;
  if (fault_.kind == FaultSpec::kWithhold && fault_.applies(round)) return;

  bool is_owner = owner_slot == my_slot_;
  dcnet::CellConfig cc = cfg_.cell_config();

  Bytes x_prime;
  Bytes key_seed;
  if (is_owner) {
    dcnet::UpstreamCell cell = choose_cell(round, reservation);
    sent_cells_[round] = cell;
    while (sent_cells_.size() > 4 * schedule_.slots.size() + 8)
      sent_cells_.erase(sent_cells_.begin());
    Bytes frame = (cell.conn_id == dcnet::kIdleConnId && cell.payload.empty() &&
                   !cell.more_fragments)
                      ? dcnet::idle_frame(slot_secret_, round, cc)
                      : dcnet::serialize_cell(cell, slot_secret_, round, cc);
    if (cfg_.equivocation) {
      Prng brng = rng_.child("blind", round ^ (static_cast<uint64_t>(epoch_) << 40));
      equivocation::BlindedCell blinded = equivocation::owner_blind(*group_, frame, brng);
      x_prime = std::move(blinded.x_prime);
      key_seed = std::move(blinded.key_seed);
    } else {
      x_prime = std::move(frame);
    }
  }

  std::vector<crypto::Pad> pads;
  pads.reserve(secrets_.size());
  for (auto& s : secrets_) pads.push_back(crypto::prg_pad(s, round, cfg_.cell_bits));

  Bytes cipher(cfg_.cell_bits / 8, 0);
  for (auto& p : pads) xor_into(cipher, p.bits);
  if (is_owner) xor_into(cipher, x_prime);

  std::optional<Element> kappa;
  if (cfg_.equivocation)
    kappa = equivocation::client_tag(*group_, pads, history_, is_owner, key_seed);

  if (fault_.applies(round)) {
    if (fault_.kind == FaultSpec::kFlipBits)
      for (uint32_t k : fault_.flip_positions) flip_bit(cipher, k);
    if (fault_.kind == FaultSpec::kRandomCipher) cipher = rng_.bytes(cipher.size());
    if (fault_.kind == FaultSpec::kBadKappa && kappa)
      kappa = group_->mul(*kappa, group_->generator());
  }

  Bytes body;
  put_u32le(body, id_);
  body.push_back(kappa ? 1 : 0);
  if (kappa) put_element(body, *kappa);
  body.insert(body.end(), cipher.begin(), cipher.end());
  sim.send(sim_node(), net_.dir().relay_node,
           wire::encode({wire::kClientCipher, epoch_, round, body}));
}

void ClientNode::handle_blame_request(simnet::Sim& sim, const wire::Frame& f) {
  size_t off = 0;
  uint32_t position = get_u32le(f.body, off);
  off += 4;
  Bytes sig = get_blob16(f.body, off);
  if (!crypto::verify(*group_, net_.roster().relay_pub,
                      disruption::blame_request_message(f.round, position), sig))
    return;
  disruption::BitReveal r = disruption::make_reveal(*group_, id_, false, f.round,
                                                    position, secrets_, long_term_.priv);
  if (fault_.lie_in_reveal && fault_.applies(f.round)) {
    r.bits[0] ^= 1;
    r.signature = crypto::sign(*group_, long_term_.priv, disruption::bit_reveal_message(r));
  }
  sim.send(sim_node(), net_.dir().relay_node,
           wire::encode({wire::kBitReveal, f.epoch, f.round, serialize_bit_reveal(r)}));
}

void ClientNode::handle_hash_request(simnet::Sim& sim, const wire::Frame& f) {
  size_t off = 0;
  Bytes sig = get_blob16(f.body, off);
  if (!crypto::verify(*group_, net_.roster().relay_pub,
                      disruption::blame_request_message(f.round, kHashRequestPosition), sig))
    return;
  std::vector<crypto::Pad> pads;
  for (auto& s : secrets_) pads.push_back(crypto::prg_pad(s, f.round, cfg_.cell_bits));
  equivocation::HashReveal r =
      equivocation::make_hash_reveal(*group_, id_, false, f.round, pads, long_term_.priv);
  sim.send(sim_node(), net_.dir().relay_node,
           wire::encode({wire::kHashReveal, f.epoch, f.round, serialize_hash_reveal(r)}));
}

void ClientNode::handle_pair_evidence(simnet::Sim& sim, const wire::Frame& f) {
  size_t off = 0;
  uint32_t pair_client = get_u32le(f.body, off);
  off += 4;
  uint32_t pair_guard = get_u32le(f.body, off);
  off += 4;
  bool hash_stage = f.body[off++] != 0;
  uint16_t own_idx = get_u16le(f.body, off);
  off += 2;
  uint16_t cp_idx = get_u16le(f.body, off);
  off += 2;
  uint32_t cp_len = get_u32le(f.body, off);
  off += 4;
  Bytes cp_blob = get_fixed(f.body, off, cp_len);
  Bytes countersig = get_blob16(f.body, off);
  if (pair_client != id_) return;
  const setup::RosterEntry* guard_entry = net_.roster().find_guard(pair_guard);
  if (!guard_entry) return;
  auto gpos = std::find(guard_ids_.begin(), guard_ids_.end(), pair_guard);
  if (gpos == guard_ids_.end()) return;
  size_t guard_index = static_cast<size_t>(gpos - guard_ids_.begin());

  std::optional<disruption::SecretReveal> reveal;
  if (!hash_stage) {
    disruption::BitReveal cp = parse_bit_reveal(cp_blob, f.round);
    disruption::BitReveal own = disruption::make_reveal(*group_, id_, false, f.round,
                                                        cp.position, secrets_,
                                                        long_term_.priv);
    if (fault_.lie_in_reveal && fault_.applies(f.round)) own.bits[0] ^= 1;
    reveal = disruption::pair_respond(*group_, false, pair_client, pair_guard,
                                      ephemeral_, guard_entry->pub, own, cp,
                                      guard_entry->pub, net_.roster().relay_pub,
                                      countersig, own_idx, cp_idx, rng_);
  } else {
    equivocation::HashReveal cp = parse_hash_reveal(cp_blob, f.round);
    bool sig_ok =
        crypto::verify(*group_, net_.roster().relay_pub, cp.signature, countersig) &&
        crypto::verify(*group_, guard_entry->pub, equivocation::hash_reveal_message(cp),
                       cp.signature);
    if (sig_ok && own_idx < cp.hashes.size() && cp_idx == guard_index &&
        guard_index < secrets_.size()) {
      crypto::Pad own_pad = crypto::prg_pad(secrets_[guard_index], f.round, cfg_.cell_bits);
      if (equivocation::pad_hash(own_pad) != cp.hashes[own_idx])
        reveal = disruption::make_secret_reveal(*group_, false, pair_client, pair_guard,
                                                ephemeral_, guard_entry->pub, rng_);
    }
  }
  if (!reveal) return;
  sim.send(sim_node(), net_.dir().relay_node,
           wire::encode({wire::kSecretReveal, f.epoch, f.round,
                         serialize_secret_reveal(*group_, *reveal)}));
}

// -- RelayNode ---------------------------------------------------------------

RelayNode::RelayNode(Network& net, const NetworkSpec& spec, KeyPair key,
                     std::vector<bool> initially_active)
    : net_(net),
      spec_(spec),
      cfg_(spec.proto),
      key_(std::move(key)),
      group_(&net.group()),
      rng_(Prng(spec.seed).child("relay-node")),
      registered_(std::move(initially_active)),
      guard_registered_(spec.m, true) {}

uint32_t RelayNode::sim_node() const { return net_.dir().relay_node; }

void RelayNode::start(simnet::Sim& sim) { begin_setup(sim, false); }

std::vector<size_t> RelayNode::active_guard_chain() const {
  std::vector<size_t> chain;
  for (size_t j = 0; j < guard_registered_.size(); ++j)
    if (guard_registered_[j]) chain.push_back(j);
  return chain;
}

void RelayNode::begin_setup(simnet::Sim& sim, bool background) {
  if (blame_) blame_.reset();  // churn preempts an unfinished blame run
  size_t count = 0;
  for (size_t i = 0; i < registered_.size(); ++i)
    if (registered_[i]) ++count;

  if (!background) {
    if (phase_ == Phase::kAnonymize)
      sim.log_event("halt", fmt("since_us=%llu epoch=%u",
                                static_cast<unsigned long long>(act_.last_commit_us),
                                epoch_));
    phase_ = Phase::kSetup;
  }

  if (count < 2 || active_guard_chain().empty()) {
    sim.log_event("setup_failed", fmt("reason=%s registered=%zu",
                                      count < 2 ? "too_few_clients" : "no_guards", count));
    phase_ = Phase::kHalted;
    return;
  }

  epochs_started_++;
  Forming f;
  f.epoch = ++epoch_counter_;
  f.background = background;
  f.awaiting_auth = count;
  f.started_us = sim.now();
  forming_ = std::move(f);

  sim.log_event("epoch_setup_start", fmt("epoch=%u background=%d n=%zu",
                                         forming_->epoch, background ? 1 : 0, count));
  sim.broadcast_clients(sim_node(),
                        wire::encode({wire::kSetupRequest, forming_->epoch, 0, {}}));
  sim.set_timer(sim_node(), cfg_.setup_timeout_us,
                make_label(kTimerSetup, forming_->epoch, 0));
}

void RelayNode::on_message(simnet::Sim& sim, uint32_t from, const Bytes& raw) {
  wire::Frame f = wire::decode(raw);
  switch (f.type) {
    case wire::kAuth: {
      if (!forming_ || f.epoch != forming_->epoch) break;
      size_t off = 0;
      setup::AuthMessage msg;
      msg.long_term_pub = get_element(*group_, f.body, off);
      msg.ephemeral_pub = get_element(*group_, f.body, off);
      msg.signature = get_blob16(f.body, off);
      uint32_t id;
      try {
        id = setup::relay_check_auth(*group_, net_.roster(), msg);
      } catch (const ProtocolError& e) {
        sim.log_event("auth_rejected", fmt("reason=%s", e.what()));
        break;
      }
      size_t pos = id - 1;  // roster client ids are 1..n
      if (pos >= registered_.size() || !registered_[pos] || excluded_.contains(id)) break;
      if (forming_->ephemerals.contains(id)) break;
      forming_->ephemerals[id] = msg.ephemeral_pub;
      if (forming_->ephemerals.size() == forming_->awaiting_auth) continue_shuffle(sim);
      break;
    }
    case wire::kShuffleReply: {
      if (!forming_ || f.epoch != forming_->epoch) break;
      auto chain = active_guard_chain();
      if (forming_->shuffle_at >= chain.size()) break;
      size_t j = chain[forming_->shuffle_at];
      if (from != net_.dir().guard_nodes[j]) break;
      KeyListBody out = parse_keylist(*group_, f.body);
      setup::ShuffleLink link;
      link.guard_id = net_.roster().guards[j].id;
      link.input_keys = forming_->chain_keys;
      link.input_base = forming_->chain_base;
      link.output_keys = out.keys;
      link.output_base = out.base;
      forming_->transcript.links.push_back(std::move(link));
      forming_->chain_keys = out.keys;
      forming_->chain_base = out.base;
      forming_->shuffle_at++;
      if (forming_->shuffle_at < chain.size()) {
        sim.send(sim_node(), net_.dir().guard_nodes[chain[forming_->shuffle_at]],
                 wire::encode({wire::kShuffleRequest, forming_->epoch, 0,
                               serialize_keylist({forming_->chain_keys,
                                                  forming_->chain_base})}));
      } else {
        forming_->transcript.final_schedule = forming_->chain_keys;
        forming_->transcript.final_base = forming_->chain_base;
        forming_->signatures.assign(chain.size(), {});
        Bytes tbody = serialize_transcript(forming_->order, forming_->transcript);
        for (size_t cj : chain)
          sim.send(sim_node(), net_.dir().guard_nodes[cj],
                   wire::encode({wire::kTranscript, forming_->epoch, 0, tbody}));
      }
      break;
    }
    case wire::kTranscriptSig: {
      if (!forming_ || f.epoch != forming_->epoch) break;
      auto chain = active_guard_chain();
      size_t off = 0;
      Bytes sig = get_blob16(f.body, off);
      for (size_t p = 0; p < chain.size(); ++p) {
        if (from == net_.dir().guard_nodes[chain[p]] && forming_->signatures[p].empty()) {
          Bytes msg = setup::schedule_message(forming_->transcript.final_schedule,
                                              forming_->transcript.final_base);
          if (!crypto::verify(*group_, net_.roster().guards[chain[p]].pub, msg, sig)) {
            sim.log_event("setup_failed", fmt("reason=bad_guard_sig guard=%u",
                                              net_.roster().guards[chain[p]].id));
            return;
          }
          forming_->signatures[p] = sig;
          forming_->sig_count++;
        }
      }
      if (forming_->sig_count == chain.size()) finish_setup(sim);
      break;
    }
    case wire::kClientCipher: {
      if (f.epoch != epoch_ || phase_ == Phase::kSetup || phase_ == Phase::kHalted) break;
      size_t off = 0;
      uint32_t cid = get_u32le(f.body, off);
      off += 4;
      bool has_kappa = f.body[off++] != 0;
      RoundRecord& rec = act_.rounds[f.round];
      rec.round = f.round;
      if (has_kappa) rec.kappas[cid] = get_element(*group_, f.body, off);
      rec.client_ciphers[cid] =
          Bytes(f.body.begin() + static_cast<long>(off), f.body.end());
      try_commit(sim);
      break;
    }
    case wire::kGuardCipher: {
      if (f.epoch != epoch_ || phase_ == Phase::kSetup || phase_ == Phase::kHalted) break;
      size_t off = 0;
      uint32_t gid = get_u32le(f.body, off);
      off += 4;
      bool has_sigma = f.body[off++] != 0;
      RoundRecord& rec = act_.rounds[f.round];
      rec.round = f.round;
      std::optional<Scalar> sigma;
      if (has_sigma) {
        sigma = get_scalar(*group_, f.body, off);
        rec.sigmas[gid] = *sigma;
      }
      Bytes bits(f.body.begin() + static_cast<long>(off), f.body.end());
      rec.guard_ciphers[gid] = bits;
      act_.guard_acc.add(f.round, bits, sigma ? &*sigma : nullptr);
      try_commit(sim);
      break;
    }
    case wire::kBitReveal:
      if (blame_ && f.epoch == epoch_ && f.round == blame_->round) on_bit_reveal(sim, f);
      break;
    case wire::kHashReveal:
      if (blame_ && f.epoch == epoch_ && f.round == blame_->round) on_hash_reveal(sim, f);
      break;
    case wire::kSecretReveal:
      if (blame_ && f.epoch == epoch_ && f.round == blame_->round)
        on_secret_reveal(sim, f);
      break;
    case wire::kJoinRequest: {
      size_t off = 0;
      uint32_t cid = get_u32le(f.body, off);
      handle_churn(sim, true, cid, spec_.churn_mode);
      break;
    }
    case wire::kLeaveNotice: {
      size_t off = 0;
      uint32_t cid = get_u32le(f.body, off);
      off += 4;
      bool graceful = f.body[off] != 0;
      handle_churn(sim, false, cid, graceful ? ChurnMode::kGraceful : ChurnMode::kNaive);
      break;
    }
    default:
      break;
  }
}

void RelayNode::continue_shuffle(simnet::Sim& sim) {
  forming_->order.clear();
  for (auto& [id, key] : forming_->ephemerals) forming_->order.push_back(id);
  std::sort(forming_->order.begin(), forming_->order.end());
  forming_->chain_keys.clear();
  for (uint32_t id : forming_->order)
    forming_->chain_keys.push_back(forming_->ephemerals.at(id));
  forming_->chain_base = group_->generator();
  auto chain = active_guard_chain();
  sim.send(sim_node(), net_.dir().guard_nodes[chain[0]],
           wire::encode({wire::kShuffleRequest, forming_->epoch, 0,
                         serialize_keylist({forming_->chain_keys,
                                            forming_->chain_base})}));
}

void RelayNode::finish_setup(simnet::Sim& sim) {
  auto chain = active_guard_chain();
  Forming f = std::move(*forming_);
  forming_.reset();

  // Fresh active-epoch state.
  Active a;
  a.client_ids = f.order;
  for (size_t i = 0; i < a.client_ids.size(); ++i) a.client_pos[a.client_ids[i]] = i;
  for (uint32_t id : f.order) a.schedule_inputs.push_back(f.ephemerals.at(id));
  for (size_t j : chain) a.guard_ids.push_back(net_.roster().guards[j].id);
  a.schedule = setup::Schedule{f.transcript.final_schedule, f.transcript.final_base,
                               f.epoch};
  a.guard_acc = dcnet::GuardAccumulator(group_);
  a.open_slots.assign(a.client_ids.size(), true);
  a.votes.assign(a.client_ids.size(), true);
  a.hist_states.push_back({});
  a.last_commit_us = sim.now();

  size_t n = a.client_ids.size();
  Prng srng = rng_.child("slots", f.epoch);
  for (size_t s = 0; s < n; ++s) {
    a.slot_secrets.push_back(srng.bytes(kHashLen));
    a.encrypted_secrets.push_back(crypto::pke_encrypt(
        *group_, a.schedule.slots[s], a.slot_secrets[s], srng, a.schedule.base));
  }

  Bytes body;
  body.push_back(static_cast<uint8_t>(a.guard_ids.size()));
  for (uint32_t gid : a.guard_ids) put_u32le(body, gid);
  put_u16le(body, static_cast<uint16_t>(n));
  for (auto& s : a.schedule.slots) put_element(body, s);
  put_element(body, a.schedule.base);
  for (auto& sig : f.signatures) put_blob16(body, sig);
  for (auto& ct : a.encrypted_secrets) put_blob16(body, ct);

  act_ = std::move(a);
  epoch_ = f.epoch;
  phase_ = Phase::kAnonymize;
  setup_backoff_us_ = 0;

  sim.log_event("epoch_active",
                fmt("epoch=%u n=%zu m=%zu setup_us=%llu", epoch_, n, chain.size(),
                    static_cast<unsigned long long>(sim.now() - f.started_us)));

  sim.broadcast_clients(sim_node(), wire::encode({wire::kSchedule, epoch_, 0, body}));

  extend_plan(cfg_.window - 1);
  for (uint64_t u = 0; u < cfg_.window; ++u)
    sim.set_timer(sim_node(), cfg_.round_timeout_us,
                  make_label(kTimerRound, epoch_, static_cast<uint32_t>(u)));
  extend_credit(sim);
}

void RelayNode::abort_setup(simnet::Sim& sim, const std::string& why) {
  if (!forming_) return;
  sim.log_event("setup_failed", fmt("epoch=%u reason=%s", forming_->epoch, why.c_str()));

  // Drop whoever did not show up, then retry with backoff.
  auto chain = active_guard_chain();
  if (forming_->ephemerals.size() < forming_->awaiting_auth) {
    for (size_t i = 0; i < registered_.size(); ++i) {
      uint32_t id = static_cast<uint32_t>(i + 1);
      if (registered_[i] && !forming_->ephemerals.contains(id)) registered_[i] = false;
    }
  } else if (forming_->shuffle_at < chain.size()) {
    guard_registered_[chain[forming_->shuffle_at]] = false;
  } else {
    for (size_t p = 0; p < chain.size(); ++p)
      if (forming_->signatures[p].empty()) guard_registered_[chain[p]] = false;
  }
  bool background = forming_->background;
  forming_.reset();
  if (stopping_) return;
  setup_backoff_us_ = setup_backoff_us_ ? std::min<uint64_t>(setup_backoff_us_ * 2,
                                                             30000000)
                                        : 500000;
  if (!background) phase_ = Phase::kSetup;
  sim.set_timer(sim_node(), setup_backoff_us_, make_label(kTimerRetrySetup, 0, 0));
}

void RelayNode::handle_churn(simnet::Sim& sim, bool is_join, uint32_t client_id,
                             ChurnMode mode) {
  size_t pos = client_id - 1;
  if (pos >= registered_.size()) return;
  sim.log_event("churn_handled", fmt("kind=%s client=%u mode=%s",
                                     is_join ? "join" : "leave", client_id,
                                     mode == ChurnMode::kGraceful  ? "graceful"
                                     : mode == ChurnMode::kAbrupt ? "abrupt"
                                                                   : "naive"));
  if (is_join) {
    if (excluded_.contains(client_id)) return;
    registered_[pos] = true;
  } else {
    registered_[pos] = false;
  }
  ChurnPlan plan = churn_handler(is_join, is_join ? spec_.churn_mode : mode);
  begin_setup(sim, plan.background_setup && !plan.halt_rounds);
}

// -- Round engine ------------------------------------------------------------

void RelayNode::extend_plan(uint64_t round) {
  while (act_.plan.size() <= round) {
    if (act_.pass_queue.empty()) {
      // Pass boundary: apply the last reservation's votes, pick next pass.
      if (act_.last_pass_reservation) {
        act_.open_slots = act_.votes;
        act_.last_pass_reservation = false;
        size_t open = 0;
        for (bool b : act_.open_slots) open += b;
        if (open == 0) act_.sleep_pending = true;
      }
      size_t n = act_.client_ids.size();
      size_t open = 0;
      for (bool b : act_.open_slots) open += b;
      bool due = cfg_.load_period > 0 &&
                 (act_.rounds_since_poll >= cfg_.load_period || open == 0);
      if (due) {
        for (size_t s = 0; s < n; ++s) act_.pass_queue.push_back({static_cast<uint16_t>(s), true});
        act_.votes.assign(n, true);
        act_.last_pass_reservation = true;
        act_.rounds_since_poll = 0;
      } else {
        for (size_t s = 0; s < n; ++s)
          if (act_.open_slots[s]) act_.pass_queue.push_back({static_cast<uint16_t>(s), false});
      }
    }
    act_.plan.push_back(act_.pass_queue.front());
    act_.pass_queue.pop_front();
    act_.rounds_since_poll++;
  }
}

void RelayNode::extend_credit(simnet::Sim& sim) {
  uint64_t want = act_.next_commit + cfg_.window + cfg_.prestream();
  if (want <= act_.guard_credit_sent) return;
  act_.guard_credit_sent = want;
  for (size_t j = 0; j < act_.guard_ids.size(); ++j) {
    auto chain = active_guard_chain();
    sim.send(sim_node(), net_.dir().guard_nodes[chain[j]],
             wire::encode({wire::kGuardCredit, epoch_, want, {}}));
  }
}

void RelayNode::try_commit(simnet::Sim& sim) {
  while (phase_ == Phase::kAnonymize) {
    auto it = act_.rounds.find(act_.next_commit);
    if (it == act_.rounds.end()) return;
    RoundRecord& rec = it->second;
    if (rec.client_ciphers.size() != act_.client_ids.size()) return;
    if (!act_.guard_acc.complete(act_.next_commit, act_.guard_ids.size())) return;
    commit_round(sim, rec);
  }
}

void RelayNode::commit_round(simnet::Sim& sim, RoundRecord& rec) {
  uint64_t u = rec.round;
  extend_plan(u);
  rec.owner_slot = act_.plan[u].slot;
  rec.reservation = act_.plan[u].reservation;

  size_t snap_idx = u >= cfg_.window ? u - cfg_.window + 1 : 0;
  rec.h_snapshot = act_.hist_states.at(snap_idx - act_.hist_base);

  Bytes y = act_.guard_acc.bits(u);
  for (uint32_t cid : act_.client_ids) xor_into(y, rec.client_ciphers.at(cid));
  rec.y_raw = y;

  bool recovery_failed = false;
  Bytes frame = y;
  if (cfg_.equivocation) {
    std::vector<Element> kappas;
    std::vector<Scalar> sigmas;
    for (uint32_t cid : act_.client_ids) {
      auto k = rec.kappas.find(cid);
      if (k == rec.kappas.end()) recovery_failed = true;
      else kappas.push_back(k->second);
    }
    for (uint32_t gid : act_.guard_ids) {
      auto s = rec.sigmas.find(gid);
      if (s == rec.sigmas.end()) recovery_failed = true;
      else sigmas.push_back(s->second);
    }
    if (!recovery_failed) {
      try {
        Bytes seed = equivocation::relay_recover_key(*group_, rec.h_snapshot, sigmas,
                                                     kappas);
        rec.recovered_seed = seed;
        frame = y ^ BytesView(equivocation::blinding_mask(*group_, seed, cfg_.cell_bits));
      } catch (const HistoryMismatch&) {
        recovery_failed = true;
      }
    }
  }

  const Bytes& slot_secret = act_.slot_secrets[rec.owner_slot];
  dcnet::ParsedCell parsed;
  bool trap_ok = false;
  if (!recovery_failed) {
    parsed = dcnet::parse_frame(frame, slot_secret, u, cfg_.cell_config());
    trap_ok = disruption::verify_trap(parsed);
  }
  rec.trap_ok = trap_ok;

  if (rec.reservation)
    act_.votes[rec.owner_slot] =
        !(trap_ok && !parsed.idle && parsed.cell.conn_id == dcnet::kCloseConnId);

  size_t payload_bytes = 0;
  std::string payload_digest = "-";
  if (trap_ok && !parsed.idle && parsed.cell.conn_id != dcnet::kCloseConnId) {
    uint32_t conn = parsed.cell.conn_id;
    if (!act_.downstream.known(conn)) {
      act_.downstream.open_conn(conn, act_.schedule.slots[rec.owner_slot]);
      act_.conn_slot[conn] = rec.owner_slot;
    }
    payload_bytes = parsed.cell.payload.size();
    auto full = act_.upstream.feed(conn, parsed.cell.payload, parsed.cell.more_fragments);
    if (full) {
      payload_digest = to_hex(sha256(*full)).substr(0, 8);
      // Exit stand-in: echo the complete message back down the same
      // connection.
      act_.downstream.push(conn, *full);
      total_payload_bytes_ += full->size();
    }
  }

  uint8_t flags = 0;
  bool blame_after = false;
  Bytes truth_cell;
  if (!trap_ok) {
    if (act_.pending && act_.pending->slot == rec.owner_slot &&
        u > act_.pending->disputed_round) {
      act_.pending->attempts++;
      if (act_.pending->attempts >= cfg_.max_retransmit) {
        sim.log_event("retransmit_exhausted",
                      fmt("round=%llu slot=%zu",
                          static_cast<unsigned long long>(act_.pending->disputed_round),
                          act_.pending->slot));
        act_.pending.reset();
      } else {
        flags |= dcnet::kFlagRetransmit;
      }
    } else if (!act_.pending) {
      act_.pending = Active::PendingBlame{u, rec.owner_slot, 0};
      flags |= dcnet::kFlagRetransmit;
      sim.log_event("retransmit_flag", fmt("round=%llu slot=%zu",
                                           static_cast<unsigned long long>(u),
                                           rec.owner_slot));
    } else {
      flags |= dcnet::kFlagRetransmit;  // second dispute rides the same flag
    }
  } else if (act_.pending && act_.pending->slot == rec.owner_slot &&
             u > act_.pending->disputed_round) {
    // First clean retransmission: its cell is the ground truth for the
    // disputed round, re-framed under that round's mask.
    uint64_t t = act_.pending->disputed_round;
    truth_cell = parsed.idle
                     ? dcnet::idle_frame(slot_secret, t, cfg_.cell_config())
                     : dcnet::serialize_cell(parsed.cell, slot_secret, t,
                                             cfg_.cell_config());
    blame_after = true;
  }

  extend_plan(u + cfg_.window);
  bool announce = !stopping_ &&
                  !(spec_.target_rounds && total_committed_ + 1 >= spec_.target_rounds);
  if (cfg_.load_period > 0 && act_.plan[u + cfg_.window].reservation)
    flags |= dcnet::kFlagLoadRequest;

  broadcast_downstream(sim, u, flags, announce);

  extend_credit(sim);
  act_.next_commit = u + 1;
  rec.committed = true;
  total_committed_++;
  act_.last_commit_us = sim.now();

  sim.log_event("round_commit",
                fmt("epoch=%u round=%llu slot=%zu res=%d trap=%d idle=%d bytes=%zu "
                    "digest=%s",
                    epoch_, static_cast<unsigned long long>(u), rec.owner_slot,
                    rec.reservation ? 1 : 0, trap_ok ? 1 : 0,
                    (!recovery_failed && parsed.idle) ? 1 : 0, payload_bytes,
                    payload_digest.c_str()));

  if (announce)
    sim.set_timer(sim_node(), cfg_.round_timeout_us,
                  make_label(kTimerRound, epoch_, static_cast<uint32_t>(u + cfg_.window)));

  // Blame log retention: recent rounds only, plus the disputed one.
  uint64_t horizon = 3 * act_.client_ids.size() + 4 * cfg_.window + 8;
  while (!act_.rounds.empty()) {
    auto first = act_.rounds.begin();
    if (first->first + horizon >= act_.next_commit) break;
    if (act_.pending && first->first == act_.pending->disputed_round) break;
    act_.rounds.erase(first);
  }
  act_.guard_acc.drop_through(u);
  while (act_.hist_states.size() > cfg_.window + 2) {
    act_.hist_states.pop_front();
    act_.hist_base++;
  }

  if (spec_.target_rounds && total_committed_ >= spec_.target_rounds) stopping_ = true;
  if (blame_after) start_blame(sim, act_.pending->disputed_round, truth_cell);
}

void RelayNode::broadcast_downstream(simnet::Sim& sim, uint64_t round, uint8_t flags,
                                     bool announce) {
  dcnet::DownstreamMessage z;
  z.round = round;
  z.flags = flags;
  Prng zrng = rng_.child("z", static_cast<uint64_t>(epoch_) << 32 | round);
  z.chunks = act_.downstream.next_chunks(cfg_.downstream_cap, *group_,
                                         act_.schedule.base, zrng);

  Bytes body;
  uint16_t upcoming_slot = 0xFFFF;
  uint8_t upcoming_res = 0;
  if (announce) {
    upcoming_slot = act_.plan[round + cfg_.window].slot;
    upcoming_res = act_.plan[round + cfg_.window].reservation ? 1 : 0;
  }
  put_u16le(body, upcoming_slot);
  body.push_back(upcoming_res);
  Bytes zb = dcnet::serialize_downstream(z);
  body.insert(body.end(), zb.begin(), zb.end());

  // The relay's own history tracks exactly what it broadcasts.
  act_.history = equivocation::history_update(act_.history, body);
  act_.hist_states.push_back(act_.history);

  const FaultSpec* equiv = nullptr;
  for (const FaultSpec& fs : spec_.faults)
    if (fs.kind == FaultSpec::kEquivocateZ && fs.applies(round) && epoch_ == 1)
      equiv = &fs;

  if (!equiv) {
    bool delay = act_.sleep_pending;
    act_.sleep_pending = false;
    Bytes framed = wire::encode({wire::kDownstream, epoch_, round, body});
    if (delay && !stopping_) {
      pending_broadcast_ = std::move(framed);
      sim.log_event("sleep", fmt("us=%llu",
                                 static_cast<unsigned long long>(cfg_.sleep_interval_us)));
      sim.set_timer(sim_node(), cfg_.sleep_interval_us, make_label(kTimerSleep, epoch_, 0));
    } else {
      sim.broadcast_clients(sim_node(), std::move(framed));
    }
  } else {
    // Equivocation attack: the victim sees a downstream with one extra
    // marker chunk; everyone else sees the honest bytes.
    Bytes victim_body = body;
    dcnet::DownstreamMessage zv = z;
    zv.chunks.push_back({0xDEADBEEFu, true, Bytes{0x00}});
    victim_body.resize(3);
    Bytes zvb = dcnet::serialize_downstream(zv);
    victim_body.insert(victim_body.end(), zvb.begin(), zvb.end());
    for (size_t i = 0; i < net_.dir().client_nodes.size(); ++i) {
      bool is_victim = net_.roster().clients[i].id == equiv->entity_id;
      sim.send(sim_node(), net_.dir().client_nodes[i],
               wire::encode({wire::kDownstream, epoch_, round,
                             is_victim ? victim_body : body}));
    }
  }
}

void RelayNode::on_timer(simnet::Sim& sim, uint64_t label) {
  switch (label_kind(label)) {
    case kTimerSetup: {
      if (forming_ && forming_->epoch == label_epoch(label)) abort_setup(sim, "timeout");
      break;
    }
    case kTimerRetrySetup: {
      if (!forming_ && phase_ != Phase::kAnonymize && !stopping_) begin_setup(sim, false);
      break;
    }
    case kTimerRound: {
      if (label_epoch(label) != epoch_ || phase_ != Phase::kAnonymize || stopping_) break;
      uint64_t u = act_.next_commit;
      if (label_value(label) < u) break;  // already committed
      auto it = act_.rounds.find(u);
      std::vector<uint32_t> missing_clients, missing_guards;
      for (uint32_t cid : act_.client_ids)
        if (it == act_.rounds.end() || !it->second.client_ciphers.contains(cid))
          missing_clients.push_back(cid);
      for (uint32_t gid : act_.guard_ids)
        if (it == act_.rounds.end() || !it->second.guard_ciphers.contains(gid))
          missing_guards.push_back(gid);
      if (missing_clients.empty() && missing_guards.empty()) break;  // just slow
      for (uint32_t cid : missing_clients) {
        sim.log_event("round_timeout", fmt("round=%llu client=%u",
                                           static_cast<unsigned long long>(u), cid));
        registered_[cid - 1] = false;
        disruption::Verdict v{disruption::Verdict::kExcludedClient, cid,
                              "withheld ciphertext (round timeout)"};
        verdicts_.push_back(v);
        sim.log_event("verdict", fmt("kind=%s entity=%u detail=%s",
                                     disruption::verdict_name(v.kind), v.entity,
                                     v.detail.c_str()));
      }
      for (uint32_t gid : missing_guards) {
        sim.log_event("round_timeout", fmt("round=%llu guard=%u",
                                           static_cast<unsigned long long>(u), gid));
        for (size_t j = 0; j < net_.roster().guards.size(); ++j)
          if (net_.roster().guards[j].id == gid) guard_registered_[j] = false;
        disruption::Verdict v{disruption::Verdict::kExcludedGuard, gid,
                              "withheld ciphertext (round timeout)"};
        verdicts_.push_back(v);
        sim.log_event("verdict", fmt("kind=%s entity=%u detail=%s",
                                     disruption::verdict_name(v.kind), v.entity,
                                     v.detail.c_str()));
      }
      begin_setup(sim, false);
      break;
    }
    case kTimerSleep: {
      if (label_epoch(label) == epoch_ && !pending_broadcast_.empty()) {
        Bytes b = std::move(pending_broadcast_);
        pending_broadcast_.clear();
        sim.broadcast_clients(sim_node(), std::move(b));
      }
      break;
    }
    case kTimerBlame: {
      if (!blame_ || blame_->stage_token != static_cast<int>(label_value(label))) break;
      // Deadline: whoever has not answered is convicted by default.
      if (blame_->pair_active) {
        finish_pair(sim);
      } else if (!blame_->hash_stage_done && cfg_.equivocation) {
        finish_hash_collection(sim);
      } else {
        finish_bit_collection(sim);
      }
      break;
    }
    default:
      break;
  }
}

// -- Blame -------------------------------------------------------------------

void RelayNode::arm_blame_deadline(simnet::Sim& sim) {
  blame_->stage_token++;
  sim.set_timer(sim_node(), cfg_.blame_timeout_us,
                make_label(kTimerBlame, epoch_, static_cast<uint32_t>(blame_->stage_token)));
}

void RelayNode::start_blame(simnet::Sim& sim, uint64_t disputed_round,
                            const Bytes& truth_cell) {
  auto it = act_.rounds.find(disputed_round);
  if (it == act_.rounds.end()) {  // record aged out; nothing to dispute
    act_.pending.reset();
    return;
  }
  phase_ = Phase::kBlame;
  sim.log_event("blame_start", fmt("round=%llu",
                                   static_cast<unsigned long long>(disputed_round)));
  blame_.emplace();
  blame_->round = disputed_round;
  blame_->truth_cell = truth_cell;
  blame_->disrupted = it->second.y_raw;
  blame_->transcript.trigger_round = disputed_round;
  blame_->transcript.disrupted_x = it->second.y_raw;

  if (cfg_.equivocation)
    begin_hash_blame(sim);
  else
    begin_bit_blame(sim);
}

void RelayNode::begin_hash_blame(simnet::Sim& sim) {
  Bytes sig = crypto::sign(*group_, key_.priv,
                           disruption::blame_request_message(blame_->round,
                                                             kHashRequestPosition));
  Bytes body;
  put_blob16(body, sig);
  Bytes framed = wire::encode({wire::kHashRevealRequest, epoch_, blame_->round, body});
  sim.broadcast_clients(sim_node(), framed);
  auto chain = active_guard_chain();
  for (size_t j : chain) sim.send(sim_node(), net_.dir().guard_nodes[j], framed);
  arm_blame_deadline(sim);
}

void RelayNode::on_hash_reveal(simnet::Sim& sim, const wire::Frame& f) {
  if (blame_->hash_stage_done || blame_->pair_active) return;
  equivocation::HashReveal r = parse_hash_reveal(f.body, f.round);
  const setup::RosterEntry* entry = r.is_guard ? net_.roster().find_guard(r.entity_id)
                                               : net_.roster().find_client(r.entity_id);
  if (!entry) return;
  if (!crypto::verify(*group_, entry->pub, equivocation::hash_reveal_message(r),
                      r.signature))
    return;  // treated as missing; the deadline convicts
  if (r.is_guard)
    blame_->guard_hashes[r.entity_id] = std::move(r);
  else
    blame_->client_hashes[r.entity_id] = std::move(r);
  if (blame_->client_hashes.size() == act_.client_ids.size() &&
      blame_->guard_hashes.size() == act_.guard_ids.size())
    finish_hash_collection(sim);
}

void RelayNode::finish_hash_collection(simnet::Sim& sim) {
  if (!blame_ || blame_->hash_stage_done) return;
  for (uint32_t cid : act_.client_ids)
    if (!blame_->client_hashes.contains(cid))
      return conclude_blame(sim, {disruption::Verdict::kExcludedClient, cid,
                                  "no hash reveal"});
  for (uint32_t gid : act_.guard_ids)
    if (!blame_->guard_hashes.contains(gid))
      return conclude_blame(sim, {disruption::Verdict::kExcludedGuard, gid,
                                  "no hash reveal"});

  const RoundRecord& rec = act_.rounds.at(blame_->round);
  equivocation::BlameInputs in;
  in.h_snapshot = rec.h_snapshot;
  in.client_ids = act_.client_ids;
  in.guard_ids = act_.guard_ids;
  in.recorded_kappas = rec.kappas;
  in.recorded_sigmas = rec.sigmas;
  in.client_reveals = blame_->client_hashes;
  in.guard_reveals = blame_->guard_hashes;
  in.observed_mask = blame_->disrupted ^ BytesView(blame_->truth_cell);
  in.cell_bits = cfg_.cell_bits;

  equivocation::BlameResult res = equivocation::equivocation_blame(*group_, in);
  switch (res.kind) {
    case equivocation::BlameResult::kExcludedClient:
      return conclude_blame(sim, {disruption::Verdict::kExcludedClient, res.entity,
                                  res.detail});
    case equivocation::BlameResult::kExcludedGuard:
      return conclude_blame(sim, {disruption::Verdict::kExcludedGuard, res.entity,
                                  res.detail});
    case equivocation::BlameResult::kPairMismatch:
      blame_->hash_stage_done = true;
      return escalate_pair(sim, res.pair_client, res.pair_guard, true);
    case equivocation::BlameResult::kAmbiguous:
      return conclude_blame(sim, {disruption::Verdict::kInconsistent, 0, res.detail});
    case equivocation::BlameResult::kNoFault:
      blame_->hash_stage_done = true;
      return begin_bit_blame(sim);
  }
}

void RelayNode::begin_bit_blame(simnet::Sim& sim) {
  const RoundRecord& rec = act_.rounds.at(blame_->round);
  blame_->truth_dcnet = blame_->truth_cell;
  if (cfg_.equivocation) {
    if (!rec.recovered_seed)
      return conclude_blame(sim, {disruption::Verdict::kInconsistent, 0,
                                  "tags verified but recovery failed"});
    blame_->truth_dcnet =
        blame_->truth_cell ^
        BytesView(equivocation::blinding_mask(*group_, *rec.recovered_seed,
                                              cfg_.cell_bits));
  }
  blame_->transcript.original_x = blame_->truth_dcnet;

  std::optional<size_t> k =
      disruption::find_flipped_zero(blame_->truth_dcnet, blame_->disrupted);
  if (!k) {
    if (blame_->truth_dcnet == blame_->disrupted)
      return conclude_blame(sim, {disruption::Verdict::kInconsistent, 0,
                                  "no bit difference yet the trap failed"});
    return conclude_blame(sim, {disruption::Verdict::kUntraceable, 0,
                                "only 1-to-0 flips"});
  }
  blame_->position = *k;
  blame_->transcript.position = static_cast<uint32_t>(*k);

  Bytes sig = crypto::sign(
      *group_, key_.priv,
      disruption::blame_request_message(blame_->round, static_cast<uint32_t>(*k)));
  Bytes body;
  put_u32le(body, static_cast<uint32_t>(*k));
  put_blob16(body, sig);
  Bytes framed = wire::encode({wire::kBlameRequest, epoch_, blame_->round, body});
  sim.broadcast_clients(sim_node(), framed);
  for (size_t j : active_guard_chain()) sim.send(sim_node(), net_.dir().guard_nodes[j], framed);
  arm_blame_deadline(sim);
}

void RelayNode::on_bit_reveal(simnet::Sim& sim, const wire::Frame& f) {
  if (!blame_->position || blame_->pair_active) return;
  disruption::BitReveal r = parse_bit_reveal(f.body, f.round);
  const setup::RosterEntry* entry = r.is_guard ? net_.roster().find_guard(r.entity_id)
                                               : net_.roster().find_client(r.entity_id);
  if (!entry || r.position != *blame_->position) return;
  if (!disruption::verify_reveal(*group_, r, entry->pub)) return;
  if (r.is_guard)
    blame_->guard_reveals[r.entity_id] = std::move(r);
  else
    blame_->client_reveals[r.entity_id] = std::move(r);
  if (blame_->client_reveals.size() == act_.client_ids.size() &&
      blame_->guard_reveals.size() == act_.guard_ids.size())
    finish_bit_collection(sim);
}

void RelayNode::finish_bit_collection(simnet::Sim& sim) {
  if (!blame_ || blame_->pair_active) return;
  for (uint32_t cid : act_.client_ids)
    if (!blame_->client_reveals.contains(cid))
      return conclude_blame(sim, {disruption::Verdict::kExcludedClient, cid,
                                  "no bit reveal"});
  for (uint32_t gid : act_.guard_ids)
    if (!blame_->guard_reveals.contains(gid))
      return conclude_blame(sim, {disruption::Verdict::kExcludedGuard, gid,
                                  "no bit reveal"});

  for (auto& [id, r] : blame_->client_reveals) blame_->transcript.reveals.push_back(r);
  for (auto& [id, r] : blame_->guard_reveals) blame_->transcript.reveals.push_back(r);

  const RoundRecord& rec = act_.rounds.at(blame_->round);
  disruption::IsolationOutcome out = disruption::isolate_mismatch(
      act_.client_ids, act_.guard_ids, blame_->client_reveals, blame_->guard_reveals,
      rec.client_ciphers, rec.guard_ciphers, *blame_->position);
  switch (out.kind) {
    case disruption::IsolationOutcome::kExcluded:
      return conclude_blame(
          sim, {out.entity_is_guard ? disruption::Verdict::kExcludedGuard
                                    : disruption::Verdict::kExcludedClient,
                out.entity, out.detail});
    case disruption::IsolationOutcome::kPair:
      return escalate_pair(sim, out.client, out.guard, false);
    case disruption::IsolationOutcome::kInconsistent:
      return conclude_blame(sim,
                            {disruption::Verdict::kInconsistent, 0, out.detail});
  }
}

void RelayNode::escalate_pair(simnet::Sim& sim, uint32_t client_id, uint32_t guard_id,
                              bool hash_stage) {
  blame_->pair_active = true;
  blame_->pair_from_hash = hash_stage;
  blame_->pair_client = client_id;
  blame_->pair_guard = guard_id;
  blame_->transcript.pair = {client_id, guard_id};

  size_t i_index = act_.client_pos.at(client_id);
  size_t j_index = 0;
  for (size_t j = 0; j < act_.guard_ids.size(); ++j)
    if (act_.guard_ids[j] == guard_id) j_index = j;

  Bytes client_blob, guard_blob;
  Bytes client_sig, guard_sig;
  if (hash_stage) {
    client_blob = serialize_hash_reveal(blame_->client_hashes.at(client_id));
    guard_blob = serialize_hash_reveal(blame_->guard_hashes.at(guard_id));
    client_sig = blame_->client_hashes.at(client_id).signature;
    guard_sig = blame_->guard_hashes.at(guard_id).signature;
  } else {
    client_blob = serialize_bit_reveal(blame_->client_reveals.at(client_id));
    guard_blob = serialize_bit_reveal(blame_->guard_reveals.at(guard_id));
    client_sig = blame_->client_reveals.at(client_id).signature;
    guard_sig = blame_->guard_reveals.at(guard_id).signature;
  }

  auto evidence = [&](uint16_t own_idx, uint16_t cp_idx, const Bytes& blob,
                      const Bytes& cp_sig) {
    Bytes body;
    put_u32le(body, client_id);
    put_u32le(body, guard_id);
    body.push_back(hash_stage ? 1 : 0);
    put_u16le(body, own_idx);
    put_u16le(body, cp_idx);
    put_u32le(body, static_cast<uint32_t>(blob.size()));
    body.insert(body.end(), blob.begin(), blob.end());
    put_blob16(body, crypto::sign(*group_, key_.priv, cp_sig));
    return wire::encode({wire::kPairEvidence, epoch_, blame_->round, body});
  };

  // The client receives the guard's signed reveal and vice versa.
  size_t ci = i_index;  // position of this client in guard bit arrays
  sim.send(sim_node(), net_.dir().client_nodes[client_id - 1],
           evidence(static_cast<uint16_t>(ci), static_cast<uint16_t>(j_index),
                    guard_blob, guard_sig));
  size_t gpos = 0;
  for (size_t j = 0; j < net_.roster().guards.size(); ++j)
    if (net_.roster().guards[j].id == guard_id) gpos = j;
  sim.send(sim_node(), net_.dir().guard_nodes[gpos],
           evidence(static_cast<uint16_t>(j_index), static_cast<uint16_t>(ci),
                    client_blob, client_sig));
  arm_blame_deadline(sim);
}

void RelayNode::on_secret_reveal(simnet::Sim& sim, const wire::Frame& f) {
  if (!blame_->pair_active) return;
  disruption::SecretReveal r = parse_secret_reveal(*group_, f.body);
  if (r.client_id != blame_->pair_client || r.guard_id != blame_->pair_guard) return;
  if (r.by_guard)
    blame_->pair_guard_reveal = std::move(r);
  else
    blame_->pair_client_reveal = std::move(r);
  blame_->transcript.secret_reveals.clear();
  if (blame_->pair_client_reveal)
    blame_->transcript.secret_reveals.push_back(*blame_->pair_client_reveal);
  if (blame_->pair_guard_reveal)
    blame_->transcript.secret_reveals.push_back(*blame_->pair_guard_reveal);
  if (blame_->pair_client_reveal && blame_->pair_guard_reveal) finish_pair(sim);
}

void RelayNode::finish_pair(simnet::Sim& sim) {
  if (!blame_ || !blame_->pair_active) return;
  uint32_t cid = blame_->pair_client, gid = blame_->pair_guard;
  size_t i_index = act_.client_pos.at(cid);
  size_t j_index = 0;
  for (size_t j = 0; j < act_.guard_ids.size(); ++j)
    if (act_.guard_ids[j] == gid) j_index = j;

  const Element& client_eph = act_.schedule_inputs.at(i_index);
  const Element& guard_pub = net_.roster().find_guard(gid)->pub;

  if (!blame_->pair_from_hash) {
    uint8_t cb = blame_->client_reveals.at(cid).bits[j_index];
    uint8_t gb = blame_->guard_reveals.at(gid).bits[i_index];
    disruption::Verdict v = disruption::resolve_pair(
        *group_, cid, gid, client_eph, guard_pub, blame_->pair_client_reveal,
        blame_->pair_guard_reveal, blame_->round, *blame_->position, cb, gb);
    return conclude_blame(sim, v);
  }

  // Hash flavor: recompute the whole pad from the revealed secret and
  // compare the claimed H(p_ij) values.
  bool c_ok = blame_->pair_client_reveal &&
              disruption::secret_reveal_valid(*group_, *blame_->pair_client_reveal,
                                              client_eph, guard_pub);
  bool g_ok = blame_->pair_guard_reveal &&
              disruption::secret_reveal_valid(*group_, *blame_->pair_guard_reveal,
                                              guard_pub, client_eph);
  if (!c_ok && !g_ok)
    return conclude_blame(sim, {disruption::Verdict::kInconsistent, 0,
                                "both pair reveals unusable"});
  if (!c_ok)
    return conclude_blame(sim, {disruption::Verdict::kExcludedClient, cid,
                                blame_->pair_client_reveal ? "invalid secret reveal"
                                                           : "refused to reveal"});
  if (!g_ok)
    return conclude_blame(sim, {disruption::Verdict::kExcludedGuard, gid,
                                blame_->pair_guard_reveal ? "invalid secret reveal"
                                                          : "refused to reveal"});

  crypto::SharedSecret s =
      disruption::secret_from_dh(blame_->pair_client_reveal->dh_element);
  Bytes true_hash =
      equivocation::pad_hash(crypto::prg_pad(s, blame_->round, cfg_.cell_bits));
  const Bytes& claimed_c = blame_->client_hashes.at(cid).hashes[j_index];
  const Bytes& claimed_g = blame_->guard_hashes.at(gid).hashes[i_index];
  if (claimed_c != true_hash)
    return conclude_blame(sim, {disruption::Verdict::kExcludedClient, cid,
                                "claimed pad hash contradicts secret"});
  if (claimed_g != true_hash)
    return conclude_blame(sim, {disruption::Verdict::kExcludedGuard, gid,
                                "claimed pad hash contradicts secret"});
  conclude_blame(sim, {disruption::Verdict::kInconsistent, 0,
                       "pair hashes both match recomputed pad"});
}

void RelayNode::conclude_blame(simnet::Sim& sim, disruption::Verdict v) {
  blame_->transcript.verdict = v;
  transcripts_.push_back(blame_->transcript);
  verdicts_.push_back(v);
  sim.log_event("verdict", fmt("kind=%s entity=%u detail=%s",
                               disruption::verdict_name(v.kind), v.entity,
                               v.detail.c_str()));
  bool excluded = v.kind == disruption::Verdict::kExcludedClient ||
                  v.kind == disruption::Verdict::kExcludedGuard;
  blame_.reset();
  act_.pending.reset();
  sim.log_event("blame_end", "");

  if (excluded) {
    excluded_.insert(v.entity);
    if (v.kind == disruption::Verdict::kExcludedClient) {
      if (v.entity >= 1 && v.entity <= registered_.size()) registered_[v.entity - 1] = false;
    } else {
      for (size_t j = 0; j < net_.roster().guards.size(); ++j)
        if (net_.roster().guards[j].id == v.entity) guard_registered_[j] = false;
    }
    begin_setup(sim, false);
  } else {
    phase_ = Phase::kAnonymize;
    try_commit(sim);
  }
}

}  // namespace lldc::nodes
