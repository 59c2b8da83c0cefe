#include "lldc/dcnet.hpp"

#include "lldc/errors.hpp"

namespace lldc::dcnet {

namespace {
const std::string_view kPremaskTag = "lldc/mask/v1";

Bytes frame_sans_hmac(BytesView frame) {
  Bytes out;
  out.reserve(frame.size() - kHashLen);
  out.insert(out.end(), frame.begin(), frame.begin() + kHmacOff);
  out.insert(out.end(), frame.begin() + kLenOff, frame.end());
  return out;
}
}  // namespace

Bytes premask_bytes(BytesView slot_secret, uint64_t round, const CellConfig& cfg) {
  Bytes seed;
  seed.insert(seed.end(), slot_secret.begin(), slot_secret.end());
  put_u64le(seed, round);
  Bytes mask = crypto::expand_key(seed, cfg.cell_bits, kPremaskTag);
  std::fill(mask.begin() + kHmacOff, mask.begin() + kLenOff, 0);
  return mask;
}

Bytes serialize_cell(const UpstreamCell& cell, BytesView slot_secret, uint64_t round,
                     const CellConfig& cfg) {
  if (cell.payload.size() > cfg.max_payload()) throw CellOverflow();
  Bytes frame(cfg.cell_bytes(), 0);
  Bytes head;
  put_u32le(head, cell.conn_id);
  std::copy(head.begin(), head.end(), frame.begin() + kConnIdOff);
  uint16_t len = static_cast<uint16_t>(cell.payload.size());
  if (cell.more_fragments) len |= kMoreFragments;
  Bytes lenb;
  put_u16le(lenb, len);
  std::copy(lenb.begin(), lenb.end(), frame.begin() + kLenOff);
  std::copy(cell.payload.begin(), cell.payload.end(), frame.begin() + kPayloadOff);

  if (cfg.premask) xor_into(frame, premask_bytes(slot_secret, round, cfg));

  // Trap tag over everything but its own field, masked form included.
  Bytes tag = crypto::hmac_tag(slot_secret, frame_sans_hmac(frame));
  std::copy(tag.begin(), tag.end(), frame.begin() + kHmacOff);
  return frame;
}

Bytes idle_frame(BytesView slot_secret, uint64_t round, const CellConfig& cfg) {
  if (cfg.premask) return premask_bytes(slot_secret, round, cfg);
  return Bytes(cfg.cell_bytes(), 0);
}

ParsedCell parse_frame(BytesView frame, BytesView slot_secret, uint64_t round,
                       const CellConfig& cfg) {
  if (frame.size() != cfg.cell_bytes()) throw FrameError("bad frame length");
  ParsedCell out;

  Bytes work(frame.begin(), frame.end());
  if (cfg.premask) {
    // Idle cells carry no HMAC even in premask mode; an all-zero tag field
    // plus a mask-consistent body identifies them.
    BytesView tag_field = frame.subspan(kHmacOff, kHashLen);
    if (is_zero(tag_field)) {
      Bytes unmasked = work ^ BytesView(premask_bytes(slot_secret, round, cfg));
      if (is_zero(unmasked)) {
        out.idle = true;
        return out;
      }
      out.hmac_ok = false;  // disturbed idle slot, or garbage
      return out;
    }
  } else if (is_zero(frame)) {
    out.idle = true;
    return out;
  }

  Bytes expect = crypto::hmac_tag(slot_secret, frame_sans_hmac(work));
  out.hmac_ok =
      std::equal(expect.begin(), expect.end(), work.begin() + kHmacOff);
  if (cfg.premask) xor_into(work, premask_bytes(slot_secret, round, cfg));

  uint16_t len_raw = get_u16le(work, kLenOff);
  uint16_t len = len_raw & ~kMoreFragments;
  if (kPayloadOff + len > cfg.cell_bytes()) {
    out.hmac_ok = false;
    return out;
  }
  out.cell.conn_id = get_u32le(work, kConnIdOff);
  out.cell.more_fragments = len_raw & kMoreFragments;
  out.cell.payload.assign(work.begin() + kPayloadOff,
                          work.begin() + kPayloadOff + len);
  return out;
}

Bytes guard_cipher_bits(const std::vector<SharedSecret>& per_client, uint64_t round,
                        size_t cell_bits) {
  Bytes acc(cell_bits / 8, 0);
  for (auto& s : per_client) xor_into(acc, crypto::prg_pad(s, round, cell_bits).bits);
  return acc;
}

Bytes client_cipher_bits(const std::vector<SharedSecret>& per_guard, uint64_t round,
                         size_t cell_bits, const Bytes* x_prime) {
  Bytes acc(cell_bits / 8, 0);
  for (auto& s : per_guard) xor_into(acc, crypto::prg_pad(s, round, cell_bits).bits);
  if (x_prime) {
    if (x_prime->size() != cell_bits / 8) throw CellOverflow();
    xor_into(acc, *x_prime);
  }
  return acc;
}

Bytes relay_combine(const std::vector<BytesView>& ciphertexts) {
  if (ciphertexts.empty()) throw ProtocolError("relay_combine: nothing to fold");
  Bytes acc(ciphertexts.front().begin(), ciphertexts.front().end());
  for (size_t i = 1; i < ciphertexts.size(); ++i) {
    if (ciphertexts[i].size() != acc.size()) throw FrameError("ciphertext length mismatch");
    xor_into(acc, ciphertexts[i]);
  }
  return acc;
}

void GuardAccumulator::add(uint64_t round, BytesView bits, const Scalar* sigma) {
  Slot& slot = slots_[round];
  if (slot.acc.empty())
    slot.acc.assign(bits.begin(), bits.end());
  else
    xor_into(slot.acc, bits);
  if (sigma) {
    if (!group_) throw ProtocolError("sigma without group");
    slot.sigma_sum = slot.count == 0 ? *sigma : group_->scalar_add(slot.sigma_sum, *sigma);
  }
  slot.count++;
}

bool GuardAccumulator::complete(uint64_t round, size_t guard_count) const {
  auto it = slots_.find(round);
  return it != slots_.end() && it->second.count == guard_count;
}

const Bytes& GuardAccumulator::bits(uint64_t round) const {
  auto it = slots_.find(round);
  if (it == slots_.end()) throw FrameError("no guard ciphertext for round");
  return it->second.acc;
}

Scalar GuardAccumulator::sigma_sum(uint64_t round) const {
  auto it = slots_.find(round);
  if (it == slots_.end()) throw FrameError("no guard ciphertext for round");
  return it->second.sigma_sum;
}

void GuardAccumulator::drop_through(uint64_t round) {
  slots_.erase(slots_.begin(), slots_.upper_bound(round));
}

Bytes serialize_downstream(const DownstreamMessage& z) {
  Bytes out;
  out.push_back(z.flags);
  put_u16le(out, static_cast<uint16_t>(z.chunks.size()));
  for (auto& c : z.chunks) {
    put_u32le(out, c.conn_id);
    out.push_back(c.last_fragment ? 1 : 0);
    put_u32le(out, static_cast<uint32_t>(c.ciphertext.size()));
    out.insert(out.end(), c.ciphertext.begin(), c.ciphertext.end());
  }
  return out;
}

DownstreamMessage parse_downstream(BytesView b) {
  if (b.size() < 3) throw FrameError("short downstream");
  DownstreamMessage z;
  z.flags = b[0];
  uint16_t n = get_u16le(b, 1);
  size_t off = 3;
  for (uint16_t i = 0; i < n; ++i) {
    if (off + 9 > b.size()) throw FrameError("truncated downstream chunk");
    DownstreamChunk c;
    c.conn_id = get_u32le(b, off);
    c.last_fragment = b[off + 4] != 0;
    uint32_t len = get_u32le(b, off + 5);
    off += 9;
    if (off + len > b.size()) throw FrameError("truncated downstream body");
    c.ciphertext.assign(b.begin() + static_cast<long>(off),
                        b.begin() + static_cast<long>(off + len));
    off += len;
    z.chunks.push_back(std::move(c));
  }
  if (off != b.size()) throw FrameError("trailing downstream bytes");
  return z;
}

void DownstreamQueue::open_conn(uint32_t conn_id, const Element& pseudonym_key) {
  auto [it, fresh] = conns_.try_emplace(conn_id);
  if (fresh) it->second.key = pseudonym_key;
}

bool DownstreamQueue::known(uint32_t conn_id) const { return conns_.contains(conn_id); }

void DownstreamQueue::push(uint32_t conn_id, Bytes message) {
  auto it = conns_.find(conn_id);
  if (it == conns_.end()) throw ProtocolError("push to unknown connection");
  it->second.pending.push_back(std::move(message));
}

bool DownstreamQueue::empty() const {
  for (auto& [id, c] : conns_)
    if (!c.pending.empty()) return false;
  return true;
}

std::vector<DownstreamChunk> DownstreamQueue::next_chunks(size_t cap_bytes,
                                                          const Group& g,
                                                          const Element& base,
                                                          Prng& rng) {
  std::vector<DownstreamChunk> out;
  size_t pke_overhead = g.element_size() + kHashLen;
  size_t used = 0;
  for (auto& [conn_id, conn] : conns_) {
    while (!conn.pending.empty()) {
      size_t chunk_header = 9;
      if (used + chunk_header + pke_overhead + 1 > cap_bytes) return out;
      const Bytes& msg = conn.pending.front();
      size_t remaining = msg.size() - conn.offset;
      size_t room = cap_bytes - used - chunk_header - pke_overhead;
      size_t take = std::min(remaining, room);
      bool last = take == remaining;
      BytesView fragment(msg.data() + conn.offset, take);
      DownstreamChunk c;
      c.conn_id = conn_id;
      c.last_fragment = last;
      c.ciphertext = crypto::pke_encrypt(g, conn.key, fragment, rng, base);
      used += chunk_header + c.ciphertext.size();
      out.push_back(std::move(c));
      if (last) {
        conn.pending.pop_front();
        conn.offset = 0;
      } else {
        conn.offset += take;
        return out;  // connection continues next round, in order
      }
    }
  }
  return out;
}

std::optional<Bytes> DownstreamReassembler::feed(const Group& g, const Scalar& priv,
                                                 const DownstreamChunk& chunk) {
  Bytes plain = crypto::pke_decrypt(g, priv, chunk.ciphertext);
  Bytes& acc = partial_[chunk.conn_id];
  acc.insert(acc.end(), plain.begin(), plain.end());
  if (!chunk.last_fragment) return std::nullopt;
  Bytes full = std::move(acc);
  partial_.erase(chunk.conn_id);
  return full;
}

std::optional<Bytes> UpstreamReassembler::feed(uint32_t conn_id, BytesView payload,
                                               bool more_fragments) {
  Bytes& acc = partial_[conn_id];
  if (acc.size() + payload.size() > cap_) acc.clear();  // bounded per spec
  acc.insert(acc.end(), payload.begin(), payload.end());
  if (more_fragments) return std::nullopt;
  Bytes full = std::move(acc);
  partial_.erase(conn_id);
  return full;
}

}  // namespace lldc::dcnet
