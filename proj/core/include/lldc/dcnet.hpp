#pragma once

#include "lldc/crypto.hpp"

#include <deque>
#include <map>
#include <optional>
#include <vector>

namespace lldc::dcnet {

using crypto::Element;
using crypto::Group;
using crypto::Pad;
using crypto::Scalar;
using crypto::SharedSecret;

// Upstream cell layout inside the l-bit frame, all little-endian:
//   [conn_id:4][hmac:32][len:2][payload:len][zero padding]
// len bit 15 flags "more fragments follow" for messages wider than one
// cell. The all-zero frame is the idle cell. The HMAC keyed with the
// slot secret covers every frame byte except the hmac field itself.
inline constexpr size_t kConnIdOff = 0;
inline constexpr size_t kHmacOff = 4;
inline constexpr size_t kLenOff = 36;
inline constexpr size_t kPayloadOff = 38;
inline constexpr size_t kCellOverhead = kPayloadOff;
inline constexpr uint32_t kIdleConnId = 0;
inline constexpr uint32_t kCloseConnId = 0xFFFFFFFFu;  // slot-close vote
inline constexpr uint16_t kMoreFragments = 0x8000;

struct CellConfig {
  size_t cell_bits = 8192;  // l
  bool premask = false;     // optional 5.4-style mask over non-hmac bytes
  size_t cell_bytes() const { return cell_bits / 8; }
  size_t max_payload() const { return cell_bytes() - kCellOverhead; }
};

struct UpstreamCell {
  uint32_t conn_id = kIdleConnId;
  Bytes payload;
  bool more_fragments = false;
};

// The pre-agreed random mask of one round, derived from the slot secret;
// zero over the hmac window so the tag stays readable in place.
Bytes premask_bytes(BytesView slot_secret, uint64_t round, const CellConfig& cfg);

// Frame builders. serialize_cell throws CellOverflow when the payload
// does not fit. Idle slots carry no HMAC: the idle frame is all zeros,
// or the bare premask when masking is on.
Bytes serialize_cell(const UpstreamCell& cell, BytesView slot_secret, uint64_t round,
                     const CellConfig& cfg);
Bytes idle_frame(BytesView slot_secret, uint64_t round, const CellConfig& cfg);

struct ParsedCell {
  UpstreamCell cell;
  bool idle = false;
  bool hmac_ok = false;  // meaningless when idle
};
// Undoes the premask (when configured) and validates the trap HMAC.
ParsedCell parse_frame(BytesView frame, BytesView slot_secret, uint64_t round,
                       const CellConfig& cfg);

struct RoundCiphertext {
  uint64_t round = 0;
  uint32_t sender = 0;
  Bytes bits;
  std::optional<Element> kappa;  // client equivocation tag
  std::optional<Scalar> sigma;   // guard equivocation tag
};

// XOR of one pad per counterpart; the owner additionally folds in
// x_prime (its blinded or plain frame).
Bytes guard_cipher_bits(const std::vector<SharedSecret>& per_client, uint64_t round,
                        size_t cell_bits);
Bytes client_cipher_bits(const std::vector<SharedSecret>& per_guard, uint64_t round,
                         size_t cell_bits, const Bytes* x_prime = nullptr);

// Pure XOR fold; FrameError on a length mismatch, ProtocolError when empty.
Bytes relay_combine(const std::vector<BytesView>& ciphertexts);

// Pre-streamed guard ciphertexts fold into one l-bit accumulator per
// future round; nothing per-guard is retained here (4.5 storage model).
class GuardAccumulator {
 public:
  explicit GuardAccumulator(const Group* group = nullptr) : group_(group) {}

  void add(uint64_t round, BytesView bits, const Scalar* sigma);
  bool complete(uint64_t round, size_t guard_count) const;
  // XOR of all guard ciphertexts for the round; FrameError if absent.
  const Bytes& bits(uint64_t round) const;
  Scalar sigma_sum(uint64_t round) const;
  void drop_through(uint64_t round);  // release rounds <= round
  size_t buffered_rounds() const { return slots_.size(); }

 private:
  struct Slot {
    Bytes acc;
    Scalar sigma_sum;
    size_t count = 0;
  };
  const Group* group_;
  std::map<uint64_t, Slot> slots_;
};

// -- Downstream -------------------------------------------------------------

inline constexpr uint8_t kFlagRetransmit = 0x01;   // 5.2 disruption flag
inline constexpr uint8_t kFlagSetupRequest = 0x02; // churn: re-run Setup
inline constexpr uint8_t kFlagLoadRequest = 0x04;  // 4.5 open/close poll

struct DownstreamChunk {
  uint32_t conn_id = 0;
  bool last_fragment = true;
  Bytes ciphertext;  // PKE under the slot pseudonym key
};

struct DownstreamMessage {
  uint64_t round = 0;
  uint8_t flags = 0;
  std::vector<DownstreamChunk> chunks;
};

Bytes serialize_downstream(const DownstreamMessage& z);
DownstreamMessage parse_downstream(BytesView b);  // FrameError on malformed input

// Relay-side pending data, keyed by connection; remembers the pseudonym
// key recorded when the connection was opened so replies can be encrypted
// for an unknown owner.
class DownstreamQueue {
 public:
  void open_conn(uint32_t conn_id, const Element& pseudonym_key);
  bool known(uint32_t conn_id) const;
  void push(uint32_t conn_id, Bytes message);
  bool empty() const;

  // Drains up to cap_bytes of chunk payload, fragmenting in order.
  std::vector<DownstreamChunk> next_chunks(size_t cap_bytes, const Group& g,
                                           const Element& base, Prng& rng);

 private:
  struct Conn {
    Element key;
    std::deque<Bytes> pending;
    size_t offset = 0;  // into the front message
  };
  std::map<uint32_t, Conn> conns_;
};

// Client-side: collects fragments for owned connections and yields whole
// messages in order.
class DownstreamReassembler {
 public:
  std::optional<Bytes> feed(const Group& g, const Scalar& priv,
                            const DownstreamChunk& chunk);

 private:
  std::map<uint32_t, Bytes> partial_;
};

// Relay-side reassembly of fragmented upstream payloads, per connection,
// bounded; exceeding the cap resets the connection buffer.
class UpstreamReassembler {
 public:
  explicit UpstreamReassembler(size_t cap = 64 * 1024) : cap_(cap) {}
  std::optional<Bytes> feed(uint32_t conn_id, BytesView payload, bool more_fragments);

 private:
  size_t cap_;
  std::map<uint32_t, Bytes> partial_;
};

}  // namespace lldc::dcnet
