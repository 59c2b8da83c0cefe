#pragma once

#include "lldc/bytes.hpp"

namespace lldc::wire {

// Link framing, bit-exact little-endian:
//   [magic:2][version:1][type:1][epoch:4][round:8][length:4][body]
inline constexpr uint16_t kMagic = 0x4C44;
inline constexpr uint8_t kVersion = 1;
inline constexpr size_t kHeaderSize = 20;

enum Type : uint8_t {
  kAuth = 1,
  kShuffleRequest = 2,
  kShuffleReply = 3,
  kTranscript = 4,
  kTranscriptSig = 5,
  kSchedule = 6,
  kSlotSecrets = 7,
  kClientCipher = 8,
  kGuardCipher = 9,
  kDownstream = 10,
  kGuardCredit = 11,
  kBlameRequest = 12,
  kBitReveal = 13,
  kPairEvidence = 14,
  kSecretReveal = 15,
  kHashRevealRequest = 16,
  kHashReveal = 17,
  kSetupRequest = 18,
  kJoinRequest = 19,
  kLeaveNotice = 20,
};

struct Frame {
  uint8_t type = 0;
  uint32_t epoch = 0;
  uint64_t round = 0;
  Bytes body;
};

Bytes encode(const Frame& f);
Frame decode(BytesView b);  // FrameError on bad magic/version/length

}  // namespace lldc::wire
