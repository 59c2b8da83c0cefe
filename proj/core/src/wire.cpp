#include "lldc/wire.hpp"

#include "lldc/errors.hpp"

namespace lldc::wire {

Bytes encode(const Frame& f) {
  Bytes out;
  out.reserve(kHeaderSize + f.body.size());
  put_u16le(out, kMagic);
  out.push_back(kVersion);
  out.push_back(f.type);
  put_u32le(out, f.epoch);
  put_u64le(out, f.round);
  put_u32le(out, static_cast<uint32_t>(f.body.size()));
  out.insert(out.end(), f.body.begin(), f.body.end());
  return out;
}

Frame decode(BytesView b) {
  if (b.size() < kHeaderSize) throw FrameError("short frame");
  if (get_u16le(b, 0) != kMagic) throw FrameError("bad magic");
  if (b[2] != kVersion) throw FrameError("bad version");
  Frame f;
  f.type = b[3];
  f.epoch = get_u32le(b, 4);
  f.round = get_u64le(b, 8);
  uint32_t len = get_u32le(b, 16);
  if (kHeaderSize + len != b.size()) throw FrameError("length mismatch");
  f.body.assign(b.begin() + kHeaderSize, b.end());
  return f;
}

}  // namespace lldc::wire
