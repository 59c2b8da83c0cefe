#include "lldc/bytes.hpp"

#include <cassert>
#include <stdexcept>

namespace lldc {

Bytes operator^(BytesView a, BytesView b) {
  if (a.size() != b.size()) throw std::invalid_argument("xor: length mismatch");
  Bytes out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] ^ b[i];
  return out;
}

void xor_into(Bytes& dst, BytesView src) {
  if (dst.size() != src.size()) throw std::invalid_argument("xor_into: length mismatch");
  for (size_t i = 0; i < src.size(); ++i) dst[i] ^= src[i];
}

int bit_at(BytesView b, size_t k) {
  assert(k / 8 < b.size());
  return (b[k >> 3] >> (k & 7)) & 1;
}

void flip_bit(Bytes& b, size_t k) {
  assert(k / 8 < b.size());
  b[k >> 3] ^= static_cast<uint8_t>(1u << (k & 7));
}

bool is_zero(BytesView b) {
  for (uint8_t v : b)
    if (v != 0) return false;
  return true;
}

Bytes from_string(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::string to_hex(BytesView b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (uint8_t v : b) {
    out.push_back(digits[v >> 4]);
    out.push_back(digits[v & 0xf]);
  }
  return out;
}

static int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw std::invalid_argument("bad hex digit");
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2) throw std::invalid_argument("odd hex length");
  Bytes out(hex.size() / 2);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<uint8_t>(hex_val(hex[2 * i]) << 4 | hex_val(hex[2 * i + 1]));
  return out;
}

static const char* b64_alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string to_base64(BytesView b) {
  std::string out;
  out.reserve((b.size() + 2) / 3 * 4);
  for (size_t i = 0; i < b.size(); i += 3) {
    uint32_t v = b[i] << 16;
    if (i + 1 < b.size()) v |= b[i + 1] << 8;
    if (i + 2 < b.size()) v |= b[i + 2];
    out.push_back(b64_alphabet[(v >> 18) & 63]);
    out.push_back(b64_alphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < b.size() ? b64_alphabet[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < b.size() ? b64_alphabet[v & 63] : '=');
  }
  return out;
}

Bytes from_base64(std::string_view s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  Bytes out;
  uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = val(c);
    if (v < 0) throw std::invalid_argument("bad base64 char");
    acc = acc << 6 | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>(acc >> bits));
    }
  }
  return out;
}

void put_u16le(Bytes& out, uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back(v >> 8);
}
void put_u32le(Bytes& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
void put_u64le(Bytes& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
uint16_t get_u16le(BytesView b, size_t off) {
  return static_cast<uint16_t>(b[off] | b[off + 1] << 8);
}
uint32_t get_u32le(BytesView b, size_t off) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = v << 8 | b[off + static_cast<size_t>(i)];
  return v;
}
uint64_t get_u64le(BytesView b, size_t off) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | b[off + static_cast<size_t>(i)];
  return v;
}

Bytes concat(std::initializer_list<BytesView> parts) {
  size_t total = 0;
  for (auto& p : parts) total += p.size();
  Bytes out;
  out.reserve(total);
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace lldc
