#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lldc {

using Bytes = std::vector<uint8_t>;
using BytesView = std::span<const uint8_t>;

Bytes operator^(BytesView a, BytesView b);       // equal lengths required
void xor_into(Bytes& dst, BytesView src);        // dst ^= src

// Bit addressing is LSB-first within each byte: bit k lives in
// byte k/8 at position k%8. Every bit-level operation in the
// protocol (pads, blame reveals, flip search) uses this order.
int bit_at(BytesView b, size_t k);
void flip_bit(Bytes& b, size_t k);

bool is_zero(BytesView b);

Bytes from_string(std::string_view s);
std::string to_hex(BytesView b);
Bytes from_hex(std::string_view hex);

std::string to_base64(BytesView b);
Bytes from_base64(std::string_view s);

void put_u16le(Bytes& out, uint16_t v);
void put_u32le(Bytes& out, uint32_t v);
void put_u64le(Bytes& out, uint64_t v);
uint16_t get_u16le(BytesView b, size_t off);
uint32_t get_u32le(BytesView b, size_t off);
uint64_t get_u64le(BytesView b, size_t off);

Bytes concat(std::initializer_list<BytesView> parts);

}  // namespace lldc
