#pragma once

#include "lldc/bytes.hpp"

namespace lldc {

inline constexpr size_t kHashLen = 32;  // SHA-256 everywhere; lambda = 256

Bytes sha256(BytesView data);
Bytes sha256(std::initializer_list<BytesView> parts);

// Full-width HMAC-SHA256 tag.
Bytes hmac_sha256(BytesView key, BytesView message);

}  // namespace lldc
