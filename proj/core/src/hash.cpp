#include "lldc/hash.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <stdexcept>

namespace lldc {

Bytes sha256(BytesView data) {
  Bytes out(kHashLen);
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) ||
      len != kHashLen)
    throw std::runtime_error("sha256 failed");
  return out;
}

Bytes sha256(std::initializer_list<BytesView> parts) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha256 ctx");
  Bytes out(kHashLen);
  unsigned int len = 0;
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1;
  for (auto& p : parts)
    ok = ok && EVP_DigestUpdate(ctx, p.data(), p.size()) == 1;
  ok = ok && EVP_DigestFinal_ex(ctx, out.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != kHashLen) throw std::runtime_error("sha256 failed");
  return out;
}

Bytes hmac_sha256(BytesView key, BytesView message) {
  Bytes out(kHashLen);
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(),
            message.size(), out.data(), &len) ||
      len != kHashLen)
    throw std::runtime_error("hmac failed");
  return out;
}

}  // namespace lldc
