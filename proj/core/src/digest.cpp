#include "stagekit/digest.hpp"

#include <openssl/evp.h>

#include <cstdio>

#include "stagekit/errors.hpp"

namespace stagekit {

std::string Digest::hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

static int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Digest digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) {
    throw ManifestFormatError("digest must be 64 hex chars, got " +
                              std::to_string(hex.size()));
  }
  Digest d;
  for (size_t i = 0; i < 32; ++i) {
    int hi = hex_val(hex[2 * i]);
    int lo = hex_val(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ManifestFormatError("digest contains non-hex character");
    d.bytes[i] = static_cast<uint8_t>((hi << 4) | lo);
  }
  return d;
}

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: init failed");
  }
}

Sha256::~Sha256() {
  if (impl_ && impl_->ctx) EVP_MD_CTX_free(impl_->ctx);
}

void Sha256::update(ByteView data) { update(data.data(), data.size()); }

void Sha256::update(const void* data, size_t len) {
  if (len == 0) return;
  if (EVP_DigestUpdate(impl_->ctx, data, len) != 1) throw Error("sha256: update failed");
}

Digest Sha256::finish() {
  Digest d;
  unsigned int n = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, d.bytes.data(), &n) != 1 || n != 32) {
    throw Error("sha256: finalize failed");
  }
  return d;
}

Digest sha256(ByteView data) {
  Sha256 h;
  h.update(data);
  return h.finish();
}

}  // namespace stagekit
