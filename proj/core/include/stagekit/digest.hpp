#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "stagekit/bytes.hpp"

namespace stagekit {

// Content digests are SHA-256 project-wide. The algorithm name travels in
// the manifest header so a decoder built against a different algorithm
// fails loudly instead of silently verifying nothing.
inline constexpr const char* kDigestAlgorithm = "sha256";

struct Digest {
  std::array<uint8_t, 32> bytes{};

  bool operator==(const Digest&) const = default;
  std::string hex() const;
};

// Parses 64 hex chars; throws ManifestFormatError on anything else.
Digest digest_from_hex(std::string_view hex);

Digest sha256(ByteView data);

// Streaming interface for content too large to hold in memory.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(ByteView data);
  void update(const void* data, size_t len);
  Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stagekit
