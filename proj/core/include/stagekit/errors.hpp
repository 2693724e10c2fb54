#pragma once

#include <stdexcept>
#include <string>

namespace stagekit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Staging-spec text did not parse; line/col are 1-based.
struct SpecParseError : Error {
  SpecParseError(std::string msg, int line, int col)
      : Error("spec parse error at " + std::to_string(line) + ":" + std::to_string(col) +
              ": " + msg),
        line(line),
        col(col) {}
  int line;
  int col;
};

// Manifest bytes failed to decode (truncated, corrupted, or wrong version).
struct ManifestFormatError : Error {
  using Error::Error;
};

struct StoreError : Error {
  using Error::Error;
};

struct FabricError : Error {
  using Error::Error;
};

struct FabricTimeout : FabricError {
  using FabricError::FabricError;
};

struct StagingError : Error {
  using Error::Error;
};

struct EngineError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace stagekit
