#pragma once

#include <stdexcept>
#include <string>

namespace comind {

// Base for every error the library raises. Subclasses let callers (the CLI in
// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, clamped numerics in strict mode, diverged training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files (IDX, CSFM, CSV, PGM).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dataset-level precondition failures: empty data, missing labels, bad pairing.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad magic, size mismatch or CRC failure in a checkpoint.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace comind
