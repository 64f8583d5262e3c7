#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lobwm {

// Base error for everything thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Domain-object invariant broken (crossed book, bad shapes, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

// Bad or inconsistent configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

// File / format problems. Carries a line number when one is known.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

// Training blew up (NaN loss, exploding params).
class TrainError : public Error {
public:
  explicit TrainError(const std::string& msg, long epoch = -1)
      : Error(epoch >= 0 ? msg + " (epoch " + std::to_string(epoch) + ")" : msg), epoch_(epoch) {}
  long epoch() const { return epoch_; }

private:
  long epoch_;
};

// FNV-1a, used for artifact/stage fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

std::string hash_hex(std::uint64_t h);

}  // namespace lobwm
