#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sfm {

// Error taxonomy used across the library. Everything derives from Error so
// callers can catch broadly; the CLI maps each to a nonzero exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class StratificationError : public Error {
 public:
  using Error::Error;
};

class TrainingFailureError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace constants {
inline constexpr double kSpeedOfLight = 299792458.0;       // m/s
inline constexpr double kPlanck = 6.62607015e-34;          // J*s
inline constexpr double kAseFrequencyHz = 193.4e12;        // photon energy reference
}  // namespace constants

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// dBm <-> mW share the same decade rule.
inline double dbm_to_mw(double dbm) { return db_to_linear(dbm); }
inline double mw_to_dbm(double mw) { return linear_to_db(mw); }

// FNV-1a over bytes. Used for artifact fingerprints in run.json and for
// determinism checks; not a cryptographic hash.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace sfm
