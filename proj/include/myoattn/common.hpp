#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace myoattn {

// Base class for all library errors. The CLI maps these to exit code 2;
// anything thrown by argument parsing maps to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or contract violation (dimension mismatch, non-scalar loss, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Bad file contents, missing data, failed detection.
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration or parameter values.
struct ConfigError : Error {
  using Error::Error;
};

// splitmix64 step; used to derive independent seed streams from a master
// seed so that per-subject / per-channel / per-epoch randomness stays
// reproducible and uncorrelated.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derive a child seed from (seed, tag). Chained calls give a seed tree.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

// FNV-1a over raw bytes; used for provenance digests in file headers.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace myoattn
