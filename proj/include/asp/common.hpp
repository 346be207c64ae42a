#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace asp {

// Exit codes used by the CLI. Library code communicates through the
// exception hierarchy below; tools/asp_cli.cpp does the mapping.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitNumericAbort = 4,
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration value, unknown config key, invalid op parameters.
struct ConfigError : Error {
  using Error::Error;
};

/// Missing/unreadable/ill-formed datasets and files.
struct DataError : Error {
  using Error::Error;
};

/// Tensor shape violates an operation's contract.
struct ShapeError : DataError {
  using DataError::DataError;
};

/// Non-finite values where finite ones are required, degenerate weights.
struct NumericError : Error {
  using Error::Error;
};

/// Contract violations between in-memory values (misaligned embedding
/// stacks, out-of-domain similarities, non-unit embeddings, bad layer ids).
struct InvalidInputError : Error {
  using Error::Error;
};

// splitmix64; used to derive independent seed streams from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x51ed2701));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return splitmix64(derive_seed(master, stream) ^ splitmix64(index));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// The four seed streams that fully determine a training run.
struct SeedBundle {
  std::uint64_t master = 1;

  std::uint64_t data() const { return derive_seed(master, 1); }
  std::uint64_t crop() const { return derive_seed(master, 2); }
  std::uint64_t locations() const { return derive_seed(master, 3); }
  std::uint64_t init() const { return derive_seed(master, 4); }
  std::uint64_t metrics() const { return derive_seed(master, 5); }
};

}  // namespace asp
