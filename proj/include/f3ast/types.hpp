#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace f3ast {

/// Dense client index in [0, N), stable for the lifetime of a run.
using ClientId = std::uint32_t;

/// Set of clients, kept sorted ascending with no duplicates.
using ClientSet = std::vector<ClientId>;

/// Bit-set over at most 32 clients; used by the enumerable oracle paths.
using ClientMask = std::uint32_t;

inline constexpr std::size_t kMaxMaskClients = 32;

class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A static policy table has no entry for a configuration it was asked about.
class PolicyIncompleteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The availability model cannot be enumerated by the rate-region oracle.
class UnsupportedOracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when local training produces a non-finite gradient; aborts the round.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ClientMask to_mask(const ClientSet& set);
ClientSet from_mask(ClientMask mask);
bool is_subset(ClientMask inner, ClientMask outer);
int popcount(ClientMask mask);

}  // namespace f3ast
