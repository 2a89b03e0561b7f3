#include "f3ast/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "f3ast/types.hpp"

namespace f3ast {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  h = mix64(h ^ a);
  return mix64(h ^ (b * 0xd1b54a32d192ed03ULL));
}

Rng make_stream(std::uint64_t master, Stream stream, std::uint64_t a, std::uint64_t b) {
  return Rng(derive_seed(master, stream, a, b));
}

double standard_normal(Rng& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

ClientMask to_mask(const ClientSet& set) {
  ClientMask mask = 0;
  for (ClientId k : set) {
    if (k >= kMaxMaskClients) throw InvalidInputError("client id does not fit in a mask");
    mask |= ClientMask{1} << k;
  }
  return mask;
}

ClientSet from_mask(ClientMask mask) {
  ClientSet out;
  while (mask != 0) {
    out.push_back(static_cast<ClientId>(std::countr_zero(mask)));
    mask &= mask - 1;
  }
  return out;
}

bool is_subset(ClientMask inner, ClientMask outer) { return (inner & ~outer) == 0; }

int popcount(ClientMask mask) { return std::popcount(mask); }

}  // namespace f3ast
