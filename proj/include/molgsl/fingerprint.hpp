#pragma once

#include <cstdint>
#include <vector>

#include "molgsl/chem.hpp"
#include "molgsl/errors.hpp"

namespace molgsl::fp {

// Fixed, platform-independent 64-bit mix (FNV-1a over the little-endian byte
// stream of the input words). All Morgan identifiers derive from this hash so
// fingerprints are bit-identical across runs and platforms.
std::uint64_t hash_mix(const std::uint64_t* words, std::size_t count);
inline std::uint64_t hash_mix(const std::vector<std::uint64_t>& words) {
  return hash_mix(words.data(), words.size());
}

struct Fingerprint {
  std::vector<std::uint64_t> words;
  std::size_t n_bits = 0;
  int radius = 0;
  std::size_t popcount = 0;

  bool test(std::size_t bit) const {
    return (words[bit >> 6] >> (bit & 63)) & 1ull;
  }
};

// Morgan identifiers for all rounds 0..radius, sorted and deduplicated.
// Round 0 hashes the atom invariant tuple (element, degree, charge, H count,
// aromatic, ring); round k hashes (k, previous identifier, sorted list of
// (bond order, neighbor identifier)). Within a round, environments with the
// same identifier covering the same atom set contribute once.
std::vector<std::uint64_t> morgan_identifiers(const chem::MoleculeGraph& g, int radius);

// Identifiers folded into an n_bits-wide bitset via id mod n_bits.
// n_bits must be a power of two >= 64.
Fingerprint ecfp(const chem::MoleculeGraph& g, int radius = 2, std::size_t n_bits = 2048);

// |a AND b| / |a OR b|; 1.0 when both bitsets are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace molgsl::fp
