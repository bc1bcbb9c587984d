#include "molgsl/fingerprint.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <set>
#include <utility>

namespace molgsl::fp {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

// Bitset over atom indices; tracks the atoms covered by an environment.
using AtomSet = std::vector<std::uint64_t>;

AtomSet make_atom_set(std::size_t n_atoms) { return AtomSet((n_atoms + 63) / 64, 0); }

void set_atom(AtomSet& s, int v) { s[v >> 6] |= 1ull << (v & 63); }

void merge_into(AtomSet& dst, const AtomSet& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] |= src[i];
}

int bond_code(chem::BondOrder o) { return (int)o; }

}  // namespace

std::uint64_t hash_mix(const std::uint64_t* words, std::size_t count) {
  std::uint64_t h = kFnvOffset;
  for (std::size_t w = 0; w < count; ++w) {
    std::uint64_t x = words[w];
    for (int b = 0; b < 8; ++b) {
      h ^= x & 0xff;
      h *= kFnvPrime;
      x >>= 8;
    }
  }
  return h;
}

std::vector<std::uint64_t> morgan_identifiers(const chem::MoleculeGraph& g, int radius) {
  if (radius < 0) throw UsageError("morgan_identifiers: radius must be >= 0");
  const std::size_t n = g.num_atoms();
  std::vector<std::uint64_t> collected;

  // round 0: atom invariant tuples
  std::vector<std::uint64_t> ids(n);
  for (std::size_t v = 0; v < n; ++v) {
    const chem::Atom& a = g.atoms[v];
    const std::uint64_t tuple[6] = {
        (std::uint64_t)a.atomic_num,
        (std::uint64_t)a.degree,
        (std::uint64_t)(std::int64_t)a.formal_charge,
        (std::uint64_t)a.total_h(),
        a.aromatic ? 1ull : 0ull,
        a.in_ring ? 1ull : 0ull,
    };
    ids[v] = hash_mix(tuple, 6);
    collected.push_back(ids[v]);
  }

  std::vector<AtomSet> envs(n, make_atom_set(n));
  for (std::size_t v = 0; v < n; ++v) set_atom(envs[v], (int)v);

  for (int round = 1; round <= radius; ++round) {
    std::vector<std::uint64_t> next_ids(n);
    std::vector<AtomSet> next_envs(n);
    std::map<std::pair<std::uint64_t, AtomSet>, bool> seen_this_round;
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::pair<int, std::uint64_t>> nbrs;
      nbrs.reserve(g.adjacency[v].size());
      for (const auto& [u, bi] : g.adjacency[v])
        nbrs.emplace_back(bond_code(g.bonds[bi].order), ids[u]);
      std::sort(nbrs.begin(), nbrs.end());

      std::vector<std::uint64_t> words;
      words.reserve(2 + 2 * nbrs.size());
      words.push_back((std::uint64_t)round);
      words.push_back(ids[v]);
      for (const auto& [bc, nid] : nbrs) {
        words.push_back((std::uint64_t)bc);
        words.push_back(nid);
      }
      next_ids[v] = hash_mix(words);

      AtomSet env = envs[v];
      for (const auto& [u, bi] : g.adjacency[v]) {
        (void)bi;
        merge_into(env, envs[u]);
      }
      next_envs[v] = std::move(env);

      auto key = std::make_pair(next_ids[v], next_envs[v]);
      if (!seen_this_round.emplace(std::move(key), true).second) continue;
      collected.push_back(next_ids[v]);
    }
    ids = std::move(next_ids);
    envs = std::move(next_envs);
  }

  std::sort(collected.begin(), collected.end());
  collected.erase(std::unique(collected.begin(), collected.end()), collected.end());
  return collected;
}

Fingerprint ecfp(const chem::MoleculeGraph& g, int radius, std::size_t n_bits) {
  if (n_bits < 64 || (n_bits & (n_bits - 1)) != 0)
    throw UsageError("ecfp: n_bits must be a power of two >= 64, got " +
                     std::to_string(n_bits));
  Fingerprint f;
  f.n_bits = n_bits;
  f.radius = radius;
  f.words.assign(n_bits / 64, 0);
  for (std::uint64_t id : morgan_identifiers(g, radius)) {
    const std::size_t bit = id & (n_bits - 1);
    f.words[bit >> 6] |= 1ull << (bit & 63);
  }
  f.popcount = 0;
  for (std::uint64_t w : f.words) f.popcount += (std::size_t)std::popcount(w);
  return f;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.n_bits != b.n_bits)
    throw UsageError("tanimoto: fingerprint widths differ (" + std::to_string(a.n_bits) +
                     " vs " + std::to_string(b.n_bits) + ")");
  std::size_t inter = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i)
    inter += (std::size_t)std::popcount(a.words[i] & b.words[i]);
  const std::size_t uni = a.popcount + b.popcount - inter;
  if (uni == 0) return 1.0;  // identical empty sets
  return (double)inter / (double)uni;
}

}  // namespace molgsl::fp
