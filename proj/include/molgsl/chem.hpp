#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "molgsl/errors.hpp"
#include "molgsl/tensor.hpp"

namespace molgsl::chem {

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  int atomic_num = 0;
  int formal_charge = 0;
  int explicit_h_count = 0;  // bracket-specified
  int implicit_h_count = 0;  // assigned by valence rules
  bool aromatic = false;
  bool bracket = false;
  int degree = 0;       // filled after graph assembly
  bool in_ring = false;  // filled after ring perception
  std::size_t src_offset = 0;

  int total_h() const { return explicit_h_count + implicit_h_count; }
};

struct Bond {
  int a = -1;
  int b = -1;
  BondOrder order = BondOrder::Single;
};

struct MoleculeGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  // adjacency[v] = list of (neighbor atom index, bond index)
  std::vector<std::vector<std::pair<int, int>>> adjacency;
  std::string source_smiles;
  bool multi_fragment = false;
  std::vector<int> fragment_of;  // fragment id per atom

  std::size_t num_atoms() const { return atoms.size(); }
  std::size_t num_bonds() const { return bonds.size(); }
};

// Symbol table helpers.
const std::string& element_symbol(int atomic_num);
int atomic_num_of(const std::string& symbol);  // 0 if unknown

// Subset grammar: organic-subset atoms B,C,N,O,P,S,F,Cl,Br,I (+ aromatic
// lowercase b,c,n,o,p,s), bracket atoms with charge and explicit H, ring
// closures (incl. %nn), branches, bond symbols - = # :, '.' fragments.
// Stereochemistry, isotopes and wildcards are rejected with a ParseError
// naming the character offset.
MoleculeGraph parse_smiles(const std::string& s);

// Per-atom descriptor matrix. Row layout: one-hot element over the organic
// subset + other (11), one-hot degree 0-5 (6), one-hot formal charge -2..+2
// (5), one-hot total H count 0-4 (5), aromatic flag, ring flag. Out-of-range
// values map to the last bucket of their block.
inline constexpr std::size_t kAtomFeatureDim = 11 + 6 + 5 + 5 + 2;
Tensor featurize(const MoleculeGraph& g);

}  // namespace molgsl::chem
