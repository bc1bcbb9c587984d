#include <algorithm>
#include <cctype>

#include "corpus.hpp"
#include "doctest.h"
#include "molgsl/chem.hpp"

using namespace molgsl;
using chem::BondOrder;
using chem::MoleculeGraph;

namespace {

// Independent character-level heavy-atom count (test oracle).
int heavy_atom_scan(const std::string& s) {
  int count = 0;
  std::size_t i = 0;
  const std::string organics = "BCNOPSFI";
  const std::string aromatics = "bcnops";
  while (i < s.size()) {
    const char c = s[i];
    if (c == '[') {
      const std::size_t close = s.find(']', i);
      ++count;
      i = close + 1;
    } else if ((c == 'C' || c == 'B') && i + 1 < s.size() &&
               (s[i + 1] == 'l' || s[i + 1] == 'r')) {
      ++count;
      i += 2;
    } else if (organics.find(c) != std::string::npos ||
               aromatics.find(c) != std::string::npos) {
      ++count;
      ++i;
    } else {
      ++i;
    }
  }
  return count;
}

std::vector<std::vector<double>> sorted_rows(const Tensor& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    rows.emplace_back(m.data().begin() + i * m.cols(),
                      m.data().begin() + (i + 1) * m.cols());
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("single carbon: 1 atom, 4 implicit H, 0 bonds") {
  MoleculeGraph g = chem::parse_smiles("C");
  REQUIRE(g.num_atoms() == 1);
  CHECK(g.num_bonds() == 0);
  CHECK(g.atoms[0].atomic_num == 6);
  CHECK(g.atoms[0].total_h() == 4);
}

TEST_CASE("ethanol: 3 atoms, 2 single bonds, degrees 1/2/1") {
  MoleculeGraph g = chem::parse_smiles("CCO");
  REQUIRE(g.num_atoms() == 3);
  REQUIRE(g.num_bonds() == 2);
  for (const auto& b : g.bonds) CHECK(b.order == BondOrder::Single);
  CHECK(g.atoms[0].degree == 1);
  CHECK(g.atoms[1].degree == 2);
  CHECK(g.atoms[2].degree == 1);
  CHECK(g.atoms[0].total_h() == 3);
  CHECK(g.atoms[1].total_h() == 2);
  CHECK(g.atoms[2].total_h() == 1);
}

TEST_CASE("benzene: 6 aromatic carbons, 6 aromatic ring bonds") {
  MoleculeGraph g = chem::parse_smiles("c1ccccc1");
  REQUIRE(g.num_atoms() == 6);
  REQUIRE(g.num_bonds() == 6);
  for (const auto& a : g.atoms) {
    CHECK(a.aromatic);
    CHECK(a.in_ring);
    CHECK(a.total_h() == 1);
  }
  for (const auto& b : g.bonds) CHECK(b.order == BondOrder::Aromatic);
}

TEST_CASE("heteroaromatic hydrogen counts") {
  CHECK(chem::parse_smiles("c1ccncc1").atoms[3].total_h() == 0);  // pyridine N
  MoleculeGraph pyrrole = chem::parse_smiles("c1cc[nH]c1");
  CHECK(pyrrole.atoms[3].total_h() == 1);
  CHECK(chem::parse_smiles("c1ccoc1").atoms[3].total_h() == 0);  // furan O
  MoleculeGraph naph = chem::parse_smiles("c1ccc2ccccc2c1");
  int h_total = 0;
  for (const auto& a : naph.atoms) h_total += a.total_h();
  CHECK(h_total == 8);  // fusion carbons carry none
}

TEST_CASE("aromatic ring with exocyclic carbonyl") {
  MoleculeGraph g = chem::parse_smiles("O=c1cc[nH]c(=O)[nH]1");  // uracil
  CHECK(g.num_atoms() == 8);
  CHECK(g.atoms[1].total_h() == 0);  // carbonyl ring carbon
}

TEST_CASE("bracket atoms: charge and explicit H") {
  MoleculeGraph g = chem::parse_smiles("[NH4+]");
  REQUIRE(g.num_atoms() == 1);
  CHECK(g.atoms[0].formal_charge == 1);
  CHECK(g.atoms[0].total_h() == 4);

  CHECK(chem::parse_smiles("[Ca+2]").atoms[0].formal_charge == 2);
  CHECK(chem::parse_smiles("[Fe++]").atoms[0].formal_charge == 2);
  MoleculeGraph ox = chem::parse_smiles("CC(=O)[O-]");
  CHECK(ox.atoms[3].formal_charge == -1);
  CHECK(ox.atoms[3].total_h() == 0);
}

TEST_CASE("salt is kept as one multi-fragment graph") {
  MoleculeGraph g = chem::parse_smiles("[Na+].[Cl-]");
  CHECK(g.num_atoms() == 2);
  CHECK(g.num_bonds() == 0);
  CHECK(g.multi_fragment);
  CHECK(g.fragment_of[0] != g.fragment_of[1]);
}

TEST_CASE("ring closures: %nn and explicit bond orders") {
  MoleculeGraph a = chem::parse_smiles("C%10CCCCC%10");
  CHECK(a.num_bonds() == 6);
  MoleculeGraph b = chem::parse_smiles("C=1CCCCC1");
  int doubles = 0;
  for (const auto& bd : b.bonds)
    if (bd.order == BondOrder::Double) ++doubles;
  CHECK(doubles == 1);
  CHECK_THROWS_AS(chem::parse_smiles("C=1CCCCC#1"), ParseError);
}

TEST_CASE("parse errors name the offending offset") {
  auto offset_of = [](const std::string& smiles) -> std::ptrdiff_t {
    try {
      chem::parse_smiles(smiles);
    } catch (const ParseError& e) {
      return (std::ptrdiff_t)e.offset();
    }
    return -1;
  };
  CHECK(offset_of("C(C") == 1);             // unbalanced parentheses
  CHECK(offset_of("C1CC") == 1);            // unmatched ring closure
  CHECK(offset_of("CXe") >= 1);             // unknown atom symbol
  CHECK(offset_of("C(C)(C)(C)(C)C") == 0);  // valence violation on first C
  CHECK(offset_of("F=C") == 0);             // halogen valence violation
  CHECK(offset_of("C/C=C/C") == 1);         // stereo bond
  CHECK(offset_of("[C@H](N)C") == 2);       // stereocenter
  CHECK(offset_of("[13C]") == 1);           // isotope
  CHECK(offset_of("*CC") == 0);             // wildcard
  CHECK(offset_of("cc") >= 0);              // aromatic outside ring
  CHECK(offset_of("") == 0);
}

TEST_CASE("parsing is deterministic") {
  for (const auto& s : test_corpus()) {
    MoleculeGraph a = chem::parse_smiles(s);
    MoleculeGraph b = chem::parse_smiles(s);
    REQUIRE(a.num_atoms() == b.num_atoms());
    REQUIRE(a.num_bonds() == b.num_bonds());
    for (std::size_t i = 0; i < a.num_atoms(); ++i) {
      CHECK(a.atoms[i].atomic_num == b.atoms[i].atomic_num);
      CHECK(a.atoms[i].total_h() == b.atoms[i].total_h());
      CHECK(a.atoms[i].in_ring == b.atoms[i].in_ring);
    }
  }
}

TEST_CASE("atom count matches the character-scan oracle on the corpus") {
  for (const auto& s : test_corpus()) {
    MoleculeGraph g = chem::parse_smiles(s);
    INFO(s);
    CHECK((int)g.num_atoms() == heavy_atom_scan(s));
  }
}

TEST_CASE("featurize: methane carbon row") {
  MoleculeGraph g = chem::parse_smiles("C");
  Tensor f = chem::featurize(g);
  REQUIRE(f.rows() == 1);
  REQUIRE(f.cols() == chem::kAtomFeatureDim);
  CHECK(f.at(0, 1) == 1.0);       // element C
  CHECK(f.at(0, 11 + 0) == 1.0);  // degree 0
  CHECK(f.at(0, 17 + 2) == 1.0);  // charge 0
  CHECK(f.at(0, 22 + 4) == 1.0);  // 4 hydrogens
  CHECK(f.at(0, 27) == 0.0);      // not aromatic
  CHECK(f.at(0, 28) == 0.0);      // not in ring
  double rowsum = 0;
  for (std::size_t j = 0; j < f.cols(); ++j) rowsum += f.at(0, j);
  CHECK(rowsum == 4.0);  // exactly one bit per one-hot block
}

TEST_CASE("featurize: benzene carbon flags") {
  Tensor f = chem::featurize(chem::parse_smiles("c1ccccc1"));
  CHECK(f.at(0, 11 + 2) == 1.0);  // degree 2
  CHECK(f.at(0, 27) == 1.0);      // aromatic
  CHECK(f.at(0, 28) == 1.0);      // ring
}

TEST_CASE("featurize: isomorphic molecules give setwise-identical rows") {
  Tensor a = chem::featurize(chem::parse_smiles("CCO"));
  Tensor b = chem::featurize(chem::parse_smiles("OCC"));
  CHECK(sorted_rows(a) == sorted_rows(b));

  Tensor c = chem::featurize(chem::parse_smiles("c1ccccc1C"));
  Tensor d = chem::featurize(chem::parse_smiles("Cc1ccccc1"));
  CHECK(sorted_rows(c) == sorted_rows(d));
}

TEST_CASE("featurize: identical local attributes give identical rows") {
  Tensor f = chem::featurize(chem::parse_smiles("c1ccccc1"));
  for (std::size_t i = 1; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) CHECK(f.at(i, j) == f.at(0, j));
}

TEST_CASE("bridged and fused ring perception") {
  MoleculeGraph dec = chem::parse_smiles("C1CCC2CCCCC2C1");
  for (const auto& a : dec.atoms) CHECK(a.in_ring);
  MoleculeGraph tol = chem::parse_smiles("Cc1ccccc1");
  CHECK_FALSE(tol.atoms[0].in_ring);
  CHECK(tol.atoms[1].in_ring);
  MoleculeGraph bic = chem::parse_smiles("C1CC2CCC1CC2");
  for (const auto& a : bic.atoms) CHECK(a.in_ring);
}

TEST_CASE("whole corpus parses") {
  for (const auto& s : test_corpus()) {
    INFO(s);
    CHECK_NOTHROW(chem::parse_smiles(s));
  }
}
