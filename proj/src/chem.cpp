#include "molgsl/chem.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <unordered_map>

namespace molgsl::chem {

namespace {

// IUPAC symbols indexed by atomic number (periods 1-6 cover the desk corpora).
const std::array<const char*, 87> kSymbols = {
    "?",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg",
    "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn",
    "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr",
    "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb",
    "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn"};

const std::unordered_map<std::string, int>& symbol_table() {
  static const std::unordered_map<std::string, int> table = [] {
    std::unordered_map<std::string, int> t;
    for (std::size_t z = 1; z < kSymbols.size(); ++z) t.emplace(kSymbols[z], (int)z);
    return t;
  }();
  return table;
}

constexpr int kB = 5, kC = 6, kN = 7, kO = 8, kF = 9, kP = 15, kS = 16, kCl = 17,
              kBr = 35, kI = 53;

bool organic_subset(int z) {
  return z == kB || z == kC || z == kN || z == kO || z == kP || z == kS || z == kF ||
         z == kCl || z == kBr || z == kI;
}

const std::vector<int>& standard_valences(int z) {
  static const std::vector<int> vB{3}, vC{4}, vN{3, 5}, vO{2}, vP{3, 5}, vS{2, 4, 6},
      vHal{1}, vNone{};
  switch (z) {
    case kB: return vB;
    case kC: return vC;
    case kN: return vN;
    case kO: return vO;
    case kP: return vP;
    case kS: return vS;
    case kF:
    case kCl:
    case kBr:
    case kI: return vHal;
    default: return vNone;
  }
}

int aromatic_atomic_num(char c) {
  switch (c) {
    case 'b': return kB;
    case 'c': return kC;
    case 'n': return kN;
    case 'o': return kO;
    case 'p': return kP;
    case 's': return kS;
    default: return 0;
  }
}

BondOrder bond_from_symbol(char c) {
  switch (c) {
    case '=': return BondOrder::Double;
    case '#': return BondOrder::Triple;
    case ':': return BondOrder::Aromatic;
    default: return BondOrder::Single;
  }
}

struct Parser {
  const std::string& s;
  std::size_t i = 0;
  MoleculeGraph g;
  std::vector<int> branch_stack;
  std::vector<std::size_t> branch_offsets;
  struct OpenRing {
    int atom;
    char bond_char;
    std::size_t offset;
  };
  std::map<int, OpenRing> rings;
  int prev = -1;
  char pending_bond = 0;
  std::size_t pending_bond_pos = 0;

  explicit Parser(const std::string& str) : s(str) {}

  [[noreturn]] void fail(const std::string& msg, std::size_t off) const {
    throw ParseError(msg, off);
  }

  char peek() const { return i < s.size() ? s[i] : '\0'; }

  void add_bond(int a, int b, BondOrder order, std::size_t off) {
    if (a == b) fail("ring bond closes on the same atom", off);
    for (const Bond& bd : g.bonds) {
      if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
        fail("duplicate bond between atoms", off);
    }
    g.bonds.push_back({a, b, order});
  }

  void attach(int idx, std::size_t off) {
    if (prev >= 0) {
      BondOrder order;
      if (pending_bond != 0) {
        order = bond_from_symbol(pending_bond);
      } else {
        order = (g.atoms[prev].aromatic && g.atoms[idx].aromatic) ? BondOrder::Aromatic
                                                                  : BondOrder::Single;
      }
      add_bond(prev, idx, order, off);
    } else if (pending_bond != 0) {
      fail("bond symbol with no preceding atom", pending_bond_pos);
    }
    pending_bond = 0;
    prev = idx;
  }

  void parse_ring_closure() {
    const std::size_t off = i;
    int num;
    if (s[i] == '%') {
      if (i + 2 >= s.size() || !std::isdigit((unsigned char)s[i + 1]) ||
          !std::isdigit((unsigned char)s[i + 2]))
        fail("'%' ring closure needs two digits", off);
      num = (s[i + 1] - '0') * 10 + (s[i + 2] - '0');
      i += 3;
    } else {
      num = s[i] - '0';
      ++i;
    }
    if (prev < 0) fail("ring closure before any atom", off);
    auto it = rings.find(num);
    if (it == rings.end()) {
      rings[num] = {prev, pending_bond, off};
      pending_bond = 0;
      return;
    }
    const OpenRing open = it->second;
    rings.erase(it);
    if (pending_bond != 0 && open.bond_char != 0 && pending_bond != open.bond_char)
      fail("ring closure bond symbols disagree", off);
    const char sym = pending_bond != 0 ? pending_bond : open.bond_char;
    BondOrder order;
    if (sym != 0) {
      order = bond_from_symbol(sym);
    } else {
      order = (g.atoms[open.atom].aromatic && g.atoms[prev].aromatic) ? BondOrder::Aromatic
                                                                      : BondOrder::Single;
    }
    add_bond(open.atom, prev, order, off);
    pending_bond = 0;
  }

  void parse_bracket() {
    const std::size_t open_off = i;
    ++i;  // '['
    if (i >= s.size()) fail("unterminated bracket atom", open_off);
    if (std::isdigit((unsigned char)s[i])) fail("isotopes are unsupported", i);

    Atom a;
    a.bracket = true;
    a.src_offset = open_off;
    if (std::islower((unsigned char)s[i])) {
      const int z = aromatic_atomic_num(s[i]);
      if (z == 0) fail(std::string("unknown aromatic atom symbol '") + s[i] + "'", i);
      a.atomic_num = z;
      a.aromatic = true;
      ++i;
    } else if (std::isupper((unsigned char)s[i])) {
      std::string sym(1, s[i]);
      if (i + 1 < s.size() && std::islower((unsigned char)s[i + 1])) {
        const std::string two = sym + s[i + 1];
        if (atomic_num_of(two) != 0) sym = two;
      }
      const int z = atomic_num_of(sym);
      if (z == 0) fail("unknown atom symbol '" + sym + "'", i);
      if (z == 1) fail("explicit hydrogen atoms are unsupported", i);
      a.atomic_num = z;
      i += sym.size();
    } else {
      fail(std::string("unexpected character '") + s[i] + "' in bracket atom", i);
    }

    if (peek() == '@') fail("stereochemistry is unsupported", i);
    if (peek() == 'H') {
      ++i;
      int h = 1;
      if (std::isdigit((unsigned char)peek())) {
        h = 0;
        while (std::isdigit((unsigned char)peek())) h = h * 10 + (s[i++] - '0');
      }
      a.explicit_h_count = h;
    }
    if (peek() == '+' || peek() == '-') {
      const char sign = s[i];
      int n = 1;
      ++i;
      if (std::isdigit((unsigned char)peek())) {
        n = 0;
        while (std::isdigit((unsigned char)peek())) n = n * 10 + (s[i++] - '0');
      } else {
        while (peek() == sign) {
          ++n;
          ++i;
        }
      }
      a.formal_charge = sign == '+' ? n : -n;
    }
    if (peek() == ':') fail("atom class labels are unsupported", i);
    if (peek() != ']') fail("expected ']' to close bracket atom", i);
    ++i;  // ']'

    g.atoms.push_back(a);
    attach((int)g.atoms.size() - 1, open_off);
  }

  void parse_organic_atom() {
    const std::size_t off = i;
    Atom a;
    a.src_offset = off;
    if (std::islower((unsigned char)s[i])) {
      const int z = aromatic_atomic_num(s[i]);
      if (z == 0) fail(std::string("unknown atom symbol '") + s[i] + "'", i);
      a.atomic_num = z;
      a.aromatic = true;
      ++i;
    } else {
      std::string sym(1, s[i]);
      if ((s[i] == 'C' && i + 1 < s.size() && s[i + 1] == 'l') ||
          (s[i] == 'B' && i + 1 < s.size() && s[i + 1] == 'r'))
        sym += s[i + 1];
      const int z = atomic_num_of(sym);
      if (z == 0 || !organic_subset(z))
        fail("unknown atom symbol '" + sym + "' (use brackets for non-organic atoms)", i);
      a.atomic_num = z;
      i += sym.size();
    }
    g.atoms.push_back(a);
    attach((int)g.atoms.size() - 1, off);
  }

  void run() {
    if (s.empty()) throw ParseError("empty SMILES", 0);
    while (i < s.size()) {
      const char c = s[i];
      if (c == '(') {
        if (prev < 0) fail("branch opens before any atom", i);
        branch_stack.push_back(prev);
        branch_offsets.push_back(i);
        ++i;
      } else if (c == ')') {
        if (branch_stack.empty()) fail("unbalanced parentheses", i);
        if (pending_bond != 0) fail("dangling bond symbol before ')'", pending_bond_pos);
        prev = branch_stack.back();
        branch_stack.pop_back();
        branch_offsets.pop_back();
        ++i;
      } else if (c == '.') {
        if (pending_bond != 0) fail("bond symbol before '.'", pending_bond_pos);
        prev = -1;
        ++i;
      } else if (c == '-' || c == '=' || c == '#' || c == ':') {
        if (pending_bond != 0) fail("two consecutive bond symbols", i);
        pending_bond = c;
        pending_bond_pos = i;
        ++i;
      } else if (c == '/' || c == '\\') {
        fail("stereo bond symbols are unsupported", i);
      } else if (c == '@') {
        fail("stereochemistry is unsupported", i);
      } else if (c == '*') {
        fail("wildcard atoms are unsupported", i);
      } else if (std::isdigit((unsigned char)c) || c == '%') {
        parse_ring_closure();
      } else if (c == '[') {
        parse_bracket();
      } else if (std::isalpha((unsigned char)c)) {
        parse_organic_atom();
      } else {
        fail(std::string("unexpected character '") + c + "'", i);
      }
    }
    if (!branch_stack.empty()) fail("unbalanced parentheses", branch_offsets.back());
    if (!rings.empty()) fail("unmatched ring-closure digit", rings.begin()->second.offset);
    if (pending_bond != 0) fail("dangling bond symbol", pending_bond_pos);
    if (g.atoms.empty()) throw ParseError("no atoms in SMILES", 0);
  }
};

// A bond is in a ring iff it is not a bridge. Iterative DFS keeps large
// corpora safe from deep recursion.
void perceive_rings(MoleculeGraph& g) {
  const int n = (int)g.atoms.size();
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> bond_in_ring(g.bonds.size(), false);
  int timer = 0;
  struct Frame {
    int v;
    int parent_bond;
    std::size_t next_edge;
  };
  for (int root = 0; root < n; ++root) {
    if (disc[root] != -1) continue;
    std::vector<Frame> stack{{root, -1, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_edge < g.adjacency[f.v].size()) {
        const auto [u, bi] = g.adjacency[f.v][f.next_edge++];
        if (bi == f.parent_bond) continue;
        if (disc[u] == -1) {
          disc[u] = low[u] = timer++;
          stack.push_back({u, bi, 0});
        } else {
          low[f.v] = std::min(low[f.v], disc[u]);
          bond_in_ring[bi] = true;  // back edge always closes a cycle
        }
      } else {
        const Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          Frame& p = stack.back();
          low[p.v] = std::min(low[p.v], low[done.v]);
          if (low[done.v] <= disc[p.v]) bond_in_ring[done.parent_bond] = true;
        }
      }
    }
  }
  for (std::size_t b = 0; b < g.bonds.size(); ++b) {
    if (bond_in_ring[b]) {
      g.atoms[g.bonds[b].a].in_ring = true;
      g.atoms[g.bonds[b].b].in_ring = true;
    }
  }
}

void assign_fragments(MoleculeGraph& g) {
  const int n = (int)g.atoms.size();
  g.fragment_of.assign(n, -1);
  int frag = 0;
  std::vector<int> stack;
  for (int r = 0; r < n; ++r) {
    if (g.fragment_of[r] != -1) continue;
    stack.push_back(r);
    g.fragment_of[r] = frag;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (const auto& [u, bi] : g.adjacency[v]) {
        (void)bi;
        if (g.fragment_of[u] == -1) {
          g.fragment_of[u] = frag;
          stack.push_back(u);
        }
      }
    }
    ++frag;
  }
  g.multi_fragment = frag > 1;
}

void assign_hydrogens(MoleculeGraph& g) {
  for (std::size_t v = 0; v < g.atoms.size(); ++v) {
    Atom& a = g.atoms[v];
    if (a.bracket) continue;  // bracket H counts are authoritative
    int order_sum = 0;
    int n_arom = 0;
    bool has_multiple_bond = false;
    for (const auto& [u, bi] : g.adjacency[v]) {
      (void)u;
      const BondOrder o = g.bonds[bi].order;
      if (o == BondOrder::Aromatic) {
        ++n_arom;
        order_sum += 1;
      } else {
        order_sum += (int)o;
        if (o != BondOrder::Single) has_multiple_bond = true;
      }
    }
    // Aromatic C/N carry one formal double bond inside the ring system unless
    // an exocyclic double bond already provides it; aromatic O/S contribute a
    // lone pair instead.
    if (a.aromatic && n_arom >= 2 && !has_multiple_bond &&
        (a.atomic_num == kC || a.atomic_num == kN))
      order_sum += 1;
    const auto& valences = standard_valences(a.atomic_num);
    int chosen = -1;
    for (int vv : valences) {
      if (vv >= order_sum) {
        chosen = vv;
        break;
      }
    }
    if (chosen < 0)
      throw ParseError("valence violation on atom '" + element_symbol(a.atomic_num) + "'",
                       a.src_offset);
    a.implicit_h_count = chosen - order_sum;
  }
}

}  // namespace

const std::string& element_symbol(int atomic_num) {
  static const std::string unknown = "?";
  static const std::vector<std::string> syms = [] {
    std::vector<std::string> v;
    for (const char* sp : kSymbols) v.emplace_back(sp);
    return v;
  }();
  if (atomic_num <= 0 || atomic_num >= (int)syms.size()) return unknown;
  return syms[atomic_num];
}

int atomic_num_of(const std::string& symbol) {
  const auto& t = symbol_table();
  auto it = t.find(symbol);
  return it == t.end() ? 0 : it->second;
}

MoleculeGraph parse_smiles(const std::string& s) {
  Parser p(s);
  p.run();
  MoleculeGraph g = std::move(p.g);
  g.source_smiles = s;

  g.adjacency.assign(g.atoms.size(), {});
  for (std::size_t bi = 0; bi < g.bonds.size(); ++bi) {
    const Bond& b = g.bonds[bi];
    g.adjacency[b.a].emplace_back(b.b, (int)bi);
    g.adjacency[b.b].emplace_back(b.a, (int)bi);
  }
  for (std::size_t v = 0; v < g.atoms.size(); ++v)
    g.atoms[v].degree = (int)g.adjacency[v].size();

  perceive_rings(g);
  for (const Atom& a : g.atoms) {
    if (a.aromatic && !a.in_ring)
      throw ParseError("aromatic atom outside any ring", a.src_offset);
  }
  assign_hydrogens(g);
  assign_fragments(g);
  return g;
}

Tensor featurize(const MoleculeGraph& g) {
  const std::size_t n = g.atoms.size();
  Tensor out = Tensor::zeros(n, kAtomFeatureDim, false);
  // one-hot over [lo, hi]; values outside land in the last bucket
  auto one_hot_idx = [](int value, int lo, int hi) {
    const int last = hi - lo;
    if (value < lo || value > hi) return last;
    return value - lo;
  };
  static const std::array<int, 10> kOrganicOrder = {kB, kC, kN, kO, kP, kS, kF, kCl, kBr, kI};
  for (std::size_t v = 0; v < n; ++v) {
    const Atom& a = g.atoms[v];
    double* row = out.data().data() + v * kAtomFeatureDim;
    std::size_t off = 0;
    int ei = 10;  // "other"
    for (std::size_t k = 0; k < kOrganicOrder.size(); ++k) {
      if (kOrganicOrder[k] == a.atomic_num) {
        ei = (int)k;
        break;
      }
    }
    row[off + ei] = 1.0;
    off += 11;
    row[off + one_hot_idx(a.degree, 0, 5)] = 1.0;
    off += 6;
    row[off + one_hot_idx(a.formal_charge, -2, 2)] = 1.0;
    off += 5;
    row[off + one_hot_idx(a.total_h(), 0, 4)] = 1.0;
    off += 5;
    row[off] = a.aromatic ? 1.0 : 0.0;
    row[off + 1] = a.in_ring ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace molgsl::chem
