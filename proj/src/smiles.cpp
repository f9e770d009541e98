#include "deepdtf/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>

#include "deepdtf/error.hpp"
#include "deepdtf/periodic_table.hpp"

namespace deepdtf::chem {

namespace {

constexpr int kHydrogenSlot = -1;
constexpr int kPendingRingSlot = -2;

struct ParsedAtom {
  int z = 0;
  int charge = 0;
  int bracket_h = 0;
  bool bracket = false;
  bool aromatic = false;
  Chirality chirality = Chirality::kUnspecified;
  std::size_t offset = 0;
  // Neighbors in the order the SMILES string lists them; kHydrogenSlot marks
  // the bracket hydrogen position.
  std::vector<int> smiles_order;
};

struct ParsedBond {
  std::size_t u = 0;
  std::size_t v = 0;
  BondType type = BondType::kSingle;
  bool implied = false;  // no bond symbol was written
  bool ring_closure = false;
  std::size_t offset = 0;
};

struct RingOpening {
  std::size_t atom;
  std::optional<BondType> bond;
  std::size_t offset;
  std::size_t slot;  // index into the atom's smiles_order
};

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  void run() {
    if (s_.empty()) throw ParseError(0, "empty SMILES");
    while (i_ < s_.size()) step();
    if (pending_bond_) throw ParseError(pending_bond_offset_, "dangling bond at end of input");
    if (!branches_.empty()) throw ParseError(branches_.back().second, "unbalanced '('");
    if (!rings_.empty()) {
      auto it = std::min_element(rings_.begin(), rings_.end(), [](const auto& a, const auto& b) {
        return a.second.offset < b.second.offset;
      });
      throw ParseError(it->second.offset,
                       "unmatched ring-closure digit " + std::to_string(it->first));
    }
  }

  std::vector<ParsedAtom> atoms;
  std::vector<ParsedBond> bonds;

 private:
  void step() {
    const char c = s_[i_];
    switch (c) {
      case '(':
        if (!prev_) throw ParseError(i_, "branch without a preceding atom");
        if (pending_bond_) throw ParseError(pending_bond_offset_, "bond symbol before '('");
        if (i_ + 1 < s_.size() && s_[i_ + 1] == ')') throw ParseError(i_, "empty branch");
        branches_.emplace_back(*prev_, i_);
        ++i_;
        return;
      case ')':
        if (branches_.empty()) throw ParseError(i_, "unbalanced ')'");
        if (pending_bond_) throw ParseError(pending_bond_offset_, "dangling bond before ')'");
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++i_;
        return;
      case '-': set_bond(BondType::kSingle); return;
      case '=': set_bond(BondType::kDouble); return;
      case '#': set_bond(BondType::kTriple); return;
      case ':': set_bond(BondType::kAromatic); return;
      case '/':
      case '\\': throw ParseError(i_, "bond stereo ('/' '\\') is not supported");
      case '$': throw ParseError(i_, "quadruple bonds are not supported");
      case '.': throw ParseError(i_, "disconnected structures ('.') are not supported");
      case '*': throw ParseError(i_, "wildcard atoms are not supported");
      case '[': bracket_atom(); return;
      case '%': ring_closure(); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ring_closure();
      return;
    }
    organic_atom();
  }

  void set_bond(BondType t) {
    if (!prev_) throw ParseError(i_, "bond without a preceding atom");
    if (pending_bond_) throw ParseError(i_, "consecutive bond symbols");
    pending_bond_ = t;
    pending_bond_offset_ = i_;
    ++i_;
  }

  void organic_atom() {
    const std::size_t start = i_;
    const char c = s_[i_];
    int z = 0;
    bool aromatic = false;
    auto next_is = [&](char ch) { return i_ + 1 < s_.size() && s_[i_ + 1] == ch; };
    switch (c) {
      case 'B':
        if (next_is('r')) { z = 35; ++i_; } else { z = 5; }
        break;
      case 'C':
        if (next_is('l')) { z = 17; ++i_; } else { z = 6; }
        break;
      case 'N': z = 7; break;
      case 'O': z = 8; break;
      case 'P': z = 15; break;
      case 'S': z = 16; break;
      case 'F': z = 9; break;
      case 'I': z = 53; break;
      case 'b': z = 5; aromatic = true; break;
      case 'c': z = 6; aromatic = true; break;
      case 'n': z = 7; aromatic = true; break;
      case 'o': z = 8; aromatic = true; break;
      case 'p': z = 15; aromatic = true; break;
      case 's': z = 16; aromatic = true; break;
      default: {
        if (std::isalpha(static_cast<unsigned char>(c))) {
          std::string sym(1, c);
          if (i_ + 1 < s_.size() && std::islower(static_cast<unsigned char>(s_[i_ + 1])))
            sym += s_[i_ + 1];
          throw ParseError(start, "unknown atom symbol '" + sym + "' (use a bracket atom)");
        }
        throw ParseError(start, std::string("unexpected character '") +
                                    (std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c)
                                                                                 : std::string("\\x") +
                                                                                       std::to_string(static_cast<unsigned char>(c))) +
                                    "'");
      }
    }
    ++i_;
    ParsedAtom a;
    a.z = z;
    a.aromatic = aromatic;
    a.offset = start;
    add_atom(std::move(a));
  }

  void bracket_atom() {
    const std::size_t start = i_;
    std::size_t j = i_ + 1;
    auto at = [&](std::size_t k) -> char { return k < s_.size() ? s_[k] : '\0'; };
    if (std::isdigit(static_cast<unsigned char>(at(j)))) throw ParseError(j, "isotopes are not supported");
    if (at(j) == '*') throw ParseError(j, "wildcard atoms are not supported");
    ParsedAtom a;
    a.bracket = true;
    a.offset = start;
    const char c0 = at(j);
    if (std::isupper(static_cast<unsigned char>(c0))) {
      std::optional<Element> e;
      if (std::islower(static_cast<unsigned char>(at(j + 1)))) {
        e = element_by_symbol(std::string{c0, at(j + 1)});
        if (e) j += 2;
      }
      if (!e) {
        e = element_by_symbol(std::string(1, c0));
        if (!e) {
          std::string sym(1, c0);
          if (std::islower(static_cast<unsigned char>(at(j + 1)))) sym += at(j + 1);
          throw ParseError(j, "unknown atom symbol '" + sym + "'");
        }
        j += 1;
      }
      a.z = e->atomic_number;
    } else if (std::islower(static_cast<unsigned char>(c0))) {
      a.aromatic = true;
      const std::string two{c0, at(j + 1)};
      if (two == "se") { a.z = 34; j += 2; }
      else if (two == "as") { a.z = 33; j += 2; }
      else {
        switch (c0) {
          case 'b': a.z = 5; break;
          case 'c': a.z = 6; break;
          case 'n': a.z = 7; break;
          case 'o': a.z = 8; break;
          case 'p': a.z = 15; break;
          case 's': a.z = 16; break;
          default: throw ParseError(j, std::string("unknown aromatic atom symbol '") + c0 + "'");
        }
        j += 1;
      }
    } else {
      throw ParseError(j, "expected an element symbol in bracket atom");
    }

    if (at(j) == '@') {
      if (at(j + 1) == '@') {
        a.chirality = Chirality::kClockwise;
        j += 2;
      } else {
        a.chirality = Chirality::kCounterClockwise;
        j += 1;
      }
      const char x = at(j), y = at(j + 1);
      if ((x == 'T' && (y == 'H' || y == 'B')) || (x == 'A' && y == 'L') ||
          (x == 'S' && y == 'P') || (x == 'O' && y == 'H')) {
        throw ParseError(j, "extended chirality classes are not supported");
      }
    }
    if (at(j) == 'H') {
      ++j;
      a.bracket_h = 1;
      if (std::isdigit(static_cast<unsigned char>(at(j)))) {
        a.bracket_h = at(j) - '0';
        ++j;
      }
    }
    if (at(j) == '+' || at(j) == '-') {
      const char sign = at(j);
      const int unit = sign == '+' ? 1 : -1;
      ++j;
      if (std::isdigit(static_cast<unsigned char>(at(j)))) {
        int mag = 0;
        while (std::isdigit(static_cast<unsigned char>(at(j))) && mag < 100) {
          mag = mag * 10 + (at(j) - '0');
          ++j;
        }
        if (std::isdigit(static_cast<unsigned char>(at(j))) || mag > 15)
          throw ParseError(j, "formal charge out of range");
        a.charge = unit * mag;
      } else {
        a.charge = unit;
        while (at(j) == sign) {
          a.charge += unit;
          ++j;
          if (std::abs(a.charge) > 15) throw ParseError(j, "formal charge out of range");
        }
      }
    }
    if (at(j) == ':') throw ParseError(j, "atom classes are not supported");
    if (at(j) != ']') {
      if (j >= s_.size()) throw ParseError(start, "unterminated bracket atom");
      throw ParseError(j, std::string("unexpected character '") + at(j) + "' in bracket atom");
    }
    i_ = j + 1;
    add_atom(std::move(a));
  }

  void add_atom(ParsedAtom a) {
    const std::size_t idx = atoms.size();
    const bool has_h = a.bracket && a.bracket_h > 0;
    atoms.push_back(std::move(a));
    if (prev_) {
      connect(*prev_, idx, pending_bond_, pending_bond_offset_);
      atoms[idx].smiles_order.push_back(static_cast<int>(*prev_));
      atoms[*prev_].smiles_order.push_back(static_cast<int>(idx));
    }
    if (has_h) atoms[idx].smiles_order.push_back(kHydrogenSlot);
    pending_bond_.reset();
    prev_ = idx;
  }

  void connect(std::size_t u, std::size_t v, std::optional<BondType> t, std::size_t offset) {
    ParsedBond b;
    b.u = u;
    b.v = v;
    b.offset = offset;
    if (t) {
      b.type = *t;
    } else {
      b.implied = true;
      b.type = atoms[u].aromatic && atoms[v].aromatic ? BondType::kAromatic : BondType::kSingle;
    }
    bonds.push_back(b);
  }

  void ring_closure() {
    const std::size_t start = i_;
    if (!prev_) throw ParseError(i_, "ring closure without a preceding atom");
    int num = 0;
    if (s_[i_] == '%') {
      if (i_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[i_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s_[i_ + 2]))) {
        throw ParseError(i_, "'%' must be followed by two digits");
      }
      num = (s_[i_ + 1] - '0') * 10 + (s_[i_ + 2] - '0');
      i_ += 3;
    } else {
      num = s_[i_] - '0';
      i_ += 1;
    }
    auto it = rings_.find(num);
    if (it == rings_.end()) {
      RingOpening r{*prev_, pending_bond_, start, atoms[*prev_].smiles_order.size()};
      atoms[*prev_].smiles_order.push_back(kPendingRingSlot);
      rings_.emplace(num, r);
      pending_bond_.reset();
      return;
    }
    RingOpening r = it->second;
    rings_.erase(it);
    const std::size_t cur = *prev_;
    if (r.atom == cur) throw ParseError(start, "ring closure bonds an atom to itself");
    for (const ParsedBond& b : bonds) {
      if ((b.u == r.atom && b.v == cur) || (b.u == cur && b.v == r.atom))
        throw ParseError(start, "ring closure duplicates an existing bond");
    }
    std::optional<BondType> t = r.bond;
    if (pending_bond_) {
      if (t && *t != *pending_bond_)
        throw ParseError(start, "conflicting bond symbols on ring closure " + std::to_string(num));
      t = pending_bond_;
    }
    connect(r.atom, cur, t, start);
    bonds.back().ring_closure = true;
    atoms[r.atom].smiles_order[r.slot] = static_cast<int>(cur);
    atoms[cur].smiles_order.push_back(static_cast<int>(r.atom));
    pending_bond_.reset();
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::optional<std::size_t> prev_;
  std::optional<BondType> pending_bond_;
  std::size_t pending_bond_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;  // (atom, offset)
  std::map<int, RingOpening> rings_;
};

// Bonds that lie on a cycle are exactly the non-bridges.
std::vector<bool> ring_bonds(std::size_t n_atoms, const std::vector<ParsedBond>& bonds) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n_atoms);
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    adj[bonds[b].u].emplace_back(bonds[b].v, b);
    adj[bonds[b].v].emplace_back(bonds[b].u, b);
  }
  std::vector<std::size_t> disc(n_atoms, 0), low(n_atoms, 0);
  std::vector<bool> in_ring(bonds.size(), true);
  std::size_t timer = 0;
  struct Frame {
    std::size_t atom;
    std::size_t parent_bond;
    std::size_t next;
  };
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  for (std::size_t root = 0; root < n_atoms; ++root) {
    if (disc[root]) continue;
    std::vector<Frame> stack{{root, kNone, 0}};
    disc[root] = low[root] = ++timer;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < adj[f.atom].size()) {
        auto [to, bond] = adj[f.atom][f.next++];
        if (bond == f.parent_bond) continue;
        if (disc[to]) {
          low[f.atom] = std::min(low[f.atom], disc[to]);
        } else {
          disc[to] = low[to] = ++timer;
          stack.push_back({to, bond, 0});
        }
      } else {
        const Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          Frame& parent = stack.back();
          low[parent.atom] = std::min(low[parent.atom], low[done.atom]);
          if (low[done.atom] > disc[parent.atom]) in_ring[done.parent_bond] = false;
        }
      }
    }
  }
  return in_ring;
}

int first_valence(int z) {
  if (z < 1 || z > kMaxAtomicNumber) return -1;
  auto v = allowed_valences(z);
  return v.empty() ? -1 : v.front();
}

int bond_order(BondType t) {
  switch (t) {
    case BondType::kSingle: return 1;
    case BondType::kDouble: return 2;
    case BondType::kTriple: return 3;
    case BondType::kAromatic: return 1;
  }
  return 1;
}

double valence_contrib(BondType t) {
  return t == BondType::kAromatic ? 1.5 : static_cast<double>(bond_order(t));
}

int permutation_parity(const std::vector<int>& from, const std::vector<int>& to) {
  std::vector<std::size_t> perm;
  for (int x : from) {
    auto it = std::find(to.begin(), to.end(), x);
    if (it == to.end()) return 0;
    perm.push_back(static_cast<std::size_t>(it - to.begin()));
  }
  int inversions = 0;
  for (std::size_t a = 0; a < perm.size(); ++a)
    for (std::size_t b = a + 1; b < perm.size(); ++b)
      if (perm[a] > perm[b]) ++inversions;
  return inversions % 2;
}

int capped(int value, int lo, int hi, int misc) {
  return (value < lo || value > hi) ? misc : value - lo;
}

}  // namespace

DrugGraph parse_smiles(std::string_view smiles, std::string drug_id) {
  Parser p(smiles);
  p.run();
  auto& atoms = p.atoms;
  auto& bonds = p.bonds;
  const std::size_t n = atoms.size();

  std::vector<bool> bond_in_ring = ring_bonds(n, bonds);
  std::vector<bool> atom_in_ring(n, false);
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    if (!bond_in_ring[b]) continue;
    atom_in_ring[bonds[b].u] = atom_in_ring[bonds[b].v] = true;
  }
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    if (bonds[b].type != BondType::kAromatic || bond_in_ring[b]) continue;
    if (!bonds[b].implied) throw ParseError(bonds[b].offset, "aromatic bond outside a ring");
    bonds[b].type = BondType::kSingle;
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (atoms[a].aromatic && !atom_in_ring[a])
      throw ParseError(atoms[a].offset, "aromatic atom outside a ring");
  }

  std::vector<std::vector<std::size_t>> incident(n);  // bond ids in creation order
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    incident[bonds[b].u].push_back(b);
    incident[bonds[b].v].push_back(b);
  }

  // Hydrogens, Kekule valence, radicals.
  std::vector<int> hcount(n), total_valence(n), radicals(n, 0), heavy_degree(n);
  for (std::size_t a = 0; a < n; ++a) {
    const ParsedAtom& at = atoms[a];
    int sum = 0;
    for (std::size_t b : incident[a]) sum += bond_order(bonds[b].type);
    heavy_degree[a] = static_cast<int>(incident[a].size());
    auto valences = allowed_valences(at.z);
    if (!at.bracket) {
      if (at.aromatic) {
        const int v = valences.front();
        if (sum + 1 <= v) {
          hcount[a] = v - sum - 1;
        } else if (sum <= valences.back()) {
          hcount[a] = 0;
        } else {
          throw ParseError(at.offset, "valence overflow: aromatic " +
                                          std::string(element(at.z).symbol) + " with " +
                                          std::to_string(sum) + " bonds");
        }
      } else {
        auto it = std::find_if(valences.begin(), valences.end(), [&](int v) { return v >= sum; });
        if (it == valences.end()) {
          throw ParseError(at.offset, "valence overflow: " + std::string(element(at.z).symbol) +
                                          " has valence " + std::to_string(sum) + " > " +
                                          std::to_string(valences.back()));
        }
        hcount[a] = *it - sum;
      }
    } else {
      hcount[a] = at.bracket_h;
      const int iso = at.z - at.charge;
      auto iso_val = (iso >= 1 && iso <= kMaxAtomicNumber) ? allowed_valences(iso) : std::span<const int>{};
      if (!iso_val.empty() && at.z <= 53 && sum + hcount[a] > iso_val.back()) {
        throw ParseError(at.offset, "valence overflow: " + std::string(element(at.z).symbol) +
                                        " has valence " + std::to_string(sum + hcount[a]));
      }
    }
    const int iso = at.z - at.charge;
    const int dv_eff = (iso >= 1 && iso <= kMaxAtomicNumber) ? first_valence(iso) : -1;
    const bool pi = at.aromatic && dv_eff >= 0 && sum + hcount[a] + 1 <= dv_eff;
    total_valence[a] = sum + hcount[a] + (pi ? 1 : 0);
    if (at.bracket && dv_eff >= 0) {
      auto iso_val = allowed_valences(iso);
      auto it = std::find_if(iso_val.begin(), iso_val.end(),
                             [&](int v) { return v >= total_valence[a]; });
      if (it != iso_val.end()) radicals[a] = *it - total_valence[a];
    }
  }

  auto total_degree = [&](std::size_t a) { return heavy_degree[a] + hcount[a]; };

  // Electrons an atom can donate into a pi system (> 0 means it can conjugate).
  auto count_atom_elec = [&](std::size_t a) -> int {
    const int dv = first_valence(atoms[a].z);
    if (dv <= 1) return -1;
    const int degree = total_degree(a);
    if (degree > 3) return -1;
    int nlp = element(atoms[a].z).outer_electrons - dv;
    nlp = std::max(nlp - atoms[a].charge, 0);
    return (dv - degree) + nlp - radicals[a];
  };
  auto conjugation_candidate = [&](std::size_t a) {
    const int z = atoms[a].z;
    const int nouter = element(z).outer_electrons;
    return (z <= 10 || (nouter != 5 && nouter != 6) || (nouter == 6 && heavy_degree[a] < 2)) &&
           count_atom_elec(a) > 0;
  };

  std::vector<bool> conjugated(bonds.size(), false);
  for (std::size_t b = 0; b < bonds.size(); ++b)
    if (bonds[b].type == BondType::kAromatic) conjugated[b] = true;
  for (std::size_t a = 0; a < n; ++a) {
    if (!conjugation_candidate(a)) continue;
    const int sbo = total_degree(a);
    if (sbo < 2 || sbo > 3) continue;
    for (std::size_t b1 : incident[a]) {
      if (valence_contrib(bonds[b1].type) < 1.5) continue;
      for (std::size_t b2 : incident[a]) {
        if (b1 == b2) continue;
        const std::size_t other = bonds[b2].u == a ? bonds[b2].v : bonds[b2].u;
        if (total_degree(other) > 3) continue;
        if (conjugation_candidate(other)) conjugated[b1] = conjugated[b2] = true;
      }
    }
  }

  auto hybridization = [&](std::size_t a) -> Hybridization {
    const ParsedAtom& at = atoms[a];
    const int deg = total_degree(a);
    const int nouter = element(at.z).outer_electrons;
    int norbs = deg;
    if (at.z > 1 && at.z < 89 && nouter > 0) {
      const int free_e = nouter - (total_valence[a] + at.charge);
      if (total_valence[a] + nouter - at.charge < 8) {
        norbs = deg + (free_e - radicals[a]) / 2 + radicals[a];
      } else {
        norbs = deg + free_e / 2;
      }
    }
    switch (norbs) {
      case 2: return Hybridization::kSP;
      case 3: return Hybridization::kSP2;
      case 4: {
        const bool has_conj = std::any_of(incident[a].begin(), incident[a].end(),
                                          [&](std::size_t b) { return conjugated[b]; });
        return (deg < 4 && has_conj) ? Hybridization::kSP2 : Hybridization::kSP3;
      }
      case 5: return Hybridization::kSP3D;
      case 6: return Hybridization::kSP3D2;
      default: return Hybridization::kOther;
    }
  };

  // Tags are stored relative to the reference bond order (chain bonds, then
  // ring closures) with the bracket H in second position; flip when the
  // written neighbor order is an odd permutation of that.
  auto chirality = [&](std::size_t a) -> Chirality {
    const ParsedAtom& at = atoms[a];
    if (at.chirality == Chirality::kUnspecified) return at.chirality;
    std::vector<std::size_t> order = incident[a];
    std::stable_partition(order.begin(), order.end(),
                          [&](std::size_t b) { return !bonds[b].ring_closure; });
    std::vector<int> reference;
    for (std::size_t b : order)
      reference.push_back(static_cast<int>(bonds[b].u == a ? bonds[b].v : bonds[b].u));
    if (at.bracket_h > 0)
      reference.insert(reference.begin() + std::min<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(reference.size())),
                       kHydrogenSlot);
    if (permutation_parity(at.smiles_order, reference) == 0) return at.chirality;
    return at.chirality == Chirality::kClockwise ? Chirality::kCounterClockwise
                                                 : Chirality::kClockwise;
  };

  DrugGraph g;
  g.drug_id = std::move(drug_id);
  g.node_features.reserve(n);
  for (std::size_t a = 0; a < n; ++a) {
    const ParsedAtom& at = atoms[a];
    AtomCodes f{};
    f[AtomFeatureSchema::kAtomicNumber] = capped(at.z, 1, 118, 118);
    f[AtomFeatureSchema::kChirality] = static_cast<int>(chirality(a));
    f[AtomFeatureSchema::kDegree] = capped(total_degree(a), 0, 10, 11);
    f[AtomFeatureSchema::kFormalCharge] = capped(at.charge, -5, 5, 11);
    f[AtomFeatureSchema::kNumHydrogens] = capped(hcount[a], 0, 8, 9);
    f[AtomFeatureSchema::kNumRadicals] = capped(radicals[a], 0, 4, 5);
    f[AtomFeatureSchema::kHybridization] = static_cast<int>(hybridization(a));
    f[AtomFeatureSchema::kAromatic] = at.aromatic ? 1 : 0;
    f[AtomFeatureSchema::kInRing] = atom_in_ring[a] ? 1 : 0;
    g.node_features.push_back(f);
    g.atomic_numbers.push_back(at.z);
    g.hydrogen_counts.push_back(hcount[a]);
  }
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    BondCodes f{static_cast<int>(bonds[b].type), 0, conjugated[b] ? 1 : 0};
    g.edge_index.emplace_back(bonds[b].u, bonds[b].v);
    g.edge_features.push_back(f);
    g.edge_index.emplace_back(bonds[b].v, bonds[b].u);
    g.edge_features.push_back(f);
  }
  return g;
}

double molecular_weight(const DrugGraph& graph) {
  const double h = element(1).weight;
  double w = 0.0;
  for (std::size_t a = 0; a < graph.num_atoms(); ++a) {
    w += element(graph.atomic_numbers.at(a)).weight + h * graph.hydrogen_counts.at(a);
  }
  return w;
}

DrugFilterResult filter_drugs(std::span<const DrugRecord> drugs) {
  DrugFilterResult out;
  std::set<std::string> seen;
  for (const DrugRecord& d : drugs) {
    if (d.id.empty()) {
      out.rejected.push_back({d.id, d.smiles, "missing id"});
      continue;
    }
    if (!seen.insert(d.id).second) {
      out.rejected.push_back({d.id, d.smiles, "duplicate id"});
      continue;
    }
    try {
      DrugGraph g = parse_smiles(d.smiles, d.id);
      if (molecular_weight(g) > kMaxMolecularWeight) {
        out.rejected.push_back({d.id, d.smiles, "MW>1000"});
        continue;
      }
      out.kept.push_back({d.id, d.smiles, std::move(g)});
    } catch (const ParseError& e) {
      out.rejected.push_back({d.id, d.smiles, e.what()});
    }
  }
  return out;
}

nlohmann::json graph_to_json(const DrugGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& f : graph.node_features) nodes.push_back(f);
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t e = 0; e < graph.edge_index.size(); ++e) {
    const auto& f = graph.edge_features[e];
    edges.push_back({graph.edge_index[e].first, graph.edge_index[e].second, f[0], f[1], f[2]});
  }
  nlohmann::json j{{"nodes", nodes}, {"edges", edges}};
  if (!graph.drug_id.empty()) j["drug_id"] = graph.drug_id;
  j["atomic_numbers"] = graph.atomic_numbers;
  j["hydrogen_counts"] = graph.hydrogen_counts;
  return j;
}

DrugGraph graph_from_json(const nlohmann::json& j) {
  DrugGraph g;
  g.drug_id = j.value("drug_id", std::string{});
  for (const auto& node : j.at("nodes")) g.node_features.push_back(node.get<AtomCodes>());
  for (const auto& e : j.at("edges")) {
    g.edge_index.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    g.edge_features.push_back({e.at(2).get<int>(), e.at(3).get<int>(), e.at(4).get<int>()});
  }
  if (j.contains("atomic_numbers")) {
    g.atomic_numbers = j.at("atomic_numbers").get<std::vector<int>>();
    g.hydrogen_counts = j.at("hydrogen_counts").get<std::vector<int>>();
  } else {
    for (const auto& f : g.node_features) {
      g.atomic_numbers.push_back(f[AtomFeatureSchema::kAtomicNumber] + 1);
      g.hydrogen_counts.push_back(f[AtomFeatureSchema::kNumHydrogens]);
    }
  }
  validate_graph(g);
  return g;
}

void validate_graph(const DrugGraph& g) {
  const std::size_t n = g.num_atoms();
  if (g.edge_index.size() != g.edge_features.size())
    throw DataError("graph: edge index and feature counts differ");
  if (g.atomic_numbers.size() != n || g.hydrogen_counts.size() != n)
    throw DataError("graph: per-atom arrays disagree with node count");
  for (const auto& f : g.node_features)
    for (std::size_t s = 0; s < AtomFeatureSchema::kNumSlots; ++s)
      if (f[s] < 0 || static_cast<std::size_t>(f[s]) >= AtomFeatureSchema::kVocab[s])
        throw DataError("graph: atom code out of vocabulary in slot " +
                        std::string(AtomFeatureSchema::kNames[s]));
  std::map<std::pair<std::size_t, std::size_t>, BondCodes> edges;
  for (std::size_t e = 0; e < g.edge_index.size(); ++e) {
    auto [u, v] = g.edge_index[e];
    if (u >= n || v >= n) throw DataError("graph: edge index out of range");
    if (u == v) throw DataError("graph: self-loop on atom " + std::to_string(u));
    for (std::size_t s = 0; s < BondFeatureSchema::kNumSlots; ++s)
      if (g.edge_features[e][s] < 0 ||
          static_cast<std::size_t>(g.edge_features[e][s]) >= BondFeatureSchema::kVocab[s])
        throw DataError("graph: bond code out of vocabulary in slot " +
                        std::string(BondFeatureSchema::kNames[s]));
    edges[{u, v}] = g.edge_features[e];
  }
  for (const auto& [uv, f] : edges) {
    auto it = edges.find({uv.second, uv.first});
    if (it == edges.end() || it->second != f)
      throw DataError("graph: edge (" + std::to_string(uv.first) + "," +
                      std::to_string(uv.second) + ") has no mirror with equal features");
  }
}

}  // namespace deepdtf::chem
