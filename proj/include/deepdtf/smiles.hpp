#pragma once

// Restricted SMILES -> attributed molecular graph.
//
// Supported: organic-subset atoms (B C N O P S F Cl Br I and aromatic
// b c n o p s), bracket atoms with chirality (@, @@), H count and charge,
// bonds - = # :, branches, ring closures (digits and %nn). Rejected with a
// positioned ParseError: isotopes, wildcards, / and \ bond stereo, '.',
// atom classes, extended chirality classes.
//
// Node and edge codes follow the OGB categorical featurization so the
// graphs line up with models trained on that schema.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace deepdtf::chem {

struct AtomFeatureSchema {
  enum Slot : std::size_t {
    kAtomicNumber = 0,
    kChirality,
    kDegree,
    kFormalCharge,
    kNumHydrogens,
    kNumRadicals,
    kHybridization,
    kAromatic,
    kInRing,
  };
  static constexpr std::size_t kNumSlots = 9;
  // Last index of each vocabulary is the "misc" bucket (except the flags).
  static constexpr std::array<std::size_t, kNumSlots> kVocab{119, 5, 12, 12, 10, 6, 6, 2, 2};
  static constexpr std::array<std::string_view, kNumSlots> kNames{
      "atomic_num", "chirality", "degree", "formal_charge", "num_hs",
      "num_radical_electrons", "hybridization", "is_aromatic", "is_in_ring"};
};

struct BondFeatureSchema {
  enum Slot : std::size_t { kBondType = 0, kStereo, kConjugated };
  static constexpr std::size_t kNumSlots = 3;
  static constexpr std::array<std::size_t, kNumSlots> kVocab{5, 6, 2};
  static constexpr std::array<std::string_view, kNumSlots> kNames{"bond_type", "bond_stereo",
                                                                 "is_conjugated"};
};

enum class Chirality : std::uint8_t { kUnspecified = 0, kClockwise = 1, kCounterClockwise = 2 };
enum class Hybridization : std::uint8_t { kSP = 0, kSP2, kSP3, kSP3D, kSP3D2, kOther };
enum class BondType : std::uint8_t { kSingle = 0, kDouble, kTriple, kAromatic };

using AtomCodes = std::array<int, AtomFeatureSchema::kNumSlots>;
using BondCodes = std::array<int, BondFeatureSchema::kNumSlots>;

struct DrugGraph {
  std::string drug_id;
  std::vector<AtomCodes> node_features;
  // Both directions of every bond, consecutive: (u,v) then (v,u).
  std::vector<std::pair<std::size_t, std::size_t>> edge_index;
  std::vector<BondCodes> edge_features;
  // Exact values that the capped categorical codes cannot carry.
  std::vector<int> atomic_numbers;
  std::vector<int> hydrogen_counts;

  std::size_t num_atoms() const { return node_features.size(); }
  std::size_t num_directed_edges() const { return edge_index.size(); }
};

// Throws ParseError with the byte offset of the offending character.
DrugGraph parse_smiles(std::string_view smiles, std::string drug_id = {});

// Standard atomic weights including implicit hydrogens.
double molecular_weight(const DrugGraph& graph);

struct DrugRecord {
  std::string id;
  std::string smiles;
};

struct ParsedDrug {
  std::string id;
  std::string smiles;
  DrugGraph graph;
};

struct DrugRejection {
  std::string id;
  std::string smiles;
  std::string reason;
};

struct DrugFilterResult {
  std::vector<ParsedDrug> kept;
  std::vector<DrugRejection> rejected;
};

inline constexpr double kMaxMolecularWeight = 1000.0;

// Drops unparseable SMILES, empty ids and molecules heavier than 1000 g/mol.
DrugFilterResult filter_drugs(std::span<const DrugRecord> drugs);

// {"nodes": [[9 ints]...], "edges": [[u, v, 3 ints]...]}
nlohmann::json graph_to_json(const DrugGraph& graph);
DrugGraph graph_from_json(const nlohmann::json& j);

// Throws DataError if any structural invariant is broken: mirrored edges
// with equal features, indices in range, no self-loops, codes in vocabulary.
void validate_graph(const DrugGraph& graph);

}  // namespace deepdtf::chem
