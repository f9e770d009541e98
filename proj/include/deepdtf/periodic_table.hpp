#pragma once

#include <optional>
#include <span>
#include <string_view>

namespace deepdtf::chem {

struct Element {
  int atomic_number;
  std::string_view symbol;
  double weight;  // standard atomic weight, g/mol
  int outer_electrons;  // 0 when not tabulated
};

// Lookup by symbol with exact capitalization ("Cl", not "CL").
std::optional<Element> element_by_symbol(std::string_view symbol);
const Element& element(int atomic_number);  // 1..118
constexpr int kMaxAtomicNumber = 118;

// Standard valences for elements with a default valence model (organic
// subset plus a few common main-group atoms); empty when not modelled.
std::span<const int> allowed_valences(int atomic_number);

}  // namespace deepdtf::chem
