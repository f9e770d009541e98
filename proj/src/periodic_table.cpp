#include "deepdtf/periodic_table.hpp"

#include <array>

#include "deepdtf/error.hpp"

namespace deepdtf::chem {

namespace {

// IUPAC abridged standard atomic weights; mass number of the most stable
// isotope for elements without a standard weight.
constexpr std::array<Element, kMaxAtomicNumber> kElements{{
    {1, "H", 1.008, 1},      {2, "He", 4.0026, 2},    {3, "Li", 6.94, 1},
    {4, "Be", 9.0122, 2},    {5, "B", 10.812, 3},     {6, "C", 12.011, 4},
    {7, "N", 14.007, 5},     {8, "O", 15.999, 6},     {9, "F", 18.998, 7},
    {10, "Ne", 20.180, 8},   {11, "Na", 22.990, 1},   {12, "Mg", 24.305, 2},
    {13, "Al", 26.982, 3},   {14, "Si", 28.085, 4},   {15, "P", 30.974, 5},
    {16, "S", 32.067, 6},    {17, "Cl", 35.453, 7},   {18, "Ar", 39.948, 8},
    {19, "K", 39.098, 1},    {20, "Ca", 40.078, 2},   {21, "Sc", 44.956, 3},
    {22, "Ti", 47.867, 4},   {23, "V", 50.942, 5},    {24, "Cr", 51.996, 6},
    {25, "Mn", 54.938, 7},   {26, "Fe", 55.845, 8},   {27, "Co", 58.933, 9},
    {28, "Ni", 58.693, 10},  {29, "Cu", 63.546, 11},  {30, "Zn", 65.38, 2},
    {31, "Ga", 69.723, 3},   {32, "Ge", 72.630, 4},   {33, "As", 74.922, 5},
    {34, "Se", 78.971, 6},   {35, "Br", 79.904, 7},   {36, "Kr", 83.798, 8},
    {37, "Rb", 85.468, 1},   {38, "Sr", 87.62, 2},    {39, "Y", 88.906, 3},
    {40, "Zr", 91.224, 4},   {41, "Nb", 92.906, 5},   {42, "Mo", 95.95, 6},
    {43, "Tc", 98.0, 7},     {44, "Ru", 101.07, 8},   {45, "Rh", 102.91, 9},
    {46, "Pd", 106.42, 10},  {47, "Ag", 107.87, 11},  {48, "Cd", 112.41, 2},
    {49, "In", 114.82, 3},   {50, "Sn", 118.71, 4},   {51, "Sb", 121.76, 5},
    {52, "Te", 127.60, 6},   {53, "I", 126.904, 7},   {54, "Xe", 131.29, 8},
    {55, "Cs", 132.91, 1},   {56, "Ba", 137.33, 2},   {57, "La", 138.91, 3},
    {58, "Ce", 140.12, 0},   {59, "Pr", 140.91, 0},   {60, "Nd", 144.24, 0},
    {61, "Pm", 145.0, 0},    {62, "Sm", 150.36, 0},   {63, "Eu", 151.96, 0},
    {64, "Gd", 157.25, 0},   {65, "Tb", 158.93, 0},   {66, "Dy", 162.50, 0},
    {67, "Ho", 164.93, 0},   {68, "Er", 167.26, 0},   {69, "Tm", 168.93, 0},
    {70, "Yb", 173.05, 0},   {71, "Lu", 174.97, 0},   {72, "Hf", 178.49, 4},
    {73, "Ta", 180.95, 5},   {74, "W", 183.84, 6},    {75, "Re", 186.21, 7},
    {76, "Os", 190.23, 8},   {77, "Ir", 192.22, 9},   {78, "Pt", 195.08, 10},
    {79, "Au", 196.97, 11},  {80, "Hg", 200.59, 2},   {81, "Tl", 204.38, 3},
    {82, "Pb", 207.2, 4},    {83, "Bi", 208.98, 5},   {84, "Po", 209.0, 6},
    {85, "At", 210.0, 7},    {86, "Rn", 222.0, 8},    {87, "Fr", 223.0, 1},
    {88, "Ra", 226.0, 2},    {89, "Ac", 227.0, 0},    {90, "Th", 232.04, 0},
    {91, "Pa", 231.04, 0},   {92, "U", 238.03, 0},    {93, "Np", 237.0, 0},
    {94, "Pu", 244.0, 0},    {95, "Am", 243.0, 0},    {96, "Cm", 247.0, 0},
    {97, "Bk", 247.0, 0},    {98, "Cf", 251.0, 0},    {99, "Es", 252.0, 0},
    {100, "Fm", 257.0, 0},   {101, "Md", 258.0, 0},   {102, "No", 259.0, 0},
    {103, "Lr", 266.0, 0},   {104, "Rf", 267.0, 0},   {105, "Db", 268.0, 0},
    {106, "Sg", 269.0, 0},   {107, "Bh", 270.0, 0},   {108, "Hs", 277.0, 0},
    {109, "Mt", 278.0, 0},   {110, "Ds", 281.0, 0},   {111, "Rg", 282.0, 0},
    {112, "Cn", 285.0, 0},   {113, "Nh", 286.0, 0},   {114, "Fl", 289.0, 0},
    {115, "Mc", 290.0, 0},   {116, "Lv", 293.0, 0},   {117, "Ts", 294.0, 0},
    {118, "Og", 294.0, 0},
}};

constexpr std::array<int, 1> kV0{0};
constexpr std::array<int, 1> kV1{1};
constexpr std::array<int, 1> kV2{2};
constexpr std::array<int, 1> kV3{3};
constexpr std::array<int, 1> kV4{4};
constexpr std::array<int, 2> kV35{3, 5};
constexpr std::array<int, 3> kV246{2, 4, 6};
constexpr std::array<int, 3> kV135{1, 3, 5};

}  // namespace

std::optional<Element> element_by_symbol(std::string_view symbol) {
  for (const Element& e : kElements) {
    if (e.symbol == symbol) return e;
  }
  return std::nullopt;
}

const Element& element(int atomic_number) {
  if (atomic_number < 1 || atomic_number > kMaxAtomicNumber) {
    throw DataError("atomic number out of range: " + std::to_string(atomic_number));
  }
  return kElements[static_cast<std::size_t>(atomic_number - 1)];
}

std::span<const int> allowed_valences(int atomic_number) {
  switch (atomic_number) {
    case 2: case 10: case 18: case 36: case 54: return kV0;
    case 1: case 3: case 9: case 11: case 17: case 19: case 35: return kV1;
    case 5: case 13: return kV3;
    case 6: case 14: return kV4;
    case 7: case 15: case 33: return kV35;
    case 8: return kV2;
    case 16: case 34: case 52: return kV246;
    case 53: return kV135;
    default: return {};
  }
}

}  // namespace deepdtf::chem
