#pragma once

// Synthetic cohorts with known response mappings, used for overfit, cold-start
// and attribution experiments.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepdtf/omics.hpp"

namespace deepdtf::synthetic {

enum class Response : std::uint8_t {
  // y = a(GE) + b(atom count) - 2, with a = 3 w.(GE - 0.5) / n_genes.
  kAdditive,
  // y = 1.5 sin(6 w.(GE - 0.5)) - 2: depends on the cell only and is hard
  // to extrapolate from few cells.
  kCellOnly,
  // y = 3 (0.5 - mean GE over the planted genes) - 2 + small drug offset:
  // high planted expression pushes toward sensitivity. TYPE0 cells draw
  // planted genes from [0.5, 1), other types from [0, 0.5).
  kPlanted,
};

struct Options {
  std::size_t n_cells = 8;
  std::size_t n_genes = 6;
  std::size_t n_types = 1;
  std::size_t n_drugs = 8;  // taken from a fixed list of distinct molecules
  std::size_t planted_genes = 0;  // kPlanted: genes G0 .. G{planted-1}
  Response response = Response::kAdditive;
  double margin = 0.15;  // minimum |y + 2| so labels are unambiguous
  std::uint64_t seed = 0;
};

// Every cell is paired with every drug. Cells that would put a pair within
// `margin` of the sensitivity threshold are redrawn.
omics::Dataset make_dataset(const Options& opt);

// Writes cells/drugs/responses and GE/MUT CSVs plus manifest.txt, readable
// by the prepare pipeline.
void write_inputs(const omics::Dataset& ds, const std::filesystem::path& dir);

// Tab-separated GMT text for a list of (name, genes).
std::string to_gmt(const std::vector<std::pair<std::string, std::vector<std::string>>>& sets);

}  // namespace deepdtf::synthetic
