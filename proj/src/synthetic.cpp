#include "deepdtf/synthetic.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "deepdtf/error.hpp"
#include "deepdtf/random.hpp"

namespace deepdtf::synthetic {

namespace {

// Distinct heavy-atom counts: 2, 3, 4, 6, 7, 8, 10, 11, 12, 13, 14, 16.
const std::vector<std::string> kMolecules{
    "CO",
    "CCO",
    "CC(=O)O",
    "c1ccccc1",
    "Cc1ccccc1",
    "Oc1ccccc1O",
    "CC(=O)Nc1ccccc1",
    "CC(=O)Nc1ccc(O)cc1",
    "COc1ccc(CC(N)=O)cc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "Cc1ccc(S(=O)(=O)NC(N)=O)cc1",
    "CN1C(=O)N(C)c2ncn(CC(=O)O)c2C1=O",
};

std::string format(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

}  // namespace

omics::Dataset make_dataset(const Options& opt) {
  if (opt.n_cells == 0 || opt.n_genes == 0 || opt.n_types == 0) throw ConfigError("synthetic: empty cohort");
  if (opt.n_drugs == 0 || opt.n_drugs > kMolecules.size())
    throw ConfigError("synthetic: n_drugs must lie in [1, " + std::to_string(kMolecules.size()) + "]");
  if (opt.response == Response::kPlanted && (opt.planted_genes == 0 || opt.planted_genes > opt.n_genes))
    throw ConfigError("synthetic: planted_genes must lie in [1, n_genes]");

  omics::Dataset ds;
  std::mt19937_64 rng(opt.seed);
  std::vector<double> drug_effect;
  for (std::size_t j = 0; j < opt.n_drugs; ++j) {
    chem::ParsedDrug d{"D" + std::to_string(j), kMolecules[j], chem::parse_smiles(kMolecules[j], "D" + std::to_string(j))};
    const double atoms = static_cast<double>(d.graph.num_atoms());
    drug_effect.push_back(opt.response == Response::kAdditive  ? 0.2 * atoms - 1.3
                          : opt.response == Response::kPlanted ? 0.02 * atoms
                                                               : 0.0);
    ds.drugs.push_back(std::move(d));
  }
  std::vector<double> w(opt.n_genes);
  for (double& x : w) x = 2.0 * uniform_real(rng) - 1.0;

  auto cell_effect = [&](std::span<const double> ge) {
    double dot = 0.0;
    for (std::size_t g = 0; g < ge.size(); ++g) dot += w[g] * (ge[g] - 0.5);
    switch (opt.response) {
      case Response::kAdditive: return 3.0 * dot / static_cast<double>(ge.size());
      case Response::kCellOnly: return 1.5 * std::sin(6.0 * dot);
      case Response::kPlanted: {
        double m = 0.0;
        for (std::size_t g = 0; g < opt.planted_genes; ++g) m += ge[g];
        return 3.0 * (0.5 - m / static_cast<double>(opt.planted_genes));
      }
    }
    return 0.0;
  };

  omics::ModalityBlock ge{omics::Modality::kGE, {}, Matrix(opt.n_cells, opt.n_genes)};
  omics::ModalityBlock mut{omics::Modality::kMUT, {}, Matrix(opt.n_cells, opt.n_genes)};
  for (std::size_t g = 0; g < opt.n_genes; ++g) {
    ge.features.push_back("G" + std::to_string(g));
    mut.features.push_back("G" + std::to_string(g));
  }
  for (std::size_t i = 0; i < opt.n_cells; ++i) {
    const std::string id = "C" + std::to_string(i);
    ds.cells.push_back({id, "TYPE" + std::to_string(i % opt.n_types)});
    std::vector<double> x(opt.n_genes);
    double a = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      for (double& v : x) v = uniform_real(rng);
      if (opt.response == Response::kPlanted)
        for (std::size_t g = 0; g < opt.planted_genes; ++g) x[g] = 0.5 * x[g] + (i % opt.n_types == 0 ? 0.5 : 0.0);
      a = cell_effect(x);
      ok = true;
      for (double b : drug_effect) ok = ok && std::abs(a + b) >= opt.margin;
    }
    if (!ok) throw ConfigError("synthetic: cannot satisfy the label margin");
    for (std::size_t g = 0; g < opt.n_genes; ++g) {
      ge.values(i, g) = x[g];
      mut.values(i, g) = x[g] > 0.7 ? 1.0 : 0.0;
    }
    for (std::size_t j = 0; j < opt.n_drugs; ++j) {
      const double y = a + drug_effect[j] + omics::kSensitiveThreshold;
      ds.pairs.push_back({id, ds.drugs[j].id, y, omics::binarize_response(y), -1});
    }
  }
  ds.modalities.push_back(std::move(ge));
  ds.modalities.push_back(std::move(mut));
  ds.validate();
  return ds;
}

void write_inputs(const omics::Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string cells = "cell_id,cancer_type\n";
  for (const auto& c : ds.cells) cells += c.id + "," + c.cancer_type + "\n";
  write_text(dir / "cells.csv", cells);
  std::string drugs = "drug_id,smiles\n";
  for (const auto& d : ds.drugs) drugs += d.id + "," + d.smiles + "\n";
  write_text(dir / "drugs.csv", drugs);
  std::string resp = "drug_id,cell_id,log_ic50\n";
  for (const auto& p : ds.pairs) resp += p.drug_id + "," + p.cell_id + "," + format(p.log_ic50) + "\n";
  write_text(dir / "responses.csv", resp);

  std::string manifest = "cells=cells.csv\ndrugs=drugs.csv\nresponses=responses.csv\n";
  for (const auto& b : ds.modalities) {
    if (b.kind != omics::Modality::kGE && b.kind != omics::Modality::kMUT && b.kind != omics::Modality::kCNV)
      throw ConfigError("write_inputs supports GE, MUT and CNV blocks only");
    std::string name(omics::to_string(b.kind));
    for (char& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::string text = "cell_id";
    for (const auto& f : b.features) text += "," + f;
    text += "\n";
    for (std::size_t r = 0; r < ds.cells.size(); ++r) {
      text += ds.cells[r].id;
      for (std::size_t c = 0; c < b.features.size(); ++c) text += "," + format(b.values(r, c));
      text += "\n";
    }
    write_text(dir / (name + ".csv"), text);
    manifest += name + "=" + name + ".csv\n";
  }
  write_text(dir / "manifest.txt", manifest);
}

std::string to_gmt(const std::vector<std::pair<std::string, std::vector<std::string>>>& sets) {
  std::string out;
  for (const auto& [name, genes] : sets) {
    out += name + "\tsynthetic";
    for (const auto& g : genes) out += "\t" + g;
    out += "\n";
  }
  return out;
}

}  // namespace deepdtf::synthetic
