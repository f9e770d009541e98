#pragma once

// Multi-omics ingestion, preprocessing and cold-start fold construction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepdtf/matrix.hpp"
#include "deepdtf/smiles.hpp"
#include "json.hpp"

namespace deepdtf::omics {

// Stacking order of the omics input. PROT carries the ASW-integrated
// abundance (prot + dprot).
enum class Modality : std::uint8_t { kGE = 0, kMUT, kCNV, kPROT, kMETH };
inline constexpr std::size_t kNumModalities = 5;
inline constexpr std::array<Modality, kNumModalities> kAllModalities{
    Modality::kGE, Modality::kMUT, Modality::kCNV, Modality::kPROT, Modality::kMETH};

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view name);  // ConfigError if unknown

// "all", "mut+cnv", "mut+cnv+ge", or any '+'/','-separated list.
std::set<Modality> parse_modality_set(std::string_view spec);

// prot + dprot elementwise; NaN in prot stays NaN.
std::vector<double> asw_integrate(std::span<const double> prot, std::span<const double> dprot);

struct MethCluster {
  double value = 0.0;
  double total_depth = 0.0;
  int n_cpg = 1;
};
inline constexpr double kMinMethCoverage = 10.0;

// Coverage = total_depth / n_cpg; passes when >= 10.
bool meth_cluster_passes(const MethCluster& c, std::size_t index);
std::vector<double> filter_methylation(std::span<const MethCluster> clusters);
// Columns passing in every cell line; rows of `per_line` are cell lines.
std::vector<std::size_t> aligned_meth_columns(const std::vector<std::vector<MethCluster>>& per_line);

inline constexpr double kSensitiveThreshold = -2.0;
int binarize_response(double log_ic50);

// Per-column min-max scaling fitted on training rows. Constant columns map
// to 0; values outside the training range are not clipped. NaN passes
// through unchanged.
struct MinMaxScaler {
  std::vector<double> lo;
  std::vector<double> hi;

  static MinMaxScaler fit(const Matrix& train);
  Matrix transform(const Matrix& m) const;
  double transform(std::size_t col, double v) const;
};

struct ScaledPair {
  Matrix train;
  Matrix test;
  MinMaxScaler scaler;
};
ScaledPair scale_features(const Matrix& train, const Matrix& test);

struct CellLine {
  std::string id;
  std::string cancer_type;
};

struct FoldSplit {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of;  // cell id -> fold
  std::vector<std::vector<std::string>> test;  // per fold, sorted ids

  std::vector<std::string> train_cells(std::size_t fold) const;
  std::vector<std::string> test_cells(std::size_t fold) const { return test.at(fold); }

  nlohmann::json to_json() const;  // {"k","seed","folds":{"0":{"train","test"}},"sha256"}
  static FoldSplit from_json(const nlohmann::json& j);
  std::string content_hash() const;
};

// Per cancer type (sorted), cells are shuffled by the seed and dealt
// round-robin; the dealing position carries over between types.
FoldSplit make_folds(std::span<const CellLine> cells, std::size_t k, std::uint64_t seed);

struct PairSample {
  std::string cell_id;
  std::string drug_id;
  double log_ic50 = 0.0;
  int label = 0;
  int fold = -1;
};

struct ResponseRecord {
  std::string drug_id;
  std::string cell_id;
  double log_ic50 = 0.0;
};

struct Exclusion {
  std::string kind;  // "pair", "cell", "drug"
  std::string id;
  std::string reason;
};

struct ModalityBlock {
  Modality kind = Modality::kGE;
  std::vector<std::string> features;
  Matrix values;  // rows aligned with Dataset::cells, NaN = missing
};

struct Dataset {
  std::vector<CellLine> cells;
  std::vector<ModalityBlock> modalities;  // subset of kAllModalities, stacking order
  std::vector<chem::ParsedDrug> drugs;
  std::vector<PairSample> pairs;
  std::vector<Exclusion> exclusions;

  std::optional<std::size_t> cell_index(std::string_view id) const;
  std::optional<std::size_t> drug_index(std::string_view id) const;
  const ModalityBlock* block(Modality m) const;
  std::set<std::string> cancer_types() const;
  nlohmann::json stats() const;
  // Domain checks: MUT in {0,1}, CNV in {-1,0,1}, METH in [0,1], shapes.
  void validate() const;
};

struct AssembleOptions {
  std::size_t min_cells_per_type = 10;
};

// Labels responses, drops pairs whose cell or drug is unavailable, applies
// the cancer-type retention rule and tags folds when given. Cells and drugs
// that end up without any pair are removed from the dataset.
void assemble_pairs(Dataset& ds, std::span<const ResponseRecord> responses,
                    const AssembleOptions& opt, const FoldSplit* folds = nullptr);

// Key=value manifest; relative paths resolve against the manifest directory.
// Keys: cells, responses, drugs, ge, mut, cnv, prot, prot_healthy, meth,
// meth_depth, meth_cpg, gene_whitelist.
struct Manifest {
  std::map<std::string, std::filesystem::path> paths;
  static Manifest read(const std::filesystem::path& path);
  bool has(std::string_view key) const { return paths.count(std::string(key)) > 0; }
  const std::filesystem::path& at(std::string_view key) const;
};

struct PrepareOptions {
  AssembleOptions assemble;
  bool prot_observed_only = false;  // keep only proteins observed in every line
};

Dataset prepare_dataset(const Manifest& manifest, const PrepareOptions& opt);

// Binary bundle (CBOR) round trip.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);

// Model-ready omics features for one fold: continuous modalities (GE, PROT,
// METH) are mean-imputed from training cells; GE and PROT are min-max scaled
// with the training fit. Rows align with Dataset::cells.
struct FoldFeatures {
  std::vector<Modality> order;
  std::vector<std::size_t> dims;
  std::vector<Matrix> blocks;  // one per modality in `order`

  std::size_t total_dim() const;
  std::vector<double> concatenated(std::size_t cell) const;
};

FoldFeatures build_fold_features(const Dataset& ds, std::span<const std::size_t> train_cells,
                                 const std::set<Modality>& enabled);

// Gene-level feature groups: columns of GE, MUT and CNV sharing a gene
// symbol, indexed into the concatenated vector of `features`.
struct FeatureGroup {
  std::string gene;
  std::vector<std::size_t> columns;
};
std::vector<FeatureGroup> gene_groups(const Dataset& ds, const FoldFeatures& features);

}  // namespace deepdtf::omics
