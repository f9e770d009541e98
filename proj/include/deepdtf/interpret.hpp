#pragma once

// Signed Shapley attributions over gene-level feature groups, aggregation to
// a gene ranking and pre-ranked gene set enrichment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepdtf/model.hpp"
#include "deepdtf/omics.hpp"
#include "deepdtf/train.hpp"
#include "json.hpp"

namespace deepdtf::interpret {

// Model output for a full input vector. Must be safe to call concurrently.
using ValueFn = std::function<double(std::span<const double>)>;

struct Attribution {
  double phi0 = 0.0;          // v(empty coalition)
  std::vector<double> phi;    // one per group
  double fx = 0.0;            // model output on the sample
  std::string sample_id;
  std::string estimator;      // "exact" or "sampled"
  std::size_t background_size = 0;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
  double residual = 0.0;      // sampled: efficiency gap spread over phi

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMaxExactGroups = 20;

// v(S) is the background mean of f on inputs whose group-S columns come from
// the sample and whose other group columns come from the background row.
// Columns outside every group keep the sample's values.
Attribution exact_shapley(const ValueFn& f, std::span<const double> sample,
                          std::span<const std::vector<double>> background,
                          std::span<const omics::FeatureGroup> groups, std::size_t workers = 1);

// Permutation estimator: each permutation draws one background row and adds
// groups in permuted order. The efficiency gap is then distributed in
// proportion to |phi| (equally when every phi is zero).
Attribution sampled_shapley(const ValueFn& f, std::span<const double> sample,
                            std::span<const std::vector<double>> background,
                            std::span<const omics::FeatureGroup> groups, std::size_t n_permutations,
                            std::uint64_t seed, std::size_t workers = 1);

struct RankedGene {
  std::string gene;
  double score = 0.0;
};
// Descending by score, ties by gene symbol.
using GeneRanking = std::vector<RankedGene>;

// Mean signed phi per gene across attributions. `gene_map` sends group names
// to gene symbols; an empty map uses the group names themselves. Several
// groups mapping to one gene are summed within an attribution.
GeneRanking aggregate_signed(std::span<const Attribution> attributions, std::span<const std::string> group_names,
                             const std::map<std::string, std::string>& gene_map = {});

struct GeneSet {
  std::string name;
  std::string description;
  std::vector<std::string> genes;
};
std::vector<GeneSet> parse_gmt(std::string_view text, const std::string& source = "<gmt>");
std::vector<GeneSet> read_gmt(const std::filesystem::path& path);

struct GseaOptions {
  double weight_exponent = 1.0;
  std::size_t n_permutations = 1000;
  std::size_t min_size = 5;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct GseaResult {
  std::string name;
  std::size_t size = 0;  // genes shared with the ranking
  double es = 0.0;
  double nes = 0.0;      // NaN when the null has no entry of the same sign
  double p_value = 1.0;
  std::vector<std::size_t> hits;  // 0-based ranking positions

  std::string direction() const;  // "sensitivity" if es > 0, "resistance" if es < 0, else "none"
  nlohmann::json to_json() const;
};

struct SkippedSet {
  std::string name;
  std::string reason;
};

struct GseaReport {
  std::vector<GseaResult> results;  // input order of the kept sets
  std::vector<SkippedSet> skipped;
  nlohmann::json to_json() const;
};

// Weighted running sum over a ranking sorted by descending score. Hits step
// up by |score|^p / sum over hits, misses step down by 1 / (N - N_hits).
// When every hit weight is zero the hits share equal weights. Returns the
// signed extremum (positive on a tie of magnitudes). Requires
// 0 < N_hits < N.
double enrichment_score(std::span<const double> scores, std::span<const std::uint8_t> in_set, double p,
                        std::vector<double>* running = nullptr);

// Null from gene-label permutations; p = (1 + #{|null| >= |ES|}) / (n + 1);
// NES = ES / mean |null| over nulls of the same sign.
GseaReport gsea_preranked(const GeneRanking& ranking, std::span<const GeneSet> sets, const GseaOptions& opt);

enum class Target : std::uint8_t { kSensitivity, kResponse };

struct ExplainConfig {
  Target target = Target::kSensitivity;
  std::string estimator = "auto";  // "exact", "sampled" or "auto"
  std::size_t exact_max_groups = 10;  // auto picks exact up to this many groups
  std::size_t n_permutations = 200;
  std::size_t background_size = 32;
  std::size_t samples_per_cell = 8;  // cells explained per (cancer type, drug)
  std::optional<std::string> cancer_type;  // explain only this type
  std::vector<std::string> drugs;          // empty: every drug
  std::size_t top_m = 20;
  GseaOptions gsea{};
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

// Output of the model on one drug context as a function of the cell input.
ValueFn model_value_fn(const model::DeepDTF& m, const chem::DrugGraph& drug, Target target);

struct ExplainReport {
  std::vector<std::string> group_names;
  std::vector<Attribution> attributions;
  std::vector<std::pair<std::string, std::string>> contexts;  // (cell, drug) per attribution
  GeneRanking ranking;
  GseaReport gsea;
  std::size_t top_m = 20;

  nlohmann::json to_json() const;
  // report.json, genes_positive.csv, genes_negative.csv, pathways.csv,
  // attributions.csv
  void write(const std::filesystem::path& dir) const;
};

// Explains the model on (cell, drug) contexts drawn from `explain_cells`
// against a background from `background_cells`.
ExplainReport explain_report(const model::DeepDTF& m, const omics::Dataset& ds, const train::FoldInputs& inputs,
                             std::span<const std::size_t> explain_cells,
                             std::span<const std::size_t> background_cells, std::span<const GeneSet> gene_sets,
                             const ExplainConfig& cfg);

}  // namespace deepdtf::interpret
