#pragma once

// Training loop, checkpoint selection, metrics and cross-validation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deepdtf/model.hpp"
#include "deepdtf/omics.hpp"
#include "json.hpp"

namespace deepdtf::train {

// Regression metrics. Lengths must match (DimensionError) and be non-empty.
// r2 needs non-constant y, pcc needs both vectors non-constant; otherwise
// UndefinedMetricError.
double rmse(std::span<const double> y_hat, std::span<const double> y);
double r2(std::span<const double> y_hat, std::span<const double> y);
double pcc(std::span<const double> y_hat, std::span<const double> y);

struct ClassMetrics {
  double acc = 0.0;
  double sen = 0.0;
  double spec = 0.0;
};
double accuracy(std::span<const double> p_hat, std::span<const int> t, double threshold = 0.5);
// Predicted positive when p_hat >= threshold. Sensitivity needs a positive
// sample, specificity a negative one.
double sensitivity(std::span<const double> p_hat, std::span<const int> t, double threshold = 0.5);
double specificity(std::span<const double> p_hat, std::span<const int> t, double threshold = 0.5);
ClassMetrics classification_metrics(std::span<const double> p_hat, std::span<const int> t,
                                    double threshold = 0.5);
// Mann-Whitney U / (n_pos * n_neg), ties count one half.
double auc(std::span<const double> p_hat, std::span<const int> t);

// Undefined entries are NaN and serialize as null.
struct Metrics {
  double rmse = 0.0;
  double r2 = 0.0;
  double pcc = 0.0;
  double acc = 0.0;
  double sen = 0.0;
  double spec = 0.0;
  double auc = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
  static Metrics from_json(const nlohmann::json& j);
};
inline constexpr std::array<const char*, 7> kMetricNames{"rmse", "r2", "pcc", "acc", "sen", "spec", "auc"};

Metrics evaluate_predictions(std::span<const double> y_hat, std::span<const double> y,
                             std::span<const double> p_hat, std::span<const int> t, double threshold);

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 256;
  std::size_t max_steps = 0;  // 0: no cap
  model::AdamConfig adam{};
  double threshold = 0.5;
  double val_fraction = 0.1;  // of training cell lines; 0 keeps the final epoch
  std::set<omics::Modality> modalities;  // empty: every modality the dataset carries

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Pair indices into Dataset::pairs. `fit_cells` are the dataset cell rows
// whose statistics drive imputation and scaling.
struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<std::size_t> fit_cells;
  bool cold_start = true;  // test cells must be unseen
};

// Up to n of `cells` (dataset rows): each cancer type's cells are shuffled,
// then the types are taken in turn, one cell per type per round.
std::vector<std::size_t> stratified_sample(const omics::Dataset& ds, std::span<const std::size_t> cells,
                                           std::size_t n, std::uint64_t seed);

// Cold-start partition of fold `fold`: validation cells are a stratified
// 10% (by cancer type) of the training cells.
Partition cold_start_partition(const omics::Dataset& ds, const omics::FoldSplit& split, std::size_t fold,
                               double val_fraction, std::uint64_t seed);
// Pair-level random split for contrast: cells recur across train and test.
Partition random_pair_partition(const omics::Dataset& ds, std::size_t k, std::size_t fold,
                                double val_fraction, std::uint64_t seed);
// Cold-start partitions only: throws DataError naming the first test cell
// that also feeds training, validation or feature fitting.
void audit_partition(const omics::Dataset& ds, const Partition& p);

struct LogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_rmse = 0.0;  // NaN when no validation pass ran
};

struct TrainState {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double best_val_rmse = 0.0;  // NaN without a validation set
  std::size_t best_epoch = 0;
  std::vector<double> best_history;  // val RMSE at every recorded checkpoint
  std::vector<LogRow> log;
};

struct FoldResult {
  std::size_t fold = 0;
  TrainState state;
  Metrics train;
  Metrics val;
  Metrics test;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  std::string param_fingerprint;
  nlohmann::json to_json() const;
};

// Everything a fold needs besides the partition: the dataset rows turned
// into model inputs.
struct FoldInputs {
  omics::FoldFeatures features;
  std::vector<std::vector<double>> cell_x;  // per dataset cell
  std::vector<chem::DrugGraph> graphs;      // per dataset drug
  std::vector<model::PairRef> refs;         // per dataset pair
  std::vector<double> y;
  std::vector<int> t;
};
FoldInputs make_inputs(const omics::Dataset& ds, std::span<const std::size_t> fit_cells,
                       const std::set<omics::Modality>& modalities);

struct Predictions {
  std::vector<double> y_hat;
  std::vector<double> p_hat;
};
Predictions predict(const model::DeepDTF& m, const FoldInputs& in, std::span<const std::size_t> pairs,
                    std::size_t batch_size);
Metrics evaluate(const model::DeepDTF& m, const FoldInputs& in, std::span<const std::size_t> pairs,
                 std::size_t batch_size, double threshold);

struct FoldRun {
  FoldResult result;
  model::DeepDTF model;
};

// Trains on `p.train`, evaluates on `p.val` after each epoch and restores
// the parameters of the lowest validation RMSE before scoring `p.test`.
// `model_config.modality_dims` is filled in from the data.
FoldRun train_partition(const omics::Dataset& ds, const Partition& p, model::ModelConfig model_config,
                        const TrainConfig& cfg, std::uint64_t seed, std::size_t fold = 0);

FoldRun train_fold(const omics::Dataset& ds, const omics::FoldSplit& split, std::size_t fold,
                   const model::ModelConfig& model_config, const TrainConfig& cfg, std::uint64_t seed);

struct Summary {
  std::vector<double> mean;  // indexed like kMetricNames
  std::vector<double> sd;    // sample standard deviation
};
Summary summarize(std::span<const Metrics> folds);

struct CvResult {
  std::vector<FoldResult> folds;
  Summary summary;
  nlohmann::json to_json() const;
};

using FoldCallback = std::function<void(const FoldRun&)>;

// Audits every fold before training any of them. Folds run on up to
// `workers` threads; results do not depend on the worker count.
CvResult cross_validate(const omics::Dataset& ds, const omics::FoldSplit& split,
                        const model::ModelConfig& model_config, const TrainConfig& cfg, std::uint64_t seed,
                        std::size_t workers = 1, const FoldCallback& on_fold = {});

// Same protocol over pair-level random folds.
CvResult cross_validate_random_pairs(const omics::Dataset& ds, std::size_t k,
                                     const model::ModelConfig& model_config, const TrainConfig& cfg,
                                     std::uint64_t seed, std::size_t workers = 1);

void write_log_csv(std::span<const LogRow> log, const std::filesystem::path& path);

}  // namespace deepdtf::train
