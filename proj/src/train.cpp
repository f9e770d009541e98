#include "deepdtf/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "deepdtf/error.hpp"
#include "deepdtf/random.hpp"

namespace deepdtf::train {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
  if (a == 0) throw UndefinedMetricError(std::string(what) + ": no samples");
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

// Calls `fn` and maps an undefined metric to NaN.
template <typename F>
double or_nan(F&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetricError&) {
    return kNaN;
  }
}

}  // namespace

double rmse(std::span<const double> y_hat, std::span<const double> y) {
  check_lengths(y_hat.size(), y.size(), "rmse");
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

double r2(std::span<const double> y_hat, std::span<const double> y) {
  check_lengths(y_hat.size(), y.size(), "r2");
  const double mu = mean_of(y);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - mu) * (y[i] - mu);
  }
  if (ss_tot == 0.0) throw UndefinedMetricError("r2: y is constant");
  return 1.0 - ss_res / ss_tot;
}

double pcc(std::span<const double> y_hat, std::span<const double> y) {
  check_lengths(y_hat.size(), y.size(), "pcc");
  const double ma = mean_of(y_hat), mb = mean_of(y);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y_hat[i] - ma, b = y[i] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedMetricError("pcc: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double accuracy(std::span<const double> p_hat, std::span<const int> t, double threshold) {
  check_lengths(p_hat.size(), t.size(), "accuracy");
  std::size_t right = 0;
  for (std::size_t i = 0; i < t.size(); ++i) right += (p_hat[i] >= threshold) == (t[i] == 1);
  return static_cast<double>(right) / static_cast<double>(t.size());
}

namespace {

struct Confusion {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
};

Confusion confusion(std::span<const double> p_hat, std::span<const int> t, double threshold, const char* what) {
  check_lengths(p_hat.size(), t.size(), what);
  Confusion c;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool pred = p_hat[i] >= threshold;
    if (t[i] == 1) (pred ? c.tp : c.fn) += 1;
    else (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

}  // namespace

double sensitivity(std::span<const double> p_hat, std::span<const int> t, double threshold) {
  const Confusion c = confusion(p_hat, t, threshold, "sensitivity");
  if (c.tp + c.fn == 0) throw UndefinedMetricError("sensitivity: no positive samples");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double specificity(std::span<const double> p_hat, std::span<const int> t, double threshold) {
  const Confusion c = confusion(p_hat, t, threshold, "specificity");
  if (c.tn + c.fp == 0) throw UndefinedMetricError("specificity: no negative samples");
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

ClassMetrics classification_metrics(std::span<const double> p_hat, std::span<const int> t, double threshold) {
  return {accuracy(p_hat, t, threshold), sensitivity(p_hat, t, threshold), specificity(p_hat, t, threshold)};
}

double auc(std::span<const double> p_hat, std::span<const int> t) {
  check_lengths(p_hat.size(), t.size(), "auc");
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_hat[a] < p_hat[b]; });
  // Walk tie groups in ascending score: each positive beats every negative
  // below its group and ties half of the negatives inside it.
  double u = 0.0;
  std::size_t neg_below = 0, n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, pos = 0, neg = 0;
    while (j < order.size() && p_hat[order[j]] == p_hat[order[i]]) {
      (t[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    u += static_cast<double>(pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg));
    neg_below += neg;
    n_pos += pos;
    i = j;
  }
  if (n_pos == 0 || neg_below == 0) throw UndefinedMetricError("auc: labels contain a single class");
  return u / (static_cast<double>(n_pos) * static_cast<double>(neg_below));
}

nlohmann::json Metrics::to_json() const {
  return {{"rmse", number_or_null(rmse)}, {"r2", number_or_null(r2)},     {"pcc", number_or_null(pcc)},
          {"acc", number_or_null(acc)},   {"sen", number_or_null(sen)},   {"spec", number_or_null(spec)},
          {"auc", number_or_null(auc)},   {"n", n}};
}

Metrics Metrics::from_json(const nlohmann::json& j) {
  Metrics m;
  m.rmse = number_from(j.at("rmse"));
  m.r2 = number_from(j.at("r2"));
  m.pcc = number_from(j.at("pcc"));
  m.acc = number_from(j.at("acc"));
  m.sen = number_from(j.at("sen"));
  m.spec = number_from(j.at("spec"));
  m.auc = number_from(j.at("auc"));
  m.n = j.at("n");
  return m;
}

namespace {

std::array<double, kMetricNames.size()> as_array(const Metrics& m) {
  return {m.rmse, m.r2, m.pcc, m.acc, m.sen, m.spec, m.auc};
}

}  // namespace

Metrics evaluate_predictions(std::span<const double> y_hat, std::span<const double> y,
                             std::span<const double> p_hat, std::span<const int> t, double threshold) {
  Metrics m;
  m.n = y.size();
  if (y.empty()) {
    m.rmse = m.r2 = m.pcc = m.acc = m.sen = m.spec = m.auc = kNaN;
    return m;
  }
  m.rmse = rmse(y_hat, y);
  m.r2 = or_nan([&] { return r2(y_hat, y); });
  m.pcc = or_nan([&] { return pcc(y_hat, y); });
  m.acc = accuracy(p_hat, t, threshold);
  m.sen = or_nan([&] { return sensitivity(p_hat, t, threshold); });
  m.spec = or_nan([&] { return specificity(p_hat, t, threshold); });
  m.auc = or_nan([&] { return auc(p_hat, t); });
  return m;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json mods = "all";
  if (!modalities.empty()) {
    mods = nlohmann::json::array();
    for (omics::Modality m : modalities) mods.push_back(std::string(omics::to_string(m)));
  }
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"max_steps", max_steps},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"weight_decay", adam.weight_decay},
          {"threshold", threshold},
          {"val_fraction", val_fraction},
          {"modalities", mods}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.max_steps = j.at("max_steps");
    c.adam.lr = j.at("lr");
    c.adam.beta1 = j.at("beta1");
    c.adam.beta2 = j.at("beta2");
    c.adam.eps = j.at("adam_eps");
    c.adam.weight_decay = j.at("weight_decay");
    c.threshold = j.at("threshold");
    c.val_fraction = j.at("val_fraction");
    const auto& mods = j.at("modalities");
    if (!mods.is_string())
      for (const auto& m : mods) c.modalities.insert(omics::modality_from_string(m.get<std::string>()));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
}

namespace {

std::set<std::size_t> stratified_holdout(const omics::Dataset& ds, std::span<const std::size_t> cells,
                                         double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || cells.size() < 2) return {};
  std::size_t want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cells.size())));
  want = std::clamp<std::size_t>(want, 1, cells.size() - 1);
  const auto picked = stratified_sample(ds, cells, want, seed);
  return {picked.begin(), picked.end()};
}

}  // namespace

std::vector<std::size_t> stratified_sample(const omics::Dataset& ds, std::span<const std::size_t> cells,
                                           std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end(),
            [&](std::size_t a, std::size_t b) { return ds.cells.at(a).id < ds.cells.at(b).id; });
  std::map<std::string, std::vector<std::size_t>> by_type;
  for (std::size_t c : sorted) by_type[ds.cells[c].cancer_type].push_back(c);
  std::mt19937_64 rng(seed);
  for (auto& [type, members] : by_type) shuffle(std::span<std::size_t>(members), rng);

  std::vector<std::size_t> out;
  n = std::min(n, sorted.size());
  for (std::size_t round = 0; out.size() < n; ++round)
    for (auto& [type, members] : by_type)
      if (round < members.size() && out.size() < n) out.push_back(members[round]);
  return out;
}

Partition cold_start_partition(const omics::Dataset& ds, const omics::FoldSplit& split, std::size_t fold,
                               double val_fraction, std::uint64_t seed) {
  if (fold >= split.k) throw ConfigError("fold " + std::to_string(fold) + " out of range for k = " + std::to_string(split.k));
  std::vector<std::size_t> train_cells;
  std::vector<bool> is_test(ds.cells.size(), false);
  for (std::size_t c = 0; c < ds.cells.size(); ++c) {
    auto it = split.fold_of.find(ds.cells[c].id);
    if (it == split.fold_of.end())
      throw DataError("cell line " + ds.cells[c].id + " has no fold assignment; rerun split");
    if (static_cast<std::size_t>(it->second) == fold) is_test[c] = true;
    else train_cells.push_back(c);
  }
  const std::set<std::size_t> val_cells = stratified_holdout(ds, train_cells, val_fraction, derive_seed(seed, 1000 + fold));

  Partition p;
  for (std::size_t c : train_cells)
    if (!val_cells.count(c)) p.fit_cells.push_back(c);
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const std::size_t c = *ds.cell_index(ds.pairs[i].cell_id);
    if (is_test[c]) p.test.push_back(i);
    else if (val_cells.count(c)) p.val.push_back(i);
    else p.train.push_back(i);
  }
  return p;
}

Partition random_pair_partition(const omics::Dataset& ds, std::size_t k, std::size_t fold, double val_fraction,
                                std::uint64_t seed) {
  if (k < 2 || fold >= k) throw ConfigError("random pair split needs k >= 2 and fold < k");
  std::vector<std::size_t> order(ds.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::size_t> rest;
  Partition p;
  p.cold_start = false;
  for (std::size_t i = 0; i < order.size(); ++i) (i % k == fold ? p.test : rest).push_back(order[i]);
  const std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rest.size())));
  p.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
  p.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.val.begin(), p.val.end());
  std::sort(p.test.begin(), p.test.end());
  std::set<std::size_t> fit;
  for (std::size_t i : p.train) fit.insert(*ds.cell_index(ds.pairs[i].cell_id));
  p.fit_cells.assign(fit.begin(), fit.end());
  return p;
}

void audit_partition(const omics::Dataset& ds, const Partition& p) {
  if (!p.cold_start) return;
  std::set<std::string> test_cells;
  for (std::size_t i : p.test) test_cells.insert(ds.pairs.at(i).cell_id);
  for (const auto* part : {&p.train, &p.val})
    for (std::size_t i : *part)
      if (test_cells.count(ds.pairs.at(i).cell_id))
        throw DataError("leakage: test cell line " + ds.pairs[i].cell_id + " also appears in training or validation");
  for (std::size_t c : p.fit_cells)
    if (test_cells.count(ds.cells.at(c).id))
      throw DataError("leakage: test cell line " + ds.cells[c].id + " contributes to feature fitting");
}

FoldInputs make_inputs(const omics::Dataset& ds, std::span<const std::size_t> fit_cells,
                       const std::set<omics::Modality>& modalities) {
  FoldInputs in;
  std::set<omics::Modality> enabled = modalities;
  if (enabled.empty())
    for (const auto& b : ds.modalities) enabled.insert(b.kind);
  in.features = omics::build_fold_features(ds, fit_cells, enabled);
  for (std::size_t c = 0; c < ds.cells.size(); ++c) in.cell_x.push_back(in.features.concatenated(c));
  for (const auto& d : ds.drugs) in.graphs.push_back(d.graph);
  for (const auto& p : ds.pairs) {
    const auto c = ds.cell_index(p.cell_id);
    const auto d = ds.drug_index(p.drug_id);
    if (!c || !d) throw DataError("pair " + p.cell_id + "/" + p.drug_id + " references a missing cell or drug");
    in.refs.push_back({*c, *d});
    in.y.push_back(p.log_ic50);
    in.t.push_back(p.label);
  }
  return in;
}

Predictions predict(const model::DeepDTF& m, const FoldInputs& in, std::span<const std::size_t> pairs,
                    std::size_t batch_size) {
  ad::NoGradGuard no_grad;
  Predictions out;
  const model::Context ctx;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    std::vector<model::PairRef> refs;
    for (std::size_t i = start; i < end; ++i) refs.push_back(in.refs.at(pairs[i]));
    const model::BatchOutput b = m.forward(in.cell_x, in.graphs, refs, ctx);
    out.y_hat.insert(out.y_hat.end(), b.y_hat.data().begin(), b.y_hat.data().end());
    out.p_hat.insert(out.p_hat.end(), b.p_hat.data().begin(), b.p_hat.data().end());
  }
  if (!ad::all_finite(out.y_hat) || !ad::all_finite(out.p_hat))
    throw NumericError("non-finite prediction");
  return out;
}

Metrics evaluate(const model::DeepDTF& m, const FoldInputs& in, std::span<const std::size_t> pairs,
                 std::size_t batch_size, double threshold) {
  const Predictions pr = predict(m, in, pairs, batch_size);
  std::vector<double> y;
  std::vector<int> t;
  for (std::size_t i : pairs) {
    y.push_back(in.y[i]);
    t.push_back(in.t[i]);
  }
  return evaluate_predictions(pr.y_hat, y, pr.p_hat, t, threshold);
}

nlohmann::json FoldResult::to_json() const {
  std::vector<nlohmann::json> history;
  for (double v : state.best_history) history.push_back(number_or_null(v));
  return {{"fold", fold},
          {"n_train", n_train},
          {"n_val", n_val},
          {"n_test", n_test},
          {"steps", state.step},
          {"epochs", state.epoch},
          {"best_epoch", state.best_epoch},
          {"best_val_rmse", number_or_null(state.best_val_rmse)},
          {"best_val_history", history},
          {"param_fingerprint", param_fingerprint},
          {"train", train.to_json()},
          {"val", val.to_json()},
          {"test", test.to_json()}};
}

FoldRun train_partition(const omics::Dataset& ds, const Partition& p, model::ModelConfig model_config,
                        const TrainConfig& cfg, std::uint64_t seed, std::size_t fold) {
  cfg.validate();
  if (p.train.empty()) throw ConfigError("fold " + std::to_string(fold) + ": empty training set");
  if (p.test.empty()) throw ConfigError("fold " + std::to_string(fold) + ": empty test set");
  audit_partition(ds, p);

  const FoldInputs in = make_inputs(ds, p.fit_cells, cfg.modalities);
  model_config.modality_dims = in.features.dims;
  FoldRun run{FoldResult{}, model::DeepDTF(model_config, derive_seed(seed, 2 * fold))};
  model::DeepDTF& m = run.model;
  model::Adam opt(m.params(), cfg.adam);
  std::mt19937_64 rng(derive_seed(seed, 2 * fold + 1));
  const std::vector<ad::Tensor> decayed = m.params().decayed();
  const model::ModelConfig& mc = m.config();

  TrainState& st = run.result.state;
  st.best_val_rmse = kNaN;
  std::vector<std::vector<double>> best;
  auto snapshot = [&] {
    best.clear();
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      auto d = m.params().at(i).data();
      best.emplace_back(d.begin(), d.end());
    }
  };

  std::vector<std::size_t> order = p.train;
  bool done = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !done; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t start = 0; start < order.size() && !done; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<model::PairRef> refs;
      std::vector<double> y;
      std::vector<double> t;
      for (std::size_t i = start; i < end; ++i) {
        refs.push_back(in.refs[order[i]]);
        y.push_back(in.y[order[i]]);
        t.push_back(static_cast<double>(in.t[order[i]]));
      }
      const model::BatchOutput out = m.forward(in.cell_x, in.graphs, refs, model::Context{true, &rng});
      const model::LossTerms loss =
          model::total_loss(out.y_hat, y, out.p_hat, t, decayed, mc.alpha, mc.beta, mc.lambda, mc.gamma);
      const double value = loss.total.item();
      if (!std::isfinite(value))
        throw NumericError("non-finite training loss at step " + std::to_string(st.step + 1) + " (fold " +
                           std::to_string(fold) + ")");
      loss.total.backward();
      opt.step();
      ++st.step;
      loss_sum += value;
      ++loss_batches;
      if (cfg.max_steps != 0 && st.step >= cfg.max_steps) done = true;
    }
    st.epoch = epoch;
    LogRow row{st.step, epoch, loss_sum / static_cast<double>(loss_batches), kNaN};
    if (!p.val.empty()) {
      row.val_rmse = evaluate(m, in, p.val, cfg.batch_size, cfg.threshold).rmse;
      if (std::isnan(st.best_val_rmse) || row.val_rmse < st.best_val_rmse) {
        st.best_val_rmse = row.val_rmse;
        st.best_epoch = epoch;
        st.best_history.push_back(row.val_rmse);
        snapshot();
      }
    }
    st.log.push_back(row);
  }

  if (!best.empty()) {
    for (std::size_t i = 0; i < best.size(); ++i) {
      auto d = m.params().at(i).mutable_data();
      std::copy(best[i].begin(), best[i].end(), d.begin());
    }
  } else {
    st.best_epoch = st.epoch;
  }

  FoldResult& r = run.result;
  r.fold = fold;
  r.n_train = p.train.size();
  r.n_val = p.val.size();
  r.n_test = p.test.size();
  r.train = evaluate(m, in, p.train, cfg.batch_size, cfg.threshold);
  r.val = evaluate(m, in, p.val, cfg.batch_size, cfg.threshold);
  r.test = evaluate(m, in, p.test, cfg.batch_size, cfg.threshold);
  r.param_fingerprint = m.params().fingerprint();
  return run;
}

FoldRun train_fold(const omics::Dataset& ds, const omics::FoldSplit& split, std::size_t fold,
                   const model::ModelConfig& model_config, const TrainConfig& cfg, std::uint64_t seed) {
  return train_partition(ds, cold_start_partition(ds, split, fold, cfg.val_fraction, seed), model_config, cfg,
                         seed, fold);
}

Summary summarize(std::span<const Metrics> folds) {
  Summary s;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    std::vector<double> v;
    for (const Metrics& m : folds) {
      const double x = as_array(m)[k];
      if (std::isfinite(x)) v.push_back(x);
    }
    if (v.empty()) {
      s.mean.push_back(kNaN);
      s.sd.push_back(kNaN);
      continue;
    }
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    s.mean.push_back(mu);
    s.sd.push_back(v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0);
  }
  return s;
}

nlohmann::json CvResult::to_json() const {
  nlohmann::json folds_json = nlohmann::json::array();
  for (const FoldResult& f : folds) folds_json.push_back(f.to_json());
  nlohmann::json mean, sd;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    mean[kMetricNames[k]] = number_or_null(summary.mean[k]);
    sd[kMetricNames[k]] = number_or_null(summary.sd[k]);
  }
  return {{"folds", folds_json}, {"mean", mean}, {"sd", sd}};
}

namespace {

CvResult run_folds(std::size_t k, std::size_t workers, const std::function<FoldRun(std::size_t)>& job,
                   const FoldCallback& on_fold) {
  std::vector<std::optional<FoldResult>> results(k);
  std::vector<std::exception_ptr> errors(k);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t f = next++; f < k; f = next++) {
      try {
        FoldRun run = job(f);
        if (on_fold) {
          std::lock_guard lock(callback_mutex);
          on_fold(run);
        }
        results[f] = std::move(run.result);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, k);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  CvResult cv;
  std::vector<Metrics> test;
  for (auto& r : results) {
    test.push_back(r->test);
    cv.folds.push_back(std::move(*r));
  }
  cv.summary = summarize(test);
  return cv;
}

}  // namespace

CvResult cross_validate(const omics::Dataset& ds, const omics::FoldSplit& split,
                        const model::ModelConfig& model_config, const TrainConfig& cfg, std::uint64_t seed,
                        std::size_t workers, const FoldCallback& on_fold) {
  cfg.validate();
  std::vector<Partition> parts;
  for (std::size_t f = 0; f < split.k; ++f) {
    parts.push_back(cold_start_partition(ds, split, f, cfg.val_fraction, seed));
    audit_partition(ds, parts.back());
  }
  return run_folds(
      split.k, workers,
      [&](std::size_t f) { return train_partition(ds, parts[f], model_config, cfg, seed, f); }, on_fold);
}

CvResult cross_validate_random_pairs(const omics::Dataset& ds, std::size_t k,
                                     const model::ModelConfig& model_config, const TrainConfig& cfg,
                                     std::uint64_t seed, std::size_t workers) {
  cfg.validate();
  return run_folds(
      k, workers,
      [&](std::size_t f) {
        return train_partition(ds, random_pair_partition(ds, k, f, cfg.val_fraction, seed), model_config, cfg,
                               seed, f);
      },
      {});
}

void write_log_csv(std::span<const LogRow> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,train_loss,val_rmse\n";
  out.precision(17);
  for (const LogRow& r : log) {
    out << r.step << ',' << r.epoch << ',' << r.train_loss << ',';
    if (std::isfinite(r.val_rmse)) out << r.val_rmse;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace deepdtf::train
