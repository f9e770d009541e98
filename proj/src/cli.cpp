#include "deepdtf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "deepdtf/error.hpp"
#include "deepdtf/hash.hpp"
#include "deepdtf/smiles.hpp"

namespace deepdtf::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string num(std::size_t v) { return std::to_string(v); }

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::vector<KeySpec> build_keys() {
  const model::ModelConfig m;
  const train::TrainConfig t;
  const interpret::ExplainConfig e;
  const omics::PrepareOptions p;
  return {
      {"seed", "0", "master random seed"},
      {"workers", "1", "worker threads for folds, Shapley and GSEA"},
      {"manifest", "", "prepare: data manifest (key=value file of input paths)"},
      {"min_cells_per_type", num(p.assemble.min_cells_per_type), "prepare: drop cancer types with fewer cell lines"},
      {"prot_observed_only", p.prot_observed_only ? "true" : "false",
       "prepare: keep only proteins observed in every cell line"},
      {"k", "5", "split: number of cold-start folds"},
      {"protocol", "cv", "train: cv (one model per fold) or full (one model on every pair)"},
      {"modalities", "all", "train: all, mut+cnv, mut+cnv+ge or a '+' list of ge,mut,cnv,prot,meth"},
      {"epochs", num(t.epochs), "train: epochs"},
      {"batch_size", num(t.batch_size), "train: pairs per step"},
      {"max_steps", num(t.max_steps), "train: optimizer step cap, 0 for none"},
      {"lr", num(t.adam.lr), "train: Adam learning rate"},
      {"weight_decay", num(t.adam.weight_decay), "train: L2-coupled weight decay"},
      {"beta1", num(t.adam.beta1), "train: Adam beta1"},
      {"beta2", num(t.adam.beta2), "train: Adam beta2"},
      {"adam_eps", num(t.adam.eps), "train: Adam epsilon"},
      {"threshold", num(t.threshold), "train/eval: sensitivity threshold on p_hat"},
      {"val_fraction", num(t.val_fraction), "train: fraction of training cell lines held out for selection"},
      {"d", num(m.d), "model: embedding width"},
      {"tokens_per_modality", num(m.tokens_per_modality), "model: omics tokens per modality"},
      {"kernel_sizes", join(m.kernel_sizes), "model: channel-attention convolution kernel sizes"},
      {"conv_channels", num(m.conv_channels), "model: channels per kernel size"},
      {"attn_reduction", num(m.attn_reduction), "model: channel-attention bottleneck divisor"},
      {"omics_layers", num(m.omics.layers), "model: omics Transformer layers"},
      {"omics_heads", num(m.omics.heads), "model: omics Transformer heads"},
      {"drug_layers", num(m.drug.layers), "model: drug Transformer layers"},
      {"drug_heads", num(m.drug.heads), "model: drug Transformer heads"},
      {"fusion_layers", num(m.fusion.layers), "model: fusion Transformer layers"},
      {"fusion_heads", num(m.fusion.heads), "model: fusion Transformer heads"},
      {"ffn_mult", num(m.ffn_mult), "model: feed-forward width multiplier"},
      {"activation", m.activation == model::Activation::kGELU ? "gelu" : "relu", "model: gelu or relu"},
      {"gnn_layers", num(m.gnn_layers), "model: message-passing layers"},
      {"pooling", m.pooling == model::Pooling::kAttention ? "attention" : "mean", "model: attention or mean"},
      {"head_hidden", num(m.head_hidden), "model: prediction head hidden width"},
      {"dropout", num(m.dropout), "model: dropout rate"},
      {"omics_positions", m.omics_positions ? "true" : "false", "model: learned positions on omics tokens"},
      {"alpha", num(m.alpha), "loss: regression weight"},
      {"beta", num(m.beta), "loss: focal weight"},
      {"lambda", num(m.lambda), "loss: explicit L2 weight"},
      {"gamma", num(m.gamma), "loss: focal exponent"},
      {"gene_sets", "", "explain: GMT file of gene sets"},
      {"target", e.target == interpret::Target::kSensitivity ? "sensitivity" : "response",
       "explain: sensitivity (p_hat) or response (y_hat)"},
      {"estimator", e.estimator, "explain: auto, exact or sampled"},
      {"exact_max_groups", num(e.exact_max_groups), "explain: auto uses exact Shapley up to this many genes"},
      {"shap_permutations", num(e.n_permutations), "explain: permutations for sampled Shapley"},
      {"background_size", num(e.background_size), "explain: background cell lines"},
      {"samples_per_cell", num(e.samples_per_cell), "explain: cell lines per cancer type and drug"},
      {"cancer_type", "", "explain: restrict to one cancer type"},
      {"drugs", "", "explain: comma-separated drug ids, empty for all"},
      {"top_m", num(e.top_m), "explain: genes listed per direction"},
      {"gsea_weight", num(e.gsea.weight_exponent), "explain: GSEA weight exponent"},
      {"gsea_permutations", num(e.gsea.n_permutations), "explain: GSEA permutations"},
      {"gsea_min_size", num(e.gsea.min_size), "explain: minimum shared genes per set"},
  };
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string fmt17(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = build_keys();
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

void RunConfig::merge_text(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected key=value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (!values_.count(key))
      throw ConfigError(source + ":" + std::to_string(n) + ": unknown configuration key '" + key + "'");
    values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
}

void RunConfig::merge_file(const fs::path& path) { merge_text(read_text(path), path.string()); }

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a finite number, got '" + s + "'");
  return v;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string RunConfig::text() const {
  std::string s;
  for (const auto& k : config_keys()) s += k.name + "=" + values_.at(k.name) + "\n";
  return s;
}

omics::PrepareOptions RunConfig::prepare() const {
  omics::PrepareOptions p;
  p.assemble.min_cells_per_type = count("min_cells_per_type");
  p.prot_observed_only = flag("prot_observed_only");
  return p;
}

model::ModelConfig RunConfig::model() const {
  model::ModelConfig c;
  c.d = count("d");
  c.tokens_per_modality = count("tokens_per_modality");
  c.kernel_sizes.clear();
  for (const auto& k : list("kernel_sizes")) {
    std::size_t v = 0;
    const auto r = std::from_chars(k.data(), k.data() + k.size(), v);
    if (r.ec != std::errc{} || r.ptr != k.data() + k.size())
      throw ConfigError("kernel_sizes: expected comma-separated integers, got '" + get("kernel_sizes") + "'");
    c.kernel_sizes.push_back(v);
  }
  c.conv_channels = count("conv_channels");
  c.attn_reduction = count("attn_reduction");
  c.omics = {count("omics_layers"), count("omics_heads")};
  c.drug = {count("drug_layers"), count("drug_heads")};
  c.fusion = {count("fusion_layers"), count("fusion_heads")};
  c.ffn_mult = count("ffn_mult");
  const std::string& act = get("activation");
  if (act == "gelu") c.activation = model::Activation::kGELU;
  else if (act == "relu") c.activation = model::Activation::kReLU;
  else throw ConfigError("activation: expected gelu or relu, got '" + act + "'");
  c.gnn_layers = count("gnn_layers");
  const std::string& pool = get("pooling");
  if (pool == "attention") c.pooling = model::Pooling::kAttention;
  else if (pool == "mean") c.pooling = model::Pooling::kMean;
  else throw ConfigError("pooling: expected attention or mean, got '" + pool + "'");
  c.head_hidden = count("head_hidden");
  c.dropout = real("dropout");
  c.omics_positions = flag("omics_positions");
  c.alpha = real("alpha");
  c.beta = real("beta");
  c.lambda = real("lambda");
  c.gamma = real("gamma");
  return c;
}

train::TrainConfig RunConfig::training() const {
  train::TrainConfig t;
  t.epochs = count("epochs");
  t.batch_size = count("batch_size");
  t.max_steps = count("max_steps");
  t.adam.lr = real("lr");
  t.adam.weight_decay = real("weight_decay");
  t.adam.beta1 = real("beta1");
  t.adam.beta2 = real("beta2");
  t.adam.eps = real("adam_eps");
  t.threshold = real("threshold");
  t.val_fraction = real("val_fraction");
  if (get("modalities") != "all") t.modalities = omics::parse_modality_set(get("modalities"));
  t.validate();
  return t;
}

interpret::ExplainConfig RunConfig::explain() const {
  interpret::ExplainConfig e;
  const std::string& target = get("target");
  if (target == "sensitivity") e.target = interpret::Target::kSensitivity;
  else if (target == "response") e.target = interpret::Target::kResponse;
  else throw ConfigError("target: expected sensitivity or response, got '" + target + "'");
  e.estimator = get("estimator");
  e.exact_max_groups = count("exact_max_groups");
  e.n_permutations = count("shap_permutations");
  e.background_size = count("background_size");
  e.samples_per_cell = count("samples_per_cell");
  if (!get("cancer_type").empty()) e.cancer_type = get("cancer_type");
  e.drugs = list("drugs");
  e.top_m = count("top_m");
  e.gsea.weight_exponent = real("gsea_weight");
  e.gsea.n_permutations = count("gsea_permutations");
  e.gsea.min_size = count("gsea_min_size");
  e.seed = u64("seed");
  e.workers = count("workers");
  e.validate();
  return e;
}

namespace {

struct Paths {
  fs::path out = ".";
  std::string dataset;
  std::string folds;
  std::string checkpoint;
  std::string scope = "test";
  std::vector<std::string> smiles;
};

void require_file(const fs::path& p, const std::string& what, const std::string& producer) {
  if (!fs::exists(p))
    throw IoError(what + " " + p.string() + " not found; run `deepdtf " + producer + "` first or pass its path");
}

fs::path dataset_path(const Paths& paths) {
  const fs::path p = paths.dataset.empty() ? paths.out / "dataset.cbor" : fs::path(paths.dataset);
  require_file(p, "dataset bundle", "prepare");
  return p;
}

// Resolved configuration and input hashes beside the outputs of a command.
void write_record(const fs::path& out, const std::string& command, const RunConfig& cfg,
                  const std::vector<std::pair<std::string, fs::path>>& inputs) {
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, path] : inputs) in[name] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
  const std::string text = cfg.text();
  write_text(out / (command + "_config.txt"), text);
  const nlohmann::json rec{{"command", command},
                           {"version", kVersion},
                           {"config_sha256", sha256_hex(text)},
                           {"inputs", in}};
  write_text(out / (command + "_inputs.json"), rec.dump(2) + "\n");
}

std::vector<std::string> cell_ids(const omics::Dataset& ds, std::span<const std::size_t> rows) {
  std::vector<std::string> ids;
  for (std::size_t r : rows) ids.push_back(ds.cells.at(r).id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> pair_cells(const omics::Dataset& ds, std::span<const std::size_t> pairs) {
  std::set<std::string> ids;
  for (std::size_t p : pairs) ids.insert(ds.pairs.at(p).cell_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> rows_of(const omics::Dataset& ds, const std::vector<std::string>& ids,
                                 const std::string& what) {
  std::vector<std::size_t> rows;
  for (const auto& id : ids) {
    const auto r = ds.cell_index(id);
    if (!r) throw DataError(what + " cell line " + id + " is missing from the dataset");
    rows.push_back(*r);
  }
  return rows;
}

std::string predictions_csv(const omics::Dataset& ds, std::span<const std::size_t> pairs,
                            const train::Predictions& pr) {
  std::string s = "cell,drug,log_ic50,label,y_hat,p_hat\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = ds.pairs[pairs[i]];
    s += p.cell_id + "," + p.drug_id + "," + fmt17(p.log_ic50) + "," + std::to_string(p.label) + "," +
         fmt17(pr.y_hat[i]) + "," + fmt17(pr.p_hat[i]) + "\n";
  }
  return s;
}

std::string metrics_csv(const train::CvResult& cv) {
  std::string s = "fold";
  for (const char* n : train::kMetricNames) s += std::string(",") + n;
  s += ",n\n";
  for (const auto& f : cv.folds) {
    const nlohmann::json m = f.test.to_json();
    s += std::to_string(f.fold);
    for (const char* n : train::kMetricNames) s += "," + (m.at(n).is_null() ? std::string() : fmt17(m.at(n).get<double>()));
    s += "," + std::to_string(f.test.n) + "\n";
  }
  for (const auto& [label, values] : {std::pair{"mean", &cv.summary.mean}, std::pair{"sd", &cv.summary.sd}}) {
    s += label;
    for (double v : *values) s += "," + fmt17(v);
    s += ",\n";
  }
  return s;
}

std::vector<std::string> modality_names(const omics::FoldFeatures& f) {
  std::vector<std::string> out;
  for (auto m : f.order) out.emplace_back(omics::to_string(m));
  return out;
}

// Checkpoint, training curve and test predictions of one trained model.
void write_model_outputs(const fs::path& dir, const omics::Dataset& ds, const train::Partition& p,
                         const train::FoldRun& run, const train::TrainConfig& tc, const std::string& protocol,
                         std::uint64_t seed, const std::string& dataset_sha) {
  fs::create_directories(dir);
  const train::FoldInputs in = train::make_inputs(ds, p.fit_cells, tc.modalities);
  const nlohmann::json meta{{"protocol", protocol},
                            {"fold", run.result.fold},
                            {"seed", seed},
                            {"step", run.result.state.step},
                            {"best_epoch", run.result.state.best_epoch},
                            {"modalities", modality_names(in.features)},
                            {"fit_cells", cell_ids(ds, p.fit_cells)},
                            {"val_cells", pair_cells(ds, p.val)},
                            {"test_cells", pair_cells(ds, p.test)},
                            {"dataset_sha256", dataset_sha},
                            {"train_config", tc.to_json()},
                            {"param_fingerprint", run.result.param_fingerprint}};
  run.model.save(dir / "model.ckpt", meta);
  train::write_log_csv(run.result.state.log, dir / "log.csv");
  const train::Predictions pr = train::predict(run.model, in, p.test, tc.batch_size);
  write_text(dir / "predictions.csv", predictions_csv(ds, p.test, pr));
}

int cmd_prepare(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const std::string& manifest = cfg.get("manifest");
  if (manifest.empty()) throw ConfigError("prepare needs a manifest: pass --manifest or set manifest= in the config");
  require_file(manifest, "manifest", "prepare --manifest <file>");
  const omics::Manifest m = omics::Manifest::read(manifest);
  const omics::Dataset ds = omics::prepare_dataset(m, cfg.prepare());
  fs::create_directories(paths.out);
  omics::save_dataset(ds, paths.out / "dataset.cbor");
  const nlohmann::json stats = ds.stats();
  write_text(paths.out / "stats.json", stats.dump(2) + "\n");
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : ds.exclusions) ex.push_back({{"kind", e.kind}, {"id", e.id}, {"reason", e.reason}});
  write_text(paths.out / "exclusions.json", ex.dump(2) + "\n");
  std::vector<std::pair<std::string, fs::path>> inputs{{"manifest", manifest}};
  for (const auto& [key, path] : m.paths) inputs.emplace_back(key, path);
  write_record(paths.out, "prepare", cfg, inputs);
  out << stats.dump() << "\n";
  return 0;
}

int cmd_split(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  const fs::path ds_path = dataset_path(paths);
  const omics::Dataset ds = omics::load_dataset(ds_path);
  const omics::FoldSplit split = omics::make_folds(ds.cells, cfg.count("k"), cfg.u64("seed"));
  fs::create_directories(paths.out);
  write_text(paths.out / "folds.json", split.to_json().dump(2) + "\n");
  write_record(paths.out, "split", cfg, {{"dataset", ds_path}});
  for (std::size_t f = 0; f < split.k; ++f) out << "fold " << f << ": " << split.test[f].size() << " test cell lines\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const Paths& paths, std::ostream& out, std::ostream& err) {
  const fs::path ds_path = dataset_path(paths);
  const std::string& protocol = cfg.get("protocol");
  if (protocol != "cv" && protocol != "full") throw ConfigError("protocol: expected cv or full, got '" + protocol + "'");
  const omics::Dataset ds = omics::load_dataset(ds_path);
  const model::ModelConfig mc = cfg.model();
  train::TrainConfig tc = cfg.training();
  const std::uint64_t seed = cfg.u64("seed");
  const std::size_t workers = cfg.count("workers");
  const std::string ds_sha = sha256_file(ds_path);
  fs::create_directories(paths.out);

  std::vector<std::pair<std::string, fs::path>> inputs{{"dataset", ds_path}};
  train::CvResult cv;
  if (protocol == "cv") {
    const fs::path folds_path = paths.folds.empty() ? paths.out / "folds.json" : fs::path(paths.folds);
    require_file(folds_path, "fold assignment", "split");
    inputs.emplace_back("folds", folds_path);
    omics::FoldSplit split;
    try {
      split = omics::FoldSplit::from_json(nlohmann::json::parse(read_text(folds_path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(folds_path.string() + ": " + e.what());
    }
    std::vector<train::Partition> parts;
    for (std::size_t f = 0; f < split.k; ++f) parts.push_back(train::cold_start_partition(ds, split, f, tc.val_fraction, seed));
    std::mutex log_mutex;
    cv = train::cross_validate(ds, split, mc, tc, seed, workers, [&](const train::FoldRun& run) {
      const std::size_t f = run.result.fold;
      write_model_outputs(paths.out / ("fold" + std::to_string(f)), ds, parts[f], run, tc, protocol, seed, ds_sha);
      std::lock_guard lock(log_mutex);
      err << "fold " << f << ": test rmse " << run.result.test.rmse << ", auc " << run.result.test.auc << "\n";
    });
  } else {
    train::Partition p;
    p.cold_start = false;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) p.train.push_back(i);
    p.test = p.train;
    for (std::size_t c = 0; c < ds.cells.size(); ++c) p.fit_cells.push_back(c);
    tc.val_fraction = 0.0;
    train::FoldRun run = train::train_partition(ds, p, mc, tc, seed, 0);
    write_model_outputs(paths.out / "full", ds, p, run, tc, protocol, seed, ds_sha);
    cv.folds.push_back(run.result);
    cv.summary = train::summarize(std::span(&run.result.test, 1));
  }
  write_text(paths.out / "metrics.csv", metrics_csv(cv));

  nlohmann::json results = cv.to_json();
  results["protocol"] = protocol;
  results["seed"] = seed;
  results["config_sha256"] = sha256_hex(cfg.text());
  nlohmann::json data = nlohmann::json::object();
  for (const auto& [name, path] : inputs) data[name] = sha256_file(path);
  results["data_sha256"] = data;
  results["train_config"] = tc.to_json();
  write_text(paths.out / "results.json", results.dump(2) + "\n");
  write_record(paths.out, "train", cfg, inputs);
  out << nlohmann::json{{"mean", results.at("mean")}, {"sd", results.at("sd")}}.dump() << "\n";
  return 0;
}

struct LoadedCheckpoint {
  model::DeepDTF model;
  nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const Paths& paths) {
  require_file(paths.checkpoint, "checkpoint", "train");
  nlohmann::json meta;
  model::DeepDTF m = model::DeepDTF::load(paths.checkpoint, &meta);
  for (const char* key : {"fit_cells", "test_cells", "modalities"})
    if (!meta.contains(key)) throw DataError(paths.checkpoint + ": checkpoint metadata lacks '" + key + "'");
  return {std::move(m), std::move(meta)};
}

std::set<omics::Modality> checkpoint_modalities(const nlohmann::json& meta) {
  std::set<omics::Modality> mods;
  for (const auto& m : meta.at("modalities")) mods.insert(omics::modality_from_string(m.get<std::string>()));
  return mods;
}

int cmd_eval(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  if (paths.scope != "test" && paths.scope != "all") throw ConfigError("--scope: expected test or all");
  const LoadedCheckpoint ck = load_checkpoint(paths);
  const fs::path ds_path = dataset_path(paths);
  const omics::Dataset ds = omics::load_dataset(ds_path);
  const auto fit = rows_of(ds, ck.meta.at("fit_cells").get<std::vector<std::string>>(), "training");
  const train::FoldInputs in = train::make_inputs(ds, fit, checkpoint_modalities(ck.meta));
  const auto test_ids = ck.meta.at("test_cells").get<std::vector<std::string>>();
  const std::set<std::string> test_set(test_ids.begin(), test_ids.end());
  std::vector<std::size_t> pairs;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i)
    if (paths.scope == "all" || test_set.count(ds.pairs[i].cell_id)) pairs.push_back(i);
  if (pairs.empty()) throw DataError("no dataset pairs fall in the checkpoint's " + paths.scope + " scope");
  const std::size_t batch = cfg.count("batch_size");
  if (batch == 0) throw ConfigError("batch_size must be positive");
  const train::Predictions pr = train::predict(ck.model, in, pairs, batch);
  std::vector<double> y;
  std::vector<int> t;
  for (std::size_t i : pairs) {
    y.push_back(in.y[i]);
    t.push_back(in.t[i]);
  }
  const double threshold = cfg.real("threshold");
  const train::Metrics m = train::evaluate_predictions(pr.y_hat, y, pr.p_hat, t, threshold);
  fs::create_directories(paths.out);
  const nlohmann::json report{{"checkpoint", paths.checkpoint},
                              {"checkpoint_sha256", sha256_file(paths.checkpoint)},
                              {"dataset_sha256", sha256_file(ds_path)},
                              {"scope", paths.scope},
                              {"threshold", threshold},
                              {"metrics", m.to_json()}};
  write_text(paths.out / "eval_metrics.json", report.dump(2) + "\n");
  write_text(paths.out / "eval_predictions.csv", predictions_csv(ds, pairs, pr));
  write_record(paths.out, "eval", cfg, {{"checkpoint", paths.checkpoint}, {"dataset", ds_path}});
  out << m.to_json().dump() << "\n";
  return 0;
}

int cmd_explain(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
  if (paths.scope != "test" && paths.scope != "all") throw ConfigError("--scope: expected test or all");
  const interpret::ExplainConfig ec = cfg.explain();
  const LoadedCheckpoint ck = load_checkpoint(paths);
  const fs::path ds_path = dataset_path(paths);
  const omics::Dataset ds = omics::load_dataset(ds_path);
  const auto fit = rows_of(ds, ck.meta.at("fit_cells").get<std::vector<std::string>>(), "training");
  const train::FoldInputs in = train::make_inputs(ds, fit, checkpoint_modalities(ck.meta));
  std::vector<std::size_t> cells;
  if (paths.scope == "all") {
    for (std::size_t c = 0; c < ds.cells.size(); ++c) cells.push_back(c);
  } else {
    cells = rows_of(ds, ck.meta.at("test_cells").get<std::vector<std::string>>(), "test");
  }
  std::vector<interpret::GeneSet> sets;
  std::vector<std::pair<std::string, fs::path>> inputs{{"checkpoint", paths.checkpoint}, {"dataset", ds_path}};
  if (!cfg.get("gene_sets").empty()) {
    sets = interpret::read_gmt(cfg.get("gene_sets"));
    inputs.emplace_back("gene_sets", cfg.get("gene_sets"));
  }
  const interpret::ExplainReport rep = interpret::explain_report(ck.model, ds, in, cells, fit, sets, ec);
  rep.write(paths.out);
  write_record(paths.out, "explain", cfg, inputs);
  out << rep.attributions.size() << " attributions, " << rep.gsea.results.size() << " gene sets scored, "
      << rep.gsea.skipped.size() << " skipped\n";
  return 0;
}

int cmd_parse_smiles(const Paths& paths, std::ostream& out) {
  for (const auto& s : paths.smiles) {
    const chem::DrugGraph g = chem::parse_smiles(s);
    const nlohmann::json j{{"smiles", s},
                           {"num_nodes", g.node_features.size()},
                           {"num_edges", g.edge_index.size()},
                           {"graph", chem::graph_to_json(g)}};
    out << j.dump() << "\n";
  }
  return 0;
}

std::string dashed(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drug response prediction from multi-omics profiles and molecular graphs", "deepdtf"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Paths paths;
  std::string config_path;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();

  std::map<std::string, std::string> overrides;
  std::vector<std::pair<std::string, CLI::Option*>> key_options;
  auto* keys = app.add_option_group("Configuration keys", "each key also accepted as key=value in --config");
  for (const auto& k : config_keys()) {
    const std::string help = k.help + (k.default_value.empty() ? "" : " [" + k.default_value + "]");
    key_options.emplace_back(k.name, keys->add_option("--" + dashed(k.name), overrides[k.name], help));
  }

  auto* prepare = app.add_subcommand("prepare", "validate and assemble inputs into a dataset bundle");
  auto* split = app.add_subcommand("split", "assign cell lines to cold-start folds");
  auto* train_cmd = app.add_subcommand("train", "train one model per fold (or on all pairs)");
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  auto* explain = app.add_subcommand("explain", "Shapley attributions, gene ranking and enrichment");
  auto* parse = app.add_subcommand("parse-smiles", "print the molecular graph of SMILES strings as JSON");
  for (auto* sub : {split, train_cmd, eval, explain})
    sub->add_option("--dataset", paths.dataset, "dataset bundle [<out>/dataset.cbor]");
  train_cmd->add_option("--folds", paths.folds, "fold assignment [<out>/folds.json]");
  for (auto* sub : {eval, explain}) {
    sub->add_option("--checkpoint", paths.checkpoint, "model checkpoint written by train")->required();
    sub->add_option("--scope", paths.scope, "test: the checkpoint's held-out cell lines; all: every pair")
        ->capture_default_str();
  }
  parse->add_option("smiles", paths.smiles, "SMILES strings")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    paths.out = out_dir;
    if (parse->parsed()) return cmd_parse_smiles(paths, out);
    RunConfig cfg;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw IoError("config file " + config_path + " not found");
      cfg.merge_file(config_path);
    }
    for (const auto& [name, opt] : key_options)
      if (opt->count() > 0) cfg.set(name, overrides[name]);
    if (cfg.count("workers") == 0) throw ConfigError("workers must be at least 1");
    if (prepare->parsed()) return cmd_prepare(cfg, paths, out);
    if (split->parsed()) return cmd_split(cfg, paths, out);
    if (train_cmd->parsed()) return cmd_train(cfg, paths, out, err);
    if (eval->parsed()) return cmd_eval(cfg, paths, out);
    if (explain->parsed()) return cmd_explain(cfg, paths, out);
    return 2;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error (data): " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return 5;
  }
}

}  // namespace deepdtf::cli
