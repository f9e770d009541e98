#include "deepdtf/omics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "deepdtf/csv.hpp"
#include "deepdtf/error.hpp"
#include "deepdtf/hash.hpp"
#include "deepdtf/random.hpp"

namespace deepdtf::omics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

struct RawMatrix {
  std::vector<std::string> features;
  std::map<std::string, std::vector<double>> rows;  // cell id -> values
  std::map<std::string, std::pair<std::size_t, std::size_t>> where;  // cell -> csv row (for errors)
  csv::Table table;
};

RawMatrix read_matrix(const std::filesystem::path& path, bool allow_missing) {
  RawMatrix m;
  m.table = csv::read(path);
  const csv::Table& t = m.table;
  if (t.header.size() < 2) throw DataError(t.source + ": expected cell_id column plus features");
  m.features.assign(t.header.begin() + 1, t.header.end());
  std::set<std::string> seen_features;
  for (const auto& f : m.features)
    if (!seen_features.insert(f).second) throw DataError(t.source + ": duplicate feature '" + f + "'");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& id = t.rows[r][0];
    if (id.empty()) throw DataError(t.where(r, 0) + ": empty cell id");
    std::vector<double> v(m.features.size());
    for (std::size_t c = 1; c < t.header.size(); ++c) v[c - 1] = csv::to_double(t, r, c, allow_missing);
    if (!m.rows.emplace(id, std::move(v)).second)
      throw DataError(t.where(r, 0) + ": duplicate cell id '" + id + "'");
    m.where[id] = {r, 0};
  }
  return m;
}

void check_domain(const RawMatrix& m, Modality kind) {
  for (const auto& [id, row] : m.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double v = row[c];
      bool ok = true;
      switch (kind) {
        case Modality::kMUT: ok = v == 0.0 || v == 1.0; break;
        case Modality::kCNV: ok = v == -1.0 || v == 0.0 || v == 1.0; break;
        case Modality::kMETH: ok = std::isnan(v) || (v >= 0.0 && v <= 1.0); break;
        default: break;
      }
      if (!ok) {
        const auto r = m.where.at(id).first;
        throw DataError(m.table.where(r, c + 1) + ": value " + m.table.rows[r][c + 1] +
                        " outside the " + std::string(to_string(kind)) + " domain");
      }
    }
  }
}

std::set<std::string> read_whitelist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::set<std::string> genes;
  std::string line;
  while (std::getline(in, line)) {
    std::string g = trim(line);
    if (!g.empty() && g[0] != '#') genes.insert(g);
  }
  return genes;
}

void keep_columns(RawMatrix& m, const std::vector<std::size_t>& cols) {
  std::vector<std::string> f;
  for (std::size_t c : cols) f.push_back(m.features[c]);
  m.features = std::move(f);
  for (auto& [id, row] : m.rows) {
    std::vector<double> r;
    for (std::size_t c : cols) r.push_back(row[c]);
    row = std::move(r);
  }
}

std::vector<double> column_means(const Matrix& m, std::span<const std::size_t> rows) {
  std::vector<double> sum(m.cols, 0.0);
  std::vector<std::size_t> n(m.cols, 0);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < m.cols; ++c)
      if (!std::isnan(m(r, c))) {
        sum[c] += m(r, c);
        ++n[c];
      }
  for (std::size_t c = 0; c < m.cols; ++c) sum[c] = n[c] ? sum[c] / static_cast<double>(n[c]) : 0.0;
  return sum;
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kGE: return "GE";
    case Modality::kMUT: return "MUT";
    case Modality::kCNV: return "CNV";
    case Modality::kPROT: return "PROT";
    case Modality::kMETH: return "METH";
  }
  return "?";
}

Modality modality_from_string(std::string_view name) {
  const std::string n = lower(trim(name));
  for (Modality m : kAllModalities)
    if (lower(to_string(m)) == n) return m;
  throw ConfigError("unknown modality '" + std::string(name) + "' (expected ge, mut, cnv, prot, meth)");
}

std::set<Modality> parse_modality_set(std::string_view spec) {
  const std::string s = lower(trim(spec));
  if (s == "all") return {kAllModalities.begin(), kAllModalities.end()};
  std::set<Modality> out;
  std::string token;
  for (char c : s + "+") {
    if (c == '+' || c == ',') {
      if (!trim(token).empty()) out.insert(modality_from_string(token));
      token.clear();
    } else {
      token += c;
    }
  }
  if (out.empty()) throw ConfigError("empty modality selection");
  return out;
}

std::vector<double> asw_integrate(std::span<const double> prot, std::span<const double> dprot) {
  if (prot.size() != dprot.size()) {
    throw DimensionError("asw_integrate: prot has " + std::to_string(prot.size()) +
                         " entries, dprot has " + std::to_string(dprot.size()));
  }
  std::vector<double> out(prot.size());
  for (std::size_t i = 0; i < prot.size(); ++i) out[i] = prot[i] + dprot[i];
  return out;
}

bool meth_cluster_passes(const MethCluster& c, std::size_t index) {
  if (c.n_cpg <= 0)
    throw DataError("methylation cluster " + std::to_string(index) + " has n_cpg = " + std::to_string(c.n_cpg));
  return c.total_depth / static_cast<double>(c.n_cpg) >= kMinMethCoverage;
}

std::vector<double> filter_methylation(std::span<const MethCluster> clusters) {
  std::vector<double> kept;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    if (meth_cluster_passes(clusters[i], i)) kept.push_back(clusters[i].value);
  return kept;
}

std::vector<std::size_t> aligned_meth_columns(const std::vector<std::vector<MethCluster>>& per_line) {
  if (per_line.empty()) return {};
  const std::size_t n = per_line.front().size();
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < n; ++c) {
    bool all = true;
    for (const auto& line : per_line) {
      if (line.size() != n) throw DimensionError("methylation: cell lines disagree on cluster count");
      all = meth_cluster_passes(line[c], c) && all;
    }
    if (all) cols.push_back(c);
  }
  return cols;
}

int binarize_response(double log_ic50) {
  if (std::isnan(log_ic50)) throw DataError("binarize_response: log_ic50 is NaN");
  return log_ic50 < kSensitiveThreshold ? 1 : 0;
}

MinMaxScaler MinMaxScaler::fit(const Matrix& train) {
  MinMaxScaler s;
  s.lo.assign(train.cols, std::numeric_limits<double>::infinity());
  s.hi.assign(train.cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < train.rows; ++r)
    for (std::size_t c = 0; c < train.cols; ++c) {
      const double v = train(r, c);
      if (std::isnan(v)) continue;
      s.lo[c] = std::min(s.lo[c], v);
      s.hi[c] = std::max(s.hi[c], v);
    }
  for (std::size_t c = 0; c < train.cols; ++c)
    if (s.lo[c] > s.hi[c]) s.lo[c] = s.hi[c] = 0.0;  // no observed values
  return s;
}

double MinMaxScaler::transform(std::size_t col, double v) const {
  if (std::isnan(v)) return v;
  const double range = hi.at(col) - lo.at(col);
  if (!(range > 0.0)) return 0.0;
  return (v - lo[col]) / range;
}

Matrix MinMaxScaler::transform(const Matrix& m) const {
  if (m.cols != lo.size())
    throw DimensionError("scaler fitted on " + std::to_string(lo.size()) + " columns, got " +
                         std::to_string(m.cols));
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = transform(c, m(r, c));
  return out;
}

ScaledPair scale_features(const Matrix& train, const Matrix& test) {
  if (train.cols != test.cols)
    throw DimensionError("scale_features: train has " + std::to_string(train.cols) +
                         " columns, test has " + std::to_string(test.cols));
  ScaledPair p;
  p.scaler = MinMaxScaler::fit(train);
  p.train = p.scaler.transform(train);
  p.test = p.scaler.transform(test);
  return p;
}

std::vector<std::string> FoldSplit::train_cells(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of)
    if (static_cast<std::size_t>(f) != fold) out.push_back(id);
  return out;
}

nlohmann::json FoldSplit::to_json() const {
  nlohmann::json folds = nlohmann::json::object();
  for (std::size_t f = 0; f < k; ++f)
    folds[std::to_string(f)] = {{"train", train_cells(f)}, {"test", test.at(f)}};
  return {{"k", k}, {"seed", seed}, {"folds", folds}, {"sha256", content_hash()}};
}

std::string FoldSplit::content_hash() const {
  nlohmann::json folds = nlohmann::json::object();
  for (std::size_t f = 0; f < k; ++f)
    folds[std::to_string(f)] = {{"train", train_cells(f)}, {"test", test.at(f)}};
  return sha256_hex(folds.dump());
}

FoldSplit FoldSplit::from_json(const nlohmann::json& j) {
  FoldSplit s;
  try {
    s.k = j.at("k").get<std::size_t>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.test.resize(s.k);
    for (std::size_t f = 0; f < s.k; ++f) {
      const auto& entry = j.at("folds").at(std::to_string(f));
      s.test[f] = entry.at("test").get<std::vector<std::string>>();
      std::sort(s.test[f].begin(), s.test[f].end());
      for (const auto& id : s.test[f]) {
        if (!s.fold_of.emplace(id, static_cast<int>(f)).second)
          throw DataError("fold manifest: cell '" + id + "' appears in two test folds");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("fold manifest: ") + e.what());
  }
  if (j.contains("sha256") && j.at("sha256").get<std::string>() != s.content_hash())
    throw DataError("fold manifest: content hash mismatch");
  return s;
}

FoldSplit make_folds(std::span<const CellLine> cells, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("make_folds: k must be at least 2, got " + std::to_string(k));
  if (cells.size() < k)
    throw ConfigError("make_folds: " + std::to_string(cells.size()) + " cell lines cannot fill " +
                      std::to_string(k) + " folds");
  std::map<std::string, std::vector<std::string>> by_type;
  std::set<std::string> ids;
  for (const CellLine& c : cells) {
    if (!ids.insert(c.id).second) throw DataError("make_folds: duplicate cell id '" + c.id + "'");
    by_type[c.cancer_type].push_back(c.id);
  }
  FoldSplit s;
  s.k = k;
  s.seed = seed;
  s.test.resize(k);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (auto& [type, members] : by_type) {
    std::sort(members.begin(), members.end());
    shuffle(std::span<std::string>(members), rng);
    for (const std::string& id : members) {
      s.fold_of[id] = static_cast<int>(next);
      s.test[next].push_back(id);
      next = (next + 1) % k;
    }
  }
  for (auto& t : s.test) std::sort(t.begin(), t.end());
  return s;
}

std::optional<std::size_t> Dataset::cell_index(std::string_view id) const {
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].id == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> Dataset::drug_index(std::string_view id) const {
  for (std::size_t i = 0; i < drugs.size(); ++i)
    if (drugs[i].id == id) return i;
  return std::nullopt;
}

const ModalityBlock* Dataset::block(Modality m) const {
  for (const auto& b : modalities)
    if (b.kind == m) return &b;
  return nullptr;
}

std::set<std::string> Dataset::cancer_types() const {
  std::set<std::string> out;
  for (const auto& c : cells) out.insert(c.cancer_type);
  return out;
}

nlohmann::json Dataset::stats() const {
  nlohmann::json dims = nlohmann::json::object();
  for (const auto& b : modalities) dims[std::string(to_string(b.kind))] = b.features.size();
  std::size_t sensitive = 0;
  for (const auto& p : pairs) sensitive += p.label;
  return {{"pairs", pairs.size()},   {"cells", cells.size()},
          {"drugs", drugs.size()},   {"cancer_types", cancer_types().size()},
          {"sensitive", sensitive},  {"dims", dims},
          {"exclusions", exclusions.size()}};
}

void Dataset::validate() const {
  for (const auto& b : modalities) {
    if (b.values.rows != cells.size() || b.values.cols != b.features.size())
      throw DataError(std::string(to_string(b.kind)) + ": matrix shape disagrees with cells/features");
    for (double v : b.values.data) {
      bool ok = true;
      switch (b.kind) {
        case Modality::kMUT: ok = v == 0.0 || v == 1.0; break;
        case Modality::kCNV: ok = v == -1.0 || v == 0.0 || v == 1.0; break;
        case Modality::kMETH: ok = std::isnan(v) || (v >= 0.0 && v <= 1.0); break;
        default: ok = std::isnan(v) || std::isfinite(v); break;
      }
      if (!ok) throw DataError(std::string(to_string(b.kind)) + ": value outside domain");
    }
  }
  for (const auto& p : pairs)
    if (p.label != binarize_response(p.log_ic50))
      throw DataError("pair (" + p.cell_id + ", " + p.drug_id + "): label disagrees with log_ic50");
}

void assemble_pairs(Dataset& ds, std::span<const ResponseRecord> responses,
                    const AssembleOptions& opt, const FoldSplit* folds) {
  std::map<std::string, std::size_t> type_count;
  for (const auto& c : ds.cells) ++type_count[c.cancer_type];
  std::set<std::string> usable_cells;
  for (const auto& c : ds.cells) {
    const std::size_t n = type_count[c.cancer_type];
    if (n < opt.min_cells_per_type) {
      ds.exclusions.push_back({"cell", c.id,
                               "cancer type '" + c.cancer_type + "' has " + std::to_string(n) + " < " +
                                   std::to_string(opt.min_cells_per_type) + " cell lines"});
    } else {
      usable_cells.insert(c.id);
    }
  }
  std::set<std::string> usable_drugs;
  for (const auto& d : ds.drugs) usable_drugs.insert(d.id);

  ds.pairs.clear();
  std::set<std::pair<std::string, std::string>> seen;
  for (const ResponseRecord& r : responses) {
    const std::string key = r.cell_id + "|" + r.drug_id;
    if (!usable_drugs.count(r.drug_id)) {
      ds.exclusions.push_back({"pair", key, "drug filtered"});
      continue;
    }
    if (!usable_cells.count(r.cell_id)) {
      ds.exclusions.push_back({"pair", key, "cell filtered"});
      continue;
    }
    if (!std::isfinite(r.log_ic50)) {
      ds.exclusions.push_back({"pair", key, "non-finite log_ic50"});
      continue;
    }
    if (!seen.emplace(r.cell_id, r.drug_id).second) {
      ds.exclusions.push_back({"pair", key, "duplicate response"});
      continue;
    }
    PairSample p{r.cell_id, r.drug_id, r.log_ic50, binarize_response(r.log_ic50), -1};
    if (folds) {
      auto it = folds->fold_of.find(r.cell_id);
      if (it == folds->fold_of.end())
        throw ConfigError("fold split does not cover cell line '" + r.cell_id + "'; rerun split");
      p.fold = it->second;
    }
    ds.pairs.push_back(std::move(p));
  }

  std::set<std::string> cells_with_pairs, drugs_with_pairs;
  for (const auto& p : ds.pairs) {
    cells_with_pairs.insert(p.cell_id);
    drugs_with_pairs.insert(p.drug_id);
  }
  std::vector<std::size_t> keep_rows;
  std::vector<CellLine> kept_cells;
  for (std::size_t i = 0; i < ds.cells.size(); ++i) {
    if (cells_with_pairs.count(ds.cells[i].id)) {
      keep_rows.push_back(i);
      kept_cells.push_back(ds.cells[i]);
    } else if (usable_cells.count(ds.cells[i].id)) {
      ds.exclusions.push_back({"cell", ds.cells[i].id, "no response data"});
    }
  }
  for (auto& b : ds.modalities) {
    Matrix m(keep_rows.size(), b.values.cols);
    for (std::size_t r = 0; r < keep_rows.size(); ++r)
      std::copy_n(b.values.row(keep_rows[r]).begin(), b.values.cols, m.row(r).begin());
    b.values = std::move(m);
  }
  ds.cells = std::move(kept_cells);
  std::vector<chem::ParsedDrug> kept_drugs;
  for (auto& d : ds.drugs) {
    if (drugs_with_pairs.count(d.id)) kept_drugs.push_back(std::move(d));
    else ds.exclusions.push_back({"drug", d.id, "no response data"});
  }
  ds.drugs = std::move(kept_drugs);
}

Manifest Manifest::read(const std::filesystem::path& path) {
  static const std::set<std::string> kKeys{"cells", "responses", "drugs", "ge", "mut", "cnv",
                                           "prot", "prot_healthy", "meth", "meth_depth",
                                           "meth_cpg", "gene_whitelist"};
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=path");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!kKeys.count(key))
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown manifest key '" + key + "'");
    std::filesystem::path p(value);
    if (p.is_relative()) p = path.parent_path() / p;
    m.paths[key] = p;
  }
  for (const char* required : {"cells", "responses", "drugs"})
    if (!m.has(required)) throw ConfigError("manifest " + path.string() + " lacks '" + required + "'");
  if (!m.has("ge") && !m.has("mut") && !m.has("cnv") && !m.has("prot") && !m.has("meth"))
    throw ConfigError("manifest " + path.string() + " lists no omics modality");
  return m;
}

const std::filesystem::path& Manifest::at(std::string_view key) const {
  auto it = paths.find(std::string(key));
  if (it == paths.end()) throw ConfigError("manifest lacks '" + std::string(key) + "'");
  return it->second;
}

Dataset prepare_dataset(const Manifest& manifest, const PrepareOptions& opt) {
  Dataset ds;

  const csv::Table cells = csv::read(manifest.at("cells"));
  const std::size_t c_id = cells.column("cell_id"), c_type = cells.column("cancer_type");
  std::map<std::string, std::string> type_of;
  for (std::size_t r = 0; r < cells.rows.size(); ++r) {
    const auto& id = cells.rows[r][c_id];
    if (id.empty()) throw DataError(cells.where(r, c_id) + ": empty cell id");
    if (!type_of.emplace(id, cells.rows[r][c_type]).second)
      throw DataError(cells.where(r, c_id) + ": duplicate cell id '" + id + "'");
  }

  const csv::Table drugs = csv::read(manifest.at("drugs"));
  const std::size_t d_id = drugs.column("drug_id"), d_smiles = drugs.column("smiles");
  std::vector<chem::DrugRecord> records;
  for (const auto& row : drugs.rows) records.push_back({row[d_id], row[d_smiles]});
  auto filtered = chem::filter_drugs(records);
  ds.drugs = std::move(filtered.kept);
  for (const auto& rej : filtered.rejected) ds.exclusions.push_back({"drug", rej.id, rej.reason});

  std::optional<std::set<std::string>> whitelist;
  if (manifest.has("gene_whitelist")) whitelist = read_whitelist(manifest.at("gene_whitelist"));

  struct Loaded {
    Modality kind;
    RawMatrix m;
  };
  std::vector<Loaded> loaded;
  for (Modality kind : kAllModalities) {
    const std::string key = lower(to_string(kind));
    if (!manifest.has(key)) continue;
    const bool allow_missing = kind == Modality::kGE || kind == Modality::kPROT || kind == Modality::kMETH;
    RawMatrix m = read_matrix(manifest.at(key), allow_missing);
    check_domain(m, kind);
    if (whitelist && (kind == Modality::kMUT || kind == Modality::kCNV)) {
      std::vector<std::size_t> cols;
      for (std::size_t c = 0; c < m.features.size(); ++c)
        if (whitelist->count(m.features[c])) cols.push_back(c);
      keep_columns(m, cols);
    }
    if (kind == Modality::kPROT) {
      std::vector<double> healthy(m.features.size(), 0.0);
      if (manifest.has("prot_healthy")) {
        const csv::Table h = csv::read(manifest.at("prot_healthy"));
        const std::size_t h_f = h.column("feature"), h_v = h.column("value");
        std::map<std::string, double> ref;
        for (std::size_t r = 0; r < h.rows.size(); ++r) ref[h.rows[r][h_f]] = csv::to_double(h, r, h_v);
        for (std::size_t c = 0; c < m.features.size(); ++c) {
          auto it = ref.find(m.features[c]);
          if (it == ref.end())
            throw DataError(h.source + ": no healthy reference for protein '" + m.features[c] + "'");
          healthy[c] = it->second;
        }
      }
      for (auto& [id, row] : m.rows) {
        std::vector<double> dprot(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) dprot[c] = row[c] - healthy[c];
        row = asw_integrate(row, dprot);
      }
    }
    loaded.push_back({kind, std::move(m)});
  }

  // Cells: in the metadata and profiled in every supplied modality.
  for (const auto& [id, type] : type_of) {
    std::string missing;
    for (const auto& l : loaded)
      if (!l.m.rows.count(id)) missing += (missing.empty() ? "" : ",") + std::string(to_string(l.kind));
    if (missing.empty()) ds.cells.push_back({id, type});
    else ds.exclusions.push_back({"cell", id, "missing " + missing + " profile"});
  }
  for (const auto& l : loaded)
    for (const auto& [id, row] : l.m.rows)
      if (!type_of.count(id)) ds.exclusions.push_back({"cell", id, "no cancer type metadata"});

  for (const auto& l : loaded) {
    ModalityBlock b;
    b.kind = l.kind;
    b.features = l.m.features;
    b.values = Matrix(ds.cells.size(), b.features.size());
    for (std::size_t r = 0; r < ds.cells.size(); ++r) {
      const auto& row = l.m.rows.at(ds.cells[r].id);
      std::copy(row.begin(), row.end(), b.values.row(r).begin());
    }
    ds.modalities.push_back(std::move(b));
  }

  const csv::Table resp = csv::read(manifest.at("responses"));
  const std::size_t r_d = resp.column("drug_id"), r_c = resp.column("cell_id"), r_v = resp.column("log_ic50");
  std::vector<ResponseRecord> responses;
  for (std::size_t r = 0; r < resp.rows.size(); ++r)
    responses.push_back({resp.rows[r][r_d], resp.rows[r][r_c], csv::to_double(resp, r, r_v, true)});
  assemble_pairs(ds, responses, opt.assemble);

  // Column reconciliation over the retained cell lines.
  for (auto& b : ds.modalities) {
    std::vector<std::size_t> cols;
    if (b.kind == Modality::kMETH) {
      if (!manifest.has("meth_depth") || !manifest.has("meth_cpg"))
        throw ConfigError("methylation needs meth_depth and meth_cpg manifest entries");
      RawMatrix depth = read_matrix(manifest.at("meth_depth"), false);
      if (depth.features != b.features)
        throw DataError(depth.table.source + ": columns differ from the methylation value matrix");
      const csv::Table cpg = csv::read(manifest.at("meth_cpg"));
      const std::size_t g_c = cpg.column("cluster"), g_n = cpg.column("n_cpg");
      std::map<std::string, int> n_cpg;
      for (std::size_t r = 0; r < cpg.rows.size(); ++r) {
        const double v = csv::to_double(cpg, r, g_n);
        if (v != std::floor(v)) throw DataError(cpg.where(r, g_n) + ": n_cpg must be an integer");
        n_cpg[cpg.rows[r][g_c]] = static_cast<int>(v);
      }
      std::vector<std::vector<MethCluster>> per_line;
      for (std::size_t r = 0; r < ds.cells.size(); ++r) {
        auto it = depth.rows.find(ds.cells[r].id);
        if (it == depth.rows.end())
          throw DataError(depth.table.source + ": no depth row for cell '" + ds.cells[r].id + "'");
        std::vector<MethCluster> line;
        for (std::size_t c = 0; c < b.features.size(); ++c) {
          auto nc = n_cpg.find(b.features[c]);
          if (nc == n_cpg.end())
            throw DataError(cpg.source + ": no CpG count for cluster '" + b.features[c] + "'");
          line.push_back({b.values(r, c), it->second[c], nc->second});
        }
        per_line.push_back(std::move(line));
      }
      cols = aligned_meth_columns(per_line);
    } else if (b.kind == Modality::kPROT && opt.prot_observed_only) {
      for (std::size_t c = 0; c < b.values.cols; ++c) {
        bool observed = true;
        for (std::size_t r = 0; r < b.values.rows; ++r) observed = observed && !std::isnan(b.values(r, c));
        if (observed) cols.push_back(c);
      }
    } else {
      continue;
    }
    ModalityBlock nb;
    nb.kind = b.kind;
    nb.values = Matrix(b.values.rows, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      nb.features.push_back(b.features[cols[j]]);
      for (std::size_t r = 0; r < b.values.rows; ++r) nb.values(r, j) = b.values(r, cols[j]);
    }
    b = std::move(nb);
  }
  ds.validate();
  return ds;
}

nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json j;
  j["format"] = "deepdtf-dataset/1";
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : ds.cells) cells.push_back({c.id, c.cancer_type});
  j["cells"] = std::move(cells);
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& b : ds.modalities) {
    mods.push_back({{"kind", to_string(b.kind)},
                    {"features", b.features},
                    {"rows", b.values.rows},
                    {"cols", b.values.cols},
                    {"values", b.values.data}});
  }
  j["modalities"] = std::move(mods);
  nlohmann::json drugs = nlohmann::json::array();
  for (const auto& d : ds.drugs) drugs.push_back({{"id", d.id}, {"smiles", d.smiles}, {"graph", chem::graph_to_json(d.graph)}});
  j["drugs"] = std::move(drugs);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : ds.pairs) pairs.push_back({p.cell_id, p.drug_id, p.log_ic50, p.label, p.fold});
  j["pairs"] = std::move(pairs);
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& e : ds.exclusions) excl.push_back({e.kind, e.id, e.reason});
  j["exclusions"] = std::move(excl);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset ds;
  try {
    if (j.at("format") != "deepdtf-dataset/1")
      throw DataError("dataset bundle: unsupported format " + j.at("format").dump());
    for (const auto& c : j.at("cells")) ds.cells.push_back({c.at(0), c.at(1)});
    for (const auto& m : j.at("modalities")) {
      ModalityBlock b;
      b.kind = modality_from_string(m.at("kind").get<std::string>());
      b.features = m.at("features").get<std::vector<std::string>>();
      b.values.rows = m.at("rows");
      b.values.cols = m.at("cols");
      b.values.data.reserve(b.values.rows * b.values.cols);
      for (const auto& v : m.at("values")) b.values.data.push_back(v.is_null() ? kNaN : v.get<double>());
      if (b.values.data.size() != b.values.rows * b.values.cols)
        throw DataError("dataset bundle: modality " + std::string(to_string(b.kind)) + " has wrong value count");
      ds.modalities.push_back(std::move(b));
    }
    for (const auto& d : j.at("drugs"))
      ds.drugs.push_back({d.at("id"), d.at("smiles"), chem::graph_from_json(d.at("graph"))});
    for (const auto& p : j.at("pairs"))
      ds.pairs.push_back({p.at(0), p.at(1), p.at(2).get<double>(), p.at(3).get<int>(), p.at(4).get<int>()});
    for (const auto& e : j.at("exclusions")) ds.exclusions.push_back({e.at(0), e.at(1), e.at(2)});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset bundle: ") + e.what());
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = nlohmann::json::to_cbor(dataset_to_json(ds));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset bundle " + path.string() + " (run 'prepare' first)");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": not a dataset bundle (" + e.what() + ")");
  }
  return dataset_from_json(j);
}

std::size_t FoldFeatures::total_dim() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{0});
}

std::vector<double> FoldFeatures::concatenated(std::size_t cell) const {
  std::vector<double> out;
  out.reserve(total_dim());
  for (const Matrix& b : blocks) {
    auto r = b.row(cell);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

FoldFeatures build_fold_features(const Dataset& ds, std::span<const std::size_t> train_cells,
                                 const std::set<Modality>& enabled) {
  if (enabled.empty()) throw ConfigError("no omics modality enabled");
  if (train_cells.empty()) throw ConfigError("feature fitting needs at least one training cell line");
  FoldFeatures f;
  for (Modality m : kAllModalities) {
    if (!enabled.count(m)) continue;
    const ModalityBlock* b = ds.block(m);
    if (!b) throw ConfigError("modality " + std::string(to_string(m)) + " is enabled but absent from the dataset");
    if (b->features.empty()) throw DataError("modality " + std::string(to_string(m)) + " has no features left");
    Matrix values = b->values;
    if (m == Modality::kGE || m == Modality::kPROT || m == Modality::kMETH) {
      const std::vector<double> mean = column_means(values, train_cells);
      for (std::size_t r = 0; r < values.rows; ++r)
        for (std::size_t c = 0; c < values.cols; ++c)
          if (std::isnan(values(r, c))) values(r, c) = mean[c];
    }
    if (m == Modality::kGE || m == Modality::kPROT) {
      Matrix train(train_cells.size(), values.cols);
      for (std::size_t i = 0; i < train_cells.size(); ++i)
        std::copy_n(values.row(train_cells[i]).begin(), values.cols, train.row(i).begin());
      values = MinMaxScaler::fit(train).transform(values);
    }
    f.order.push_back(m);
    f.dims.push_back(values.cols);
    f.blocks.push_back(std::move(values));
  }
  return f;
}

std::vector<FeatureGroup> gene_groups(const Dataset& ds, const FoldFeatures& features) {
  std::map<std::string, std::vector<std::size_t>> groups;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < features.order.size(); ++i) {
    const Modality m = features.order[i];
    if (m == Modality::kGE || m == Modality::kMUT || m == Modality::kCNV) {
      const ModalityBlock* b = ds.block(m);
      for (std::size_t c = 0; c < b->features.size(); ++c) groups[b->features[c]].push_back(offset + c);
    }
    offset += features.dims[i];
  }
  std::vector<FeatureGroup> out;
  for (auto& [gene, cols] : groups) out.push_back({gene, std::move(cols)});
  return out;
}

}  // namespace deepdtf::omics
