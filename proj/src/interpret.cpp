#include "deepdtf/interpret.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "deepdtf/error.hpp"
#include "deepdtf/parallel.hpp"
#include "deepdtf/random.hpp"

namespace deepdtf::interpret {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

// Input layout shared by both estimators: which columns each group owns.
struct Layout {
  std::size_t dim = 0;
  std::vector<std::vector<std::size_t>> columns;
};

Layout check_inputs(std::span<const double> sample, std::span<const std::vector<double>> background,
                    std::span<const omics::FeatureGroup> groups) {
  if (background.empty()) throw ConfigError("shapley: background is empty");
  if (groups.empty()) throw ConfigError("shapley: no feature groups");
  Layout l{sample.size(), {}};
  for (const auto& b : background)
    if (b.size() != sample.size())
      throw DimensionError("shapley: background row has " + std::to_string(b.size()) + " features, sample has " +
                           std::to_string(sample.size()));
  std::vector<bool> owned(sample.size(), false);
  for (const auto& g : groups) {
    for (std::size_t c : g.columns) {
      if (c >= sample.size()) throw DimensionError("shapley: group " + g.gene + " column out of range");
      if (owned[c]) throw DataError("shapley: column " + std::to_string(c) + " belongs to two groups");
      owned[c] = true;
    }
    l.columns.push_back(g.columns);
  }
  return l;
}

// Background row with the sample's values in non-group columns.
std::vector<double> reference(const Layout& l, std::span<const double> sample, std::span<const double> bg) {
  std::vector<double> z(sample.begin(), sample.end());
  for (const auto& cols : l.columns)
    for (std::size_t c : cols) z[c] = bg[c];
  return z;
}

void take_group(const Layout& l, std::size_t g, std::span<const double> from, std::vector<double>& z) {
  for (std::size_t c : l.columns[g]) z[c] = from[c];
}

}  // namespace

nlohmann::json Attribution::to_json() const {
  return {{"sample", sample_id},   {"estimator", estimator}, {"phi0", phi0},
          {"phi", phi},            {"fx", fx},               {"background_size", background_size},
          {"n_permutations", n_permutations}, {"seed", seed}, {"residual", residual}};
}

Attribution exact_shapley(const ValueFn& f, std::span<const double> sample,
                          std::span<const std::vector<double>> background,
                          std::span<const omics::FeatureGroup> groups, std::size_t workers) {
  if (groups.size() > kMaxExactGroups)
    throw CapacityError("exact_shapley: " + std::to_string(groups.size()) + " groups exceed the limit of " +
                        std::to_string(kMaxExactGroups) + "; use sampled_shapley");
  const Layout l = check_inputs(sample, background, groups);
  const std::size_t n = groups.size();
  const std::size_t n_masks = std::size_t{1} << n;

  std::vector<std::vector<double>> refs;
  for (const auto& b : background) refs.push_back(reference(l, sample, b));

  std::vector<double> v(n_masks);
  constexpr std::size_t kChunk = 256;
  parallel_for((n_masks + kChunk - 1) / kChunk, workers, [&](std::size_t chunk) {
    const std::size_t end = std::min(n_masks, (chunk + 1) * kChunk);
    for (std::size_t mask = chunk * kChunk; mask < end; ++mask) {
      double total = 0.0;
      for (const auto& r : refs) {
        std::vector<double> z = r;
        for (std::size_t g = 0; g < n; ++g)
          if (mask >> g & 1U) take_group(l, g, sample, z);
        total += f(z);
      }
      v[mask] = total / static_cast<double>(refs.size());
    }
  });

  // w(s) = s! (n - s - 1)! / n! = 1 / (n * C(n - 1, s))
  std::vector<double> w(n);
  double binom = 1.0;
  for (std::size_t s = 0; s < n; ++s) {
    w[s] = 1.0 / (static_cast<double>(n) * binom);
    binom = binom * static_cast<double>(n - 1 - s) / static_cast<double>(s + 1);
  }

  Attribution a;
  a.estimator = "exact";
  a.background_size = background.size();
  a.phi.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double phi = 0.0;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      phi += w[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
    }
    a.phi[j] = phi;
  }
  a.phi0 = v[0];
  a.fx = v[n_masks - 1];
  return a;
}

Attribution sampled_shapley(const ValueFn& f, std::span<const double> sample,
                            std::span<const std::vector<double>> background,
                            std::span<const omics::FeatureGroup> groups, std::size_t n_permutations,
                            std::uint64_t seed, std::size_t workers) {
  if (n_permutations == 0) throw ConfigError("sampled_shapley: n_permutations must be positive");
  const Layout l = check_inputs(sample, background, groups);
  const std::size_t n = groups.size();

  std::vector<std::vector<double>> refs;
  for (const auto& b : background) refs.push_back(reference(l, sample, b));
  std::vector<double> ref_value(refs.size());
  parallel_for(refs.size(), workers, [&](std::size_t b) { ref_value[b] = f(refs[b]); });

  // Fixed-size blocks keep the summation order independent of `workers`.
  constexpr std::size_t kBlock = 32;
  const std::size_t n_blocks = (n_permutations + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> partial(n_blocks, std::vector<double>(n, 0.0));
  parallel_for(n_blocks, workers, [&](std::size_t block) {
    std::vector<std::size_t> order(n);
    const std::size_t end = std::min(n_permutations, (block + 1) * kBlock);
    for (std::size_t k = block * kBlock; k < end; ++k) {
      std::mt19937_64 rng(derive_seed(seed, k));
      const std::size_t b = uniform_index(rng, refs.size());
      std::iota(order.begin(), order.end(), 0);
      shuffle(std::span<std::size_t>(order), rng);
      std::vector<double> z = refs[b];
      double prev = ref_value[b];
      for (std::size_t g : order) {
        take_group(l, g, sample, z);
        const double cur = f(z);
        partial[block][g] += cur - prev;
        prev = cur;
      }
    }
  });

  Attribution a;
  a.estimator = "sampled";
  a.background_size = background.size();
  a.n_permutations = n_permutations;
  a.seed = seed;
  a.phi.assign(n, 0.0);
  for (const auto& p : partial)
    for (std::size_t g = 0; g < n; ++g) a.phi[g] += p[g];
  for (double& p : a.phi) p /= static_cast<double>(n_permutations);
  a.phi0 = std::accumulate(ref_value.begin(), ref_value.end(), 0.0) / static_cast<double>(ref_value.size());
  a.fx = f(std::vector<double>(sample.begin(), sample.end()));

  a.residual = a.fx - a.phi0 - std::accumulate(a.phi.begin(), a.phi.end(), 0.0);
  double mass = 0.0;
  for (double p : a.phi) mass += std::abs(p);
  for (double& p : a.phi)
    p += mass > 0.0 ? a.residual * std::abs(p) / mass : a.residual / static_cast<double>(n);
  return a;
}

GeneRanking aggregate_signed(std::span<const Attribution> attributions, std::span<const std::string> group_names,
                             const std::map<std::string, std::string>& gene_map) {
  if (attributions.empty()) throw ConfigError("aggregate_signed: no attributions");
  std::vector<std::string> gene_of(group_names.size());
  std::vector<std::string> unmapped;
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    if (gene_map.empty()) {
      gene_of[g] = group_names[g];
      continue;
    }
    auto it = gene_map.find(group_names[g]);
    if (it == gene_map.end()) unmapped.push_back(group_names[g]);
    else gene_of[g] = it->second;
  }
  if (!unmapped.empty()) {
    std::string list;
    for (const auto& u : unmapped) list += (list.empty() ? "" : ", ") + u;
    throw DataError("aggregate_signed: unmapped groups: " + list);
  }
  std::map<std::string, double> total;
  for (const auto& gene : gene_of) total[gene] = 0.0;
  for (const Attribution& a : attributions) {
    if (a.phi.size() != group_names.size())
      throw DimensionError("aggregate_signed: attribution for " + a.sample_id + " has " +
                           std::to_string(a.phi.size()) + " groups, expected " + std::to_string(group_names.size()));
    for (std::size_t g = 0; g < a.phi.size(); ++g) total[gene_of[g]] += a.phi[g];
  }
  GeneRanking out;
  for (const auto& [gene, sum] : total) out.push_back({gene, sum / static_cast<double>(attributions.size())});
  std::stable_sort(out.begin(), out.end(), [](const RankedGene& a, const RankedGene& b) {
    return a.score != b.score ? a.score > b.score : a.gene < b.gene;
  });
  return out;
}

std::vector<GeneSet> parse_gmt(std::string_view text, const std::string& source) {
  std::vector<GeneSet> out;
  std::set<std::string> names;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (eol == text.size()) break;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() < 2) throw DataError(where + ": expected name, description and genes separated by tabs");
    if (fields[0].empty()) throw DataError(where + ": empty gene set name");
    if (!names.insert(fields[0]).second) throw DataError(where + ": duplicate gene set " + fields[0]);
    GeneSet s{fields[0], fields[1], {}};
    std::set<std::string> seen;
    for (std::size_t i = 2; i < fields.size(); ++i)
      if (!fields[i].empty() && seen.insert(fields[i]).second) s.genes.push_back(fields[i]);
    out.push_back(std::move(s));
    if (eol == text.size()) break;
  }
  return out;
}

std::vector<GeneSet> read_gmt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read gene sets " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_gmt(buf.str(), path.string());
}

std::string GseaResult::direction() const {
  return es > 0.0 ? "sensitivity" : es < 0.0 ? "resistance" : "none";
}

nlohmann::json GseaResult::to_json() const {
  return {{"name", name},       {"size", size},           {"es", es},   {"nes", number_or_null(nes)},
          {"p_value", p_value}, {"direction", direction()}, {"hits", hits}};
}

nlohmann::json GseaReport::to_json() const {
  nlohmann::json r = nlohmann::json::array(), s = nlohmann::json::array();
  for (const auto& x : results) r.push_back(x.to_json());
  for (const auto& x : skipped) s.push_back({{"name", x.name}, {"reason", x.reason}});
  return {{"results", r}, {"skipped", s}};
}

double enrichment_score(std::span<const double> scores, std::span<const std::uint8_t> in_set, double p,
                        std::vector<double>* running) {
  if (scores.size() != in_set.size()) throw DimensionError("enrichment_score: scores and membership differ in length");
  const std::size_t n = scores.size();
  std::size_t n_hit = 0;
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (in_set[i]) {
      ++n_hit;
      norm += std::pow(std::abs(scores[i]), p);
    }
  if (n_hit == 0 || n_hit == n) throw ContractError("enrichment_score: needs 0 < hits < N");
  const bool equal = !(norm > 0.0);
  if (equal) norm = static_cast<double>(n_hit);
  const double n_miss = static_cast<double>(n - n_hit);

  if (running) running->assign(n, 0.0);
  double hit_sum = 0.0;
  std::size_t misses = 0;
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_set[i]) hit_sum += equal ? 1.0 : std::pow(std::abs(scores[i]), p);
    else ++misses;
    const double value = hit_sum / norm - static_cast<double>(misses) / n_miss;
    if (running) (*running)[i] = value;
    if (std::abs(value) > std::abs(best) || (std::abs(value) == std::abs(best) && value > best)) best = value;
  }
  return best;
}

GseaReport gsea_preranked(const GeneRanking& ranking, std::span<const GeneSet> sets, const GseaOptions& opt) {
  if (opt.n_permutations == 0) throw ConfigError("gsea: n_permutations must be positive");
  if (!(opt.weight_exponent >= 0.0)) throw ConfigError("gsea: weight exponent must be non-negative");
  std::map<std::string, std::size_t> position;
  std::vector<double> scores;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (!position.emplace(ranking[i].gene, i).second) throw DataError("gsea: gene " + ranking[i].gene + " ranked twice");
    if (i > 0 && ranking[i].score > ranking[i - 1].score) throw DataError("gsea: ranking is not sorted by descending score");
    scores.push_back(ranking[i].score);
  }
  const std::size_t n = ranking.size();

  GseaReport report;
  std::vector<std::size_t> kept;
  std::vector<std::vector<std::size_t>> hits_of;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    std::vector<std::size_t> hits;
    for (const auto& g : sets[s].genes) {
      auto it = position.find(g);
      if (it != position.end()) hits.push_back(it->second);
    }
    std::sort(hits.begin(), hits.end());
    if (hits.empty()) report.skipped.push_back({sets[s].name, "no genes shared with the ranking"});
    else if (hits.size() < opt.min_size)
      report.skipped.push_back({sets[s].name, std::to_string(hits.size()) + " shared genes, fewer than min_size " +
                                                  std::to_string(opt.min_size)});
    else if (hits.size() == n) report.skipped.push_back({sets[s].name, "gene set covers the whole ranking"});
    else {
      kept.push_back(s);
      hits_of.push_back(std::move(hits));
    }
  }

  report.results.resize(kept.size());
  parallel_for(kept.size(), opt.workers, [&](std::size_t k) {
    const GeneSet& set = sets[kept[k]];
    const auto& hits = hits_of[k];
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t h : hits) mask[h] = 1;
    GseaResult r;
    r.name = set.name;
    r.size = hits.size();
    r.hits = hits;
    r.es = enrichment_score(scores, mask, opt.weight_exponent);

    std::mt19937_64 rng(derive_seed(opt.seed, kept[k]));
    std::vector<std::size_t> idx(n);
    std::size_t extreme = 0, same_sign = 0;
    double same_sign_sum = 0.0;
    for (std::size_t perm = 0; perm < opt.n_permutations; ++perm) {
      std::iota(idx.begin(), idx.end(), 0);
      std::fill(mask.begin(), mask.end(), 0);
      for (std::size_t i = 0; i < hits.size(); ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(idx[i], idx[j]);
        mask[idx[i]] = 1;
      }
      const double null_es = enrichment_score(scores, mask, opt.weight_exponent);
      if (std::abs(null_es) >= std::abs(r.es)) ++extreme;
      if ((r.es > 0.0 && null_es > 0.0) || (r.es < 0.0 && null_es < 0.0)) {
        ++same_sign;
        same_sign_sum += std::abs(null_es);
      }
    }
    r.p_value = static_cast<double>(1 + extreme) / static_cast<double>(opt.n_permutations + 1);
    if (r.es == 0.0) r.nes = 0.0;
    else r.nes = same_sign > 0 ? r.es / (same_sign_sum / static_cast<double>(same_sign)) : kNaN;
    report.results[k] = std::move(r);
  });
  return report;
}

void ExplainConfig::validate() const {
  if (estimator != "auto" && estimator != "exact" && estimator != "sampled")
    throw ConfigError("estimator must be auto, exact or sampled");
  if (exact_max_groups > kMaxExactGroups)
    throw ConfigError("exact_max_groups cannot exceed " + std::to_string(kMaxExactGroups));
  if (n_permutations == 0) throw ConfigError("shap_permutations must be positive");
  if (background_size == 0) throw ConfigError("background_size must be positive");
  if (samples_per_cell == 0) throw ConfigError("samples_per_cell must be positive");
  if (gsea.n_permutations == 0) throw ConfigError("gsea_permutations must be positive");
  if (!(gsea.weight_exponent >= 0.0)) throw ConfigError("gsea_weight must be non-negative");
}

nlohmann::json ExplainConfig::to_json() const {
  return {{"target", target == Target::kSensitivity ? "sensitivity" : "response"},
          {"estimator", estimator},
          {"exact_max_groups", exact_max_groups},
          {"shap_permutations", n_permutations},
          {"background_size", background_size},
          {"samples_per_cell", samples_per_cell},
          {"cancer_type", cancer_type ? nlohmann::json(*cancer_type) : nlohmann::json(nullptr)},
          {"drugs", drugs},
          {"top_m", top_m},
          {"gsea_weight", gsea.weight_exponent},
          {"gsea_permutations", gsea.n_permutations},
          {"gsea_min_size", gsea.min_size},
          {"seed", seed}};
}

ValueFn model_value_fn(const model::DeepDTF& m, const chem::DrugGraph& drug, Target target) {
  ad::NoGradGuard no_grad;
  const model::Context ctx;
  const ad::Tensor hd = m.drug_transformer(m.gnn_encode(drug), ctx);
  return [&m, hd, target](std::span<const double> x) {
    ad::NoGradGuard guard;
    const model::Context c;
    const ad::Tensor hc = m.omics_transformer(m.encode_omics(x, c), c);
    const auto [y, p] = m.heads(m.fuse(hc, hd, c));
    return target == Target::kSensitivity ? p.item() : y.item();
  };
}

nlohmann::json ExplainReport::to_json() const {
  nlohmann::json attrs = nlohmann::json::array();
  for (std::size_t i = 0; i < attributions.size(); ++i) {
    nlohmann::json a = attributions[i].to_json();
    a["cell"] = contexts[i].first;
    a["drug"] = contexts[i].second;
    attrs.push_back(a);
  }
  nlohmann::json rank = nlohmann::json::array(), pos = nlohmann::json::array(), neg = nlohmann::json::array();
  for (const auto& g : ranking) rank.push_back({{"gene", g.gene}, {"score", g.score}});
  for (const auto& g : ranking)
    if (g.score > 0.0 && pos.size() < top_m) pos.push_back({{"gene", g.gene}, {"score", g.score}});
  for (auto it = ranking.rbegin(); it != ranking.rend(); ++it)
    if (it->score < 0.0 && neg.size() < top_m) neg.push_back({{"gene", it->gene}, {"score", it->score}});
  nlohmann::json up = nlohmann::json::array(), down = nlohmann::json::array();
  for (const auto& r : gsea.results) (r.es > 0.0 ? up : down).push_back(r.to_json());
  return {{"groups", group_names},
          {"attributions", attrs},
          {"ranking", rank},
          {"top_positive", pos},
          {"top_negative", neg},
          {"gsea", gsea.to_json()},
          {"enriched_sensitivity", up},
          {"enriched_resistance", down}};
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

}  // namespace

void ExplainReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const nlohmann::json j = to_json();
  write_file(dir / "report.json", j.dump(2) + "\n");
  for (const auto& [file, key] : {std::pair{"genes_positive.csv", "top_positive"}, std::pair{"genes_negative.csv", "top_negative"}}) {
    std::string text = "gene,score\n";
    for (const auto& g : j.at(key)) text += g.at("gene").get<std::string>() + "," + fmt(g.at("score").get<double>()) + "\n";
    write_file(dir / file, text);
  }
  std::string path_csv = "pathway,ES,NES,p,direction,size\n";
  for (const auto& r : gsea.results)
    path_csv += r.name + "," + fmt(r.es) + "," + fmt(r.nes) + "," + fmt(r.p_value) + "," + r.direction() + "," +
                std::to_string(r.size) + "\n";
  write_file(dir / "pathways.csv", path_csv);
  std::string attr_csv = "cell,drug,phi0,fx";
  for (const auto& g : group_names) attr_csv += "," + g;
  attr_csv += "\n";
  for (std::size_t i = 0; i < attributions.size(); ++i) {
    attr_csv += contexts[i].first + "," + contexts[i].second + "," + fmt(attributions[i].phi0) + "," +
                fmt(attributions[i].fx);
    for (double p : attributions[i].phi) attr_csv += "," + fmt(p);
    attr_csv += "\n";
  }
  write_file(dir / "attributions.csv", attr_csv);
}

ExplainReport explain_report(const model::DeepDTF& m, const omics::Dataset& ds, const train::FoldInputs& inputs,
                             std::span<const std::size_t> explain_cells,
                             std::span<const std::size_t> background_cells, std::span<const GeneSet> gene_sets,
                             const ExplainConfig& cfg) {
  cfg.validate();
  const std::vector<omics::FeatureGroup> groups = omics::gene_groups(ds, inputs.features);
  if (groups.empty()) throw DataError("explain: no gene-level features (GE, MUT or CNV) are enabled");

  std::vector<std::size_t> drug_rows;
  if (cfg.drugs.empty()) {
    for (std::size_t d = 0; d < ds.drugs.size(); ++d) drug_rows.push_back(d);
  } else {
    for (const auto& id : cfg.drugs) {
      const auto d = ds.drug_index(id);
      if (!d) throw DataError("explain: unknown drug " + id);
      drug_rows.push_back(*d);
    }
  }

  std::map<std::string, std::vector<std::size_t>> by_type;
  for (std::size_t c : explain_cells) {
    const auto& type = ds.cells.at(c).cancer_type;
    if (!cfg.cancer_type || *cfg.cancer_type == type) by_type[type].push_back(c);
  }
  if (by_type.empty()) throw DataError("explain: no cell lines match the requested cancer type");

  const std::vector<std::size_t> bg_rows = train::stratified_sample(ds, background_cells, cfg.background_size,
                                                                    derive_seed(cfg.seed, 1));
  if (bg_rows.empty()) throw DataError("explain: empty background");
  std::vector<std::vector<double>> background;
  for (std::size_t c : bg_rows) background.push_back(inputs.cell_x.at(c));

  ExplainReport report;
  report.top_m = cfg.top_m;
  for (const auto& g : groups) report.group_names.push_back(g.gene);
  const bool exact = cfg.estimator == "exact" || (cfg.estimator == "auto" && groups.size() <= cfg.exact_max_groups);

  std::uint64_t context = 0;
  for (const auto& [type, cells] : by_type) {
    const std::vector<std::size_t> chosen =
        train::stratified_sample(ds, cells, cfg.samples_per_cell, derive_seed(cfg.seed, 2));
    for (std::size_t d : drug_rows) {
      const ValueFn f = model_value_fn(m, ds.drugs[d].graph, cfg.target);
      for (std::size_t c : chosen) {
        Attribution a = exact ? exact_shapley(f, inputs.cell_x[c], background, groups, cfg.workers)
                              : sampled_shapley(f, inputs.cell_x[c], background, groups, cfg.n_permutations,
                                                derive_seed(cfg.seed, 100 + context), cfg.workers);
        a.sample_id = ds.cells[c].id + "|" + ds.drugs[d].id;
        report.attributions.push_back(std::move(a));
        report.contexts.emplace_back(ds.cells[c].id, ds.drugs[d].id);
        ++context;
      }
    }
  }
  report.ranking = aggregate_signed(report.attributions, report.group_names);
  GseaOptions gopt = cfg.gsea;
  gopt.workers = cfg.workers;
  report.gsea = gsea_preranked(report.ranking, gene_sets, gopt);
  return report;
}

}  // namespace deepdtf::interpret
