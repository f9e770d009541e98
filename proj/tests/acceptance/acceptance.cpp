// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exits non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "deepdtf/error.hpp"
#include "deepdtf/interpret.hpp"
#include "deepdtf/model.hpp"
#include "deepdtf/omics.hpp"
#include "deepdtf/smiles.hpp"
#include "deepdtf/synthetic.hpp"
#include "deepdtf/train.hpp"
#include "gradcheck.hpp"

using namespace deepdtf;
using ad::Shape;
using ad::Tensor;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

// Collects failures; the first few are reported.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) failed_ += (failed_.empty() ? "" : "; ") + what;
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_ == 0) return {Status::kPass, summary};
    return {Status::kFail, std::to_string(failures_) + " check(s) failed: " + failed_ + " | " + summary};
  }

 private:
  std::size_t failures_ = 0;
  std::string failed_;
};

template <typename F>
bool throws_undefined(F&& f) {
  try {
    f();
  } catch (const UndefinedMetricError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

model::ModelConfig small_model(std::size_t d) {
  model::ModelConfig c;
  c.d = d;
  c.tokens_per_modality = 2;
  c.conv_channels = 2;
  c.omics = {1, 2};
  c.drug = {1, 2};
  c.fusion = {1, 2};
  c.gnn_layers = 2;
  c.head_hidden = d;
  c.dropout = 0.0;
  return c;
}

// 1. Finite-difference gradient checks.
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  using Builder = std::function<Tensor(const std::vector<Tensor>&)>;
  struct Case {
    std::vector<Shape> shapes;
    Builder f;
    double lo = -1.0, hi = 1.0;
  };
  const std::vector<std::size_t> gidx{1, 0, 1, 2}, sidx{0, 2, 2, 1};
  const std::vector<std::uint8_t> kv{1, 0, 1, 1}, qv{1, 1, 0};
  const std::map<std::string, Case> cases = {
      {"matmul", {{{3, 4}, {4, 2}}, [](auto& t) { return ad::matmul(t[0], t[1]); }}},
      {"transpose", {{{3, 2}}, [](auto& t) { return ad::transpose(t[0]); }}},
      {"reshape", {{{3, 2}}, [](auto& t) { return ad::reshape(t[0], {2, 3}); }}},
      {"add", {{{2, 3}, {2, 3}}, [](auto& t) { return ad::add(t[0], t[1]); }}},
      {"sub", {{{2, 3}, {2, 3}}, [](auto& t) { return ad::sub(t[0], t[1]); }}},
      {"mul", {{{2, 3}, {2, 3}}, [](auto& t) { return ad::mul(t[0], t[1]); }}},
      {"add_row", {{{2, 3}, {3}}, [](auto& t) { return ad::add_row(t[0], t[1]); }}},
      {"add_col", {{{2, 3}, {2}}, [](auto& t) { return ad::add_col(t[0], t[1]); }}},
      {"mul_col", {{{2, 3}, {2}}, [](auto& t) { return ad::mul_col(t[0], t[1]); }}},
      {"affine", {{{4}}, [](auto& t) { return ad::affine(t[0], -2.5, 0.3); }}},
      {"relu", {{{6}}, [](auto& t) { return ad::relu(t[0]); }}},
      {"gelu", {{{6}}, [](auto& t) { return ad::gelu(t[0]); }, -3, 3}},
      {"sigmoid", {{{6}}, [](auto& t) { return ad::sigmoid(t[0]); }, -4, 4}},
      {"tanh", {{{6}}, [](auto& t) { return ad::tanh(t[0]); }}},
      {"log", {{{6}}, [](auto& t) { return ad::log(t[0]); }, 0.2, 3}},
      {"exp", {{{6}}, [](auto& t) { return ad::exp(t[0]); }}},
      {"square", {{{6}}, [](auto& t) { return ad::square(t[0]); }}},
      {"pow", {{{6}}, [](auto& t) { return ad::pow(t[0], 0.7); }, 0.1, 1}},
      {"clamp", {{{6}}, [](auto& t) { return ad::clamp(t[0], -0.5, 0.5); }}},
      {"sum", {{{2, 3}}, [](auto& t) { return ad::sum(t[0]); }}},
      {"mean", {{{2, 3}}, [](auto& t) { return ad::mean(t[0]); }}},
      {"sum_axis", {{{2, 3}}, [](auto& t) { return ad::sum(t[0], 0); }}},
      {"mean_axis", {{{2, 3}}, [](auto& t) { return ad::mean(t[0], 1); }}},
      {"max_axis", {{{3, 4}}, [](auto& t) { return ad::max(t[0], 1); }}},
      {"softmax", {{{3, 4}}, [](auto& t) { return ad::softmax(t[0], 1); }}},
      {"masked_softmax", {{{3, 4}}, [&](auto& t) { return ad::masked_softmax_rows(t[0], kv, qv); }}},
      {"layernorm", {{{3, 5}, {5}, {5}}, [](auto& t) { return ad::layernorm(t[0], t[1], t[2], 1e-5); }}},
      {"conv1d", {{{2, 8}, {3, 2, 3}, {3}}, [](auto& t) { return ad::conv1d(t[0], t[1], t[2], 1, 1); }}},
      {"adaptive_pool", {{{2, 7}}, [](auto& t) { return ad::adaptive_avg_pool1d(t[0], 3); }}},
      {"concat", {{{2, 3}, {2, 1}}, [](auto& t) { return ad::concat({t[0], t[1]}, 1); }}},
      {"slice", {{{4, 3}}, [](auto& t) { return ad::slice(t[0], 0, 1, 3); }}},
      {"gather_rows", {{{3, 2}}, [&](auto& t) { return ad::gather_rows(t[0], gidx); }}},
      {"scatter_add", {{{4, 2}}, [&](auto& t) { return ad::scatter_add_rows(t[0], sidx, 3); }}},
  };
  Checker c;
  std::mt19937_64 rng(2024);
  double worst_op = 0.0;
  for (const auto& [name, cs] : cases) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Tensor> leaves;
      for (const auto& s : cs.shapes) leaves.push_back(testing::random_tensor(s, rng, cs.lo, cs.hi));
      const auto r = testing::grad_check([&] { return testing::probe(cs.f(leaves), 100 + trial); }, leaves);
      worst_op = std::max(worst_op, r.max_rel_error);
      c.expect(r.max_rel_error < 1e-4, name + " rel err " + sci(r.max_rel_error));
    }
  }

  model::ModelConfig mc = small_model(8);
  mc.modality_dims = {12, 5};
  mc.head_hidden = 8;
  mc.gnn_layers = 1;
  model::DeepDTF m(mc, 21);
  std::mt19937_64 r2(22);
  std::vector<std::vector<double>> cells(2, std::vector<double>(17));
  for (auto& v : cells)
    for (double& x : v) x = 2.0 * ad::uniform01(r2) - 1.0;
  const std::vector<chem::DrugGraph> drugs{chem::parse_smiles("CC(=O)O"), chem::parse_smiles("c1ccncc1N")};
  const std::vector<model::PairRef> pairs{{0, 0}, {1, 1}};
  const std::vector<double> y{-2.5, 1.1}, t{1.0, 0.0};
  const auto decayed = m.params().decayed();
  const auto r = testing::grad_check(
      [&] {
        const auto out = m.forward(cells, drugs, pairs, model::Context{});
        return model::total_loss(out.y_hat, y, out.p_hat, t, decayed, 1.0, 1.0, 1e-3, 2.0).total;
      },
      m.params().all());
  c.expect(r.max_rel_error < 1e-4, "full model rel err " + sci(r.max_rel_error));
  const double secs = seconds_since(t0);
  c.expect(secs < 120.0, "runtime " + sci(secs) + " s");
  return c.outcome(std::to_string(cases.size()) + " ops worst " + sci(worst_op) + "; full model (d=8, " +
                   std::to_string(m.params().numel()) + " params, 2 samples) " + sci(r.max_rel_error) + "; " +
                   sci(secs) + " s");
}

// 2. Focal and total loss against hand evaluation.
Outcome losses() {
  Checker c;
  const std::vector<double> one{1.0};
  const double bce = model::focal_loss(Tensor({1}, {0.5}), one, 0.0).item();
  c.expect(std::abs(bce - std::log(2.0)) < 1e-12, "gamma 0 at p 0.5 gives " + sci(bce));
  const double f2 = model::focal_loss(Tensor({1}, {0.9}), one, 2.0).item();
  c.expect(std::abs(f2 - 0.0010536) < 1e-6, "gamma 2 at p 0.9 gives " + sci(f2));

  const Tensor y_hat({3}, {0.5, -1.0, 2.0}), p_hat({3}, {0.2, 0.7, 0.9});
  const std::vector<double> y{0.0, 0.0, 1.0}, t{0.0, 1.0, 1.0};
  const std::vector<Tensor> params{Tensor({2}, {0.3, -0.4}, true), Tensor({1, 2}, {1.5, 0.25}, true)};
  const double alpha = 0.7, beta = 1.9, lambda = 0.01, gamma = 2.0;
  const auto lt = model::total_loss(y_hat, y, p_hat, t, params, alpha, beta, lambda, gamma);
  const double mse = (0.25 + 1.0 + 1.0) / 3.0;
  double fl = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double p = p_hat.at(i);
    fl += t[i] * std::pow(1 - p, gamma) * std::log(p) + (1 - t[i]) * std::pow(p, gamma) * std::log(1 - p);
  }
  fl = -fl / 3.0;
  const double l2 = 0.09 + 0.16 + 2.25 + 0.0625;
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-15 * std::max(1.0, std::abs(b)); };
  c.expect(close(lt.mse, mse), "mse term");
  c.expect(std::abs(lt.focal - fl) <= 1e-14 * std::abs(fl), "focal term");
  c.expect(close(lt.l2, l2), "l2 term");
  c.expect(lt.total.item() == alpha * lt.mse + beta * lt.focal + lambda * lt.l2, "composition");
  return c.outcome("BCE " + sci(bce) + ", focal(0.9) " + std::to_string(f2) + ", composition exact");
}

// 3. Metric oracles.
Outcome metrics() {
  Checker c;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + trial;
    std::vector<double> a(n), b(n), p(n);
    std::vector<int> lab(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = nd(rng);
      b[i] = a[i] + 0.5 * nd(rng);
      p[i] = trial % 2 ? std::round(4 * ad::uniform01(rng)) / 4 : ad::uniform01(rng);
      lab[i] = static_cast<int>(i % 3 == 0);
    }
    long double s = 0, mu = 0, tot = 0, sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (double v : b) mu += v;
    mu /= n;
    for (std::size_t i = 0; i < n; ++i) {
      s += (long double)(a[i] - b[i]) * (a[i] - b[i]);
      tot += (b[i] - mu) * (b[i] - mu);
      sa += a[i];
      sb += b[i];
      sab += (long double)a[i] * b[i];
      saa += (long double)a[i] * a[i];
      sbb += (long double)b[i] * b[i];
    }
    const double rmse = std::sqrt((double)(s / n));
    const double r2 = (double)(1 - s / tot);
    const double pcc = (double)((n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb)));
    for (auto [got, want] : {std::pair{train::rmse(a, b), rmse}, std::pair{train::r2(a, b), r2},
                             std::pair{train::pcc(a, b), pcc}}) {
      worst = std::max(worst, std::abs(got - want));
      c.expect(std::abs(got - want) < 1e-12, "regression metric off by " + sci(std::abs(got - want)));
    }
    double u = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (lab[i] != 1) continue;
      pos += 1;
      for (std::size_t j = 0; j < n; ++j)
        if (lab[j] == 0) u += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
    }
    for (int v : lab) neg += v == 0;
    c.expect(train::auc(p, lab) == u / (pos * neg), "auc differs from pairwise count");
  }
  const std::vector<double> flat{1, 1, 1}, ramp{0, 1, 2};
  const std::vector<int> ones{1, 1, 1}, zeros{0, 0, 0};
  c.expect(throws_undefined([&] { train::r2(ramp, flat); }), "r2 on constant y");
  c.expect(throws_undefined([&] { train::pcc(flat, ramp); }), "pcc on constant vector");
  c.expect(throws_undefined([&] { train::auc(ramp, ones); }), "auc on one class");
  c.expect(throws_undefined([&] { train::sensitivity(ramp, zeros); }), "sen without positives");
  c.expect(throws_undefined([&] { train::specificity(ramp, ones); }), "spec without negatives");
  return c.outcome("100 instances; AUC exact; max regression deviation " + sci(worst) + "; degenerate inputs raise");
}

// 4. Overfit 64 synthetic pairs.
Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const omics::Dataset ds = synthetic::make_dataset({});
  train::Partition p;
  p.cold_start = false;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) p.train.push_back(i);
  p.test = p.train;
  for (std::size_t c = 0; c < ds.cells.size(); ++c) p.fit_cells.push_back(c);
  train::TrainConfig tc;
  tc.epochs = 2000;
  tc.max_steps = 2000;
  tc.batch_size = 64;
  tc.val_fraction = 0.0;
  tc.adam.weight_decay = 0.0;
  const auto run = train::train_partition(ds, p, small_model(16), tc, 7);
  const double secs = seconds_since(t0);
  Checker c;
  c.expect(ds.pairs.size() == 64, "dataset has " + std::to_string(ds.pairs.size()) + " pairs");
  c.expect(run.result.state.step <= 2000, "steps");
  c.expect(run.result.train.rmse < 0.1, "rmse " + sci(run.result.train.rmse));
  c.expect(run.result.train.acc == 1.0, "accuracy " + sci(run.result.train.acc));
  c.expect(secs < 300.0, "runtime");
  return c.outcome("rmse " + sci(run.result.train.rmse) + ", acc " + sci(run.result.train.acc) + " after " +
                   std::to_string(run.result.state.step) + " steps; " + sci(secs) + " s");
}

// 5. Cold-start audit over 100 seeds.
Outcome cold_start() {
  Checker c;
  std::size_t partitions = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    synthetic::Options o;
    o.n_cells = 30 + seed % 31;
    o.n_types = 1 + seed % 5;
    o.n_genes = 2;
    o.n_drugs = 2;
    o.margin = 0.01;
    o.seed = seed;
    const omics::Dataset ds = synthetic::make_dataset(o);
    const auto split = omics::make_folds(ds.cells, 5, seed);
    for (std::size_t f = 0; f < 5; ++f) {
      const auto part = train::cold_start_partition(ds, split, f, 0.1, seed);
      try {
        train::audit_partition(ds, part);
      } catch (const DataError& e) {
        c.expect(false, e.what());
      }
      auto cells_of = [&](const std::vector<std::size_t>& pairs) {
        std::set<std::string> s;
        for (std::size_t i : pairs) s.insert(ds.pairs[i].cell_id);
        return s;
      };
      const auto tr = cells_of(part.train), va = cells_of(part.val), te = cells_of(part.test);
      for (const auto& id : te) c.expect(!tr.count(id) && !va.count(id), "test cell " + id + " leaks");
      for (const auto& id : va) c.expect(!tr.count(id), "validation cell " + id + " leaks");
      for (std::size_t r : part.fit_cells) c.expect(!te.count(ds.cells[r].id), "fit cell leaks");
      ++partitions;
    }
    std::map<std::string, std::vector<int>> per_type;
    for (const auto& cell : ds.cells) {
      auto& v = per_type[cell.cancer_type];
      v.resize(5, 0);
      ++v[split.fold_of.at(cell.id)];
    }
    for (const auto& [type, counts] : per_type)
      c.expect(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1,
               "imbalance in " + type);
  }
  return c.outcome(std::to_string(partitions) + " fold partitions audited over 100 seeds; per-type imbalance <= 1");
}

// 6. Preprocessing boundaries.
Outcome preprocessing() {
  Checker c;
  const std::vector<std::pair<double, int>> labels{
      {-2.0, 0}, {std::nextafter(-2.0, -3.0), 1}, {-2.5, 1}, {-1.999, 0}, {3.0, 0}, {-10.0, 1}};
  for (auto [v, want] : labels) c.expect(omics::binarize_response(v) == want, "binarize " + sci(v));
  const std::vector<std::tuple<std::vector<double>, std::vector<double>, std::vector<double>>> asw{
      {{0.5}, {0.1}, {0.6}}, {{0.3, -1.2, 4.0}, {0, 0, 0}, {0.3, -1.2, 4.0}}, {{1.0, -0.2}, {-1.0, 0.2}, {0, 0}}};
  for (const auto& [prot, d, want] : asw) {
    const auto got = omics::asw_integrate(prot, d);
    for (std::size_t i = 0; i < got.size(); ++i) c.expect(std::abs(got[i] - want[i]) < 1e-15, "asw");
  }
  const std::vector<std::pair<omics::MethCluster, bool>> meth{
      {{0.5, 10, 1}, true}, {{0.5, 9.999, 1}, false}, {{0.5, 20, 2}, true}, {{0.5, 19, 2}, false}, {{0.5, 100, 5}, true}};
  std::size_t i = 0;
  for (const auto& [cl, keep] : meth) c.expect(omics::meth_cluster_passes(cl, i++) == keep, "methylation coverage");
  return c.outcome("binarization (-2.0 -> 0), ASW sums and coverage 10 -> kept all match");
}

// 7. SMILES parser against the reference featurization and fuzzing.
Outcome smiles() {
  Checker c;
  std::ifstream in(std::string(DEEPDTF_TEST_DATA) + "/smiles_golden.json");
  if (!in) return {Status::kFail, "golden file missing"};
  const auto golden = nlohmann::json::parse(in);
  std::size_t n = 0;
  for (const auto& m : golden.at("molecules")) {
    const std::string smi = m.at("smiles");
    const auto g = chem::parse_smiles(smi);
    ++n;
    bool ok = g.num_atoms() == m.at("nodes").size();
    for (std::size_t a = 0; ok && a < g.num_atoms(); ++a)
      ok = std::vector<int>(g.node_features[a].begin(), g.node_features[a].end()) ==
           m.at("nodes")[a].get<std::vector<int>>();
    std::vector<std::vector<int>> edges;
    for (std::size_t e = 0; e < g.edge_index.size(); ++e)
      edges.push_back({static_cast<int>(g.edge_index[e].first), static_cast<int>(g.edge_index[e].second),
                       g.edge_features[e][0], g.edge_features[e][1], g.edge_features[e][2]});
    std::sort(edges.begin(), edges.end());
    ok = ok && edges == m.at("edges").get<std::vector<std::vector<int>>>();
    c.expect(ok, "featurization of " + smi);
  }
  c.expect(n == 50, "corpus has " + std::to_string(n) + " molecules");

  const std::string alphabet = "CNOSPFIBrlcnosp()[]=#-:123456789%@H+-.*/\\$ 0aZ";
  std::mt19937_64 rng(99);
  std::size_t graphs = 0, errors = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    std::string s;
    const std::size_t len = ad::uniform01(rng) * 25;
    for (std::size_t k = 0; k < len; ++k)
      s += trial % 10 == 0 ? static_cast<char>(rng() & 0xFF) : alphabet[rng() % alphabet.size()];
    try {
      chem::validate_graph(chem::parse_smiles(s));
      ++graphs;
    } catch (const ParseError& e) {
      c.expect(e.offset() <= s.size(), "offset past end");
      ++errors;
    }
  }
  return c.outcome(std::to_string(n) + " molecules match; fuzz 100000 strings: " + std::to_string(graphs) +
                   " graphs, " + std::to_string(errors) + " positioned errors, no crash");
}

// Nonlinear toy model with pairwise interactions; features 0 and 1 enter
// symmetrically and the last feature is ignored.
interpret::ValueFn toy_model(std::size_t n) {
  return [n](std::span<const double> x) {
    double s = std::sin(x[0] + x[1]) + x[0] * x[1];
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double prev = i == 2 ? x[0] + x[1] : x[i - 1];
      s += 0.3 * i * x[i] + x[i] * prev - 0.5 * std::tanh(x[i] * x[i]);
    }
    return s;
  };
}

std::vector<omics::FeatureGroup> singletons(std::size_t n) {
  std::vector<omics::FeatureGroup> g;
  for (std::size_t i = 0; i < n; ++i) g.push_back({"F" + std::to_string(i), {i}});
  return g;
}

std::vector<std::vector<double>> random_rows(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> out(rows, std::vector<double>(dim));
  for (auto& r : out)
    for (double& v : r) v = u(rng);
  return out;
}

// Shapley values from every ordering, v(S) evaluated from its definition.
std::vector<double> ordering_oracle(const interpret::ValueFn& f, const std::vector<double>& x,
                                    const std::vector<std::vector<double>>& bg,
                                    const std::vector<omics::FeatureGroup>& groups) {
  const std::size_t n = groups.size();
  auto value = [&](const std::vector<bool>& in) {
    double s = 0;
    for (const auto& b : bg) {
      std::vector<double> z = x;
      for (std::size_t g = 0; g < n; ++g)
        if (!in[g])
          for (std::size_t c : groups[g].columns) z[c] = b[c];
      s += f(z);
    }
    return s / bg.size();
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(n, 0.0);
  double count = 0;
  do {
    std::vector<bool> in(n, false);
    double prev = value(in);
    for (std::size_t g : order) {
      in[g] = true;
      const double cur = value(in);
      phi[g] += cur - prev;
      prev = cur;
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= count;
  return phi;
}

// 8. Shapley axioms and sampled convergence.
Outcome shapley() {
  Checker c;
  std::mt19937_64 rng(5);
  double worst_axiom = 0.0;
  auto track = [&](double err, const std::string& what) {
    worst_axiom = std::max(worst_axiom, err);
    c.expect(err < 1e-9, what + " off by " + sci(err));
  };
  for (std::size_t n = 2; n <= 10; ++n) {
    const auto groups = singletons(n);
    const auto bg = random_rows(3, n, rng);
    const auto x = random_rows(1, n, rng)[0];
    const interpret::ValueFn f = toy_model(n);
    const auto a = interpret::exact_shapley(f, x, bg, groups);
    const std::string tag = " (n=" + std::to_string(n) + ")";
    track(std::abs(a.phi0 + std::accumulate(a.phi.begin(), a.phi.end(), 0.0) - f(x)), "efficiency" + tag);
    if (n > 2) track(std::abs(a.phi[n - 1]), "dummy" + tag);

    auto xs = x;
    xs[1] = xs[0];
    auto bgs = bg;
    for (auto& r : bgs) r[1] = r[0];
    const auto s = interpret::exact_shapley(f, xs, bgs, groups);
    track(std::abs(s.phi[0] - s.phi[1]), "symmetry" + tag);

    const interpret::ValueFn g = [](std::span<const double> z) { return std::exp(0.3 * z[0]) - z[z.size() - 1] * z[0]; };
    const interpret::ValueFn fg = [&](std::span<const double> z) { return 2.0 * f(z) + g(z); };
    const auto ag = interpret::exact_shapley(g, x, bg, groups);
    const auto afg = interpret::exact_shapley(fg, x, bg, groups);
    for (std::size_t i = 0; i < n; ++i) track(std::abs(afg.phi[i] - (2.0 * a.phi[i] + ag.phi[i])), "linearity" + tag);

    if (n <= 7) {
      const auto oracle = ordering_oracle(f, x, bg, groups);
      for (std::size_t i = 0; i < n; ++i) track(std::abs(a.phi[i] - oracle[i]), "ordering oracle" + tag);
    }
  }

  const std::size_t n = 8;
  const auto groups = singletons(n);
  std::mt19937_64 r8(9);
  const auto bg = random_rows(16, n, r8);
  const auto x = random_rows(1, n, r8)[0];
  const interpret::ValueFn f = toy_model(n);
  const auto exact = interpret::exact_shapley(f, x, bg, groups);
  const auto sampled = interpret::sampled_shapley(f, x, bg, groups, 2000, 3);
  double dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) dev = std::max(dev, std::abs(sampled.phi[i] - exact.phi[i]));
  c.expect(dev < 0.05, "sampled deviation " + sci(dev));
  return c.outcome("axioms on 2..10 features, worst " + sci(worst_axiom) + "; sampled (8 features, 2000 perms) max dev " +
                   sci(dev));
}

// Running sum evaluated from scratch at every position.
double oracle_es(const std::vector<double>& s, const std::vector<std::uint8_t>& in, double p) {
  const std::size_t n = s.size();
  double norm = 0;
  std::size_t nh = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (in[i]) {
      norm += std::pow(std::abs(s[i]), p);
      ++nh;
    }
  const bool equal = !(norm > 0);
  if (equal) norm = nh;
  double best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double hit = 0;
    std::size_t miss = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (in[j]) hit += equal ? 1.0 : std::pow(std::abs(s[j]), p);
      else ++miss;
    }
    const double v = hit / norm - static_cast<double>(miss) / static_cast<double>(n - nh);
    if (std::abs(v) > std::abs(best) || (std::abs(v) == std::abs(best) && v > best)) best = v;
  }
  return best;
}

// Kolmogorov survival function for the one-sample KS statistic.
double ks_p_value(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0;
  for (std::size_t i = 0; i < u.size(); ++i) d = std::max({d, (i + 1) / n - u[i], u[i] - i / n});
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double q = 0;
  for (int k = 1; k <= 100; ++k) q += 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

interpret::GeneRanking ranking_of(const std::vector<double>& scores) {
  interpret::GeneRanking r;
  for (std::size_t i = 0; i < scores.size(); ++i) r.push_back({"g" + std::to_string(i), scores[i]});
  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.gene < b.gene;
  });
  return r;
}

// 9. Enrichment oracle, null calibration and planted recovery.
Outcome gsea() {
  Checker c;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::size_t combos = 0;
  for (std::size_t n = 2; n <= 12; ++n) {
    std::vector<double> s(n);
    for (double& v : s) v = u(rng);
    if (n % 3 == 0) s[n / 2] = 0.0;
    if (n % 4 == 0) s[1] = s[0];
    std::sort(s.rbegin(), s.rend());
    for (double p : {0.0, 1.0, 1.5, 2.0})
      for (std::uint32_t mask = 1; mask + 1 < (1U << n); ++mask) {
        std::vector<std::uint8_t> in(n);
        for (std::size_t i = 0; i < n; ++i) in[i] = (mask >> i) & 1U;
        const double es = interpret::enrichment_score(s, in, p);
        c.expect(es == oracle_es(s, in, p), "ES differs from running-sum oracle");
        c.expect(std::abs(es) <= 1.0, "|ES| > 1");
        ++combos;
      }
  }

  std::mt19937_64 r2(31);
  std::normal_distribution<double> nd;
  std::vector<double> scores(60);
  for (double& v : scores) v = nd(r2);
  const auto ranking = ranking_of(scores);
  std::vector<interpret::GeneSet> sets;
  for (int k = 0; k < 1000; ++k) {
    std::vector<std::size_t> idx(ranking.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), r2);
    interpret::GeneSet g{"R" + std::to_string(k), "", {}};
    for (std::size_t i = 0; i < 12; ++i) g.genes.push_back(ranking[idx[i]].gene);
    sets.push_back(g);
  }
  interpret::GseaOptions opt;
  opt.n_permutations = 1000;
  opt.seed = 77;
  const auto rep = interpret::gsea_preranked(ranking, sets, opt);
  std::vector<double> pv;
  for (const auto& r : rep.results) {
    c.expect(std::abs(r.es) <= 1.0, "|ES| > 1 on a random set");
    pv.push_back(r.p_value);
  }
  c.expect(pv.size() == 1000, "random sets scored");
  const double ks = ks_p_value(pv);
  c.expect(ks > 0.01, "KS p " + sci(ks));

  synthetic::Options so;
  so.n_cells = 40;
  so.n_genes = 16;
  so.n_types = 2;
  so.n_drugs = 1;
  so.planted_genes = 5;
  so.response = synthetic::Response::kPlanted;
  so.seed = 3;
  const omics::Dataset ds = synthetic::make_dataset(so);
  train::Partition part;
  part.cold_start = false;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) part.train.push_back(i);
  part.test = part.train;
  for (std::size_t k = 0; k < ds.cells.size(); ++k) part.fit_cells.push_back(k);
  train::TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 20;
  tc.val_fraction = 0.0;
  const auto run = train::train_partition(ds, part, small_model(16), tc, 5);
  const auto in = train::make_inputs(ds, part.fit_cells, {});
  std::vector<std::size_t> all(ds.cells.size());
  std::iota(all.begin(), all.end(), 0);
  const auto gene_sets = interpret::parse_gmt(synthetic::to_gmt({{"PLANTED", {"G0", "G1", "G2", "G3", "G4"}},
                                                                 {"DECOY_A", {"G5", "G6", "G7", "G8", "G9"}},
                                                                 {"DECOY_B", {"G10", "G11", "G12", "G13", "G14"}}}));
  interpret::ExplainConfig ec;
  ec.cancer_type = "TYPE0";
  ec.samples_per_cell = 6;
  ec.background_size = 16;
  ec.n_permutations = 100;
  ec.gsea.n_permutations = 1000;
  ec.seed = 8;
  const auto report = interpret::explain_report(run.model, ds, in, all, all, gene_sets, ec);
  double es = 0.0, p = 1.0;
  for (const auto& r : report.gsea.results)
    if (r.name == "PLANTED") {
      es = r.es;
      p = r.p_value;
    }
  c.expect(es > 0.0 && p < 0.05, "planted set ES " + sci(es) + " p " + sci(p));
  return c.outcome(std::to_string(combos) + " exhaustive ES cases exact; KS p " + sci(ks) +
                   " over 1000 random sets; planted ES " + sci(es) + ", p " + sci(p));
}

// 10. Full-scale counts, only when the licensed data is supplied.
Outcome full_scale_counts() {
  const char* manifest = std::getenv("DEEPDTF_FULL_MANIFEST");
  if (manifest == nullptr || *manifest == '\0')
    return {Status::kSkip, "DEEPDTF_FULL_MANIFEST not set; licensed full-scale data is not available"};
  const omics::Dataset ds = omics::prepare_dataset(omics::Manifest::read(manifest), {});
  Checker c;
  c.expect(ds.pairs.size() == 164165, "pairs " + std::to_string(ds.pairs.size()));
  c.expect(ds.cells.size() == 782, "cell lines " + std::to_string(ds.cells.size()));
  c.expect(ds.drugs.size() == 256, "drugs " + std::to_string(ds.drugs.size()));
  c.expect(ds.cancer_types().size() == 28, "cancer types " + std::to_string(ds.cancer_types().size()));
  return c.outcome(std::to_string(ds.pairs.size()) + " pairs, " + std::to_string(ds.cells.size()) + " cell lines, " +
                   std::to_string(ds.drugs.size()) + " drugs, " + std::to_string(ds.cancer_types().size()) +
                   " cancer types");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient suite", gradients},         {"loss fidelity", losses},
      {"metric oracles", metrics},           {"overfit check", overfit},
      {"cold-start integrity", cold_start},  {"preprocessing fidelity", preprocessing},
      {"smiles parser", smiles},             {"shapley axioms", shapley},
      {"gsea oracle", gsea},                 {"full-scale counts", full_scale_counts},
  };
  // Optional arguments pick criteria by number.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kSkip ? "SKIP" : "FAIL";
    failed += o.status == Status::kFail;
    std::cout << "criterion " << number << " " << tag << " " << criteria[i].first << ": " << o.detail << " ["
              << sci(seconds_since(t0)) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
