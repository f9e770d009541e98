#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "deepdtf/error.hpp"
#include "deepdtf/model.hpp"
#include "gradcheck.hpp"
#include "scratch_dir.hpp"

using namespace deepdtf;
using namespace deepdtf::ad;
using namespace deepdtf::model;
using deepdtf::testing::grad_check;
using deepdtf::testing::probe;

namespace {

ModelConfig tiny(std::size_t d = 8) {
  ModelConfig c;
  c.modality_dims = {12, 5};
  c.d = d;
  c.tokens_per_modality = 2;
  c.conv_channels = 2;
  c.omics = {1, 2};
  c.drug = {1, 2};
  c.fusion = {1, 2};
  c.gnn_layers = 2;
  c.head_hidden = 8;
  c.dropout = 0.0;
  return c;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

// Same molecule with atoms relabelled by `perm` (new index of old atom i).
chem::DrugGraph relabel(const chem::DrugGraph& g, const std::vector<std::size_t>& perm) {
  chem::DrugGraph out = g;
  for (std::size_t i = 0; i < g.num_atoms(); ++i) {
    out.node_features[perm[i]] = g.node_features[i];
    out.atomic_numbers[perm[i]] = g.atomic_numbers[i];
    out.hydrogen_counts[perm[i]] = g.hydrogen_counts[i];
  }
  for (auto& [u, v] : out.edge_index) {
    u = perm[u];
    v = perm[v];
  }
  return out;
}

// Greedy row matching within tol; true when `a` and `b` hold the same rows.
bool same_row_multiset(const Tensor& a, const Tensor& b, double tol) {
  if (a.shape() != b.shape()) return false;
  std::vector<bool> used(b.rows(), false);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < b.rows() && !found; ++j) {
      if (used[j]) continue;
      bool eq = true;
      for (std::size_t c = 0; c < a.cols() && eq; ++c) eq = std::abs(a.at(i, c) - b.at(j, c)) <= tol;
      if (eq) used[j] = found = true;
    }
    if (!found) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

void zero_param(DeepDTF& m, const std::string& name) {
  auto d = m.params().get(name).mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny();
  CHECK_NOTHROW(c.validate());
  c.omics.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.tokens_per_modality = 40;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // n_c > 64
  c = tiny();
  c.gnn_layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.gamma = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ModelConfig::from_json(tiny().to_json()).to_json() == tiny().to_json());
  DeepDTF a(tiny(), 1), b(tiny(), 2);
  CHECK(a.params().numel() == b.params().numel());
  CHECK(a.params().fingerprint() != b.params().fingerprint());
  CHECK(DeepDTF(tiny(), 1).params().fingerprint() == a.params().fingerprint());
}

TEST_CASE("encode_omics shape, zero input and channel gates") {
  DeepDTF m(tiny(), 3);
  std::mt19937_64 rng(4);
  Context ctx;
  OmicsTrace trace;
  Tensor h = m.encode_omics(random_vector(17, rng), ctx, &trace);
  CHECK(h.shape() == Shape{4, 8});
  REQUIRE(trace.channel_gates.size() == 2);
  for (const Tensor& g : trace.channel_gates) {
    CHECK(g.numel() == 6);
    for (double v : g.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  OmicsTrace zero_trace;
  Tensor z = m.encode_omics(std::vector<double>(17, 0.0), ctx, &zero_trace);
  for (double v : z.data()) CHECK(v == 0.0);
  for (const Tensor& g : zero_trace.channel_gates)
    for (double v : g.data()) CHECK(v == 0.5);

  CHECK_THROWS_AS(m.encode_omics(std::vector<double>(16, 0.0), ctx), DimensionError);
}

TEST_CASE("omics transformer: shape and residual identity") {
  DeepDTF m(tiny(), 5);
  std::mt19937_64 rng(6);
  Context ctx;
  Tensor h0 = m.encode_omics(random_vector(17, rng), ctx);
  Tensor h = m.omics_transformer(h0, ctx);
  CHECK(h.shape() == h0.shape());
  for (const char* p : {"attn.o.weight", "attn.o.bias", "ffn2.weight", "ffn2.bias"})
    zero_param(m, std::string("omics.tf.l0.") + p);
  Tensor id = m.omics_transformer(h0, ctx);
  CHECK(max_abs_diff(id, h0) == 0.0);
}

TEST_CASE("transformer block gradient check (2 tokens, d=4)") {
  ModelConfig c = tiny(4);
  DeepDTF m(c, 7);
  std::mt19937_64 rng(8);
  Tensor x = deepdtf::testing::random_tensor({2, 4}, rng);
  Context ctx;
  std::vector<Tensor> leaves{x};
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (m.params().name(i).rfind("omics.tf.", 0) == 0) leaves.push_back(m.params().at(i));
  auto r = grad_check([&] { return probe(m.omics_transformer(x, ctx), 1); }, leaves);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("gnn: single atom gets the empty message") {
  DeepDTF m(tiny(), 9);
  chem::DrugGraph g = chem::parse_smiles("C");
  Tensor h = m.gnn_encode(g);
  REQUIRE(h.shape() == Shape{1, 8});

  // Direct evaluation: h0 = sum of slot embeddings, then h += ReLU(LN(W[h || 0] + b)).
  const auto& P = m.params();
  std::vector<double> ref(8, 0.0);
  for (std::size_t s = 0; s < 9; ++s) {
    const Tensor& t = P.get("drug.atom" + std::to_string(s));
    for (std::size_t c = 0; c < 8; ++c) ref[c] += t.at(g.node_features[0][s], c);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    const std::string p = "drug.gnn" + std::to_string(l);
    const Tensor& W = P.get(p + ".psi.weight");
    const Tensor& b = P.get(p + ".psi.bias");
    std::vector<double> pre(8);
    for (std::size_t o = 0; o < 8; ++o) {
      pre[o] = b.at(o);
      for (std::size_t i = 0; i < 8; ++i) pre[o] += ref[i] * W.at(i, o);  // message half is zero
    }
    const double mu = std::accumulate(pre.begin(), pre.end(), 0.0) / 8.0;
    double var = 0.0;
    for (double v : pre) var += (v - mu) * (v - mu);
    var /= 8.0;
    const Tensor& gain = P.get(p + ".psi_ln.gain");
    const Tensor& bias = P.get(p + ".psi_ln.bias");
    for (std::size_t o = 0; o < 8; ++o)
      ref[o] += std::max(0.0, (pre[o] - mu) / std::sqrt(var + 1e-5) * gain.at(o) + bias.at(o));
  }
  for (std::size_t c = 0; c < 8; ++c) CHECK(h.at(0, c) == doctest::Approx(ref[c]).epsilon(1e-12));

  chem::DrugGraph empty;
  CHECK_THROWS_AS(m.gnn_encode(empty), DataError);
}

TEST_CASE("gnn: permutation equivariance and isomorphic inputs") {
  DeepDTF m(tiny(), 10);
  chem::DrugGraph g = chem::parse_smiles("CC(=O)Nc1ccc(O)cc1");
  const std::size_t n = g.num_atoms();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(11);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor a = m.gnn_encode(g);
  Tensor b = m.gnn_encode(relabel(g, perm));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(a.at(i, c) - b.at(perm[i], c)) < 1e-9);

  Tensor x = m.gnn_encode(chem::parse_smiles("Oc1ccc(NC(C)=O)cc1"));
  CHECK(same_row_multiset(a, x, 1e-9));
  CHECK_FALSE(same_row_multiset(a, m.gnn_encode(chem::parse_smiles("CC(=O)Nc1ccccc1O")), 1e-9));

  // Loss through the drug branch is unchanged by atom reordering.
  Context ctx;
  Tensor hc = m.omics_transformer(m.encode_omics(random_vector(17, rng), ctx), ctx);
  auto [y1, p1] = m.heads(m.fuse(hc, m.drug_transformer(a, ctx), ctx));
  auto [y2, p2] = m.heads(m.fuse(hc, m.drug_transformer(b, ctx), ctx));
  CHECK(std::abs(y1.item() - y2.item()) < 1e-9);
  CHECK(std::abs(p1.item() - p2.item()) < 1e-9);
}

TEST_CASE("drug transformer: masks, padding neutrality, gradients") {
  DeepDTF m(tiny(), 12);
  Context ctx;
  Tensor small = m.gnn_encode(chem::parse_smiles("CCO"));
  Tensor big = m.gnn_encode(chem::parse_smiles("c1ccccc1CCN"));
  std::vector<Tensor> batch{small, big};
  AttentionTrace trace;
  auto out = m.drug_transformer_batched(batch, ctx, &trace);
  REQUIRE(out.size() == 2);
  CHECK(out[0].shape() == small.shape());
  // First sequence is padded: 2 heads of its single layer.
  for (std::size_t h = 0; h < 2; ++h) {
    const Tensor& w = trace.weights[h];
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double real = 0.0, pad = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) (c < 3 ? real : pad) += w.at(r, c);
      CHECK(pad == 0.0);
      if (r < 3) CHECK(std::abs(real - 1.0) < 1e-12);
      else CHECK(real == 0.0);
    }
  }
  std::vector<Tensor> one{small};
  CHECK(max_abs_diff(m.drug_transformer_batched(one, ctx)[0], m.drug_transformer(small, ctx)) < 1e-9);
  CHECK(max_abs_diff(out[0], m.drug_transformer(small, ctx)) < 1e-9);

  ModelConfig c4 = tiny(4);
  c4.drug = {1, 2};
  DeepDTF m4(c4, 13);
  std::mt19937_64 rng(14);
  Tensor x = deepdtf::testing::random_tensor({3, 4}, rng);
  Tensor pad_partner = deepdtf::testing::random_tensor({5, 4}, rng, -1, 1, false);
  std::vector<Tensor> leaves{x};
  for (std::size_t i = 0; i < m4.params().size(); ++i)
    if (m4.params().name(i).rfind("drug.tf.", 0) == 0) leaves.push_back(m4.params().at(i));
  auto r = grad_check(
      [&] {
        std::vector<Tensor> b{x, pad_partner};
        return probe(m4.drug_transformer_batched(b, ctx)[0], 2);
      },
      leaves);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("fuse: pooling weights, token-order invariance, gradients") {
  DeepDTF m(tiny(), 15);
  Context ctx;
  std::mt19937_64 rng(16);
  Tensor hc = m.omics_transformer(m.encode_omics(random_vector(17, rng), ctx), ctx);
  Tensor hd = m.drug_transformer(m.gnn_encode(chem::parse_smiles("CC(=O)O")), ctx);
  Tensor w;
  Tensor z = m.fuse(hc, hd, ctx, &w);
  CHECK(z.shape() == Shape{1, 8});
  CHECK(w.shape() == Shape{1, 8});
  double total = 0.0;
  for (double v : w.data()) total += v;
  CHECK(std::abs(total - 1.0) < 1e-12);

  Tensor swapped = concat({slice(hd, 0, 1, 2), slice(hd, 0, 0, 1), slice(hd, 0, 2, 4)}, 0);
  CHECK(max_abs_diff(m.fuse(hc, swapped, ctx), z) < 1e-9);

  ModelConfig mean_cfg = tiny();
  mean_cfg.pooling = Pooling::kMean;
  DeepDTF mm(mean_cfg, 15);
  Tensor mw;
  mm.fuse(hc, hd, ctx, &mw);
  for (double v : mw.data()) CHECK(v == doctest::Approx(1.0 / 8.0));

  Tensor a = deepdtf::testing::random_tensor({3, 8}, rng);
  Tensor b = deepdtf::testing::random_tensor({2, 8}, rng);
  std::vector<Tensor> leaves{a, b};
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (m.params().name(i).rfind("fusion.", 0) == 0 || m.params().name(i) == "pool.query")
      leaves.push_back(m.params().at(i));
  auto r = grad_check([&] { return probe(m.fuse(a, b, ctx), 3); }, leaves);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("heads") {
  DeepDTF m(tiny(), 17);
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = deepdtf::testing::random_tensor({1, 8}, rng, -5, 5, false);
    auto [y, p] = m.heads(z);
    CHECK(p.item() > 0.0);
    CHECK(p.item() < 1.0);
    CHECK(std::isfinite(y.item()));
  }
  for (const char* name : {"head.reg1.weight", "head.reg2.weight", "head.cls1.weight", "head.cls2.weight"})
    zero_param(m, name);
  m.params().get("head.reg2.bias").mutable_data()[0] = 0.75;
  auto [y, p] = m.heads(deepdtf::testing::random_tensor({1, 8}, rng, -1, 1, false));
  CHECK(p.item() == 0.5);
  CHECK(y.item() == 0.75);

  DeepDTF g(tiny(), 19);
  Tensor z = deepdtf::testing::random_tensor({1, 8}, rng);
  std::vector<Tensor> leaves{z};
  for (std::size_t i = 0; i < g.params().size(); ++i)
    if (g.params().name(i).rfind("head.", 0) == 0) leaves.push_back(g.params().at(i));
  auto r = grad_check(
      [&] {
        auto [yy, pp] = g.heads(z);
        return add(affine(yy, 0.7, 0.0), affine(pp, -1.3, 0.0));
      },
      leaves);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("focal loss values") {
  const std::vector<double> one{1.0};
  CHECK(focal_loss(Tensor({1}, {0.5}), one, 0.0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(focal_loss(Tensor({1}, {1.0 - 1e-12}), one, 2.0).item() < 1e-12);
  CHECK(focal_loss(Tensor({1}, {1.0}), one, 0.0).item() < 1.1e-7);
  CHECK(std::abs(focal_loss(Tensor({1}, {0.9}), one, 2.0).item() - 0.0010536) < 1e-6);
  CHECK(std::isfinite(focal_loss(Tensor({2}, {0.0, 1.0}), std::vector<double>{1.0, 0.0}, 2.0).item()));

  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = 0.01 + 0.98 * uniform01(rng);
    const double t = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    const double bce = -(t * std::log(p) + (1 - t) * std::log(1 - p));
    CHECK(focal_loss(Tensor({1}, {p}), std::vector<double>{t}, 0.0).item() == doctest::Approx(bce).epsilon(1e-14));
    const bool correct_side = (t == 1.0) == (p > 0.5);
    if (!correct_side) continue;
    double prev = 1e300;
    for (double g = 0.0; g <= 5.0; g += 0.5) {
      const double v = focal_loss(Tensor({1}, {p}), std::vector<double>{t}, g).item();
      CHECK(v <= prev);
      prev = v;
    }
  }
}

TEST_CASE("total loss composition") {
  Tensor y_hat({3}, {0.5, -1.0, 2.0});
  Tensor p_hat({3}, {0.2, 0.7, 0.9});
  const std::vector<double> y{0.5, -1.0, 2.0};
  const std::vector<double> t{0.0, 1.0, 1.0};
  std::vector<Tensor> none;
  CHECK(total_loss(y_hat, y, p_hat, t, none, 1.0, 0.0, 0.0, 2.0).total.item() == 0.0);

  std::vector<Tensor> one_param{Tensor({1}, {2.0}, true)};
  CHECK(total_loss(y_hat, y, p_hat, t, one_param, 0.0, 0.0, 1.0, 2.0).total.item() == 4.0);

  const std::vector<double> y2{0.0, 0.0, 1.0};
  std::vector<Tensor> params{Tensor({2}, {0.3, -0.4}, true), Tensor({1, 2}, {1.5, 0.25}, true)};
  const double alpha = 0.7, beta = 1.9, lambda = 0.01, gamma = 2.0;
  LossTerms lt = total_loss(y_hat, y2, p_hat, t, params, alpha, beta, lambda, gamma);
  const double mse = (0.25 + 1.0 + 1.0) / 3.0;
  double fl = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double p = p_hat.at(i);
    fl += t[i] * std::pow(1 - p, gamma) * std::log(p) + (1 - t[i]) * std::pow(p, gamma) * std::log(1 - p);
  }
  fl = -fl / 3.0;
  const double l2 = 0.09 + 0.16 + 2.25 + 0.0625;
  CHECK(lt.mse == doctest::Approx(mse).epsilon(1e-15));
  CHECK(lt.focal == doctest::Approx(fl).epsilon(1e-14));
  CHECK(lt.l2 == doctest::Approx(l2).epsilon(1e-15));
  CHECK(lt.total.item() == doctest::Approx(alpha * lt.mse + beta * lt.focal + lambda * lt.l2).epsilon(1e-15));

  Tensor yh({3}, {0.1, 0.4, -0.3}, true);
  Tensor ph({3}, {0.3, 0.6, 0.8}, true);
  std::vector<Tensor> leaves{yh, ph, params[0], params[1]};
  auto r = grad_check([&] { return total_loss(yh, y2, ph, t, params, alpha, beta, lambda, gamma).total; }, leaves);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("full model gradient check on a 2 x 2 micro-batch") {
  ModelConfig c = tiny(8);
  c.gnn_layers = 1;
  DeepDTF m(c, 21);
  std::mt19937_64 rng(22);
  std::vector<std::vector<double>> cells{random_vector(17, rng), random_vector(17, rng)};
  std::vector<chem::DrugGraph> drugs{chem::parse_smiles("CC(=O)O"), chem::parse_smiles("c1ccncc1N")};
  std::vector<PairRef> pairs{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::vector<double> y{-2.5, 0.3, 1.1, -1.0};
  const std::vector<double> t{1.0, 0.0, 0.0, 1.0};
  Context ctx;
  auto decayed = m.params().decayed();
  auto loss = [&] {
    BatchOutput out = m.forward(cells, drugs, pairs, ctx);
    return total_loss(out.y_hat, y, out.p_hat, t, decayed, 1.0, 1.0, 1e-3, 2.0).total;
  };
  const auto start = std::chrono::steady_clock::now();
  auto r = grad_check(loss, m.params().all());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK_MESSAGE(r.max_rel_error < 1e-4, m.params().name(std::stoul(r.worst)) << " " << r.worst);
  MESSAGE("full-model gradient check: " << m.params().numel() << " parameters, max rel. error "
                                        << r.max_rel_error << ", " << secs << " s");
}

TEST_CASE("batched forward: caching and padding neutrality") {
  DeepDTF m(tiny(), 23);
  std::mt19937_64 rng(24);
  std::vector<std::vector<double>> cells{random_vector(17, rng), random_vector(17, rng)};
  std::vector<chem::DrugGraph> drugs{chem::parse_smiles("CCO"), chem::parse_smiles("c1ccccc1C(=O)NCCCCCC")};
  Context ctx;
  std::vector<PairRef> alone{{0, 0}, {1, 0}};
  std::vector<PairRef> with_big{{0, 0}, {1, 0}, {1, 1}};
  BatchOutput a = m.forward(cells, drugs, alone, ctx);
  BatchOutput b = m.forward(cells, drugs, with_big, ctx);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(a.y_hat.at(i) - b.y_hat.at(i)) < 1e-9);
    CHECK(std::abs(a.p_hat.at(i) - b.p_hat.at(i)) < 1e-9);
  }
  CHECK(b.y_hat.shape() == Shape{3});
}

TEST_CASE("training mode needs an RNG and applies dropout") {
  ModelConfig c = tiny();
  c.dropout = 0.5;
  DeepDTF m(c, 25);
  std::mt19937_64 rng(26);
  std::vector<std::vector<double>> cells{random_vector(17, rng)};
  std::vector<chem::DrugGraph> drugs{chem::parse_smiles("CCO")};
  std::vector<PairRef> pairs{{0, 0}};
  CHECK_THROWS_AS(m.forward(cells, drugs, pairs, Context{true, nullptr}), ContractError);
  std::mt19937_64 r1(5), r2(5);
  const double t1 = m.forward(cells, drugs, pairs, Context{true, &r1}).y_hat.item();
  const double t2 = m.forward(cells, drugs, pairs, Context{true, &r2}).y_hat.item();
  const double ev = m.forward(cells, drugs, pairs, Context{}).y_hat.item();
  CHECK(t1 == t2);
  CHECK(t1 != ev);
}

TEST_CASE("checkpoint round trip") {
  testing::ScratchDir dir("ckpt");
  DeepDTF m(tiny(), 27);
  m.save(dir / "model.ckpt", {{"fold", 2}});
  nlohmann::json meta;
  DeepDTF back = DeepDTF::load(dir / "model.ckpt", &meta);
  CHECK(back.params().fingerprint() == m.params().fingerprint());
  CHECK(meta["fold"] == 2);
  CHECK_THROWS_AS(DeepDTF::load(dir / "missing.ckpt"), IoError);
}

TEST_CASE("adam reduces a quadratic and decays only eligible parameters") {
  ParamStore ps;
  ps.add("w", Tensor({2}, {3.0, -2.0}, true), true);
  ps.add("b", Tensor({1}, {1.0}, true), false);
  Adam opt(ps, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 300; ++i) {
    Tensor l = add(sum(square(ps.get("w"))), sum(square(affine(ps.get("b"), 1.0, -0.5))));
    l.backward();
    opt.step();
  }
  CHECK(std::abs(ps.get("w").at(0)) < 0.05);
  CHECK(std::abs(ps.get("b").at(0) - 0.5) < 0.05);

  ParamStore q;
  q.add("w", Tensor({1}, {1.0}, true), true);
  q.add("b", Tensor({1}, {1.0}, true), false);
  Adam decay(q, AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.1});
  Tensor l = add(affine(sum(q.get("w")), 0.0, 0.0), affine(sum(q.get("b")), 0.0, 0.0));
  l.backward();
  decay.step();
  CHECK(q.get("w").at(0) < 1.0);
  CHECK(q.get("b").at(0) == 1.0);
}
