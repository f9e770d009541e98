#include "deepdtf/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "deepdtf/error.hpp"
#include "deepdtf/hash.hpp"

namespace deepdtf::model {

using namespace deepdtf::ad;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr const char* kCheckpointFormat = "deepdtf-checkpoint/1";

Tensor uniform_init(Shape shape, double limit, std::mt19937_64& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
  return Tensor(std::move(shape), std::move(v), true);
}

double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::string activation_name(Activation a) { return a == Activation::kGELU ? "gelu" : "relu"; }
std::string pooling_name(Pooling p) { return p == Pooling::kAttention ? "attention" : "mean"; }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (modality_dims.empty()) fail("no omics modality");
  for (std::size_t m : modality_dims)
    if (m == 0) fail("omics segment of length 0");
  if (d == 0) fail("d must be positive");
  if (tokens_per_modality == 0) fail("tokens_per_modality must be positive");
  if (num_omics_tokens() > kMaxOmicsTokens)
    fail("n_c = " + std::to_string(num_omics_tokens()) + " exceeds " + std::to_string(kMaxOmicsTokens));
  if (kernel_sizes.empty()) fail("no CNN kernel sizes");
  for (std::size_t k : kernel_sizes)
    if (k == 0) fail("kernel size 0");
  if (conv_channels == 0 || attn_reduction == 0) fail("conv_channels and attn_reduction must be positive");
  for (const auto& [name, tc] : {std::pair{"omics", omics}, std::pair{"drug", drug}, std::pair{"fusion", fusion}}) {
    if (tc.heads == 0 || d % tc.heads != 0)
      fail(std::string(name) + " heads (" + std::to_string(tc.heads) + ") must divide d (" + std::to_string(d) + ")");
  }
  if (ffn_mult == 0 || head_hidden == 0) fail("ffn_mult and head_hidden must be positive");
  if (gnn_layers == 0) fail("gnn_layers must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(lambda >= 0.0) || !(gamma >= 0.0))
    fail("alpha, beta, lambda and gamma must be non-negative");
}

nlohmann::json ModelConfig::to_json() const {
  auto tc = [](const TransformerConfig& t) { return nlohmann::json{{"layers", t.layers}, {"heads", t.heads}}; };
  return {{"modality_dims", modality_dims},
          {"d", d},
          {"tokens_per_modality", tokens_per_modality},
          {"kernel_sizes", kernel_sizes},
          {"conv_channels", conv_channels},
          {"attn_reduction", attn_reduction},
          {"omics", tc(omics)},
          {"drug", tc(drug)},
          {"fusion", tc(fusion)},
          {"ffn_mult", ffn_mult},
          {"activation", activation_name(activation)},
          {"gnn_layers", gnn_layers},
          {"pooling", pooling_name(pooling)},
          {"head_hidden", head_hidden},
          {"dropout", dropout},
          {"omics_positions", omics_positions},
          {"alpha", alpha},
          {"beta", beta},
          {"lambda", lambda},
          {"gamma", gamma}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    auto tc = [](const nlohmann::json& t) { return TransformerConfig{t.at("layers"), t.at("heads")}; };
    c.modality_dims = j.at("modality_dims").get<std::vector<std::size_t>>();
    c.d = j.at("d");
    c.tokens_per_modality = j.at("tokens_per_modality");
    c.kernel_sizes = j.at("kernel_sizes").get<std::vector<std::size_t>>();
    c.conv_channels = j.at("conv_channels");
    c.attn_reduction = j.at("attn_reduction");
    c.omics = tc(j.at("omics"));
    c.drug = tc(j.at("drug"));
    c.fusion = tc(j.at("fusion"));
    c.ffn_mult = j.at("ffn_mult");
    c.activation = j.at("activation") == "relu" ? Activation::kReLU : Activation::kGELU;
    c.gnn_layers = j.at("gnn_layers");
    c.pooling = j.at("pooling") == "mean" ? Pooling::kMean : Pooling::kAttention;
    c.head_hidden = j.at("head_hidden");
    c.dropout = j.at("dropout");
    c.omics_positions = j.at("omics_positions");
    c.alpha = j.at("alpha");
    c.beta = j.at("beta");
    c.lambda = j.at("lambda");
    c.gamma = j.at("gamma");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor& ParamStore::add(const std::string& name, Tensor t, bool decay) {
  if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  decay_.push_back(decay);
  return tensors_.back();
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return tensors_[it->second];
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

std::vector<Tensor> ParamStore::decayed() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (decay_[i]) out.push_back(tensors_[i]);
  return out;
}

std::string ParamStore::fingerprint() const {
  std::string bytes;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    bytes += names_[i];
    bytes += shape_str(tensors_[i].shape());
    const auto d = tensors_[i].data();
    bytes.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  return sha256_hex(bytes);
}

DeepDTF::DeepDTF(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

void DeepDTF::build(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d;
  auto linear_params = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    params_.add(prefix + ".weight", uniform_init({in, out}, xavier_limit(in, out), rng), true);
    params_.add(prefix + ".bias", Tensor::zeros({out}, true), false);
  };
  auto norm_params = [&](const std::string& prefix, std::size_t n) {
    params_.add(prefix + ".gain", Tensor::full({n}, 1.0, true), false);
    params_.add(prefix + ".bias", Tensor::zeros({n}, true), false);
  };
  auto transformer_params = [&](const std::string& prefix, const TransformerConfig& tc) {
    for (std::size_t l = 0; l < tc.layers; ++l) {
      const std::string p = prefix + ".l" + std::to_string(l);
      norm_params(p + ".ln1", d);
      for (const char* proj : {".q", ".k", ".v", ".o"}) linear_params(p + ".attn" + proj, d, d);
      norm_params(p + ".ln2", d);
      linear_params(p + ".ffn1", d, config_.ffn_mult * d);
      linear_params(p + ".ffn2", config_.ffn_mult * d, d);
    }
  };

  const std::size_t c = config_.conv_channels;
  const std::size_t channels = c * config_.kernel_sizes.size();
  const std::size_t hidden = std::max<std::size_t>(1, channels / config_.attn_reduction);
  for (std::size_t m = 0; m < config_.modality_dims.size(); ++m) {
    const std::string p = "omics.m" + std::to_string(m);
    for (std::size_t k : config_.kernel_sizes) {
      params_.add(p + ".conv" + std::to_string(k) + ".weight",
                  uniform_init({c, 1, k}, xavier_limit(k, c * k), rng), true);
      params_.add(p + ".conv" + std::to_string(k) + ".bias", Tensor::zeros({c}, true), false);
    }
    linear_params(p + ".gate1", channels, hidden);
    linear_params(p + ".gate2", hidden, channels);
    linear_params(p + ".proj", channels, d);
  }
  if (config_.omics_positions)
    params_.add("omics.pos", uniform_init({config_.num_omics_tokens(), d}, 0.02, rng), true);
  transformer_params("omics.tf", config_.omics);

  using chem::AtomFeatureSchema;
  using chem::BondFeatureSchema;
  for (std::size_t s = 0; s < AtomFeatureSchema::kNumSlots; ++s) {
    const std::size_t v = AtomFeatureSchema::kVocab[s];
    params_.add("drug.atom" + std::to_string(s), uniform_init({v, d}, xavier_limit(v, d), rng), true);
  }
  for (std::size_t l = 0; l < config_.gnn_layers; ++l) {
    const std::string p = "drug.gnn" + std::to_string(l);
    for (std::size_t s = 0; s < BondFeatureSchema::kNumSlots; ++s) {
      const std::size_t v = BondFeatureSchema::kVocab[s];
      params_.add(p + ".bond" + std::to_string(s), uniform_init({v, d}, xavier_limit(v, d), rng), true);
    }
    linear_params(p + ".phi", 3 * d, d);
    norm_params(p + ".phi_ln", d);
    linear_params(p + ".psi", 2 * d, d);
    norm_params(p + ".psi_ln", d);
  }
  transformer_params("drug.tf", config_.drug);

  transformer_params("fusion.tf", config_.fusion);
  if (config_.pooling == Pooling::kAttention)
    params_.add("pool.query", uniform_init({d, 1}, xavier_limit(d, 1), rng), true);
  linear_params("head.reg1", d, config_.head_hidden);
  linear_params("head.reg2", config_.head_hidden, 1);
  linear_params("head.cls1", d, config_.head_hidden);
  linear_params("head.cls2", config_.head_hidden, 1);
}

Tensor DeepDTF::linear(const std::string& prefix, const Tensor& x) const {
  return add_row(matmul(x, params_.get(prefix + ".weight")), params_.get(prefix + ".bias"));
}

Tensor DeepDTF::layer_norm(const std::string& prefix, const Tensor& x) const {
  return layernorm(x, params_.get(prefix + ".gain"), params_.get(prefix + ".bias"), kLayerNormEps);
}

Tensor DeepDTF::encode_omics(std::span<const double> x, const Context& ctx, OmicsTrace* trace) const {
  (void)ctx;
  const auto& dims = config_.modality_dims;
  const std::size_t total = std::accumulate(dims.begin(), dims.end(), std::size_t{0});
  if (x.size() != total)
    throw DimensionError("encode_omics: input has " + std::to_string(x.size()) +
                         " features, config expects " + std::to_string(total));
  const std::size_t T = config_.tokens_per_modality;
  std::vector<Tensor> tokens;
  std::size_t offset = 0;
  for (std::size_t m = 0; m < dims.size(); ++m) {
    const std::string p = "omics.m" + std::to_string(m);
    Tensor seg({1, dims[m]}, std::vector<double>(x.begin() + offset, x.begin() + offset + dims[m]));
    offset += dims[m];
    std::vector<Tensor> scales;
    for (std::size_t k : config_.kernel_sizes) {
      const std::string conv = p + ".conv" + std::to_string(k);
      Tensor y = conv1d(seg, params_.get(conv + ".weight"), params_.get(conv + ".bias"), k, (k - 1) / 2);
      scales.push_back(adaptive_avg_pool1d(y, T));
    }
    Tensor h = concat(scales, 0);  // [C, T]
    const std::size_t channels = h.rows();
    Tensor pooled = reshape(mean(h, 1), {1, channels});
    Tensor gate = sigmoid(linear(p + ".gate2", relu(linear(p + ".gate1", pooled))));
    gate = reshape(gate, {channels});
    if (trace) trace->channel_gates.push_back(gate);
    Tensor weighted = mul_col(h, gate);
    tokens.push_back(linear(p + ".proj", transpose(weighted)));  // [T, d]
  }
  Tensor out = concat(tokens, 0);
  if (config_.omics_positions) out = add(out, params_.get("omics.pos"));
  return out;
}

Tensor DeepDTF::transformer(const std::string& prefix, const TransformerConfig& tc, const Tensor& input,
                            std::span<const std::uint8_t> valid, const Context& ctx,
                            AttentionTrace* trace) const {
  const std::size_t d = config_.d;
  const std::size_t dh = d / tc.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = ctx.train && config_.dropout > 0.0;
  if (drop && !ctx.rng) throw ContractError("training forward pass needs an RNG for dropout");
  auto maybe_dropout = [&](const Tensor& t) { return drop ? dropout(t, config_.dropout, true, *ctx.rng) : t; };

  Tensor x = input;
  for (std::size_t l = 0; l < tc.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    Tensor a = layer_norm(p + ".ln1", x);
    Tensor q = linear(p + ".attn.q", a);
    Tensor k = linear(p + ".attn.k", a);
    Tensor v = linear(p + ".attn.v", a);
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < tc.heads; ++h) {
      Tensor qh = tc.heads == 1 ? q : slice(q, 1, h * dh, (h + 1) * dh);
      Tensor kh = tc.heads == 1 ? k : slice(k, 1, h * dh, (h + 1) * dh);
      Tensor vh = tc.heads == 1 ? v : slice(v, 1, h * dh, (h + 1) * dh);
      Tensor scores = affine(matmul(qh, transpose(kh)), scale, 0.0);
      Tensor w = valid.empty() ? softmax(scores, 1) : masked_softmax_rows(scores, valid, valid);
      if (trace) trace->weights.push_back(w);
      heads.push_back(matmul(w, vh));
    }
    Tensor attn = linear(p + ".attn.o", tc.heads == 1 ? heads[0] : concat(heads, 1));
    x = add(x, maybe_dropout(attn));
    Tensor b = layer_norm(p + ".ln2", x);
    Tensor f = linear(p + ".ffn1", b);
    f = config_.activation == Activation::kGELU ? gelu(f) : relu(f);
    f = linear(p + ".ffn2", f);
    x = add(x, maybe_dropout(f));
  }
  return x;
}

Tensor DeepDTF::omics_transformer(const Tensor& h0, const Context& ctx) const {
  return transformer("omics.tf", config_.omics, h0, {}, ctx, nullptr);
}

Tensor DeepDTF::gnn_encode(const chem::DrugGraph& g) const {
  using chem::AtomFeatureSchema;
  using chem::BondFeatureSchema;
  const std::size_t n = g.num_atoms();
  if (n == 0) throw DataError("gnn_encode: drug '" + g.drug_id + "' has no atoms");
  const std::size_t d = config_.d;

  Tensor h;
  for (std::size_t s = 0; s < AtomFeatureSchema::kNumSlots; ++s) {
    std::vector<std::size_t> idx(n);
    for (std::size_t a = 0; a < n; ++a) {
      const int code = g.node_features[a][s];
      if (code < 0 || static_cast<std::size_t>(code) >= AtomFeatureSchema::kVocab[s])
        throw DataError("gnn_encode: atom code out of vocabulary");
      idx[a] = static_cast<std::size_t>(code);
    }
    Tensor e = gather_rows(params_.get("drug.atom" + std::to_string(s)), idx);
    h = h.defined() ? add(h, e) : e;
  }

  const std::size_t m = g.num_directed_edges();
  std::vector<std::size_t> target(m), source(m);
  std::array<std::vector<std::size_t>, BondFeatureSchema::kNumSlots> bond_idx;
  for (std::size_t e = 0; e < m; ++e) {
    target[e] = g.edge_index[e].first;
    source[e] = g.edge_index[e].second;
    if (target[e] >= n || source[e] >= n) throw DataError("gnn_encode: edge index out of range");
    for (std::size_t s = 0; s < BondFeatureSchema::kNumSlots; ++s) {
      const int code = g.edge_features[e][s];
      if (code < 0 || static_cast<std::size_t>(code) >= BondFeatureSchema::kVocab[s])
        throw DataError("gnn_encode: bond code out of vocabulary");
      bond_idx[s].push_back(static_cast<std::size_t>(code));
    }
  }

  for (std::size_t l = 0; l < config_.gnn_layers; ++l) {
    const std::string p = "drug.gnn" + std::to_string(l);
    Tensor msg;
    if (m == 0) {
      msg = Tensor::zeros({n, d});
    } else {
      Tensor e;
      for (std::size_t s = 0; s < BondFeatureSchema::kNumSlots; ++s) {
        Tensor es = gather_rows(params_.get(p + ".bond" + std::to_string(s)), bond_idx[s]);
        e = e.defined() ? add(e, es) : es;
      }
      Tensor cat = concat({gather_rows(h, target), gather_rows(h, source), e}, 1);
      Tensor phi = relu(layer_norm(p + ".phi_ln", linear(p + ".phi", cat)));
      msg = scatter_add_rows(phi, target, n);
    }
    Tensor upd = relu(layer_norm(p + ".psi_ln", linear(p + ".psi", concat({h, msg}, 1))));
    h = add(h, upd);
  }
  return h;
}

Tensor DeepDTF::drug_transformer(const Tensor& h0, const Context& ctx) const {
  return transformer("drug.tf", config_.drug, h0, {}, ctx, nullptr);
}

std::vector<Tensor> DeepDTF::drug_transformer_batched(std::span<const Tensor> h0, const Context& ctx,
                                                      AttentionTrace* trace) const {
  std::size_t longest = 0;
  for (const Tensor& t : h0) longest = std::max(longest, t.rows());
  std::vector<Tensor> out;
  for (const Tensor& t : h0) {
    const std::size_t n = t.rows();
    std::vector<std::uint8_t> valid(longest, 0);
    std::fill_n(valid.begin(), n, std::uint8_t{1});
    Tensor padded = n == longest ? t : concat({t, Tensor::zeros({longest - n, config_.d})}, 0);
    Tensor y = transformer("drug.tf", config_.drug, padded, valid, ctx, trace);
    out.push_back(n == longest ? y : slice(y, 0, 0, n));
  }
  return out;
}

Tensor DeepDTF::fuse(const Tensor& hc, const Tensor& hd, const Context& ctx, Tensor* pool_weights) const {
  if (hc.cols() != config_.d || hd.cols() != config_.d)
    throw DimensionError("fuse: token widths " + shape_str(hc.shape()) + " and " + shape_str(hd.shape()) +
                         " differ from d = " + std::to_string(config_.d));
  Tensor joint = transformer("fusion.tf", config_.fusion, concat({hc, hd}, 0), {}, ctx, nullptr);
  if (config_.pooling == Pooling::kMean) {
    if (pool_weights) *pool_weights = Tensor::full({1, joint.rows()}, 1.0 / static_cast<double>(joint.rows()));
    return reshape(mean(joint, 0), {1, config_.d});
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.d));
  Tensor scores = transpose(affine(matmul(joint, params_.get("pool.query")), scale, 0.0));  // [1, n]
  Tensor w = softmax(scores, 1);
  if (pool_weights) *pool_weights = w;
  return matmul(w, joint);
}

std::pair<Tensor, Tensor> DeepDTF::heads(const Tensor& z) const {
  Tensor y = linear("head.reg2", relu(linear("head.reg1", z)));
  Tensor p = sigmoid(linear("head.cls2", relu(linear("head.cls1", z))));
  return {reshape(y, {1}), reshape(p, {1})};
}

BatchOutput DeepDTF::forward(std::span<const std::vector<double>> cell_features,
                             std::span<const chem::DrugGraph> drugs, std::span<const PairRef> pairs,
                             const Context& ctx) const {
  if (pairs.empty()) throw ContractError("forward: empty batch");
  std::map<std::size_t, Tensor> cell_tokens;
  std::vector<std::size_t> drug_order;
  std::map<std::size_t, std::size_t> drug_slot;
  for (const PairRef& p : pairs) {
    if (p.cell >= cell_features.size() || p.drug >= drugs.size())
      throw ContractError("forward: pair references a missing cell or drug");
    if (!cell_tokens.count(p.cell))
      cell_tokens[p.cell] = omics_transformer(encode_omics(cell_features[p.cell], ctx), ctx);
    if (!drug_slot.count(p.drug)) {
      drug_slot[p.drug] = drug_order.size();
      drug_order.push_back(p.drug);
    }
  }
  std::vector<Tensor> node_tokens;
  for (std::size_t dg : drug_order) node_tokens.push_back(gnn_encode(drugs[dg]));
  const std::vector<Tensor> drug_tokens = drug_transformer_batched(node_tokens, ctx);

  BatchOutput out;
  std::vector<Tensor> ys, ps;
  for (const PairRef& p : pairs) {
    Tensor z = fuse(cell_tokens.at(p.cell), drug_tokens[drug_slot.at(p.drug)], ctx);
    auto [y, pr] = heads(z);
    ys.push_back(reshape(y, {1, 1}));
    ps.push_back(reshape(pr, {1, 1}));
    out.z.push_back(z);
  }
  out.y_hat = reshape(concat(ys, 0), {pairs.size()});
  out.p_hat = reshape(concat(ps, 0), {pairs.size()});
  return out;
}

void DeepDTF::save(const std::filesystem::path& path, const nlohmann::json& metadata) const {
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& t = params_.at(i);
    params.push_back({{"name", params_.name(i)},
                      {"shape", t.shape()},
                      {"data", std::vector<double>(t.data().begin(), t.data().end())}});
  }
  nlohmann::json j{{"format", kCheckpointFormat},
                   {"config", config_.to_json()},
                   {"params", params},
                   {"metadata", metadata}};
  const auto bytes = nlohmann::json::to_cbor(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

DeepDTF DeepDTF::load(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string() + " (run 'train' first)");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": not a checkpoint (" + e.what() + ")");
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw DataError(path.string() + ": unsupported checkpoint format");
  DeepDTF m(ModelConfig::from_json(j.at("config")), 0);
  const auto& params = j.at("params");
  if (params.size() != m.params_.size())
    throw DataError(path.string() + ": parameter count does not match the stored config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    Tensor& t = m.params_.at(i);
    if (p.at("name") != m.params_.name(i) || p.at("shape").get<Shape>() != t.shape())
      throw DataError(path.string() + ": parameter " + p.at("name").get<std::string>() + " does not match the model");
    const auto data = p.at("data").get<std::vector<double>>();
    std::copy(data.begin(), data.end(), t.mutable_data().begin());
  }
  if (metadata) *metadata = j.value("metadata", nlohmann::json::object());
  return m;
}

Tensor mse_loss(const Tensor& y_hat, std::span<const double> y) {
  if (y_hat.numel() != y.size())
    throw DimensionError("mse_loss: " + std::to_string(y_hat.numel()) + " predictions vs " +
                         std::to_string(y.size()) + " targets");
  Tensor target({y.size()}, std::vector<double>(y.begin(), y.end()));
  return mean(square(sub(reshape(y_hat, {y.size()}), target)));
}

Tensor focal_loss(const Tensor& p_hat, std::span<const double> t, double gamma) {
  const std::size_t n = t.size();
  if (p_hat.numel() != n)
    throw DimensionError("focal_loss: " + std::to_string(p_hat.numel()) + " probabilities vs " +
                         std::to_string(n) + " labels");
  Tensor p = clamp(reshape(p_hat, {n}), kFocalEps, 1.0 - kFocalEps);
  Tensor q = affine(p, -1.0, 1.0);
  std::vector<double> tv(t.begin(), t.end()), fv(n);
  for (std::size_t i = 0; i < n; ++i) fv[i] = 1.0 - tv[i];
  Tensor pos_mask({n}, std::move(tv));
  Tensor neg_mask({n}, std::move(fv));
  Tensor pos = mul(pos_mask, mul(pow(q, gamma), log(p)));
  Tensor neg = mul(neg_mask, mul(pow(p, gamma), log(q)));
  return affine(mean(add(pos, neg)), -1.0, 0.0);
}

Tensor l2_penalty(std::span<const Tensor> params) {
  Tensor total;
  for (const Tensor& p : params) {
    Tensor s = sum(square(p));
    total = total.defined() ? add(total, s) : s;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

LossTerms total_loss(const Tensor& y_hat, std::span<const double> y, const Tensor& p_hat,
                     std::span<const double> t, std::span<const Tensor> decayed_params, double alpha,
                     double beta, double lambda, double gamma) {
  if (alpha < 0 || beta < 0 || lambda < 0) throw ConfigError("loss weights must be non-negative");
  Tensor mse = mse_loss(y_hat, y);
  Tensor fl = focal_loss(p_hat, t, gamma);
  Tensor total = add(affine(mse, alpha, 0.0), affine(fl, beta, 0.0));
  LossTerms out;
  out.mse = mse.item();
  out.focal = fl.item();
  if (lambda > 0.0) {
    Tensor l2 = l2_penalty(decayed_params);
    out.l2 = l2.item();
    total = add(total, affine(l2, lambda, 0.0));
  } else {
    out.l2 = 0.0;
  }
  out.total = total;
  return out;
}

Adam::Adam(ParamStore& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_.emplace_back(params_.at(i).numel(), 0.0);
    v_.emplace_back(params_.at(i).numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_.at(i);
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    const double wd = params_.decays(i) ? cfg_.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + wd * w[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
      w[j] -= cfg_.lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + cfg_.eps);
    }
  }
  params_.zero_grad();
}

}  // namespace deepdtf::model
