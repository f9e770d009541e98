#pragma once

// Dual-branch network: omics CNN/channel-attention tokenizer + Transformer,
// drug GNN + Transformer, fusion Transformer, pooling and two heads.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepdtf/ops.hpp"
#include "deepdtf/smiles.hpp"
#include "deepdtf/tensor.hpp"
#include "json.hpp"

namespace deepdtf::model {

using ad::Tensor;

enum class Pooling : std::uint8_t { kAttention, kMean };
enum class Activation : std::uint8_t { kGELU, kReLU };

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
};

struct ModelConfig {
  std::vector<std::size_t> modality_dims;  // omics segment lengths, stacking order
  std::size_t d = 16;
  std::size_t tokens_per_modality = 4;
  std::vector<std::size_t> kernel_sizes{3, 7, 15};
  std::size_t conv_channels = 4;  // per kernel size
  std::size_t attn_reduction = 2;  // channel-attention bottleneck divisor
  TransformerConfig omics{};
  TransformerConfig drug{};
  TransformerConfig fusion{};
  std::size_t ffn_mult = 2;
  Activation activation = Activation::kGELU;
  std::size_t gnn_layers = 3;
  Pooling pooling = Pooling::kAttention;
  std::size_t head_hidden = 32;
  double dropout = 0.1;
  bool omics_positions = false;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.0;
  double gamma = 2.0;

  std::size_t num_omics_tokens() const { return tokens_per_modality * modality_dims.size(); }
  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

inline constexpr std::size_t kMaxOmicsTokens = 64;

// Named learnable tensors in creation order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t, bool decay);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t numel() const;
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  bool decays(std::size_t i) const { return decay_.at(i); }
  void zero_grad();
  std::vector<Tensor> all() const { return tensors_; }
  std::vector<Tensor> decayed() const;
  // Hash of every name, shape and value bit pattern.
  std::string fingerprint() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<bool> decay_;
  std::map<std::string, std::size_t> index_;
};

// Forward-pass context: dropout applies only when `train` is set.
struct Context {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

struct OmicsTrace {
  std::vector<Tensor> channel_gates;  // one [C] gate vector per modality
};

struct AttentionTrace {
  std::vector<Tensor> weights;  // per layer and head, row-stochastic over valid keys
};

struct BatchOutput {
  Tensor y_hat;  // [B]
  Tensor p_hat;  // [B]
  std::vector<Tensor> z;  // [1, d] per sample
};

struct PairRef {
  std::size_t cell = 0;  // index into the cell feature list
  std::size_t drug = 0;  // index into the drug graph list
};

class DeepDTF {
 public:
  DeepDTF(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // x: concatenation of the omics segments; lengths must match the config.
  Tensor encode_omics(std::span<const double> x, const Context& ctx, OmicsTrace* trace = nullptr) const;
  Tensor omics_transformer(const Tensor& h0, const Context& ctx) const;
  Tensor gnn_encode(const chem::DrugGraph& g) const;
  Tensor drug_transformer(const Tensor& h0, const Context& ctx) const;
  // Pads each sequence to the longest and masks padded keys and queries.
  // Returns the unpadded outputs.
  std::vector<Tensor> drug_transformer_batched(std::span<const Tensor> h0, const Context& ctx,
                                               AttentionTrace* trace = nullptr) const;
  // Joint sequence -> fusion Transformer -> pooled z [1, d]. When given,
  // `pool_weights` receives the pooling distribution [1, n_c + n_d].
  Tensor fuse(const Tensor& hc, const Tensor& hd, const Context& ctx, Tensor* pool_weights = nullptr) const;
  std::pair<Tensor, Tensor> heads(const Tensor& z) const;  // (y_hat [1], p_hat [1])

  // Encodes each distinct cell and drug of the batch once.
  BatchOutput forward(std::span<const std::vector<double>> cell_features,
                      std::span<const chem::DrugGraph> drugs, std::span<const PairRef> pairs,
                      const Context& ctx) const;

  void save(const std::filesystem::path& path, const nlohmann::json& metadata) const;
  static DeepDTF load(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

 private:
  Tensor transformer(const std::string& prefix, const TransformerConfig& tc, const Tensor& x,
                     std::span<const std::uint8_t> valid, const Context& ctx, AttentionTrace* trace) const;
  Tensor linear(const std::string& prefix, const Tensor& x) const;
  Tensor layer_norm(const std::string& prefix, const Tensor& x) const;
  void build(std::uint64_t seed);

  ModelConfig config_;
  ParamStore params_;
};

// Losses. p_hat is clamped to [1e-7, 1 - 1e-7] before the logarithms.
inline constexpr double kFocalEps = 1e-7;
Tensor mse_loss(const Tensor& y_hat, std::span<const double> y);
Tensor focal_loss(const Tensor& p_hat, std::span<const double> t, double gamma);
Tensor l2_penalty(std::span<const Tensor> params);
struct LossTerms {
  Tensor total;
  double mse = 0.0;
  double focal = 0.0;
  double l2 = 0.0;
};
LossTerms total_loss(const Tensor& y_hat, std::span<const double> y, const Tensor& p_hat,
                     std::span<const double> t, std::span<const Tensor> decayed_params, double alpha,
                     double beta, double lambda, double gamma);

// Adam with L2-coupled weight decay on decay-eligible parameters.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 3e-4;
};

class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg);
  // Applies one update from the accumulated grads, then zeroes them.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace deepdtf::model
