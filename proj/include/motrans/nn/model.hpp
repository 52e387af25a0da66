#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "motrans/genome.hpp"
#include "motrans/nn/ops.hpp"
#include "motrans/nn/tensor.hpp"
#include "motrans/rng.hpp"

namespace motrans::nn {

struct LayerSpec {
  LayerKind kind = LayerKind::FeedForward;
  int heads = 0;         // attention layers
  int hidden = 0;        // feed-forward layers
  int cross_source = 0;  // 1-based encoder block, cross-attention only
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct BlockPlan {
  std::vector<LayerSpec> layers;
  friend bool operator==(const BlockPlan&, const BlockPlan&) = default;
};

struct ModelPlan {
  ModelGlobals globals;
  std::vector<BlockPlan> encoder;
  std::vector<BlockPlan> decoder;
  std::vector<int> cross_wiring;  // decoder block -> 1-based encoder block
  double dropout = 0.0;           // carried but not applied

  friend bool operator==(const ModelPlan& a, const ModelPlan& b) {
    return a.globals.embedding_size == b.globals.embedding_size && a.globals.src_vocab == b.globals.src_vocab &&
           a.globals.tgt_vocab == b.globals.tgt_vocab && a.encoder == b.encoder && a.decoder == b.decoder &&
           a.cross_wiring == b.cross_wiring;
  }
};

// Expands each block type into its layer list; slot k's integer binds to layer k.
ModelPlan build_plan(const Genome& g, const ModelGlobals& globals);

template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct NormParams {
  Tensor<T> gamma, beta;
};

// Projects q_input and kv_input, attends, and applies the output projection.
template <typename T>
Tensor<T> multihead_attention(const Tensor<T>& q_input, const Tensor<T>& kv_input, int heads, bool causal,
                              const AttentionParams<T>& p, const std::vector<std::uint8_t>* key_mask = nullptr,
                              std::vector<T>* probs = nullptr);

// relu(x W1 + b1) W2 + b2
template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p);

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

struct ForwardOptions {
  // Replace the retained output of this 1-based encoder block with zeros
  // before anything downstream reads it.
  std::optional<int> zero_encoder_block;
};

// Runnable encoder-decoder built from a plan. Post-norm residual layers,
// sinusoidal positions, embeddings scaled by sqrt(d).
template <typename T>
class Transformer {
 public:
  Transformer(ModelPlan plan, RngStream& rng);

  const ModelPlan& plan() const { return plan_; }
  std::vector<NamedParam<T>>& parameters() { return params_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  // Sum of element counts over every trainable tensor.
  std::int64_t parameter_count() const;
  void zero_grad();

  // Outputs of every encoder block, in order.
  std::vector<Tensor<T>> encode(const TokenBatch& src, const ForwardOptions& options = {}) const;
  // Logits [B, Tt, tgt_vocab] for decoder input `tgt` given retained encoder outputs.
  Tensor<T> decode(const TokenBatch& tgt, const std::vector<Tensor<T>>& encoder_outputs,
                   const std::vector<std::uint8_t>& src_mask) const;
  Tensor<T> forward(const TokenBatch& src, const TokenBatch& tgt, const ForwardOptions& options = {}) const;

  // Binary blob: magic, element width, then (name, shape, values) per tensor.
  void save_parameters(const std::filesystem::path& path) const;
  void load_parameters(const std::filesystem::path& path);
  // Deep copies of parameter values, and their restore.
  std::vector<std::vector<T>> snapshot() const;
  void restore(const std::vector<std::vector<T>>& values);

 private:
  struct Layer {
    LayerSpec spec;
    AttentionParams<T> attn;
    FeedForwardParams<T> ffn;
    NormParams<T> norm;
  };

  Tensor<T> apply_layer(const Layer& layer, const Tensor<T>& x, const std::vector<Tensor<T>>* encoder_outputs,
                        const std::vector<std::uint8_t>* src_mask, bool decoder) const;
  Tensor<T> new_param(const std::string& name, Shape shape, std::vector<T> values);

  ModelPlan plan_;
  Tensor<T> src_embedding_, tgt_embedding_, out_w_, out_b_;
  std::vector<std::vector<Layer>> encoder_layers_, decoder_layers_;
  std::vector<NamedParam<T>> params_;
};

}  // namespace motrans::nn
