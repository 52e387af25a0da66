#include "motrans/nn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace motrans::nn {

ModelPlan build_plan(const Genome& g, const ModelGlobals& globals) {
  auto problems = validate_structure(g);
  if (!problems.empty()) throw GenomeError("build_plan: " + problems.front());
  const int d = globals.embedding_size;
  auto spec = [&](LayerKind kind, int p, int source) {
    LayerSpec s;
    s.kind = kind;
    if (is_attention(kind)) {
      if (p < 1 || d % p != 0) {
        throw GenomeError("build_plan: " + std::to_string(p) + " heads do not divide embedding size " +
                          std::to_string(d));
      }
      s.heads = p;
    } else {
      if (p < 1) throw GenomeError("build_plan: feed-forward width must be positive");
      s.hidden = p;
    }
    if (kind == LayerKind::CrossAttention) s.cross_source = source;
    return s;
  };
  ModelPlan plan;
  plan.globals = globals;
  for (const auto& b : g.encoders) {
    BlockPlan block;
    const auto& comp = encoder_composition(b.te);
    for (int s = 0; s < kEncoderSlots; ++s) block.layers.push_back(spec(comp[s], b.param(s), 0));
    plan.encoder.push_back(std::move(block));
  }
  for (const auto& b : g.decoders) {
    BlockPlan block;
    const auto& comp = decoder_composition(b.td);
    for (int s = 0; s < kDecoderSlots; ++s) block.layers.push_back(spec(comp[s], b.param(s), b.ce));
    plan.decoder.push_back(std::move(block));
    plan.cross_wiring.push_back(b.ce);
  }
  return plan;
}

template <typename T>
Tensor<T> multihead_attention(const Tensor<T>& q_input, const Tensor<T>& kv_input, int heads, bool causal,
                              const AttentionParams<T>& p, const std::vector<std::uint8_t>* key_mask,
                              std::vector<T>* probs) {
  auto q = linear(q_input, p.wq, p.bq);
  auto k = linear(kv_input, p.wk, p.bk);
  auto v = linear(kv_input, p.wv, p.bv);
  auto ctx = attention(q, k, v, heads, causal, key_mask, probs);
  return linear(ctx, p.wo, p.bo);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p) {
  return linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

namespace {

template <typename T>
std::vector<T> xavier(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> w(fan_in * fan_out);
  for (auto& v : w) v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * limit);
  return w;
}

template <typename T>
std::vector<T> embedding_init(std::size_t vocab, std::size_t d, RngStream& rng) {
  // Unit-variance rows after the sqrt(d) forward scale.
  const double limit = std::sqrt(3.0 / static_cast<double>(d));
  std::vector<T> w(vocab * d);
  for (auto& v : w) v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * limit);
  return w;
}

constexpr char kMagic[8] = {'M', 'T', 'P', 'A', 'R', 'A', 'M', '1'};

}  // namespace

template <typename T>
Tensor<T> Transformer<T>::new_param(const std::string& name, Shape shape, std::vector<T> values) {
  auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
  params_.push_back({name, t});
  return t;
}

template <typename T>
Transformer<T>::Transformer(ModelPlan plan, RngStream& rng) : plan_(std::move(plan)) {
  const auto d = static_cast<std::size_t>(plan_.globals.embedding_size);
  const auto vs = static_cast<std::size_t>(plan_.globals.src_vocab);
  const auto vt = static_cast<std::size_t>(plan_.globals.tgt_vocab);
  if (d == 0 || vs == 0 || vt == 0) throw ShapeError("Transformer: sizes must be positive");
  if (plan_.cross_wiring.size() != plan_.decoder.size()) throw ShapeError("Transformer: wiring map not total");

  src_embedding_ = new_param("src_embedding", {vs, d}, embedding_init<T>(vs, d, rng));
  tgt_embedding_ = new_param("tgt_embedding", {vt, d}, embedding_init<T>(vt, d, rng));

  auto make_layer = [&](const LayerSpec& spec, const std::string& prefix) {
    Layer layer;
    layer.spec = spec;
    if (is_attention(spec.kind)) {
      auto& a = layer.attn;
      a.wq = new_param(prefix + ".wq", {d, d}, xavier<T>(d, d, rng));
      a.bq = new_param(prefix + ".bq", {d}, std::vector<T>(d, T(0)));
      a.wk = new_param(prefix + ".wk", {d, d}, xavier<T>(d, d, rng));
      a.bk = new_param(prefix + ".bk", {d}, std::vector<T>(d, T(0)));
      a.wv = new_param(prefix + ".wv", {d, d}, xavier<T>(d, d, rng));
      a.bv = new_param(prefix + ".bv", {d}, std::vector<T>(d, T(0)));
      a.wo = new_param(prefix + ".wo", {d, d}, xavier<T>(d, d, rng));
      a.bo = new_param(prefix + ".bo", {d}, std::vector<T>(d, T(0)));
    } else {
      const auto h = static_cast<std::size_t>(spec.hidden);
      auto& f = layer.ffn;
      f.w1 = new_param(prefix + ".w1", {d, h}, xavier<T>(d, h, rng));
      f.b1 = new_param(prefix + ".b1", {h}, std::vector<T>(h, T(0)));
      f.w2 = new_param(prefix + ".w2", {h, d}, xavier<T>(h, d, rng));
      f.b2 = new_param(prefix + ".b2", {d}, std::vector<T>(d, T(0)));
    }
    layer.norm.gamma = new_param(prefix + ".norm.gamma", {d}, std::vector<T>(d, T(1)));
    layer.norm.beta = new_param(prefix + ".norm.beta", {d}, std::vector<T>(d, T(0)));
    return layer;
  };

  const int ne = static_cast<int>(plan_.encoder.size());
  for (std::size_t b = 0; b < plan_.encoder.size(); ++b) {
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < plan_.encoder[b].layers.size(); ++l) {
      const auto& spec = plan_.encoder[b].layers[l];
      if (spec.kind != LayerKind::SelfAttention && spec.kind != LayerKind::FeedForward) {
        throw ShapeError("Transformer: encoder blocks hold only self-attention and feed-forward layers");
      }
      layers.push_back(make_layer(spec, "enc" + std::to_string(b + 1) + "." + std::to_string(l + 1) + "." +
                                            to_string(spec.kind)));
    }
    encoder_layers_.push_back(std::move(layers));
  }
  for (std::size_t b = 0; b < plan_.decoder.size(); ++b) {
    std::vector<Layer> layers;
    int cross = 0;
    for (std::size_t l = 0; l < plan_.decoder[b].layers.size(); ++l) {
      const auto& spec = plan_.decoder[b].layers[l];
      if (spec.kind == LayerKind::SelfAttention) throw ShapeError("Transformer: unmasked self-attention in decoder");
      if (spec.kind == LayerKind::CrossAttention) {
        ++cross;
        if (spec.cross_source < 1 || spec.cross_source > ne) throw ShapeError("Transformer: cross source out of range");
      }
      layers.push_back(make_layer(spec, "dec" + std::to_string(b + 1) + "." + std::to_string(l + 1) + "." +
                                            to_string(spec.kind)));
    }
    if (cross != 1) throw ShapeError("Transformer: decoder block needs exactly one cross-attention layer");
    decoder_layers_.push_back(std::move(layers));
  }
  // Half-scale output weights keep the untrained predictions close to uniform.
  auto out_init = xavier<T>(d, vt, rng);
  for (auto& w : out_init) w *= T(0.5);
  out_w_ = new_param("output.w", {d, vt}, std::move(out_init));
  out_b_ = new_param("output.b", {vt}, std::vector<T>(vt, T(0)));
}

template <typename T>
std::int64_t Transformer<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.tensor.size());
  return n;
}

template <typename T>
void Transformer<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Tensor<T> Transformer<T>::apply_layer(const Layer& layer, const Tensor<T>& x,
                                      const std::vector<Tensor<T>>* encoder_outputs,
                                      const std::vector<std::uint8_t>* src_mask, bool decoder) const {
  Tensor<T> sub;
  switch (layer.spec.kind) {
    case LayerKind::SelfAttention:
      sub = multihead_attention(x, x, layer.spec.heads, false, layer.attn, decoder ? nullptr : src_mask);
      break;
    case LayerKind::MaskedSelfAttention:
      sub = multihead_attention(x, x, layer.spec.heads, true, layer.attn);
      break;
    case LayerKind::CrossAttention:
      sub = multihead_attention(x, (*encoder_outputs).at(layer.spec.cross_source - 1), layer.spec.heads, false,
                                layer.attn, src_mask);
      break;
    case LayerKind::FeedForward:
      sub = feed_forward(x, layer.ffn);
      break;
  }
  return layer_norm(add(x, sub), layer.norm.gamma, layer.norm.beta);
}

template <typename T>
std::vector<Tensor<T>> Transformer<T>::encode(const TokenBatch& src, const ForwardOptions& options) const {
  const auto mask = src.mask(0);
  const T factor = std::sqrt(static_cast<T>(plan_.globals.embedding_size));
  auto x = positional_encode(embed(src, src_embedding_, factor));
  std::vector<Tensor<T>> outputs;
  for (std::size_t b = 0; b < encoder_layers_.size(); ++b) {
    for (const auto& layer : encoder_layers_[b]) x = apply_layer(layer, x, nullptr, &mask, false);
    if (options.zero_encoder_block && *options.zero_encoder_block == static_cast<int>(b) + 1) {
      x = Tensor<T>::zeros(x.shape());
    }
    outputs.push_back(x);
  }
  return outputs;
}

template <typename T>
Tensor<T> Transformer<T>::decode(const TokenBatch& tgt, const std::vector<Tensor<T>>& encoder_outputs,
                                 const std::vector<std::uint8_t>& src_mask) const {
  if (encoder_outputs.size() != encoder_layers_.size()) throw ShapeError("decode: encoder output count mismatch");
  const T factor = std::sqrt(static_cast<T>(plan_.globals.embedding_size));
  auto y = positional_encode(embed(tgt, tgt_embedding_, factor));
  for (const auto& block : decoder_layers_) {
    for (const auto& layer : block) y = apply_layer(layer, y, &encoder_outputs, &src_mask, true);
  }
  return linear(y, out_w_, out_b_);
}

template <typename T>
Tensor<T> Transformer<T>::forward(const TokenBatch& src, const TokenBatch& tgt, const ForwardOptions& options) const {
  if (src.rows != tgt.rows) throw ShapeError("forward: source and target batch sizes differ");
  auto enc = encode(src, options);
  return decode(tgt, enc, src.mask(0));
}

template <typename T>
std::vector<std::vector<T>> Transformer<T>::snapshot() const {
  std::vector<std::vector<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

template <typename T>
void Transformer<T>::restore(const std::vector<std::vector<T>>& values) {
  if (values.size() != params_.size()) throw ShapeError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = params_[i].tensor.data();
    if (values[i].size() != dst.size()) throw ShapeError("restore: size mismatch for " + params_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

template <typename T>
void Transformer<T>::save_parameters(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kMagic, sizeof kMagic);
  put_u64(sizeof(T));
  put_u64(params_.size());
  for (const auto& p : params_) {
    put_u64(p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u64(p.tensor.rank());
    for (auto dim : p.tensor.shape()) put_u64(dim);
    out.write(reinterpret_cast<const char*>(p.tensor.data().data()),
              static_cast<std::streamsize>(p.tensor.size() * sizeof(T)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

template <typename T>
void Transformer<T>::load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto fail = [&](const std::string& why) { throw std::runtime_error(path.string() + ": " + why); };
  auto get_u64 = [&] {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail("truncated parameter blob");
    return v;
  };
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) fail("bad magic");
  if (get_u64() != sizeof(T)) fail("element width mismatch");
  if (get_u64() != params_.size()) fail("parameter count mismatch");
  for (auto& p : params_) {
    const auto len = get_u64();
    if (len > 4096) fail("corrupt name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) fail("truncated parameter blob");
    if (name != p.name) fail("expected parameter " + p.name + ", found " + name);
    Shape shape(get_u64());
    for (auto& dim : shape) dim = get_u64();
    if (shape != p.tensor.shape()) fail("shape mismatch for " + p.name);
    if (!in.read(reinterpret_cast<char*>(p.tensor.data().data()), static_cast<std::streamsize>(p.tensor.size() * sizeof(T)))) {
      fail("truncated parameter blob");
    }
  }
}

template class Transformer<float>;
template class Transformer<double>;

#define MOTRANS_INSTANTIATE_LAYERS(T)                                                                         \
  template Tensor<T> multihead_attention(const Tensor<T>&, const Tensor<T>&, int, bool, const AttentionParams<T>&, \
                                         const std::vector<std::uint8_t>*, std::vector<T>*);                   \
  template Tensor<T> feed_forward(const Tensor<T>&, const FeedForwardParams<T>&);

MOTRANS_INSTANTIATE_LAYERS(float)
MOTRANS_INSTANTIATE_LAYERS(double)

}  // namespace motrans::nn
