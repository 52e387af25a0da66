#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "json.hpp"
#include "motrans/config.hpp"

namespace motrans {

enum class LayerKind { SelfAttention, MaskedSelfAttention, CrossAttention, FeedForward };

const char* to_string(LayerKind kind);
inline bool is_attention(LayerKind kind) { return kind != LayerKind::FeedForward; }

inline constexpr int kEncoderTypes = 4;
inline constexpr int kDecoderTypes = 3;
inline constexpr int kEncoderSlots = 2;
inline constexpr int kDecoderSlots = 3;

// Layer composition of each candidate block type (1-based type index).
// Encoder: [SA,FFN] [FFN,SA] [SA,SA] [FFN,FFN].
// Decoder: [M-MHA,C-MHA,FFN] [C-MHA,M-MHA,FFN] [M-MHA,FFN,C-MHA].
const std::array<LayerKind, kEncoderSlots>& encoder_composition(int te);
const std::array<LayerKind, kDecoderSlots>& decoder_composition(int td);

struct EncoderBlockGene {
  int te = 1;
  int p1 = 0;
  int p2 = 0;

  int param(int slot) const { return slot == 0 ? p1 : p2; }
  friend bool operator==(const EncoderBlockGene&, const EncoderBlockGene&) = default;
};

struct DecoderBlockGene {
  int td = 1;
  int p1 = 0;
  int p2 = 0;
  int p3 = 0;
  int ce = 1;  // 1-based encoder block feeding this block's cross-attention

  int param(int slot) const { return slot == 0 ? p1 : (slot == 1 ? p2 : p3); }
  friend bool operator==(const DecoderBlockGene&, const DecoderBlockGene&) = default;
};

struct Genome {
  std::vector<EncoderBlockGene> encoders;
  std::vector<DecoderBlockGene> decoders;

  int ne() const { return static_cast<int>(encoders.size()); }
  int nd() const { return static_cast<int>(decoders.size()); }
  // Total number of layers over all blocks.
  int layer_count() const { return kEncoderSlots * ne() + kDecoderSlots * nd(); }

  friend bool operator==(const Genome&, const Genome&) = default;
  friend auto operator<=>(const Genome& a, const Genome& b) {
    auto fa = a.flat_key();
    auto fb = b.flat_key();
    return fa <=> fb;
  }

  // Flat encoding without validation.
  std::vector<int> flat_key() const;
};

class GenomeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every violated invariant, empty when the genome is valid under `cfg`.
std::vector<std::string> validate(const Genome& g, const SearchConfig& cfg);
// Config-free checks only: block counts >= 1, type ranges, wiring.
std::vector<std::string> validate_structure(const Genome& g);

// {ne, [te,p1,p2] x ne, nd, [td,p1,p2,p3,ce] x nd}
std::vector<int> encode_flat(const Genome& g);
Genome decode_flat(std::span<const int> xs, const SearchConfig& cfg);
// Structural decode without domain checks (used for files written by other configs).
Genome decode_flat(std::span<const int> xs);
std::string flat_to_string(std::span<const int> xs);
std::vector<int> flat_from_string(const std::string& s);

using BigInt = boost::multiprecision::cpp_int;

// Number of distinct valid genomes with exactly ne encoder and nd decoder blocks.
BigInt search_space_size(int ne, int nd, const SearchConfig& cfg);
// Sum over all (ne, nd) within the configured bounds.
BigInt total_search_space_size(const SearchConfig& cfg);

struct ModelGlobals {
  int embedding_size = 32;
  int src_vocab = 16;
  int tgt_vocab = 16;
};

std::int64_t attention_param_count(int d);
std::int64_t feed_forward_param_count(int d, int hidden);
std::int64_t layer_norm_param_count(int d);
// Trainable scalars of the model built from g: embeddings, every layer with its
// post-norm, and the output projection.
std::int64_t param_count(const Genome& g, const ModelGlobals& globals);

std::string render_dot(const Genome& g);

void to_json(nlohmann::json& j, const Genome& g);
void from_json(const nlohmann::json& j, Genome& g);

}  // namespace motrans
